#pragma once

namespace causalfuse {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace causalfuse
