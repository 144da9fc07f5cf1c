#pragma once

#include <iosfwd>
#include <string>

#include "causalfuse/types.hpp"

namespace causalfuse {

// Strict schema: header `y,x,z,g`, one unit per row, g in {E,O}.
// UTF-8, '.' decimal separator, LF or CRLF line endings.
// Throws ValidationError: MissingColumn, NonNumericCell, UnknownGroupTag,
// EmptyGroup. Error messages name the offending line/column.
FusedDataset load_csv(const std::string& path);
FusedDataset load_csv(std::istream& in, const std::string& origin = "<stream>");

// Writes with round-trip (17 significant digit) float formatting.
void write_csv(const FusedDataset& ds, const std::string& path);
void write_csv(const FusedDataset& ds, std::ostream& out);

}  // namespace causalfuse
