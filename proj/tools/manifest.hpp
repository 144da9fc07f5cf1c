#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "causalfuse/version.hpp"

namespace causalfuse::cli {

inline std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return "fnv1a:unavailable";
  std::ostringstream ss;
  ss << in.rdbuf();
  char buf[32];
  std::snprintf(buf, sizeof(buf), "fnv1a:%016llx",
                static_cast<unsigned long long>(fnv1a64(ss.str())));
  return buf;
}

// Every emitted output embeds its manifest: CSV outputs as a '#' header
// comment block, JSON outputs as a "manifest" object, file outputs as a
// sibling <path>.manifest.json.
struct RunManifest {
  std::string subcommand;
  std::map<std::string, std::string> config;
  std::uint64_t seed = 0;
  std::string version = kVersion;
  std::string input_digest = "fnv1a:none";

  void write_comment_block(std::ostream& out) const {
    out << "# manifest: subcommand = " << subcommand << "\n";
    out << "# manifest: version = " << version << "\n";
    out << "# manifest: seed = " << seed << "\n";
    out << "# manifest: input_digest = " << input_digest << "\n";
    for (const auto& [k, v] : config) {
      out << "# manifest: " << k << " = " << v << "\n";
    }
  }

  nlohmann::json to_json() const {
    return nlohmann::json{{"subcommand", subcommand},
                          {"version", version},
                          {"seed", seed},
                          {"input_digest", input_digest},
                          {"config", config}};
  }

  void write_sibling(const std::string& data_path) const {
    std::ofstream out(data_path + ".manifest.json", std::ios::binary);
    out << to_json().dump(2) << "\n";
  }
};

}  // namespace causalfuse::cli
