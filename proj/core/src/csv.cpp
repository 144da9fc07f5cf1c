#include "causalfuse/csv.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace causalfuse {

namespace {

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

double parse_cell(const std::string& cell, std::size_t line_no, const char* col,
                  const std::string& origin) {
  const char* s = cell.c_str();
  char* end = nullptr;
  const double v = std::strtod(s, &end);
  if (end == s || *end != '\0' || !std::isfinite(v)) {
    throw ValidationError("NonNumericCell", origin + ": line " + std::to_string(line_no) +
                                                ", column " + col + ": non-numeric value '" +
                                                cell + "'");
  }
  return v;
}

}  // namespace

FusedDataset load_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ValidationError("MissingFile", path + ": cannot open file");
  }
  return load_csv(in, path);
}

FusedDataset load_csv(std::istream& in, const std::string& origin) {
  std::string line;
  if (!std::getline(in, line)) {
    throw ValidationError("MissingColumn", origin + ": empty file, expected header y,x,z,g");
  }
  strip_cr(line);
  if (line != "y,x,z,g") {
    throw ValidationError("MissingColumn",
                          origin + ": header must be exactly 'y,x,z,g', got '" + line + "'");
  }
  std::vector<UnitRecord> records;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != 4) {
      throw ValidationError("MissingColumn", origin + ": line " + std::to_string(line_no) +
                                                 ": expected 4 fields, got " +
                                                 std::to_string(fields.size()));
    }
    UnitRecord r;
    r.y = parse_cell(fields[0], line_no, "y", origin);
    r.x = parse_cell(fields[1], line_no, "x", origin);
    r.z = parse_cell(fields[2], line_no, "z", origin);
    if (fields[3] == "E") {
      r.g = Group::E;
    } else if (fields[3] == "O") {
      r.g = Group::O;
    } else {
      throw ValidationError("UnknownGroupTag", origin + ": line " + std::to_string(line_no) +
                                                   ": unknown group tag '" + fields[3] + "'");
    }
    records.push_back(r);
  }
  auto ds = FusedDataset::from_records(std::move(records));
  if (ds.n_e() == 0) {
    throw ValidationError("EmptyGroup", origin + ": no experimental (E) rows");
  }
  if (ds.n_o() == 0) {
    throw ValidationError("EmptyGroup", origin + ": no observational (O) rows");
  }
  return ds;
}

void write_csv(const FusedDataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw ValidationError("MissingFile", path + ": cannot open file for writing");
  }
  write_csv(ds, out);
}

void write_csv(const FusedDataset& ds, std::ostream& out) {
  out << "y,x,z,g\n";
  char buf[96];
  for (const auto& r : ds.records()) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%c\n", r.y, r.x, r.z,
                  r.g == Group::E ? 'E' : 'O');
    out << buf;
  }
}

}  // namespace causalfuse
