#pragma once

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "pcg/binary_io.hpp"
#include "pcg/inference.hpp"

namespace pcg {

// PCDS layout: "PCDS" | numSamples u64 | numVariables u32 | C u32 |
// row-major u16 categories.
inline std::vector<std::uint8_t> serialize_dataset(const Dataset& d) {
  io::ByteWriter w;
  w.magic("PCDS");
  w.u64(d.num_samples);
  w.u32(static_cast<std::uint32_t>(d.num_variables));
  w.u32(static_cast<std::uint32_t>(d.num_categories));
  for (Category v : d.values) w.u16(v);
  return w.bytes();
}

inline void save_dataset(const Dataset& d, const std::string& path) {
  io::write_file(path, serialize_dataset(d));
}

inline Dataset parse_dataset(io::ByteReader r) {
  r.expect_magic("PCDS");
  Dataset d;
  d.num_samples = r.u64();
  d.num_variables = r.u32();
  d.num_categories = r.u32();
  if (r.remaining() != d.num_samples * d.num_variables * 2)
    throw Error(ErrorCode::FormatError, "dataset payload size does not match header");
  d.values.resize(d.num_samples * d.num_variables);
  for (auto& v : d.values) {
    v = r.u16();
    if (v >= d.num_categories) throw Error(ErrorCode::CategoryOutOfRange, "dataset entry exceeds C");
  }
  return d;
}

inline Dataset load_dataset(const std::string& path) {
  if (!std::filesystem::exists(path)) throw Error(ErrorCode::DatasetNotFound, path);
  return parse_dataset(io::ByteReader::load(path));
}

/// Comma-separated integer rows. C is taken from `num_categories` when
/// nonzero, otherwise max entry + 1.
inline Dataset read_csv_dataset(std::istream& in, std::size_t num_categories = 0) {
  Dataset d;
  std::string line;
  std::size_t max_value = 0;
  std::vector<Category> row;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    row.clear();
    const char* p = line.data();
    const char* end = p + line.size();
    while (p < end) {
      while (p < end && (*p == ' ' || *p == ',' || *p == '\r')) ++p;
      if (p == end) break;
      unsigned value = 0;
      auto [next, ec] = std::from_chars(p, end, value);
      if (ec != std::errc() || value > 0xFFFF) throw Error(ErrorCode::FormatError, "bad CSV entry: " + line);
      row.push_back(static_cast<Category>(value));
      max_value = std::max<std::size_t>(max_value, value);
      p = next;
    }
    if (d.num_samples == 0 && d.values.empty()) d.num_variables = row.size();
    d.push_back(row);
  }
  d.num_categories = num_categories ? num_categories : max_value + 1;
  if (max_value >= d.num_categories) throw Error(ErrorCode::CategoryOutOfRange, "CSV entry exceeds C");
  return d;
}

inline void write_csv_dataset(std::ostream& out, const Dataset& d) {
  for (std::size_t i = 0; i < d.num_samples; ++i) {
    auto r = d.row(i);
    for (std::size_t v = 0; v < r.size(); ++v) out << (v ? "," : "") << r[v];
    out << '\n';
  }
}

}  // namespace pcg
