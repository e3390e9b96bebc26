#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "ekinfer/ensemble.hpp"

namespace ekinfer {

using json = nlohmann::json;

// Shortest round-trip decimal representation; keeps output files byte-stable
// across runs.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Atomic file write: temp file in the same directory, then rename.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out << content;
  }
  std::filesystem::rename(tmp, path);
}

// CSV with a header row; one sample per row, one column per parameter.
inline void write_samples_csv(const std::filesystem::path& path,
                              const std::vector<std::string>& names, const Matrix& samples) {
  if (static_cast<int>(names.size()) != samples.rows())
    throw std::invalid_argument("write_samples_csv: header/sample dimension mismatch");
  std::ostringstream os;
  for (std::size_t i = 0; i < names.size(); ++i) os << (i ? "," : "") << names[i];
  os << "\n";
  for (int s = 0; s < samples.cols(); ++s) {
    for (int i = 0; i < samples.rows(); ++i) os << (i ? "," : "") << format_double(samples(i, s));
    os << "\n";
  }
  write_file_atomic(path, os.str());
}

struct CsvTable {
  std::vector<std::string> header;
  Matrix values;  // one row per record
};

inline CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty CSV: " + path.string());
  {
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) t.header.push_back(cell);
  }
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    std::vector<double> row;
    while (std::getline(ls, cell, ',')) row.push_back(std::stod(cell));
    if (row.size() != t.header.size())
      throw std::runtime_error("ragged CSV row in " + path.string());
    rows.push_back(std::move(row));
  }
  t.values.resize(static_cast<int>(rows.size()), static_cast<int>(t.header.size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < t.header.size(); ++c)
      t.values(static_cast<int>(r), static_cast<int>(c)) = rows[r][c];
  return t;
}

inline void write_json_atomic(const std::filesystem::path& path, const json& j) {
  write_file_atomic(path, j.dump(2) + "\n");
}

inline json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return json::parse(in);
}

}  // namespace ekinfer
