#include "dgtd/io.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace dgtd {

Matrix load_matrix_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t width = 0;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::vector<double> row;
    double v;
    while (ls >> v) row.push_back(v);
    if (row.empty()) continue;
    if (width == 0) width = row.size();
    if (row.size() != width) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": ragged row (expected " + std::to_string(width) +
                               " entries, got " + std::to_string(row.size()) + ")");
    }
    rows.push_back(std::move(row));
  }
  Matrix m(static_cast<long>(rows.size()), static_cast<long>(width));
  for (long i = 0; i < m.rows(); ++i)
    for (long j = 0; j < m.cols(); ++j) m(i, j) = rows[i][j];
  return m;
}

void save_matrix_text(const std::string& path, const Matrix& m) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw std::runtime_error("cannot write " + path);
  for (long i = 0; i < m.rows(); ++i) {
    for (long j = 0; j < m.cols(); ++j)
      std::fprintf(f, j == 0 ? "%.17g" : " %.17g", m(i, j));
    std::fputc('\n', f);
  }
  std::fclose(f);
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

CsvWriter::CsvWriter(const std::string& path, const std::vector<std::string>& header)
    : file_(std::fopen(path.c_str(), "w")), columns_(header.size()) {
  if (!file_) throw std::runtime_error("cannot write " + path);
  auto* f = static_cast<std::FILE*>(file_);
  for (std::size_t i = 0; i < header.size(); ++i)
    std::fprintf(f, i == 0 ? "%s" : ",%s", header[i].c_str());
  std::fputc('\n', f);
}

CsvWriter::~CsvWriter() {
  if (file_) std::fclose(static_cast<std::FILE*>(file_));
}

void CsvWriter::write_row(const std::vector<double>& fields) {
  if (fields.size() != columns_) throw std::logic_error("csv row/header mismatch");
  auto* f = static_cast<std::FILE*>(file_);
  for (std::size_t i = 0; i < fields.size(); ++i)
    std::fprintf(f, i == 0 ? "%.17g" : ",%.17g", fields[i]);
  std::fputc('\n', f);
}

void CsvWriter::write_row(long first, const std::vector<double>& rest) {
  if (rest.size() + 1 != columns_) throw std::logic_error("csv row/header mismatch");
  auto* f = static_cast<std::FILE*>(file_);
  std::fprintf(f, "%ld", first);
  for (double v : rest) std::fprintf(f, ",%.17g", v);
  std::fputc('\n', f);
}

std::string file_hash_hex(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char c;
  while (in.get(c)) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, h);
  return buf;
}

}  // namespace dgtd
