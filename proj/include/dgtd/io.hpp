#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace dgtd {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Dense numeric text files: one row per line, entries separated by
// whitespace, '#' starts a comment line.  Values are written with 17
// significant digits so a save/load round trip is exact.
Matrix load_matrix_text(const std::string& path);
void save_matrix_text(const std::string& path, const Matrix& m);

// CSV with a fixed header row; numeric fields at full precision.
class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::vector<std::string>& header);
  ~CsvWriter();
  void write_row(const std::vector<double>& fields);
  void write_row(long first, const std::vector<double>& rest);

 private:
  void* file_;  // FILE*
  std::size_t columns_;
};

std::string format_double(double v);

// FNV-1a over a file's bytes; used for the run manifest.
std::string file_hash_hex(const std::string& path);

}  // namespace dgtd
