#pragma once

#include "weakbsde/config.hpp"

#include <fstream>
#include <string>
#include <vector>

namespace weakbsde {

/// Renders x with `sig_digits` significant digits (%g), '.' decimal point.
std::string csv_number(double x, int sig_digits);

/// One CSV artifact: `#`-prefixed header echoing the fully resolved
/// config (seed included), one column-name line, then data rows. Comma
/// separated, '\n' endings, numbers at the configured precision. The
/// content is a pure function of (config, data), never of wall clock or
/// worker count, so identical runs are bit-identical.
class CsvFile {
 public:
  CsvFile(const std::string& path, const RunConfig& cfg,
          const std::vector<std::string>& columns);

  /// Renders with the table precision from the output block.
  std::string num(double x) const { return csv_number(x, precision_); }

  void row(const std::vector<std::string>& cells);

  /// Flushes and closes; throws std::runtime_error on write failure.
  void close();

  ~CsvFile();

 private:
  std::ofstream out_;
  std::string path_;
  size_t n_cols_ = 0;
  int precision_ = 10;
  bool closed_ = false;
};

}  // namespace weakbsde
