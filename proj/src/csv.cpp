#include "weakbsde/csv.hpp"

#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace weakbsde {

std::string csv_number(double x, int sig_digits) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.*g", sig_digits, x);
  return buf;
}

CsvFile::CsvFile(const std::string& path, const RunConfig& cfg,
                 const std::vector<std::string>& columns)
    : out_(path, std::ios::binary), path_(path), n_cols_(columns.size()),
      precision_(cfg.precision) {
  if (!out_)
    throw std::runtime_error("cannot open output file '" + path + "'");
  // header: every resolved config line, '#'-prefixed
  std::istringstream is(serialize(cfg));
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty())
      out_ << "#\n";
    else if (line[0] == '#')
      out_ << line << "\n";
    else
      out_ << "# " << line << "\n";
  }
  for (size_t j = 0; j < columns.size(); ++j)
    out_ << (j ? "," : "") << columns[j];
  out_ << "\n";
}

void CsvFile::row(const std::vector<std::string>& cells) {
  if (cells.size() != n_cols_)
    throw std::runtime_error("csv row width mismatch in '" + path_ + "'");
  for (size_t j = 0; j < cells.size(); ++j)
    out_ << (j ? "," : "") << cells[j];
  out_ << "\n";
}

void CsvFile::close() {
  if (closed_) return;
  closed_ = true;
  out_.flush();
  if (!out_)
    throw std::runtime_error("write failure on '" + path_ + "'");
  out_.close();
}

CsvFile::~CsvFile() {
  try {
    close();
  } catch (...) {
    // destructor swallows; call close() for checked shutdown
  }
}

}  // namespace weakbsde
