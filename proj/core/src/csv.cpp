#include "fpflow/csv.hpp"

#include <cstdio>
#include <stdexcept>

namespace fpflow {

std::string format_g17(double value) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

CsvWriter::CsvWriter(const std::filesystem::path& path, std::vector<std::string> columns)
    : out_(path), columns_(std::move(columns)) {
  if (!out_) throw std::runtime_error("cannot open CSV for writing: " + path.string());
  for (std::size_t i = 0; i < columns_.size(); ++i) {
    if (i > 0) out_ << ',';
    out_ << columns_[i];
  }
  out_ << '\n';
}

void CsvWriter::write_row(std::span<const double> values) {
  if (values.size() != columns_.size()) {
    throw std::invalid_argument("CSV row width does not match the header");
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i > 0) out_ << ',';
    out_ << format_g17(values[i]);
  }
  out_ << '\n';
}

}  // namespace fpflow
