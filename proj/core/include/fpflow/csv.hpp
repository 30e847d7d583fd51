#pragma once

#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

namespace fpflow {

/// Shortest representation with 17 significant digits; round-trip exact for
/// 64-bit reals.
std::string format_g17(double value);

/// Plain CSV writer with a fixed, caller-defined column order.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, std::vector<std::string> columns);
  void write_row(std::span<const double> values);
  void flush() { out_.flush(); }
  const std::vector<std::string>& columns() const { return columns_; }

 private:
  std::ofstream out_;
  std::vector<std::string> columns_;
};

}  // namespace fpflow
