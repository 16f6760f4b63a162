#pragma once

#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

namespace uspil {

/// %.17g — enough digits to round-trip any double exactly.
std::string format_g17(double v);

/// Streaming CSV writer; every numeric cell goes through format_g17.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& file, std::span<const std::string> header);
  void write_row(std::span<const double> values);
  void flush() { out_.flush(); }

 private:
  std::ofstream out_;
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  std::size_t column(const std::string& name) const;
  std::vector<double> col(const std::string& name) const;
};

/// Reads a numeric CSV with a single header row.
CsvTable read_csv(const std::filesystem::path& file);

void write_csv(const std::filesystem::path& file,
               std::span<const std::string> header,
               const std::vector<std::vector<double>>& rows);

}  // namespace uspil
