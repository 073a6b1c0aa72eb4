#pragma once

#include <fstream>
#include <string>
#include <vector>

#include "vtbench/sensors.hpp"

namespace vtb {

// Append-style CSV writer with a fixed header; numeric cells are written
// with enough digits to round-trip doubles.
class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::vector<std::string>& columns);
  void row(const std::vector<double>& values);
  void row_raw(const std::vector<std::string>& cells);
  void flush() { out_.flush(); }
  const std::string& path() const { return path_; }

 private:
  std::string path_;
  std::ofstream out_;
  size_t ncols_;
};

// Reads a whole CSV (header + numeric rows) back; used by tests and reports.
struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
  int col(const std::string& name) const;  // -1 if absent
};
CsvTable read_csv(const std::string& path);

// Binary P6 pixmap dump of a float image in [0,1], 8 bits per channel.
void write_ppm(const std::string& path, const Image& img);

void ensure_dir(const std::string& path);
bool file_exists(const std::string& path);
std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);
std::string format_double(double v);

}  // namespace vtb
