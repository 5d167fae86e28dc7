#pragma once

#include <fstream>
#include <initializer_list>
#include <string>
#include <string_view>

#include "rbsde/lattice.hpp"

namespace rbsde {

/// 17 significant digits, '.' decimal separator, locale independent.
std::string format_number(double value);

/// Comma-separated rows with LF line endings.
class CsvWriter {
 public:
  CsvWriter(const std::string& path, std::string_view header);

  CsvWriter& operator<<(double value);
  CsvWriter& operator<<(long long value);
  CsvWriter& operator<<(int value) { return *this << static_cast<long long>(value); }
  CsvWriter& operator<<(std::string_view text);
  void end_row();

 private:
  void separate();

  std::ofstream out_;
  bool row_open_ = false;
};

/// Header "k,j,t,B,value", one row per node.
void write_process_csv(const LatticeProcess& process, const std::string& path);

}  // namespace rbsde
