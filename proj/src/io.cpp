#include "rbsde/io.hpp"

#include <charconv>
#include <cmath>

#include "rbsde/error.hpp"

namespace rbsde {

std::string format_number(double value) {
  if (value == 0.0) return "0";  // folds -0
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, value, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

CsvWriter::CsvWriter(const std::string& path, std::string_view header)
    : out_(path, std::ios::binary | std::ios::trunc) {
  if (!out_) fail(ErrorKind::InvalidConfig, "cannot open " + path + " for writing");
  out_ << header << '\n';
}

void CsvWriter::separate() {
  if (row_open_) out_ << ',';
  row_open_ = true;
}

CsvWriter& CsvWriter::operator<<(double value) {
  separate();
  out_ << format_number(value);
  return *this;
}

CsvWriter& CsvWriter::operator<<(long long value) {
  separate();
  out_ << value;
  return *this;
}

CsvWriter& CsvWriter::operator<<(std::string_view text) {
  separate();
  out_ << text;
  return *this;
}

void CsvWriter::end_row() {
  out_ << '\n';
  row_open_ = false;
}

void write_process_csv(const LatticeProcess& process, const std::string& path) {
  const Lattice& lat = process.lattice();
  CsvWriter csv(path, "k,j,t,B,value");
  for (int k = 0; k <= lat.steps(); ++k) {
    for (int j = 0; j <= k; ++j) {
      csv << k << j << lat.time(k) << lat.brownian(k, j) << process(k, j);
      csv.end_row();
    }
  }
}

}  // namespace rbsde
