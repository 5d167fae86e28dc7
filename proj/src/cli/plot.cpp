#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "rbsde/cli/runner.hpp"
#include "rbsde/io.hpp"

namespace rbsde::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using Table = std::vector<std::vector<std::string>>;

Table read_csv(const fs::path& path) {
  std::ifstream in(path);
  Table rows;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(std::move(cells));
  }
  return rows;
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorKind::Data, path.string() + ": " + e.what());
  }
}

std::string cell_or_nan(const std::string& s) { return s.empty() ? "nan" : s; }

std::string value_or_nan(const json& v) { return v.is_number() ? format_number(v.get<double>()) : "nan"; }

class DatFile {
 public:
  DatFile(const fs::path& path, const std::string& columns) : out_(path, std::ios::binary) {
    out_ << "# " << columns << '\n';
  }
  void row(std::initializer_list<std::string> cells) {
    bool first = true;
    for (const auto& c : cells) {
      if (!first) out_ << ' ';
      out_ << c;
      first = false;
    }
    out_ << '\n';
  }

 private:
  std::ofstream out_;
};

}  // namespace

std::vector<std::string> write_plot_data(const std::string& result_dir, double m_curve_time) {
  const fs::path dir(result_dir);
  if (!fs::is_directory(dir)) fail(ErrorKind::Data, "not a directory: " + result_dir);
  std::vector<std::string> written;

  if (fs::exists(dir / "gap_curve.csv")) {
    DatFile dat(dir / "gap_vs_t.dat", "t measured_gap bound");
    for (const auto& r : read_csv(dir / "gap_curve.csv")) {
      if (r.size() >= 3) dat.row({r[0], r[1], cell_or_nan(r[2])});
    }
    written.push_back("gap_vs_t.dat");
  }

  if (fs::exists(dir / "flow_summary.json")) {
    const json flow = read_json(dir / "flow_summary.json");
    DatFile gap(dir / "gap_vs_n.dat", "n measured_gap0 bound");
    DatFile y0(dir / "y0_vs_n.dat", "n y_lower_0 y_upper_0");
    for (const auto& l : flow.at("levels")) {
      const std::string n = value_or_nan(l.at("n"));
      const bool applicable = l.value("bound_applicable", false);
      gap.row({n, value_or_nan(l.at("gap0")), applicable ? value_or_nan(l.at("bound")) : "nan"});
      y0.row({n, value_or_nan(l.at("y_lower_0")), value_or_nan(l.at("y_upper_0"))});
    }
    written.push_back("gap_vs_n.dat");
    written.push_back("y0_vs_n.dat");
  } else if (fs::exists(dir / "certificate.json")) {
    const json cert = read_json(dir / "certificate.json");
    DatFile gap(dir / "gap_vs_n.dat", "n measured_gap0 bound");
    for (const auto& l : cert.at("levels")) {
      gap.row({value_or_nan(l.at("n")), value_or_nan(l.at("measured_gap0")), value_or_nan(l.at("bound"))});
    }
    written.push_back("gap_vs_n.dat");
  }

  if (fs::exists(dir / "m_curves.csv")) {
    const Table rows = read_csv(dir / "m_curves.csv");
    // The time on the grid closest to the requested one.
    double best_t = NAN;
    for (const auto& r : rows) {
      if (r.size() < 4) continue;
      const double t = std::stod(r[1]);
      if (std::isnan(best_t) || std::abs(t - m_curve_time) < std::abs(best_t - m_curve_time)) best_t = t;
    }
    DatFile dat(dir / "m_vs_c.dat", "c m_lower m_upper (t = " + format_number(best_t) + ")");
    for (const auto& r : rows) {
      if (r.size() >= 4 && std::stod(r[1]) == best_t) dat.row({r[0], r[2], r[3]});
    }
    written.push_back("m_vs_c.dat");
  }

  if (written.empty()) fail(ErrorKind::Data, "no plottable results in " + result_dir);
  return written;
}

}  // namespace rbsde::cli
