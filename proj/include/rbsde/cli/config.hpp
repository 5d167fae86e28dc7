#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "rbsde/pasting.hpp"
#include "rbsde/solver.hpp"

namespace rbsde::cli {

enum class ExperimentKind { Solve, Envelope, Paste, Certify, Scan, Compare };

const char* to_string(ExperimentKind kind) noexcept;

struct GeneratorConfig {
  std::string name = "zero";
  double a = 0.0;
  double b = 0.0;
  double c = 0.0;
  double shift_c = 0.0;
  /// none | lower | upper; used by solve and compare.
  std::string envelope = "none";
  double envelope_n = 0.0;
  double envelope_h = 1e-4;
};

struct PasteConfig {
  int k0 = -1;  // -1: N / 2
  EtaRule eta_rule = EtaRule::Midpoint;
  double eta_value = 0.0;
  double z2 = 0.0;
  int subtree_cap = 20;
};

struct ScanConfig {
  std::vector<double> c_grid;
  double tol = 0.05;
  /// 0 picks the largest power of two up to 64 that keeps n sqrt(dt) <= 1.
  double n_max = 0.0;
};

struct CompareConfig {
  double xi_shift = 0.0;
  double g_shift = 0.0;
  double lower_shift = 0.0;
  double upper_shift = 0.0;
};

/// One experiment as described by an INI-style file:
///
///   [experiment] kind = solve | envelope | paste | certify | scan | compare
///   [lattice]    T, N
///   [generator]  generator = zero | affine | abs_z | sqrt_z | sqrt_y, a, b, c,
///                shift_c, envelope, envelope_n, envelope_h
///   [terminal]   value = <expression in t, B>
///   [barriers]   lower = <expression>, upper = <expression> (optional)
///   [scheme]     kind = explicit | implicit, picard_tol, picard_max
///   [envelope]   n_schedule = 4, 8, 16, h
///   [paste]      k0, eta_rule = upper | lower | midpoint | constant, eta_value, z2, subtree_cap
///   [scan]       c_grid, tol, n_max
///   [certify]    target_eps, slack
///   [compare]    xi_shift, g_shift, lower_shift, upper_shift
///   [output]     directory, formats = csv, json
struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::Solve;
  double horizon = 1.0;
  int steps = 64;
  GeneratorConfig generator;
  std::string terminal = "0";
  std::string lower = "-1";
  std::optional<std::string> upper;
  SolverOptions scheme;
  std::vector<double> n_schedule{4, 8, 16, 32, 64};
  double envelope_h = 1e-4;
  PasteConfig paste;
  ScanConfig scan;
  double certify_target_eps = 0.3;
  double certify_slack = 1e-9;
  CompareConfig compare;
  std::string output_directory = "out";
  bool write_csv = true;
};

ExperimentConfig parse_config(std::istream& in);
ExperimentConfig load_config(const std::string& path);

/// Generator with the configured shift applied.
GeneratorSpec make_generator(const ExperimentConfig& config);
ProblemData build_problem(const ExperimentConfig& config);

}  // namespace rbsde::cli
