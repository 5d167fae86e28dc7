#pragma once

#include <string>
#include <vector>

#include "rbsde/envelope_flow.hpp"

namespace rbsde {

/// m_upper(t, c) = E[upper_y^c_t] and m_lower(t, c) = E[lower_y^c_t] for the
/// disturbed generator g + c, from the envelope pair at n_max.
struct MCurve {
  std::vector<double> c_grid;
  std::vector<double> times;
  std::vector<std::vector<double>> m_lower;  // [c][k]
  std::vector<std::vector<double>> m_upper;  // [c][k]
  /// max over k of E[upper_y^c - lower_y^c].
  std::vector<double> gap;
  double n_max = 0.0;
  double slack = 0.0;
};

/// jobs > 1 evaluates c values concurrently; the result does not depend on it.
MCurve compute_m_curves(const ProblemData& data, std::vector<double> c_grid, double n_max,
                        const FlowOptions& options, int jobs = 1);

struct MonotonicityReport {
  std::size_t violations = 0;
  double max_violation = 0.0;
};

/// Checks c -> m(t, c) nondecreasing at every t for both curves.
MonotonicityReport check_m_monotone(const MCurve& curve, double slack);

struct ScanReport {
  std::vector<double> flagged;
  double tol = 0.0;
  double slack = 0.0;
  double n_max = 0.0;
  std::string note;
};

/// Every c with gap(c) > tol, ascending. A finite-n gap over-estimates the gap
/// between the extremal solutions, so a flag marks a candidate only.
ScanReport scan_nonuniqueness(const MCurve& curve, double tol);

struct CertificateLevel {
  double n = 0.0;
  double measured_gap0 = 0.0;
  double bound = 0.0;
  bool within = false;
};

struct CertificateReport {
  std::vector<CertificateLevel> levels;
  std::string verdict;
  double target_eps = 0.0;
  double slack = 0.0;
};

/// Requires a z-only generator with a modulus. "certified-decaying" when the
/// bounds decrease, the last falls below target_eps, and every measured gap at
/// t = 0 stays within bound + slack.
CertificateReport uniqueness_certificate(const ProblemData& data, const FlowOptions& options,
                                         double target_eps = 0.3, double slack = 1e-9);

}  // namespace rbsde
