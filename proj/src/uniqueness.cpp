#include "rbsde/uniqueness.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <sstream>

#include "rbsde/error.hpp"

namespace rbsde {

namespace {

struct CurveColumn {
  std::vector<double> lower;
  std::vector<double> upper;
  double gap = 0.0;
  double slack = 0.0;
};

CurveColumn m_column(const ProblemData& data, double c, double n_max, const FlowOptions& options) {
  ProblemData shifted = data;
  shifted.generator = generators::shifted(data.generator, c);
  FlowOptions opts = options;
  opts.n_schedule = {n_max};
  const EnvelopeFlowResult flow = solve_extremal(shifted, opts);
  const Lattice& lat = data.lattice;
  CurveColumn col;
  col.lower.resize(static_cast<std::size_t>(lat.steps()) + 1);
  col.upper.resize(col.lower.size());
  for (int k = 0; k <= lat.steps(); ++k) {
    col.lower[k] = expectation_at(flow.lower.y, k);
    col.upper[k] = expectation_at(flow.upper.y, k);
  }
  const FlowLevel& level = flow.final_level();
  col.gap = *std::max_element(level.gap_curve.begin(), level.gap_curve.end());
  col.slack = level.slack;
  return col;
}

}  // namespace

MCurve compute_m_curves(const ProblemData& data, std::vector<double> c_grid, double n_max,
                        const FlowOptions& options, int jobs) {
  if (c_grid.empty()) fail(ErrorKind::InvalidConfig, "c grid is empty");
  for (double c : c_grid) {
    if (!std::isfinite(c)) fail(ErrorKind::InvalidConfig, "c grid entries must be finite");
  }
  std::sort(c_grid.begin(), c_grid.end());
  c_grid.erase(std::unique(c_grid.begin(), c_grid.end()), c_grid.end());
  if (n_max * data.lattice.sqrt_dt() > 1.0) {
    std::ostringstream msg;
    msg << "n_max = " << n_max << " violates n sqrt(dt) <= 1 on this lattice";
    fail(ErrorKind::InvalidConfig, msg.str());
  }

  std::vector<CurveColumn> columns(c_grid.size());
  const std::size_t width = static_cast<std::size_t>(std::max(1, jobs));
  for (std::size_t first = 0; first < c_grid.size(); first += width) {
    const std::size_t last = std::min(c_grid.size(), first + width);
    if (width == 1) {
      columns[first] = m_column(data, c_grid[first], n_max, options);
      continue;
    }
    std::vector<std::future<CurveColumn>> batch;
    for (std::size_t i = first; i < last; ++i) {
      batch.push_back(std::async(std::launch::async, m_column, std::cref(data), c_grid[i], n_max, std::cref(options)));
    }
    for (std::size_t i = first; i < last; ++i) columns[i] = batch[i - first].get();
  }

  MCurve curve;
  curve.c_grid = std::move(c_grid);
  curve.n_max = n_max;
  const Lattice& lat = data.lattice;
  curve.times.resize(static_cast<std::size_t>(lat.steps()) + 1);
  for (int k = 0; k <= lat.steps(); ++k) curve.times[k] = lat.time(k);
  for (auto& col : columns) {
    curve.m_lower.push_back(std::move(col.lower));
    curve.m_upper.push_back(std::move(col.upper));
    curve.gap.push_back(col.gap);
    curve.slack = std::max(curve.slack, col.slack);
  }
  return curve;
}

MonotonicityReport check_m_monotone(const MCurve& curve, double slack) {
  MonotonicityReport rep;
  for (std::size_t i = 1; i < curve.c_grid.size(); ++i) {
    for (std::size_t k = 0; k < curve.times.size(); ++k) {
      for (const auto* m : {&curve.m_lower, &curve.m_upper}) {
        const double drop = (*m)[i - 1][k] - (*m)[i][k];
        rep.max_violation = std::max(rep.max_violation, drop);
        if (drop > slack) ++rep.violations;
      }
    }
  }
  return rep;
}

ScanReport scan_nonuniqueness(const MCurve& curve, double tol) {
  if (!(tol > curve.slack)) {
    std::ostringstream msg;
    msg << "scan tolerance " << tol << " must exceed the numeric slack " << curve.slack;
    fail(ErrorKind::InvalidConfig, msg.str());
  }
  ScanReport rep;
  rep.tol = tol;
  rep.slack = curve.slack;
  rep.n_max = curve.n_max;
  for (std::size_t i = 0; i < curve.c_grid.size(); ++i) {
    if (curve.gap[i] > tol) rep.flagged.push_back(curve.c_grid[i]);
  }
  rep.note =
      "gap(c) at finite n bounds the extremal gap from above: flagged values are candidate non-uniqueness, "
      "unflagged values show no evidence of non-uniqueness";
  return rep;
}

CertificateReport uniqueness_certificate(const ProblemData& data, const FlowOptions& options, double target_eps,
                                         double slack) {
  const GeneratorSpec& g = data.generator;
  if (g.depends_on_y) {
    fail(ErrorKind::CertificateRefused, "generator " + g.name + " depends on y; the gap bound needs a z-only driver");
  }
  if (!g.modulus) {
    fail(ErrorKind::CertificateUnavailable, "generator " + g.name + " declares no modulus of continuity");
  }
  const EnvelopeFlowResult flow = solve_extremal(data, options);
  CertificateReport rep;
  rep.target_eps = target_eps;
  rep.slack = slack;
  bool all_within = true;
  bool decreasing = true;
  for (const FlowLevel& level : flow.levels) {
    CertificateLevel c;
    c.n = level.n;
    c.measured_gap0 = level.gap_curve.front();
    c.bound = *level.bound;
    c.within = c.measured_gap0 <= c.bound + slack + level.slack;
    all_within = all_within && c.within;
    if (!rep.levels.empty() && !(c.bound < rep.levels.back().bound)) decreasing = false;
    rep.levels.push_back(c);
  }
  const bool small = rep.levels.back().bound < target_eps;
  rep.verdict = all_within && decreasing && small ? "certified-decaying" : "not-certified";
  return rep;
}

}  // namespace rbsde
