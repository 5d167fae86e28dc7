#include "rbsde/envelope_flow.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <sstream>
#include <utility>

#include "rbsde/error.hpp"

namespace rbsde {

const FlowLevel& EnvelopeFlowResult::level(double n) const {
  for (const auto& l : levels) {
    if (l.n == n) return l;
  }
  std::ostringstream msg;
  msg << "no flow level for n = " << n;
  fail(ErrorKind::Index, msg.str());
}

namespace {

double picard_delta(const Driver& upper, double t, double y, double z, double d_mean, double dz,
                    double source, double dt, const SolverOptions& opt) {
  double d = d_mean;
  for (int it = 0; it < opt.picard_max; ++it) {
    const double next = d_mean + (upper.delta(t, y, z, d, dz) + source) * dt;
    if (std::abs(next - d) <= opt.picard_tol) return next;
    d = next;
  }
  fail(ErrorKind::Iteration, "Picard iteration for the gap recursion did not converge");
}

double lower_picard(const Driver& g, double t, double e, double z, double dt, const SolverOptions& opt) {
  double y = e;
  for (int it = 0; it < opt.picard_max; ++it) {
    const double next = e + g(t, y, z) * dt;
    if (std::abs(next - y) <= opt.picard_tol) return next;
    y = next;
  }
  fail(ErrorKind::Iteration, "Picard iteration did not converge");
}

// Weighted mean of f(p(k, j)) at step k.
template <class F>
double expectation_of(const LatticeProcess& p, const std::vector<double>& w, int k, F&& f) {
  double sum = 0.0;
  for (int j = 0; j <= k; ++j) sum += w[j] * f(p(k, j));
  return sum;
}

struct Pair {
  RBSDESolution lower;
  RBSDESolution upper;
  Driver lower_driver;
  Driver upper_driver;
};

}  // namespace

LatticeProcess gap_recursion(const RBSDESolution& lower, const Driver& lower_driver,
                             const Driver& upper_driver, const SolverOptions& options) {
  const Lattice& lat = lower.lattice();
  const int n = lat.steps();
  const double dt = lat.dt();
  const double s = lat.sqrt_dt();
  const LatticeProcess& lo_barrier = *lower.lower;
  const LatticeProcess* hi_barrier = lower.upper.get();
  LatticeProcess delta(lat, 0.0);
  for (int k = n - 1; k >= 0; --k) {
    const double t = lat.time(k);
    for (int j = 0; j <= k; ++j) {
      const double a = lower.y(k + 1, j + 1);
      const double b = lower.y(k + 1, j);
      const double da = delta(k + 1, j + 1);
      const double db = delta(k + 1, j);
      const double e = one_step_mean(a, b);
      const double z = one_step_coefficient(a, b, s);
      const double de = one_step_mean(da, db);
      const double dz = one_step_coefficient(da, db, s);
      double y_tilde = 0.0;
      double d_tilde = 0.0;
      if (options.scheme == Scheme::Explicit) {
        y_tilde = e + lower_driver(t, e, z) * dt;
        const double source = upper_driver(t, e, z) - lower_driver(t, e, z);
        d_tilde = de + (upper_driver.delta(t, e, z, de, dz) + source) * dt;
      } else {
        y_tilde = lower_picard(lower_driver, t, e, z, dt, options);
        const double source = upper_driver(t, y_tilde, z) - lower_driver(t, y_tilde, z);
        d_tilde = picard_delta(upper_driver, t, y_tilde, z, de, dz, source, dt, options);
      }
      // clamp(y + d) - clamp(y) with both clamps written relative to y.
      const double to_lower = lo_barrier(k, j) - y_tilde;
      if (hi_barrier) {
        const double to_upper = (*hi_barrier)(k, j) - y_tilde;
        delta.at(k, j) = std::min(std::max(d_tilde, to_lower), to_upper) -
                         std::min(std::max(0.0, to_lower), to_upper);
      } else {
        delta.at(k, j) = std::max(d_tilde, to_lower) - std::max(0.0, to_lower);
      }
    }
  }
  return delta;
}

EnvelopeFlowResult solve_extremal(const ProblemData& data, const FlowOptions& options) {
  const Lattice& lat = data.lattice;
  const GeneratorSpec& g = data.generator;
  const double mu = g.mu();
  const double horizon = lat.horizon();

  std::vector<double> schedule = options.n_schedule;
  std::sort(schedule.begin(), schedule.end());
  schedule.erase(std::unique(schedule.begin(), schedule.end()), schedule.end());

  EnvelopeFlowResult result;
  result.solver = options.solver;
  result.generator_depends_on_y = g.depends_on_y;
  result.generator_has_modulus = static_cast<bool>(g.modulus);
  result.horizon = horizon;

  std::vector<double> feasible;
  for (double n : schedule) {
    std::ostringstream why;
    if (!(n > mu)) {
      why << "n = " << n << " skipped: not above mu = " << mu;
    } else if (n * lat.sqrt_dt() > 1.0) {
      why << "n = " << n << " skipped: n sqrt(dt) = " << n * lat.sqrt_dt() << " > 1";
    } else {
      feasible.push_back(n);
      continue;
    }
    result.skipped.push_back(n);
    result.warnings.push_back(why.str());
  }
  if (feasible.empty()) fail(ErrorKind::InvalidConfig, "no n in the envelope schedule is feasible on this lattice");

  std::optional<Pair> prev;
  double prev_slack = 0.0;
  for (double n : feasible) {
    EnvelopeGenerator lo_env(g, n, EnvelopeDirection::Lower, options.h, options.allow_analytic);
    EnvelopeGenerator up_env(g, n, EnvelopeDirection::Upper, options.h, options.allow_analytic);
    Driver lo_driver = make_driver(lo_env);
    Driver up_driver = make_driver(up_env);
    const RBSDEProblem lo_problem(data, lo_driver);
    const RBSDEProblem up_problem(data, up_driver);

    std::optional<RBSDESolution> lo_sol;
    std::optional<RBSDESolution> up_sol;
    if (options.parallel_pair) {
      auto fut = std::async(std::launch::async, [&] { return solve_backward(up_problem, options.solver); });
      lo_sol.emplace(solve_backward(lo_problem, options.solver));
      up_sol.emplace(fut.get());
    } else {
      lo_sol.emplace(solve_backward(lo_problem, options.solver));
      up_sol.emplace(solve_backward(up_problem, options.solver));
    }
    Pair cur{std::move(*lo_sol), std::move(*up_sol), std::move(lo_driver), std::move(up_driver)};

    FlowLevel level;
    level.n = n;
    level.y_lower_0 = cur.lower.y0();
    level.y_upper_0 = cur.upper.y0();
    level.k_plus_lower_mean = expected_total_push(cur.lower.dk_plus);
    level.k_plus_upper_mean = expected_total_push(cur.upper.dk_plus);
    level.stability_ok = lo_problem.stability_ok() && up_problem.stability_ok();
    if (g.modulus && n > mu) level.bound = 2.0 * envelope_gap_bound(g, n) * horizon;

    const LatticeProcess delta = gap_recursion(cur.lower, cur.lower_driver, cur.upper_driver, options.solver);
    level.gap_curve.resize(static_cast<std::size_t>(lat.steps()) + 1);

    double sup_y = 0.0;
    double z_lower = 0.0;
    double z_upper = 0.0;
    for (int k = 0; k <= lat.steps(); ++k) {
      const auto w = lat.weights(k);
      level.gap_curve[k] = expectation_of(delta, w, k, [](double v) { return v; });
      if (k < lat.steps()) {
        auto sq = [](double v) { return v * v; };
        z_lower += expectation_of(cur.lower.z, w, k, sq) * lat.dt();
        z_upper += expectation_of(cur.upper.z, w, k, sq) * lat.dt();
      }
      for (int j = 0; j <= k; ++j) {
        const double yl = cur.lower.y(k, j);
        const double yu = cur.upper.y(k, j);
        sup_y = std::max({sup_y, std::abs(yl), std::abs(yu)});
        level.sandwich_violation = std::max(level.sandwich_violation, yl - yu);
        level.push_order_violation =
            std::max(level.push_order_violation, cur.upper.dk_plus(k, j) - cur.lower.dk_plus(k, j));
        if (cur.lower.dk_minus) {
          level.push_order_violation =
              std::max(level.push_order_violation, (*cur.lower.dk_minus)(k, j) - (*cur.upper.dk_minus)(k, j));
        }
        if (prev) {
          level.monotone_lower_violation = std::max(level.monotone_lower_violation, prev->lower.y(k, j) - yl);
          level.monotone_upper_violation = std::max(level.monotone_upper_violation, yu - prev->upper.y(k, j));
        }
      }
    }
    level.sup_abs_y = sup_y;
    level.z_energy = std::max(z_lower, z_upper);
    const double own_slack = (cur.lower_driver.slack + cur.upper_driver.slack) * horizon;
    level.slack = own_slack + prev_slack + 1e-12 * (1.0 + sup_y);
    prev_slack = own_slack;

    if (!level.stability_ok) {
      result.warnings.insert(result.warnings.end(), lo_problem.warnings().begin(), lo_problem.warnings().end());
    }
    result.levels.push_back(std::move(level));
    prev.emplace(std::move(cur));
  }

  result.lower = std::move(prev->lower);
  result.upper = std::move(prev->upper);
  result.lower_driver = std::move(prev->lower_driver);
  result.upper_driver = std::move(prev->upper_driver);
  return result;
}

GapDiagnostic gap_diagnostic(const EnvelopeFlowResult& result, double n, double slack) {
  const FlowLevel& level = result.level(n);
  const Lattice& lat = result.lower.lattice();
  GapDiagnostic diag;
  diag.slack = slack;
  diag.measured = level.gap_curve;
  diag.times.resize(diag.measured.size());
  for (std::size_t k = 0; k < diag.times.size(); ++k) diag.times[k] = lat.time(static_cast<int>(k));
  if (!result.generator_has_modulus) {
    diag.note = "bound omitted (generator declares no modulus of continuity)";
    return diag;
  }
  diag.bound = level.bound;
  if (result.generator_depends_on_y) {
    diag.note = "bound inapplicable (generator depends on y)";
    return diag;
  }
  diag.bound_applicable = true;
  for (double m : diag.measured) {
    if (m > *diag.bound + slack) diag.violated = true;
  }
  diag.note = diag.violated ? "measured gap exceeds bound" : "measured gap within bound";
  return diag;
}

}  // namespace rbsde
