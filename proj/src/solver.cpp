#include "rbsde/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>
#include <sstream>
#include <unordered_map>
#include <utility>

#include "rbsde/error.hpp"
#include "rbsde/io.hpp"

namespace rbsde {

const char* to_string(Scheme scheme) noexcept {
  return scheme == Scheme::Explicit ? "explicit" : "implicit";
}

Scheme scheme_from_string(const std::string& name) {
  if (name == "explicit") return Scheme::Explicit;
  if (name == "implicit") return Scheme::Implicit;
  fail(ErrorKind::InvalidConfig, "unknown scheme '" + name + "'");
}

double Driver::delta(double t, double y, double z, double dy, double dz) const {
  if (increment) return increment(t, y, z, dy, dz);
  return eval(t, y + dy, z + dz) - eval(t, y, z);
}

Driver make_driver(const GeneratorSpec& g) {
  if (!g.lipschitz) {
    fail(ErrorKind::InvalidConfig,
         "generator " + g.name + " has no Lipschitz constant; solve one of its envelopes instead");
  }
  Driver d;
  d.label = g.name;
  d.eval = g.eval;
  d.lipschitz = *g.lipschitz;
  d.increment = g.increment;
  return d;
}

namespace {

struct CacheKey {
  double t;
  long long qy;
  long long qz;
  bool operator==(const CacheKey&) const = default;
};

struct CacheKeyHash {
  std::size_t operator()(const CacheKey& key) const noexcept {
    std::size_t h = std::hash<double>{}(key.t);
    h ^= std::hash<long long>{}(key.qy) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    h ^= std::hash<long long>{}(key.qz) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    return h;
  }
};

struct EnvelopeCache {
  std::mutex mutex;
  std::unordered_map<CacheKey, double, CacheKeyHash> values;
};

}  // namespace

Driver make_driver(const EnvelopeGenerator& envelope) {
  Driver d;
  d.label = envelope.label();
  d.lipschitz = envelope.lipschitz();
  d.slack = envelope.evaluation_slack();
  if (envelope.is_analytic()) {
    d.eval = [envelope](double t, double y, double z) { return envelope(t, y, z); };
    d.increment = [envelope](double t, double y, double z, double dy, double dz) {
      return envelope.increment(t, y, z, dy, dz);
    };
    return d;
  }
  // Quantisation moves the argument by at most h/2 per coordinate, which an
  // n-Lipschitz envelope turns into at most n*h extra error.
  d.slack += envelope.n() * envelope.h();
  auto cache = std::make_shared<EnvelopeCache>();
  const bool use_y = envelope.base().depends_on_y;
  const bool use_z = envelope.base().depends_on_z;
  d.eval = [envelope, cache, use_y, use_z](double t, double y, double z) {
    const double h = envelope.h();
    const CacheKey key{t, use_y ? std::llround(y / h) : 0, use_z ? std::llround(z / h) : 0};
    {
      std::lock_guard lock(cache->mutex);
      if (auto it = cache->values.find(key); it != cache->values.end()) return it->second;
    }
    const double value = envelope.numeric(t, key.qy * h, key.qz * h);
    std::lock_guard lock(cache->mutex);
    cache->values.emplace(key, value);
    return value;
  };
  return d;
}

void validate_problem_data(const Lattice& lattice, std::span<const double> terminal,
                           const ProcessPtr& lower, const ProcessPtr& upper) {
  const int n = lattice.steps();
  if (terminal.size() != static_cast<std::size_t>(n) + 1) {
    fail(ErrorKind::InvalidConfig, "terminal condition needs one value per step-N node");
  }
  if (!lower) fail(ErrorKind::InvalidConfig, "a lower barrier is required");
  if (!(lower->lattice() == lattice) || (upper && !(upper->lattice() == lattice))) {
    fail(ErrorKind::LatticeMismatch, "barriers must live on the problem lattice");
  }
  for (int j = 0; j <= n; ++j) {
    if (!std::isfinite(terminal[j])) fail(ErrorKind::Data, "non-finite terminal value");
    if (terminal[j] < (*lower)(n, j)) {
      std::ostringstream msg;
      msg << "terminal value " << terminal[j] << " below lower barrier " << (*lower)(n, j)
          << " at node (" << n << ", " << j << ")";
      fail(ErrorKind::InvalidConfig, msg.str());
    }
    if (upper && terminal[j] > (*upper)(n, j)) {
      std::ostringstream msg;
      msg << "terminal value " << terminal[j] << " above upper barrier " << (*upper)(n, j)
          << " at node (" << n << ", " << j << ")";
      fail(ErrorKind::InvalidConfig, msg.str());
    }
  }
  if (upper) {
    for (int k = 0; k <= n; ++k) {
      for (int j = 0; j <= k; ++j) {
        if ((*lower)(k, j) > (*upper)(k, j)) {
          fail(ErrorKind::InvalidConfig, "lower barrier exceeds upper barrier at node (" +
                                             std::to_string(k) + ", " + std::to_string(j) + ")");
        }
      }
    }
  }
}

RBSDEProblem::RBSDEProblem(Lattice lattice, std::vector<double> terminal, Driver driver,
                           ProcessPtr lower, ProcessPtr upper)
    : lattice_(std::move(lattice)),
      terminal_(std::move(terminal)),
      driver_(std::move(driver)),
      lower_(std::move(lower)),
      upper_(std::move(upper)) {
  validate_problem_data(lattice_, terminal_, lower_, upper_);
  if (!driver_.eval) fail(ErrorKind::InvalidConfig, "problem needs a driver");
  const double product = driver_.lipschitz * lattice_.sqrt_dt();
  stability_ok_ = product <= 1.0;
  if (!stability_ok_) {
    std::ostringstream msg;
    msg << "lip * sqrt(dt) = " << product << " > 1 for driver " << driver_.label
        << "; the explicit one-step map may not be monotone";
    warnings_.push_back(msg.str());
  }
}

RBSDEProblem::RBSDEProblem(const ProblemData& data, Driver driver)
    : RBSDEProblem(data.lattice, data.terminal, std::move(driver), data.lower, data.upper) {}

double expected_total_push(const LatticeProcess& increments) {
  double total = 0.0;
  for (int k = 0; k <= increments.lattice().steps(); ++k) total += expectation_at(increments, k);
  return total;
}

namespace {

// Correction d with fl(from + d) == to, so that adding the stored push to the
// pre-reflection value lands exactly on the barrier.
double exact_correction(double from, double to) {
  double d = to - from;
  constexpr double inf = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 16 && from + d != to; ++i) d = std::nextafter(d, from + d < to ? inf : -inf);
  return d;
}

double picard(const Driver& g, double t, double e, double z, double dt, const SolverOptions& opt) {
  double y = e;
  for (int it = 0; it < opt.picard_max; ++it) {
    const double next = e + g(t, y, z) * dt;
    if (std::abs(next - y) <= opt.picard_tol) return next;
    y = next;
  }
  std::ostringstream msg;
  msg << "Picard iteration did not reach tolerance " << opt.picard_tol << " within " << opt.picard_max
      << " iterations (lip * dt = " << g.lipschitz * dt << ")";
  fail(ErrorKind::Iteration, msg.str());
}

void check_options(const RBSDEProblem& problem, const SolverOptions& opt) {
  if (opt.scheme == Scheme::Implicit) {
    const double contraction = problem.driver().lipschitz * problem.lattice().dt();
    if (!(contraction < 1.0)) {
      std::ostringstream msg;
      msg << "implicit scheme needs lip * dt < 1, got " << contraction;
      fail(ErrorKind::InvalidConfig, msg.str());
    }
    if (!(opt.picard_tol > 0.0) || opt.picard_max < 1) {
      fail(ErrorKind::InvalidConfig, "Picard tolerance and iteration cap must be positive");
    }
  }
}

}  // namespace

StepResult backward_step(const RBSDEProblem& problem, int k, std::span<const double> next,
                         const SolverOptions& options) {
  const Lattice& lat = problem.lattice();
  if (k < 0 || k >= lat.steps()) fail(ErrorKind::Index, "backward step index out of range");
  if (next.size() != static_cast<std::size_t>(k) + 2) {
    fail(ErrorKind::Index, "backward step needs the k+1 layer");
  }
  const double t = lat.time(k);
  const double dt = lat.dt();
  const double s = lat.sqrt_dt();
  const Driver& g = problem.driver();
  const auto lower = problem.lower()->step(k);
  const LatticeProcess* upper = problem.upper().get();

  StepResult r;
  const std::size_t width = static_cast<std::size_t>(k) + 1;
  r.y.resize(width);
  r.z.resize(width);
  r.dk_plus.assign(width, 0.0);
  r.dk_minus.assign(width, 0.0);
  r.y_tilde.resize(width);
  for (int j = 0; j <= k; ++j) {
    const double e = one_step_mean(next[j + 1], next[j]);
    const double z = one_step_coefficient(next[j + 1], next[j], s);
    const double yt = options.scheme == Scheme::Explicit ? e + g(t, e, z) * dt : picard(g, t, e, z, dt, options);
    r.z[j] = z;
    r.y_tilde[j] = yt;
    const double lo = lower[j];
    if (yt < lo) {
      r.y[j] = lo;
      r.dk_plus[j] = exact_correction(yt, lo);
    } else if (upper && yt > (*upper)(k, j)) {
      const double hi = (*upper)(k, j);
      r.y[j] = hi;
      r.dk_minus[j] = -exact_correction(yt, hi);
    } else {
      r.y[j] = yt;
    }
  }
  return r;
}

RBSDESolution solve_backward(const RBSDEProblem& problem, const SolverOptions& options) {
  check_options(problem, options);
  const Lattice& lat = problem.lattice();
  const int n = lat.steps();
  RBSDESolution sol{LatticeProcess(lat), LatticeProcess(lat), LatticeProcess(lat),
                    problem.two_barrier() ? std::optional<LatticeProcess>(LatticeProcess(lat)) : std::nullopt,
                    options.scheme, problem.lower(), problem.upper(), problem.stability_ok()};
  std::copy(problem.terminal().begin(), problem.terminal().end(), sol.y.step(n).begin());
  for (int k = n - 1; k >= 0; --k) {
    StepResult r = backward_step(problem, k, sol.y.step(k + 1), options);
    std::copy(r.y.begin(), r.y.end(), sol.y.step(k).begin());
    std::copy(r.z.begin(), r.z.end(), sol.z.step(k).begin());
    std::copy(r.dk_plus.begin(), r.dk_plus.end(), sol.dk_plus.step(k).begin());
    if (sol.dk_minus) std::copy(r.dk_minus.begin(), r.dk_minus.end(), sol.dk_minus->step(k).begin());
  }
  return sol;
}

ResidualReport residual_check(const RBSDEProblem& problem, const RBSDESolution& sol) {
  const Lattice& lat = problem.lattice();
  if (!(sol.lattice() == lat)) fail(ErrorKind::LatticeMismatch, "solution and problem lattices differ");
  const int n = lat.steps();
  const double dt = lat.dt();
  const double s = lat.sqrt_dt();
  const Driver& g = problem.driver();
  const LatticeProcess& lower = *problem.lower();
  const LatticeProcess* upper = problem.upper().get();

  ResidualReport rep;
  auto dkm = [&](int k, int j) { return sol.dk_minus ? (*sol.dk_minus)(k, j) : 0.0; };
  for (int j = 0; j <= n; ++j) {
    rep.terminal_mismatch_max = std::max(rep.terminal_mismatch_max, std::abs(sol.y(n, j) - problem.terminal()[j]));
  }
  for (int k = 0; k <= n; ++k) {
    const double t = lat.time(k);
    for (int j = 0; j <= k; ++j) {
      const double y = sol.y(k, j);
      const double kp = sol.dk_plus(k, j);
      const double km = dkm(k, j);
      const double lo = lower(k, j);
      rep.barrier_violation_max = std::max(rep.barrier_violation_max, lo - y);
      rep.flatoff_max = std::max(rep.flatoff_max, std::abs(kp * (y - lo)));
      rep.negative_push_max = std::max({rep.negative_push_max, -kp, -km});
      rep.push_product_max = std::max(rep.push_product_max, std::abs(kp * km));
      if (upper) {
        const double hi = (*upper)(k, j);
        rep.barrier_violation_max = std::max(rep.barrier_violation_max, y - hi);
        rep.flatoff_max = std::max(rep.flatoff_max, std::abs(km * (hi - y)));
      }
      if (k == n) {
        rep.negative_push_max = std::max(rep.negative_push_max, std::abs(kp) + std::abs(km));
        continue;
      }
      // The last step reads the terminal condition itself, so a solution whose
      // final layer disagrees with xi shows up in the equation residual too.
      const double up = k + 1 == n ? problem.terminal()[j + 1] : sol.y(k + 1, j + 1);
      const double down = k + 1 == n ? problem.terminal()[j] : sol.y(k + 1, j);
      const double e = one_step_mean(up, down);
      const double z = one_step_coefficient(up, down, s);
      const double y_hat = sol.scheme == Scheme::Explicit ? e : (y - kp) + km;
      const double drift = e + g(t, y_hat, z) * dt;
      const double rhs = (drift + kp) - km;
      rep.equation_max = std::max(rep.equation_max, std::abs(y - rhs));
    }
  }
  return rep;
}

namespace {

bool same_process(const ProcessPtr& a, const ProcessPtr& b) {
  if (a == b) return true;
  if (!a || !b) return false;
  if (!(a->lattice() == b->lattice())) return false;
  const auto ra = a->raw();
  const auto rb = b->raw();
  return std::equal(ra.begin(), ra.end(), rb.begin(), rb.end());
}

}  // namespace

ComparisonReport check_comparison(const RBSDESolution& a, const RBSDESolution& b) {
  if (!(a.lattice() == b.lattice())) fail(ErrorKind::LatticeMismatch, "compared solutions live on different lattices");
  const int n = a.lattice().steps();
  ComparisonReport rep;
  rep.min_y_difference = std::numeric_limits<double>::infinity();
  rep.barriers_equal = same_process(a.lower, b.lower) && same_process(a.upper, b.upper);
  for (int k = 0; k <= n; ++k) {
    for (int j = 0; j <= k; ++j) {
      const double diff = a.y(k, j) - b.y(k, j);
      rep.min_y_difference = std::min(rep.min_y_difference, diff);
      if (diff < 0.0) ++rep.y_violations;
      if (!rep.barriers_equal) continue;
      const double vp = a.dk_plus(k, j) - b.dk_plus(k, j);
      const double vm = (b.dk_minus ? (*b.dk_minus)(k, j) : 0.0) - (a.dk_minus ? (*a.dk_minus)(k, j) : 0.0);
      rep.k_plus_violation_max = std::max(rep.k_plus_violation_max, vp);
      rep.k_minus_violation_max = std::max(rep.k_minus_violation_max, vm);
      if (vp > 0.0 || vm > 0.0) ++rep.k_violations;
    }
  }
  return rep;
}

void write_solution_csv(const RBSDESolution& sol, const std::string& path) {
  const Lattice& lat = sol.lattice();
  CsvWriter csv(path, "k,j,t,B,y,z,Kplus,Kminus");
  for (int k = 0; k <= lat.steps(); ++k) {
    for (int j = 0; j <= k; ++j) {
      csv << k << j << lat.time(k) << lat.brownian(k, j) << sol.y(k, j) << sol.z(k, j) << sol.dk_plus(k, j)
          << (sol.dk_minus ? (*sol.dk_minus)(k, j) : 0.0);
      csv.end_row();
    }
  }
}

}  // namespace rbsde
