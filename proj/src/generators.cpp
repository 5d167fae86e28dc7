#include "rbsde/generators.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <utility>

#include "rbsde/error.hpp"

namespace rbsde {

const char* to_string(EnvelopeDirection direction) noexcept {
  return direction == EnvelopeDirection::Lower ? "lower" : "upper";
}

double GeneratorSpec::mu() const noexcept {
  return modulus ? std::max(beta, modulus_growth) : beta;
}

double GeneratorSpec::delta(double t, double y, double z, double dy, double dz) const {
  if (increment) return increment(t, y, z, dy, dz);
  return eval(t, y + dy, z + dz) - eval(t, y, z);
}

namespace {

// |x + d| - |x| without cancellation when x and x + d share a sign.
double abs_increment(double x, double d) {
  const double moved = x + d;
  if (x >= 0.0 && moved >= 0.0) return d;
  if (x <= 0.0 && moved <= 0.0) return -d;
  return std::abs(moved) - std::abs(x);
}

double sqrt_abs_increment(double x, double d) {
  const double a = std::abs(x);
  const double b = std::abs(x + d);
  const double denom = std::sqrt(a) + std::sqrt(b);
  if (denom == 0.0) return 0.0;
  return abs_increment(x, d) / denom;
}

// Closed-form envelopes of x -> sqrt(|x|):
//   lower_n(x) = min(n|x|, sqrt|x|)
//   upper_n(x) = 1/(4n) + n|x|  if |x| < 1/(4n^2),  sqrt|x| otherwise.
double sqrt_envelope(EnvelopeDirection direction, double n, double x) {
  const double a = std::abs(x);
  if (direction == EnvelopeDirection::Lower) return std::min(n * a, std::sqrt(a));
  if (a < 1.0 / (4.0 * n * n)) return 1.0 / (4.0 * n) + n * a;
  return std::sqrt(a);
}

bool sqrt_envelope_linear_branch(EnvelopeDirection direction, double n, double x) {
  const double a = std::abs(x);
  return direction == EnvelopeDirection::Lower ? a <= 1.0 / (n * n) : a < 1.0 / (4.0 * n * n);
}

double sqrt_envelope_increment(EnvelopeDirection direction, double n, double x, double d) {
  const bool linear = sqrt_envelope_linear_branch(direction, n, x);
  if (linear != sqrt_envelope_linear_branch(direction, n, x + d)) {
    return sqrt_envelope(direction, n, x + d) - sqrt_envelope(direction, n, x);
  }
  return linear ? n * abs_increment(x, d) : sqrt_abs_increment(x, d);
}

}  // namespace

namespace generators {

GeneratorSpec zero() {
  GeneratorSpec g;
  g.name = "zero";
  g.eval = [](double, double, double) { return 0.0; };
  g.beta = 0.0;
  g.modulus = [](double) { return 0.0; };
  g.modulus_growth = 0.0;
  g.depends_on_y = false;
  g.depends_on_z = false;
  g.lipschitz = 0.0;
  g.increment = [](double, double, double, double, double) { return 0.0; };
  return g;
}

GeneratorSpec affine(double a, double b, double c) {
  GeneratorSpec g;
  std::ostringstream name;
  name << "affine(" << a << "," << b << "," << c << ")";
  g.name = name.str();
  g.eval = [a, b, c](double, double y, double z) { return a + b * y + c * z; };
  const double slope = std::max(std::abs(b), std::abs(c));
  g.beta = std::max(std::abs(a), slope);
  g.modulus = [slope](double x) { return slope * x; };
  g.modulus_growth = slope;
  g.depends_on_y = b != 0.0;
  g.depends_on_z = c != 0.0;
  g.lipschitz = slope;
  g.increment = [b, c](double, double, double, double dy, double dz) { return b * dy + c * dz; };
  return g;
}

GeneratorSpec abs_z() {
  GeneratorSpec g;
  g.name = "abs_z";
  g.eval = [](double, double, double z) { return std::abs(z); };
  g.beta = 1.0;
  g.modulus = [](double x) { return x; };
  g.modulus_growth = 1.0;
  g.depends_on_y = false;
  g.depends_on_z = true;
  g.lipschitz = 1.0;
  g.increment = [](double, double, double z, double, double dz) { return abs_increment(z, dz); };
  return g;
}

GeneratorSpec sqrt_z() {
  GeneratorSpec g;
  g.name = "sqrt_z";
  g.eval = [](double, double, double z) { return std::sqrt(std::abs(z)); };
  g.beta = 1.0;
  g.modulus = [](double x) { return std::sqrt(x); };
  g.modulus_growth = 1.0;
  g.depends_on_y = false;
  g.depends_on_z = true;
  g.increment = [](double, double, double z, double, double dz) { return sqrt_abs_increment(z, dz); };
  g.analytic_envelope = [](EnvelopeDirection d, double n, double, double, double z) {
    return sqrt_envelope(d, n, z);
  };
  g.analytic_envelope_increment = [](EnvelopeDirection d, double n, double, double, double z, double,
                                     double dz) { return sqrt_envelope_increment(d, n, z, dz); };
  return g;
}

GeneratorSpec sqrt_y() {
  GeneratorSpec g;
  g.name = "sqrt_y";
  g.eval = [](double, double y, double) { return std::sqrt(std::abs(y)); };
  g.beta = 1.0;
  g.modulus = [](double x) { return std::sqrt(x); };
  g.modulus_growth = 1.0;
  g.depends_on_y = true;
  g.depends_on_z = false;
  g.increment = [](double, double y, double, double dy, double) { return sqrt_abs_increment(y, dy); };
  g.analytic_envelope = [](EnvelopeDirection d, double n, double, double y, double) {
    return sqrt_envelope(d, n, y);
  };
  g.analytic_envelope_increment = [](EnvelopeDirection d, double n, double, double y, double, double dy,
                                     double) { return sqrt_envelope_increment(d, n, y, dy); };
  return g;
}

GeneratorSpec shifted(const GeneratorSpec& base, double c) {
  if (!std::isfinite(c)) fail(ErrorKind::InvalidConfig, "generator shift must be finite");
  if (c == 0.0) return base;
  GeneratorSpec g = base;
  std::ostringstream name;
  name << base.name << "+" << c;
  g.name = name.str();
  g.eval = [inner = base.eval, c](double t, double y, double z) { return inner(t, y, z) + c; };
  g.beta = base.beta + std::abs(c);
  if (base.analytic_envelope) {
    g.analytic_envelope = [inner = base.analytic_envelope, c](EnvelopeDirection d, double n, double t,
                                                              double y, double z) {
      return inner(d, n, t, y, z) + c;
    };
  }
  // Increments, modulus and Lipschitz constant are unchanged by a constant shift.
  if (!base.increment) {
    g.increment = [inner = base.eval](double t, double y, double z, double dy, double dz) {
      return inner(t, y + dy, z + dz) - inner(t, y, z);
    };
  }
  return g;
}

GeneratorSpec by_name(const std::string& name, double a, double b, double c) {
  if (name == "zero") return zero();
  if (name == "affine") return affine(a, b, c);
  if (name == "abs_z") return abs_z();
  if (name == "sqrt_z") return sqrt_z();
  if (name == "sqrt_y") return sqrt_y();
  fail(ErrorKind::InvalidConfig, "unknown generator '" + name + "'");
}

}  // namespace generators

EnvelopeGenerator::EnvelopeGenerator(GeneratorSpec base, double n, EnvelopeDirection direction,
                                     double h, bool allow_analytic)
    : base_(std::move(base)), n_(n), direction_(direction), h_(h) {
  if (!(n_ > base_.beta)) {
    std::ostringstream msg;
    msg << "envelope order n = " << n_ << " must exceed the growth constant beta = " << base_.beta
        << " of " << base_.name;
    fail(ErrorKind::EnvelopeUndefined, msg.str());
  }
  if (!(h_ > 0.0) || !std::isfinite(h_)) fail(ErrorKind::InvalidConfig, "envelope grid step must be positive");
  if (allow_analytic) {
    fixed_point_ = base_.lipschitz && n_ >= *base_.lipschitz;
    analytic_ = fixed_point_ || static_cast<bool>(base_.analytic_envelope);
  }
}

std::string EnvelopeGenerator::label() const {
  std::ostringstream s;
  s << to_string(direction_) << "_envelope(" << base_.name << ", n=" << n_ << ")";
  return s.str();
}

double EnvelopeGenerator::operator()(double t, double y, double z) const {
  if (fixed_point_) return base_.eval(t, y, z);
  if (analytic_) return base_.analytic_envelope(direction_, n_, t, y, z);
  return numeric(t, y, z);
}

double EnvelopeGenerator::increment(double t, double y, double z, double dy, double dz) const {
  if (fixed_point_) return base_.delta(t, y, z, dy, dz);
  if (analytic_ && base_.analytic_envelope_increment) {
    return base_.analytic_envelope_increment(direction_, n_, t, y, z, dy, dz);
  }
  return (*this)(t, y + dy, z + dz) - (*this)(t, y, z);
}

namespace {

constexpr double kFullGridBudget = 2.0e6;

struct Search {
  const GeneratorSpec& g;
  double n;
  EnvelopeDirection direction;
  double t, y, z;

  double objective(double u, double v) const {
    const double dist = std::abs(y - u) + std::abs(z - v);
    const double gv = g.eval(t, u, v);
    return direction == EnvelopeDirection::Lower ? gv + n * dist : gv - n * dist;
  }
  bool better(double a, double b) const {
    return direction == EnvelopeDirection::Lower ? a < b : a > b;
  }
};

struct Best {
  double value;
  double u;
  double v;
};

// Grid points i*step inside [lo, hi].
template <class F>
void for_each_aligned(double lo, double hi, double step, F&& f) {
  const double first = std::ceil(lo / step);
  const double last = std::floor(hi / step);
  for (double i = first; i <= last; i += 1.0) f(i * step);
}

// Scans the l1 ball of the given radius around (cu, cv), intersected with the
// outer ball around (y, z), on a step-aligned grid.
void scan_ball(const Search& s, double radius, double cu, double cv, double outer, double step,
               bool use_u, bool use_v, Best& best) {
  auto consider = [&](double u, double v) {
    if (std::abs(u - s.y) + std::abs(v - s.z) > outer) return;
    const double val = s.objective(u, v);
    if (s.better(val, best.value)) best = {val, u, v};
  };
  if (use_u && use_v) {
    for_each_aligned(cu - radius, cu + radius, step, [&](double u) {
      const double rem = radius - std::abs(u - cu);
      for_each_aligned(cv - rem, cv + rem, step, [&](double v) { consider(u, v); });
    });
  } else if (use_u) {
    for_each_aligned(cu - radius, cu + radius, step, [&](double u) { consider(u, s.z); });
  } else {
    for_each_aligned(cv - radius, cv + radius, step, [&](double v) { consider(s.y, v); });
  }
}

}  // namespace

double EnvelopeGenerator::numeric(double t, double y, double z) const {
  const Search s{base_, n_, direction_, t, y, z};
  Best best{s.objective(y, z), y, z};
  const bool use_u = base_.depends_on_y;
  const bool use_v = base_.depends_on_z;
  if (!use_u && !use_v) return best.value;

  const double radius = 2.0 * base_.beta * (1.0 + std::abs(y) + std::abs(z)) / (n_ - base_.beta);
  if (radius <= 0.0) return best.value;
  const int dims = (use_u ? 1 : 0) + (use_v ? 1 : 0);
  const double count = std::pow(2.0 * radius / h_, dims);
  if (count <= kFullGridBudget) {
    scan_ball(s, radius, y, z, radius, h_, use_u, use_v, best);
    return best.value;
  }
  // Coarse-to-fine: full ball at a coarse step, then shrinking windows around
  // the incumbent. Every evaluated point is feasible, so the result still
  // never undershoots (lower) or overshoots (upper) the exact envelope.
  double step = 2.0 * radius / std::pow(kFullGridBudget, 1.0 / dims);
  scan_ball(s, radius, y, z, radius, step, use_u, use_v, best);
  while (step > h_) {
    const double window = 2.0 * step;
    step = std::max(h_, step / 16.0);
    scan_ball(s, window, best.u, best.v, radius, step, use_u, use_v, best);
  }
  return best.value;
}

double lower_envelope(const GeneratorSpec& g, double n, double h, double t, double y, double z) {
  return EnvelopeGenerator(g, n, EnvelopeDirection::Lower, h)(t, y, z);
}

double upper_envelope(const GeneratorSpec& g, double n, double h, double t, double y, double z) {
  return EnvelopeGenerator(g, n, EnvelopeDirection::Upper, h)(t, y, z);
}

double envelope_gap_bound(const GeneratorSpec& g, double n) {
  if (!g.modulus) {
    fail(ErrorKind::CertificateUnavailable, "generator " + g.name + " declares no modulus of continuity");
  }
  const double mu = g.mu();
  if (!(n > mu)) {
    std::ostringstream msg;
    msg << "gap bound needs n > mu = " << mu << ", got n = " << n;
    fail(ErrorKind::EnvelopeUndefined, msg.str());
  }
  return (*g.modulus)(mu / (n - mu));
}

}  // namespace rbsde
