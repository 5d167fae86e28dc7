#pragma once

#include <functional>
#include <optional>
#include <string>

namespace rbsde {

using DriverFn = std::function<double(double t, double y, double z)>;
/// g(t, y + dy, z + dz) - g(t, y, z), evaluated without cancellation where the
/// closed form allows it.
using IncrementFn = std::function<double(double t, double y, double z, double dy, double dz)>;
using ModulusFn = std::function<double(double)>;

enum class EnvelopeDirection { Lower, Upper };

const char* to_string(EnvelopeDirection direction) noexcept;

using AnalyticEnvelopeFn =
    std::function<double(EnvelopeDirection direction, double n, double t, double y, double z)>;
using AnalyticIncrementFn = std::function<double(EnvelopeDirection direction, double n, double t,
                                                 double y, double z, double dy, double dz)>;

/// A driver g(t, y, z) with linear growth |g| <= beta (1 + |y| + |z|) and,
/// optionally, a modulus of continuity phi with phi(x) <= A (1 + x).
struct GeneratorSpec {
  std::string name;
  DriverFn eval;
  double beta = 0.0;
  std::optional<ModulusFn> modulus;
  double modulus_growth = 0.0;  // A
  bool depends_on_y = true;
  bool depends_on_z = true;
  /// Lipschitz constant in (y, z) under |dy| + |dz|, when the driver has one.
  std::optional<double> lipschitz;
  IncrementFn increment;
  AnalyticEnvelopeFn analytic_envelope;
  AnalyticIncrementFn analytic_envelope_increment;

  double operator()(double t, double y, double z) const { return eval(t, y, z); }

  /// max(beta, A) when a modulus is declared, beta otherwise.
  double mu() const noexcept;

  /// Stable increment, falling back to a plain difference.
  double delta(double t, double y, double z, double dy, double dz) const;
};

namespace generators {

GeneratorSpec zero();
/// a + b*y + c*z
GeneratorSpec affine(double a, double b, double c);
/// |z|
GeneratorSpec abs_z();
/// sqrt(|z|)
GeneratorSpec sqrt_z();
/// sqrt(|y|)
GeneratorSpec sqrt_y();
/// g + c
GeneratorSpec shifted(const GeneratorSpec& base, double c);

/// Looks up a built-in by identifier; affine reads a, b, c.
GeneratorSpec by_name(const std::string& name, double a = 0.0, double b = 0.0, double c = 0.0);

}  // namespace generators

/// Lipschitz lower/upper envelope of a generator,
///   lower: inf_{u,v} g(t,u,v) + n (|y-u| + |z-v|)
///   upper: sup_{u,v} g(t,u,v) - n (|y-u| + |z-v|)
/// The search runs over an h-aligned grid on the l1 ball of radius
/// 2 beta (1 + |y| + |z|) / (n - beta) around (y, z); outside that ball the
/// objective cannot beat its value at the centre.
class EnvelopeGenerator {
 public:
  EnvelopeGenerator(GeneratorSpec base, double n, EnvelopeDirection direction, double h,
                    bool allow_analytic = true);

  const GeneratorSpec& base() const noexcept { return base_; }
  double n() const noexcept { return n_; }
  double h() const noexcept { return h_; }
  EnvelopeDirection direction() const noexcept { return direction_; }
  double lipschitz() const noexcept { return n_; }

  /// True when evaluation uses a closed form (registered override, or the
  /// base driver itself when n dominates its Lipschitz constant).
  bool is_analytic() const noexcept { return analytic_; }

  double operator()(double t, double y, double z) const;
  double numeric(double t, double y, double z) const;
  double increment(double t, double y, double z, double dy, double dz) const;

  /// Worst-case one-sided error of a single evaluation: 0 for closed forms,
  /// 2 n h for the grid search.
  double evaluation_slack() const noexcept { return analytic_ ? 0.0 : 2.0 * n_ * h_; }

  std::string label() const;

 private:
  GeneratorSpec base_;
  double n_;
  EnvelopeDirection direction_;
  double h_;
  bool analytic_ = false;
  bool fixed_point_ = false;
};

double lower_envelope(const GeneratorSpec& g, double n, double h, double t, double y, double z);
double upper_envelope(const GeneratorSpec& g, double n, double h, double t, double y, double z);

/// phi(mu / (n - mu)): bounds the pointwise envelope gap in either direction.
double envelope_gap_bound(const GeneratorSpec& g, double n);

}  // namespace rbsde
