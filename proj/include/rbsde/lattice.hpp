#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace rbsde {

/// Recombining binomial random walk approximating a scalar Brownian motion on
/// [0, T]. Node (k, j) sits at time k*dt with j up-moves, B(k, j) = (2j - k)*sqrt(dt).
/// Successors of (k, j) are (k+1, j+1) and (k+1, j), each with weight 1/2.
class Lattice {
 public:
  Lattice() : Lattice(1.0, 1) {}
  Lattice(double horizon, int steps);

  double horizon() const noexcept { return horizon_; }
  int steps() const noexcept { return steps_; }
  double dt() const noexcept { return dt_; }
  double sqrt_dt() const noexcept { return sqrt_dt_; }

  double time(int k) const noexcept { return k * dt_; }
  double brownian(int k, int j) const noexcept { return (2 * j - k) * sqrt_dt_; }

  /// Offset of step k in step-major flat storage.
  static std::size_t offset(int k) noexcept {
    return static_cast<std::size_t>(k) * static_cast<std::size_t>(k + 1) / 2;
  }
  std::size_t node_count() const noexcept { return offset(steps_ + 1); }

  /// Binomial(k, j) * 2^-k for j = 0..k, normalised so the row sums to one.
  std::vector<double> weights(int k) const;

  /// The first `steps` steps of this lattice with dt kept bit-identical.
  Lattice truncated(int steps) const;

  bool operator==(const Lattice& other) const noexcept {
    return steps_ == other.steps_ && dt_ == other.dt_;
  }

 private:
  Lattice(double horizon, int steps, double dt);

  double horizon_;
  int steps_;
  double dt_;
  double sqrt_dt_;
};

// The two one-step formulas every backward sweep shares. Keeping them in one
// place makes solver output and residual checks bit-identical.
inline double one_step_mean(double up, double down) noexcept { return 0.5 * (up + down); }
inline double one_step_coefficient(double up, double down, double sqrt_dt) noexcept {
  return (up - down) / (2.0 * sqrt_dt);
}

/// A real value at every node of a lattice, stored step by step.
class LatticeProcess {
 public:
  LatticeProcess() : LatticeProcess(Lattice{}) {}
  explicit LatticeProcess(const Lattice& lattice, double fill = 0.0);

  const Lattice& lattice() const noexcept { return lattice_; }

  double operator()(int k, int j) const noexcept { return values_[Lattice::offset(k) + j]; }
  double& at(int k, int j) noexcept { return values_[Lattice::offset(k) + j]; }

  std::span<const double> step(int k) const;
  std::span<double> step(int k);

  std::span<const double> raw() const noexcept { return values_; }
  std::span<double> raw() noexcept { return values_; }

 private:
  Lattice lattice_;
  std::vector<double> values_;
};

/// result(j) = (p(k+1, j+1) + p(k+1, j)) / 2 for j = 0..k.
std::vector<double> conditional_expectation(const LatticeProcess& p, int k);

/// result(j) = (p(k+1, j+1) - p(k+1, j)) / (2 sqrt(dt)); the discrete z-integrand.
std::vector<double> martingale_coefficient(const LatticeProcess& p, int k);

/// Unconditional mean of p at step k.
double expectation_at(const LatticeProcess& p, int k);

/// value(k, j) = f(k*dt, B(k, j)); throws a data error on non-finite output.
LatticeProcess process_from_function(const Lattice& lattice,
                                     const std::function<double(double, double)>& f);

}  // namespace rbsde
