#include "rbsde/lattice.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "rbsde/error.hpp"

namespace rbsde {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::InvalidConfig: return "invalid-config";
    case ErrorKind::Index: return "index";
    case ErrorKind::Data: return "data";
    case ErrorKind::EnvelopeUndefined: return "envelope-undefined";
    case ErrorKind::CertificateUnavailable: return "certificate-unavailable";
    case ErrorKind::CertificateRefused: return "certificate-refused";
    case ErrorKind::Iteration: return "iteration";
    case ErrorKind::HypothesisViolated: return "hypothesis-violated";
    case ErrorKind::Resource: return "resource";
    case ErrorKind::LatticeMismatch: return "lattice-mismatch";
  }
  return "unknown";
}

Lattice::Lattice(double horizon, int steps) : horizon_(horizon), steps_(steps) {
  if (!(horizon > 0.0) || !std::isfinite(horizon)) {
    fail(ErrorKind::InvalidConfig, "lattice horizon must be positive, got " + std::to_string(horizon));
  }
  if (steps < 1) {
    fail(ErrorKind::InvalidConfig, "lattice needs at least one step, got " + std::to_string(steps));
  }
  dt_ = horizon / steps;
  sqrt_dt_ = std::sqrt(dt_);
}

Lattice::Lattice(double horizon, int steps, double dt)
    : horizon_(horizon), steps_(steps), dt_(dt), sqrt_dt_(std::sqrt(dt)) {}

Lattice Lattice::truncated(int steps) const {
  if (steps < 1 || steps > steps_) {
    fail(ErrorKind::Index, "cannot truncate a " + std::to_string(steps_) + "-step lattice to " +
                               std::to_string(steps) + " steps");
  }
  return Lattice(steps * dt_, steps, dt_);
}

std::vector<double> Lattice::weights(int k) const {
  if (k < 0 || k > steps_) fail(ErrorKind::Index, "step " + std::to_string(k) + " outside lattice");
  std::vector<double> w(static_cast<std::size_t>(k) + 1);
  const double log_norm = std::lgamma(k + 1.0) - k * std::numbers::ln2;
  double total = 0.0;
  for (int j = 0; j <= k; ++j) {
    w[j] = std::exp(log_norm - std::lgamma(j + 1.0) - std::lgamma(k - j + 1.0));
    total += w[j];
  }
  for (double& x : w) x /= total;
  return w;
}

LatticeProcess::LatticeProcess(const Lattice& lattice, double fill)
    : lattice_(lattice), values_(lattice.node_count(), fill) {}

std::span<const double> LatticeProcess::step(int k) const {
  if (k < 0 || k > lattice_.steps()) fail(ErrorKind::Index, "step " + std::to_string(k) + " outside lattice");
  return {values_.data() + Lattice::offset(k), static_cast<std::size_t>(k) + 1};
}

std::span<double> LatticeProcess::step(int k) {
  if (k < 0 || k > lattice_.steps()) fail(ErrorKind::Index, "step " + std::to_string(k) + " outside lattice");
  return {values_.data() + Lattice::offset(k), static_cast<std::size_t>(k) + 1};
}

namespace {

void require_interior_step(const LatticeProcess& p, int k) {
  if (k < 0 || k >= p.lattice().steps()) {
    fail(ErrorKind::Index, "step " + std::to_string(k) + " has no successors on a " +
                               std::to_string(p.lattice().steps()) + "-step lattice");
  }
}

}  // namespace

std::vector<double> conditional_expectation(const LatticeProcess& p, int k) {
  require_interior_step(p, k);
  const auto next = p.step(k + 1);
  std::vector<double> out(static_cast<std::size_t>(k) + 1);
  for (int j = 0; j <= k; ++j) out[j] = one_step_mean(next[j + 1], next[j]);
  return out;
}

std::vector<double> martingale_coefficient(const LatticeProcess& p, int k) {
  require_interior_step(p, k);
  const auto next = p.step(k + 1);
  const double s = p.lattice().sqrt_dt();
  std::vector<double> out(static_cast<std::size_t>(k) + 1);
  for (int j = 0; j <= k; ++j) out[j] = one_step_coefficient(next[j + 1], next[j], s);
  return out;
}

double expectation_at(const LatticeProcess& p, int k) {
  const auto values = p.step(k);
  const auto w = p.lattice().weights(k);
  double sum = 0.0;
  for (int j = 0; j <= k; ++j) sum += w[j] * values[j];
  return sum;
}

LatticeProcess process_from_function(const Lattice& lattice,
                                     const std::function<double(double, double)>& f) {
  LatticeProcess p(lattice);
  for (int k = 0; k <= lattice.steps(); ++k) {
    const double t = lattice.time(k);
    for (int j = 0; j <= k; ++j) {
      const double v = f(t, lattice.brownian(k, j));
      if (!std::isfinite(v)) {
        fail(ErrorKind::Data, "non-finite process value at node (" + std::to_string(k) + ", " +
                                  std::to_string(j) + ")");
      }
      p.at(k, j) = v;
    }
  }
  return p;
}

}  // namespace rbsde
