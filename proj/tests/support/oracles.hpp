#pragma once

// Reference computations the tests compare the library against. Each one is
// written from the defining formula with plain vectors and shares no code
// with the library.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

namespace oracle {

using Layers = std::vector<std::vector<double>>;  // [k][j]

inline double brownian(double horizon, int steps, int k, int j) {
  return (2.0 * j - k) * std::sqrt(horizon / steps);
}

/// Binomial(k, j) 2^-k by Pascal's rule.
inline std::vector<double> binomial_weights(int k) {
  std::vector<double> row{1.0};
  for (int i = 0; i < k; ++i) {
    std::vector<double> next(row.size() + 1, 0.0);
    for (std::size_t j = 0; j < row.size(); ++j) {
      next[j] += 0.5 * row[j];
      next[j + 1] += 0.5 * row[j];
    }
    row = std::move(next);
  }
  return row;
}

/// Optimal stopping value: y = max(L, mean of successors), y_N = terminal.
/// With an upper barrier the Dynkin game value min(U, max(L, mean)).
inline Layers stopping_value(double horizon, int steps, const std::function<double(double, double)>& lower,
                             const std::vector<double>& terminal,
                             const std::optional<std::function<double(double, double)>>& upper = std::nullopt) {
  const double dt = horizon / steps;
  Layers y(steps + 1);
  y[steps] = terminal;
  for (int k = steps - 1; k >= 0; --k) {
    y[k].resize(k + 1);
    for (int j = 0; j <= k; ++j) {
      const double t = k * dt;
      const double b = brownian(horizon, steps, k, j);
      double v = std::max(lower(t, b), 0.5 * (y[k + 1][j + 1] + y[k + 1][j]));
      if (upper) v = std::min((*upper)(t, b), v);
      y[k][j] = v;
    }
  }
  return y;
}

/// min(n|z|, sqrt|z|): inf-convolution of sqrt|.| with n|.|.
inline double sqrt_lower_envelope(double n, double z) { return std::min(n * std::abs(z), std::sqrt(std::abs(z))); }

/// sup_u sqrt|u| - n|z - u|. Only u on the far side of z from 0 can help;
/// there the objective is concave with its peak at |u| = 1/(4n^2).
inline double sqrt_upper_envelope(double n, double z) {
  const double a = std::abs(z);
  const double u = std::max(a, 1.0 / (4.0 * n * n));
  return std::sqrt(u) - n * (u - a);
}

/// Brute-force inf/sup of g(u) +/- n|x - u| over u on [x - r, x + r]. The
/// grid is a lattice through 0 (where sqrt-type drivers have their kink)
/// plus the centre x itself.
inline double brute_envelope_1d(const std::function<double(double)>& g, double n, double x, double r, bool lower,
                                int half_points = 200000) {
  const double step = r / half_points;
  const long first = static_cast<long>(std::floor((x - r) / step));
  const long last = static_cast<long>(std::ceil((x + r) / step));
  double best = g(x);
  for (long i = first; i <= last; ++i) {
    const double u = i * step;
    const double v = lower ? g(u) + n * std::abs(x - u) : g(u) - n * std::abs(x - u);
    best = lower ? std::min(best, v) : std::max(best, v);
  }
  return best;
}

/// Maximal solution of y' = -sqrt|y|, y(T) = 0: (T - t)^2 / 4.
inline double sqrt_ode_maximal(double horizon, double t) { return 0.25 * (horizon - t) * (horizon - t); }

}  // namespace oracle
