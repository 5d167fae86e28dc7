#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "rbsde/error.hpp"
#include "rbsde/generators.hpp"

using namespace rbsde;

namespace {

template <class F>
ErrorKind error_kind_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an rbsde::Error");
  return ErrorKind::Data;
}

constexpr double kH = 1e-4;

std::vector<GeneratorSpec> library() {
  return {generators::zero(), generators::affine(0.3, -0.5, 0.8), generators::abs_z(), generators::sqrt_z(),
          generators::sqrt_y(), generators::shifted(generators::sqrt_y(), 0.25)};
}

}  // namespace

TEST_CASE("built-in generators obey their declared growth and modulus") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  for (const auto& g : library()) {
    CAPTURE(g.name);
    REQUIRE(g.modulus);
    CHECK((*g.modulus)(0.0) == 0.0);
    for (int i = 0; i < 500; ++i) {
      const double t = 0.5, y = u(rng), z = u(rng);
      CHECK(std::abs(g(t, y, z)) <= g.beta * (1 + std::abs(y) + std::abs(z)) + 1e-15);
      const double x1 = std::abs(u(rng)), x2 = std::abs(u(rng));
      const double lo = std::min(x1, x2), hi = std::max(x1, x2);
      CHECK((*g.modulus)(lo) <= (*g.modulus)(hi));
      CHECK((*g.modulus)(hi) <= g.modulus_growth * (1 + hi) + 1e-15);
      if (!g.depends_on_y) {
        const double z2 = u(rng);
        CHECK(std::abs(g(t, y, z) - g(t, y, z2)) <= (*g.modulus)(std::abs(z - z2)) + 1e-14);
      }
    }
  }
}

TEST_CASE("affine, shift and lookup") {
  const auto g = generators::affine(1.0, 2.0, -3.0);
  CHECK(g(0.0, 1.0, 1.0) == 0.0);
  CHECK(g.beta == 3.0);
  CHECK(g.lipschitz == 3.0);
  const auto s = generators::shifted(generators::sqrt_z(), -0.5);
  CHECK(s(0.0, 0.0, 4.0) == 1.5);
  CHECK(s.beta == 1.5);
  CHECK(!s.depends_on_y);
  CHECK(generators::by_name("sqrt_y")(0.0, 9.0, 0.0) == 3.0);
  CHECK(generators::by_name("affine", 1, 0, 0)(0, 0, 0) == 1.0);
  CHECK(error_kind_of([] { generators::by_name("cubic"); }) == ErrorKind::InvalidConfig);
}

TEST_CASE("stable increments agree with plain differences") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (const auto& g : library()) {
    for (int i = 0; i < 200; ++i) {
      const double y = u(rng), z = u(rng), dy = u(rng), dz = u(rng);
      CHECK(g.delta(0.1, y, z, dy, dz) == doctest::Approx(g(0.1, y + dy, z + dz) - g(0.1, y, z)).epsilon(1e-12));
    }
  }
  // Far below the rounding unit of sqrt(1): the plain difference is 0.
  const auto g = generators::sqrt_z();
  CHECK(g.delta(0, 0, 1.0, 0, 1e-20) == doctest::Approx(5e-21).epsilon(1e-12));
}

TEST_CASE("envelopes of a Lipschitz driver are the driver itself") {
  const auto g = generators::abs_z();
  for (bool analytic : {true, false}) {
    const EnvelopeGenerator lo(g, 2.0, EnvelopeDirection::Lower, kH, analytic);
    const EnvelopeGenerator hi(g, 2.0, EnvelopeDirection::Upper, kH, analytic);
    for (double z : {-1.5, -0.2, 0.0, 0.7, 3.0}) {
      CHECK(lo(0, 0, z) == doctest::Approx(std::abs(z)).epsilon(1e-12));
      CHECK(hi(0, 0, z) == doctest::Approx(std::abs(z)).epsilon(1e-12));
    }
  }
  // The grid search itself, without the fixed-point shortcut.
  const EnvelopeGenerator lo(g, 2.0, EnvelopeDirection::Lower, kH, false);
  for (double z : {-1.5, 0.0, 0.7}) {
    CHECK(std::abs(lo.numeric(0, 0, z) - std::abs(z)) <= 2 * 2.0 * kH);
  }
  const EnvelopeGenerator zero(generators::zero(), 3.0, EnvelopeDirection::Upper, kH);
  CHECK(zero(0.3, 1.0, -2.0) == 0.0);
}

TEST_CASE("sqrt envelopes against their closed forms") {
  const auto g = generators::sqrt_z();
  CHECK(lower_envelope(g, 2.0, kH, 0, 0, 1.0) == doctest::Approx(1.0));
  CHECK(lower_envelope(g, 2.0, kH, 0, 0, 0.01) == doctest::Approx(0.02));
  CHECK(upper_envelope(g, 2.0, kH, 0, 0, 0.0) == doctest::Approx(0.125));

  for (double n : {2.0, 4.0, 8.0}) {
    const EnvelopeGenerator lo(g, n, EnvelopeDirection::Lower, kH);
    const EnvelopeGenerator hi(g, n, EnvelopeDirection::Upper, kH);
    for (int i = 0; i <= 80; ++i) {
      const double z = -2.0 + 0.05 * i;
      CHECK(lo(0, 0, z) == doctest::Approx(oracle::sqrt_lower_envelope(n, z)).epsilon(1e-14));
      CHECK(hi(0, 0, z) == doctest::Approx(oracle::sqrt_upper_envelope(n, z)).epsilon(1e-14));
      const double slack = 2 * n * kH;
      CHECK(lo.numeric(0, 0, z) >= oracle::sqrt_lower_envelope(n, z) - 1e-15);
      CHECK(lo.numeric(0, 0, z) <= oracle::sqrt_lower_envelope(n, z) + slack);
      CHECK(hi.numeric(0, 0, z) <= oracle::sqrt_upper_envelope(n, z) + 1e-15);
      CHECK(hi.numeric(0, 0, z) >= oracle::sqrt_upper_envelope(n, z) - slack);
    }
  }
}

TEST_CASE("y-driver envelopes against brute force") {
  const auto g = generators::sqrt_y();
  const auto f = [](double u) { return std::sqrt(std::abs(u)); };
  for (double n : {2.0, 5.0}) {
    const EnvelopeGenerator lo(g, n, EnvelopeDirection::Lower, kH, false);
    const EnvelopeGenerator hi(g, n, EnvelopeDirection::Upper, kH, false);
    for (double y : {-1.0, -0.01, 0.0, 0.003, 0.4}) {
      const double r = 2 * (1 + std::abs(y)) / (n - 1) + 0.1;
      const double slack = 2 * n * kH;
      CHECK(std::abs(lo(0, y, 0.7) - oracle::brute_envelope_1d(f, n, y, r, true)) <= slack);
      CHECK(std::abs(hi(0, y, 0.7) - oracle::brute_envelope_1d(f, n, y, r, false)) <= slack);
    }
  }
}

TEST_CASE("envelope error cases") {
  CHECK(error_kind_of([] { EnvelopeGenerator(generators::sqrt_z(), 1.0, EnvelopeDirection::Lower, kH); }) ==
        ErrorKind::EnvelopeUndefined);
  CHECK(error_kind_of([] { EnvelopeGenerator(generators::sqrt_z(), 0.5, EnvelopeDirection::Upper, kH); }) ==
        ErrorKind::EnvelopeUndefined);
  CHECK(error_kind_of([] { EnvelopeGenerator(generators::sqrt_z(), 4.0, EnvelopeDirection::Lower, 0.0); }) ==
        ErrorKind::InvalidConfig);
}

TEST_CASE("envelope gap bound") {
  CHECK(envelope_gap_bound(generators::sqrt_z(), 5.0) == doctest::Approx(0.5));
  CHECK(envelope_gap_bound(generators::sqrt_z(), 2.0) == doctest::Approx(1.0));
  // Measured sup gap of the sqrt envelope pair at n = 2 is 1/(4n), under the bound.
  CHECK(oracle::sqrt_upper_envelope(2.0, 0.0) - std::sqrt(0.0) <= envelope_gap_bound(generators::sqrt_z(), 2.0));
  for (double k : {0.5, 1.0, 3.0}) {
    const auto g = generators::affine(0.0, 0.0, k);
    CHECK(envelope_gap_bound(g, 2 * k) == doctest::Approx(k));
    CHECK(envelope_gap_bound(g, 5 * k) == doctest::Approx(k * k / (4 * k)));
  }
  GeneratorSpec bare = generators::sqrt_z();
  bare.modulus.reset();
  CHECK(bare.mu() == bare.beta);
  CHECK(error_kind_of([&] { envelope_gap_bound(bare, 4.0); }) == ErrorKind::CertificateUnavailable);
  CHECK(error_kind_of([] { envelope_gap_bound(generators::sqrt_z(), 1.0); }) == ErrorKind::EnvelopeUndefined);
}

TEST_CASE("envelope properties on sampled points") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (const auto& g : {generators::sqrt_z(), generators::sqrt_y()}) {
    CAPTURE(g.name);
    const double mu = g.mu();
    const std::vector<double> ns{4, 8, 16, 32};
    for (int i = 0; i < 60; ++i) {
      const double y = u(rng), z = u(rng);
      double prev_lo = -INFINITY, prev_hi = INFINITY;
      for (double n : ns) {
        const EnvelopeGenerator lo(g, n, EnvelopeDirection::Lower, kH, false);
        const EnvelopeGenerator hi(g, n, EnvelopeDirection::Upper, kH, false);
        const double slack = 2 * n * kH;
        const double l = lo(0, y, z), h = hi(0, y, z), v = g(0, y, z);
        const double growth = mu * (std::abs(y) + std::abs(z) + 1);
        CHECK(-growth - slack <= l);
        CHECK(l <= v + slack);
        CHECK(v <= h + slack);
        CHECK(h <= growth + slack);
        CHECK(v - l <= envelope_gap_bound(g, n) + slack);
        CHECK(h - v <= envelope_gap_bound(g, n) + slack);
        CHECK(l >= prev_lo - slack);
        CHECK(h <= prev_hi + slack);
        prev_lo = l;
        prev_hi = h;
      }
    }
  }
}

TEST_CASE("envelopes are n-Lipschitz") {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const double n = 6.0;
  for (const auto& g : {generators::sqrt_z(), generators::sqrt_y()}) {
    for (auto dir : {EnvelopeDirection::Lower, EnvelopeDirection::Upper}) {
      for (bool analytic : {true, false}) {
        const EnvelopeGenerator e(g, n, dir, kH, analytic);
        CHECK(e.lipschitz() == n);
        for (int i = 0; i < 100; ++i) {
          const double y1 = u(rng), z1 = u(rng), y2 = u(rng), z2 = u(rng);
          const double d = std::abs(e(0, y1, z1) - e(0, y2, z2));
          CHECK(d <= n * (std::abs(y1 - y2) + std::abs(z1 - z2)) + 4 * n * kH);
        }
      }
    }
  }
}

TEST_CASE("envelope increments match differences") {
  std::mt19937_64 rng(29);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (const auto& g : {generators::sqrt_z(), generators::sqrt_y(), generators::abs_z()}) {
    for (auto dir : {EnvelopeDirection::Lower, EnvelopeDirection::Upper}) {
      const EnvelopeGenerator e(g, 8.0, dir, kH);
      for (int i = 0; i < 200; ++i) {
        const double y = u(rng), z = u(rng), dy = 0.1 * u(rng), dz = 0.1 * u(rng);
        CHECK(e.increment(0, y, z, dy, dz) == doctest::Approx(e(0, y + dy, z + dz) - e(0, y, z)).epsilon(1e-10));
      }
    }
  }
}
