#include "loopent/model.hpp"
#include "oracles.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>

using namespace loopent;
using Catch::Approx;

TEST_CASE("params reject out-of-range values", "[model]") {
  CHECK_THROWS_AS(SystemParams::loop(1.0, 0.0, 1.0), ValidationError);
  CHECK_THROWS_AS(SystemParams::loop(-0.1, 0.0, 1.0), ValidationError);
  CHECK_THROWS_AS(SystemParams::loop(0.5, 7.0, 1.0), ValidationError);
  CHECK_THROWS_AS(SystemParams::loop(0.5, 1.0, -1.0), ValidationError);
  CHECK_THROWS_AS(SystemParams::loop(0.5, 1.0, 1.0, 0.0), ValidationError);
  SystemParams::Fields f;
  f.eta = 0.3;
  f.eta_c = 0.5;
  f.eta_m = 0.8;  // tap active: eta must be 0.1
  CHECK_THROWS_AS(SystemParams(f), ValidationError);
  f.eta = 0.1;
  CHECK_NOTHROW(SystemParams(f));
  CHECK(SystemParams::tapped(0.5, 0.8, 1.0, 1.0).eta() == Approx(0.1).margin(1e-15));
}

TEST_CASE("open loop coefficients vanish", "[model]") {
  const auto c = loop_coefficients(SystemParams::loop(0.0, 1.3, 1.0));
  CHECK(std::abs(c.g_L) == 0.0);
  CHECK(c.rho_opt == 1.0);
  CHECK(c.f1 == 0.0);
  CHECK(c.f2 == 0.0);
  CHECK(c.g1 == 0.0);
  CHECK(c.g2 == 0.0);
  CHECK(std::isinf(c.g_eta));
}

TEST_CASE("loop coefficients match closed values and complex-gain identities", "[model]") {
  CHECK(loop_coefficients(SystemParams::loop(0.5, kPi / 2, 1.0)).rho_opt == Approx(1.0 / 3.0).epsilon(1e-14));

  const auto c = loop_coefficients(SystemParams::loop(0.5, 2 * kPi / 3, 1.0));
  CHECK(c.s1[0] * c.s1[0] + c.sc[0] * c.sc[0] == Approx(0.45308).epsilon(1e-5));

  for (double eta : {0.05, 0.3, 0.7, 0.95})
    for (double th = 0.05; th < 2 * kPi; th += 0.37) {
      const auto k = loop_coefficients(SystemParams::loop(eta, th, 1.0));
      // f and g are the quadrature components of g_L and alpha * g_L.
      CHECK(k.f1 == Approx(k.g_L.imag()).margin(1e-12));
      CHECK(k.f2 == Approx(k.g_L.real()).margin(1e-12));
      CHECK(k.g1 == Approx((k.alpha * k.g_L).imag()).margin(1e-12));
      CHECK(k.g2 == Approx((k.alpha * k.g_L).real()).margin(1e-12));
      CHECK(k.rho_opt > 0.0);
      for (Mode m : {Mode::Plus, Mode::Minus}) {
        const double d = mode_denominator(eta, th, m);
        CHECK(k.s1_of(m) * k.s1_of(m) + k.sc_of(m) * k.sc_of(m) == Approx(1.0 / d).epsilon(1e-12));
      }
    }
}

TEST_CASE("spectrum examples", "[model]") {
  const auto s0 = mode_spectrum(SystemParams::loop(0.0, 1.0, 0.7));
  CHECK(s0.omega_plus_sq == 1.0);
  CHECK(s0.omega_minus_sq == 1.0);
  CHECK(s0.n_plus_sq == 0.5);
  CHECK(s0.gamma_plus == 0.7);
  CHECK(s0.gamma_minus == 0.7);

  const auto s = mode_spectrum(SystemParams::loop(0.5, 2 * kPi / 3, 2.0));
  CHECK(s.omega_plus_sq == Approx(3.2196).epsilon(1e-4));
  CHECK(s.omega_minus_sq == Approx(-5.1786).epsilon(1e-4));
  CHECK(s.n_plus_sq == Approx(0.11327).epsilon(1e-4));
  CHECK(s.n_minus_sq == Approx(0.31530).epsilon(1e-4));
  CHECK_FALSE(s.stable);
  // Unstable mode: r is purely imaginary.
  CHECK(std::abs(s.r_minus.real()) < 1e-15);
  CHECK(s.omega(Mode::Minus).imag() > 0.0);

  const auto q = mode_spectrum(SystemParams::loop(0.5, kPi / 2, 0.25));
  CHECK(q.omega_plus_sq == Approx(1.0 + 0.47140).epsilon(1e-5));
  CHECK(q.omega_minus_sq == Approx(1.0 - 0.47140).epsilon(1e-5));
  CHECK(q.stable);
}

TEST_CASE("spectrum agrees with direct evaluation on a grid", "[model]") {
  for (int i = 0; i < 100; ++i)
    for (int j = 0; j < 100; ++j) {
      const double eta = 0.0099 * i;
      const double th = 2 * kPi * j / 100.0;
      const auto s = mode_spectrum(SystemParams::loop(eta, th, 1.3));
      REQUIRE(s.omega_plus_sq == Approx(oracle::omega_sq(eta, th, 1.3, +1)).epsilon(1e-12).margin(1e-12));
      REQUIRE(s.omega_minus_sq == Approx(oracle::omega_sq(eta, th, 1.3, -1)).epsilon(1e-12).margin(1e-12));
      const double dp = mode_denominator(eta, th, Mode::Plus);
      const double dm = mode_denominator(eta, th, Mode::Minus);
      REQUIRE(s.n_plus_sq * dp + s.n_minus_sq * dm == Approx(1.0 - eta).epsilon(1e-14));
      REQUIRE(s.n_plus_sq + s.n_minus_sq ==
              Approx(oracle::noise_sq(eta, th, 1) + oracle::noise_sq(eta, th, -1)).epsilon(1e-14));
    }
}

TEST_CASE("stiffened mode on [0, pi] and branch swap on [pi, 2pi]", "[model]") {
  for (double eta : {0.2, 0.5, 0.8})
    for (double th = 0.0; th <= kPi; th += kPi / 40) {
      const auto s = mode_spectrum(SystemParams::loop(eta, th, 1.0));
      CHECK(s.omega_plus_sq >= 1.0 - 1e-12);
      // Shifting by pi exchanges the branches.
      const auto r = mode_spectrum(SystemParams::loop(eta, th + kPi, 1.0));
      CHECK(r.omega_plus_sq == Approx(s.omega_minus_sq).margin(1e-12));
      CHECK(r.omega_minus_sq == Approx(s.omega_plus_sq).margin(1e-12));
      CHECK(r.n_plus_sq == Approx(s.n_minus_sq).margin(1e-12));
      CHECK(r.omega_plus_sq <= 1.0 + 1e-12);
      // Reflection keeps the recoil rates and mirrors the frequency shift.
      const auto m = mode_spectrum(SystemParams::loop(eta, 2 * kPi - th, 1.0));
      CHECK(m.omega_plus_sq - 1.0 == Approx(1.0 - s.omega_plus_sq).margin(1e-12));
      CHECK(m.n_plus_sq == Approx(s.n_plus_sq).margin(1e-14));
    }
}

TEST_CASE("recoil rates: extremes at pi and overall suppression", "[model]") {
  const double eta = 0.5;
  const auto at_pi = mode_spectrum(SystemParams::loop(eta, kPi, 1.0));
  bool both_below = false;
  for (int i = 0; i <= 720; ++i) {
    const double th = 2 * kPi * i / 720;
    const auto s = mode_spectrum(SystemParams::loop(eta, std::min(th, 2 * kPi), 1.0));
    CHECK(at_pi.gamma_plus <= s.gamma_plus + 1e-14);
    CHECK(at_pi.gamma_minus >= s.gamma_minus - 1e-14);
    if (s.gamma_plus < 1.0 && s.gamma_minus < 1.0) both_below = true;
  }
  CHECK(both_below);
}

TEST_CASE("input noise correlations", "[model]") {
  const auto v0 = input_noise_correlations(SystemParams::loop(0.0, 1.0, 1.0));
  CHECK(v0.variance == 0.5);
  CHECK(v0.cross_correlation == 0.0);
  CHECK(std::abs(input_noise_correlations(SystemParams::loop(0.4, kPi / 2, 1.0)).cross_correlation) < 1e-16);
  const auto v = input_noise_correlations(SystemParams::loop(0.5, 0.0, 1.0));
  CHECK(v.variance == Approx(1.5).epsilon(1e-14));
  CHECK(v.cross_correlation == Approx(2.8284).epsilon(1e-4));
}

TEST_CASE("stability band", "[model]") {
  const auto band = stability_boundary(SystemParams::loop(0.5, 0.0, 1.0));
  REQUIRE(band);
  CHECK(band->theta_minus == Approx(0.9578).margin(1e-4));
  CHECK(band->theta_plus == Approx(3.1111).margin(1e-4));

  CHECK_FALSE(stability_boundary(SystemParams::loop(0.5, 0.0, 0.1)));
  CHECK_FALSE(stability_boundary(SystemParams::loop(0.5, 0.0, 0.0)));
  CHECK_THROWS_AS(stability_boundary(SystemParams::loop(0.0, 0.0, 1.0)), ValidationError);

  SystemParams::Fields f;
  f.eta = 0.5;
  f.gamma_q = 1.0;
  f.gamma_mech = 1e4;
  CHECK_FALSE(stability_boundary(SystemParams(f)));
  // Moderate damping shrinks the band.
  f.gamma_mech = 0.5;
  const auto damped = stability_boundary(SystemParams(f));
  REQUIRE(damped);
  CHECK(damped->theta_plus - damped->theta_minus < band->theta_plus - band->theta_minus);
}

TEST_CASE("stability roots are zeros of the relative-mode frequency", "[model]") {
  for (double eta : {0.1, 0.3, 0.5, 0.9})
    for (double g : {0.5, 1.0, 3.0, 20.0}) {
      const auto p = SystemParams::loop(eta, 0.0, g);
      const auto band = stability_boundary(p);
      if (!band) continue;
      // Independent bisection on the direct formula, bracketing each root.
      auto f = [&](double th) { return oracle::omega_sq(eta, th, g, -1); };
      const double mid = 0.5 * (band->theta_minus + band->theta_plus);
      CHECK(f(mid) < 0.0);
      CHECK(oracle::bisect(f, 1e-9, mid) == Approx(band->theta_minus).margin(1e-10));
      if (f(kPi) > 0.0) CHECK(oracle::bisect(f, mid, kPi) == Approx(band->theta_plus).margin(1e-10));
      // Unstable exactly inside the band.
      for (double th = 0.01; th < kPi; th += 0.01)
        CHECK((mode_spectrum(p.with_theta(th)).omega_minus_sq < 0.0) == band->contains(th));
    }
}

TEST_CASE("delay validity ratio", "[model]") {
  const auto p = SystemParams::loop(0.5, 0.0, 1.0, 2 * kPi * 1e5);
  const double r = delay_validity(p, 10.0, 2e8);
  CHECK(r == Approx(0.0105).epsilon(0.01));
  CHECK(r < kDelayWarningRatio);
  CHECK(delay_validity(p, 0.0, 2e8) == 0.0);
  const auto open = SystemParams::loop(0.0, 0.0, 1.0, 3.0);
  CHECK(delay_validity(open, 5.0, 2.0) == Approx(7.5));
  CHECK_THROWS_AS(delay_validity(p, 1.0, 0.0), ValidationError);
}
