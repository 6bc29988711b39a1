#include "loopent/conditional.hpp"
#include "oracles.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>
#include <vector>

using namespace loopent;
using Catch::Approx;

TEST_CASE("optimal angle examples", "[conditional]") {
  const auto p = SystemParams::tapped(0.5, 0.8, 2 * kPi / 3, 1.0);
  REQUIRE(p.eta() == Approx(0.1).margin(1e-15));
  const auto a = optimal_angle(p);
  CHECK_FALSE(a.degenerate);
  CHECK(std::tan(a.plus) == Approx(-4.2288).epsilon(1e-4));
  CHECK(std::tan(a.minus) == Approx(3.0741).epsilon(1e-4));
  CHECK(a.of(Mode::Plus) == a.plus);

  const auto open = optimal_angle(SystemParams::tapped(0.7, 1.0, 1.0, 1.0));
  CHECK(open.degenerate);
  CHECK(open.plus == Approx(kPi / 2));
  CHECK(open.minus == Approx(kPi / 2));
  const auto edge = optimal_angle(SystemParams::tapped(0.5, 0.5, 0.0, 1.0));
  CHECK(edge.degenerate);

  CHECK_THROWS_AS(optimal_angle(SystemParams::loop(0.5, 1.0, 1.0)), ValidationError);
}

TEST_CASE("imprecision and backaction decorrelate where the gain is extremal", "[conditional]") {
  for (int i = 1; i < 20; ++i)
    for (int j = 1; j < 20; ++j) {
      const double eta_m = 0.05 * i;
      const double th = 2 * kPi * j / 20.0;
      if (std::abs(std::sin(th)) < 1e-9) continue;
      const auto p = SystemParams::tapped(0.6, eta_m, th, 1.3);
      const auto a = optimal_angle(p);
      const double gamma_m = p.eta_c() * p.eta_m() * p.gamma_q();
      for (Mode m : {Mode::Plus, Mode::Minus}) {
        const double phi = a.of(m);
        CHECK(std::abs(imprecision_backaction_correlator(p, m, phi)) < 1e-12);
        const double h = 1e-5;
        const double dg = (signal_gain(p, m, phi + h) - signal_gain(p, m, phi - h)) / (2 * h);
        CHECK(std::abs(dg) < 1e-8);
        const double d = mode_denominator(p.eta(), th, m);
        CHECK(std::abs(signal_gain(p, m, phi)) == Approx(std::sqrt(4 * gamma_m / d)).epsilon(1e-12));
        // Any other angle collects less.
        CHECK(std::abs(signal_gain(p, m, phi + 0.3)) < std::abs(signal_gain(p, m, phi)));
      }
    }
}

TEST_CASE("correlator and gain limits", "[conditional]") {
  const auto untapped = SystemParams::loop(0.4, 1.0, 1.0);
  for (double phi : {0.0, 0.5, 1.5})
    for (Mode m : {Mode::Plus, Mode::Minus}) {
      CHECK(imprecision_backaction_correlator(untapped, m, phi) == 0.0);
      CHECK(signal_gain(untapped, m, phi) == 0.0);
    }
  const auto open = SystemParams::tapped(0.6, 1.0, 1.0, 2.0);
  CHECK(std::abs(signal_gain(open, Mode::Plus, kPi / 2)) == Approx(std::sqrt(4 * 0.6 * 2.0)));

  const auto p = SystemParams::tapped(0.5, 0.8, 2 * kPi / 3, 1.0);
  const auto c = loop_coefficients(p);
  CHECK(imprecision_backaction_correlator(p, Mode::Plus, 0.0) == Approx(std::sqrt(0.4) * c.sc_of(Mode::Plus)));
}

TEST_CASE("effective efficiency", "[conditional]") {
  const auto e = effective_efficiency(SystemParams::tapped(0.5, 0.8, 1.0, 1.0));
  CHECK(e.first == Approx(0.44444).margin(1e-5));
  CHECK(e.second == e.first);
  for (double eta_m : {0.1, 0.5, 0.9})
    CHECK(effective_efficiency(SystemParams::tapped(1.0, eta_m, 1.0, 1.0)).first == Approx(1.0).epsilon(1e-12));
  CHECK(effective_efficiency(SystemParams::tapped(0.35, 1.0, 1.0, 1.0)).first == Approx(0.35).epsilon(1e-14));
}

TEST_CASE("conditional state", "[conditional]") {
  // Open loop: two identical single-particle Wiener states.
  const auto open = SystemParams::tapped(0.6, 1.0, 1.0, 0.7);
  const auto c = conditional_joint_state(open);
  CHECK(c.basis == Basis::JointMode);
  const auto w = wiener_initial_state(open, 0.6);
  CHECK(max_abs(in_basis(c, Basis::SingleParticle).cov - w.cov) < 1e-14);
  CHECK(nu_min(c) >= 1.0 - 1e-12);

  // Unit effective efficiency: pure blocks.
  for (int k = 0; k <= 16; ++k) {
    const double g = std::pow(10.0, -3.0 + 0.25 * k);
    const auto p = SystemParams::tapped(1.0, 0.7, kPi / 2, g);
    const auto s = mode_spectrum(p);
    if (!s.stable) continue;
    const auto st = conditional_joint_state(p);
    CHECK(st.block(0, 0).determinant() == Approx(0.25).epsilon(1e-9));
    CHECK(st.block(1, 1).determinant() == Approx(0.25).epsilon(1e-9));
  }

  CHECK_THROWS_AS(conditional_joint_state(SystemParams::tapped(0.5, 0.2, 2 * kPi / 3, 2.0)), ValidationError);
}

TEST_CASE("conditional witness map", "[conditional]") {
  std::vector<double> thetas, gammas;
  for (int i = 0; i < 100; ++i) thetas.push_back(kPi * i / 99.0);
  for (int j = 0; j < 9; ++j) gammas.push_back(0.25 * std::pow(16.0, j / 8.0));  // 0.25 .. 4, includes 1
  const auto base = SystemParams::tapped(0.5, 0.8, 0.0, 1.0);
  const auto map = conditional_witness_map(base, thetas, gammas);

  for (std::size_t i = 0; i < thetas.size(); ++i)
    for (std::size_t j = 0; j < gammas.size(); ++j) {
      const auto& cell = map.at(i, j);
      const auto band = stability_boundary(base.with_gamma_q(gammas[j]));
      const bool unstable = band && band->contains(thetas[i]);
      CHECK(cell.stable == !unstable);
      if (cell.stable) {
        REQUIRE(std::isfinite(cell.nu_min));
        const auto se = symplectic_eigenvalues(conditional_joint_state(base.with_theta(thetas[i]).with_gamma_q(gammas[j])));
        CHECK(se.first >= 1.0 - 1e-9);
      } else {
        CHECK(std::isnan(cell.nu_min));
        CHECK(std::isnan(cell.E_N));
      }
    }

  // Entangled cells next to the unstable band at gamma_q = 1.
  const std::size_t j1 = 4;
  REQUIRE(gammas[j1] == Approx(1.0));
  bool entangled_edge = false;
  for (std::size_t i = 1; i + 1 < thetas.size(); ++i) {
    const auto& cell = map.at(i, j1);
    const bool next_to_band = !map.at(i - 1, j1).stable || !map.at(i + 1, j1).stable;
    if (cell.stable && next_to_band && cell.nu_min < 1.0) entangled_edge = true;
  }
  CHECK(entangled_edge);

  // No tap, no coupling: nothing entangled.
  const auto open = conditional_witness_map(SystemParams::tapped(0.5, 1.0, 0.0, 1.0), thetas, gammas);
  for (const auto& cell : open.cells) {
    CHECK(cell.stable);
    CHECK(cell.nu_min >= 1.0 - 1e-12);
    CHECK(cell.E_N == 0.0);
  }
}
