#include "loopent/sde.hpp"
#include "loopent/transient.hpp"
#include "loopent/verify.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>
#include <vector>

using namespace loopent;
using Catch::Approx;

TEST_CASE("random streams are reproducible and distinct", "[sde]") {
  auto a = make_stream(42, 7), b = make_stream(42, 7), c = make_stream(42, 8), d = make_stream(43, 7);
  bool diff_index = false, diff_seed = false;
  for (int i = 0; i < 16; ++i) {
    const auto va = a(), vb = b(), vc = c(), vd = d();
    CHECK(va == vb);
    diff_index |= va != vc;
    diff_seed |= va != vd;
  }
  CHECK(diff_index);
  CHECK(diff_seed);
}

TEST_CASE("increment pair has the right joint moments", "[sde]") {
  auto rng = make_stream(1, 0);
  const double h = 0.1;
  const int n = 200000;
  double sw = 0, sz = 0, swz = 0;
  for (int i = 0; i < n; ++i) {
    const auto inc = draw_increment<1>(rng, h);
    sw += inc.dW(0) * inc.dW(0);
    sz += inc.dZ(0) * inc.dZ(0);
    swz += inc.dW(0) * inc.dZ(0);
  }
  CHECK(sw / n == Approx(h).epsilon(0.02));
  CHECK(sz / n == Approx(h * h * h / 3).epsilon(0.02));
  CHECK(swz / n == Approx(h * h / 2).epsilon(0.02));
}

TEST_CASE("noiseless step reproduces the rotation", "[sde]") {
  const auto m = build_measurement_model(SystemParams::loop(0.0, 0.0, 0.0));
  auto drift = [&](const Vec4& v) -> Vec4 { return m.A * v; };
  Vec4 x(1, 0, 0, 0);
  const double h = 1e-3;
  const NoiseIncrement<2> none{Vec2::Zero(), Vec2::Zero()};
  for (int k = 0; k < 1000; ++k) x = srk15_additive_step<decltype(drift), 4, 2>(drift, x, m.B, h, none);
  CHECK(x(0) == Approx(std::cos(1.0)).epsilon(1e-6));
  CHECK(x(1) == Approx(-std::sin(1.0)).epsilon(1e-6));
  CHECK(x(2) == 0.0);
  CHECK(x(3) == 0.0);
}

TEST_CASE("ensemble moments match the closed-form evolution", "[sde]") {
  const double gamma = 0.8;
  const auto p = SystemParams::loop(0.0, 0.0, gamma);
  const auto model = build_measurement_model(p);
  const Mat2 w = wiener_block(0.5, 1.0, 1.0);
  const TwoModeState s0 = TwoModeState::product(w, 0.5 * Mat2::Identity(), Basis::JointMode);
  const int n = 10000;
  const double dt = 1e-2;
  const std::vector<std::size_t> at{20, 70, 120, 170, 200};
  std::vector<std::vector<Vec4>> samples(at.size(), std::vector<Vec4>(n));
  for (int i = 0; i < n; ++i) {
    auto rng = make_stream(99, static_cast<std::uint64_t>(i));
    const auto tr = simulate_trajectory(model, s0.cov, dt, 2.0, rng, i);
    REQUIRE(tr.path.size() == 201);
    REQUIRE(tr.record.size() == 200);
    for (std::size_t g = 0; g < at.size(); ++g) samples[g][i] = tr.path[at[g]];
  }
  for (std::size_t g = 0; g < at.size(); ++g) {
    const Mat4 theory = evolve(s0, p, at[g] * dt).cov;
    Vec4 mean = Vec4::Zero();
    for (const auto& x : samples[g]) mean += x;
    mean /= n;
    Mat4 cov = Mat4::Zero();
    for (const auto& x : samples[g]) cov += (x - mean) * (x - mean).transpose();
    cov /= n - 1;
    for (int r = 0; r < 4; ++r) {
      CHECK(std::abs(mean(r)) < 3 * std::sqrt(theory(r, r) / n));
      for (int c = r; c < 4; ++c) {
        const double se = std::sqrt((theory(r, r) * theory(c, c) + theory(r, c) * theory(r, c)) / n);
        CHECK(std::abs(cov(r, c) - theory(r, c)) < 3 * se);
      }
    }
  }
}

TEST_CASE("strong order exceeds one", "[sde]") {
  const double gamma = 1.0;
  const auto model = build_measurement_model(SystemParams::loop(0.0, 0.0, gamma));
  auto drift = [&](const Vec4& v) -> Vec4 { return model.A * v; };
  const double t_end = 1.0, h_ref = 1e-4;
  const int n_ref = static_cast<int>(std::lround(t_end / h_ref));
  const std::vector<double> coarse{0.1, 0.05};
  std::vector<double> sq_err(coarse.size(), 0.0);
  const int paths = 200;
  for (int path = 0; path < paths; ++path) {
    auto rng = make_stream(5, static_cast<std::uint64_t>(path));
    std::vector<NoiseIncrement<2>> fine(n_ref);
    for (auto& inc : fine) inc = draw_increment<2>(rng, h_ref);
    const Vec4 x0(1.0, 0.0, -0.5, 0.3);
    Vec4 ref = x0;
    for (const auto& inc : fine) ref = srk15_additive_step<decltype(drift), 4, 2>(drift, ref, model.B, h_ref, inc);
    for (std::size_t c = 0; c < coarse.size(); ++c) {
      const int m = static_cast<int>(std::lround(coarse[c] / h_ref));
      Vec4 x = x0;
      for (int k = 0; k < n_ref / m; ++k) {
        // Aggregate fine increments: dZ also picks up the running W offset.
        NoiseIncrement<2> agg{Vec2::Zero(), Vec2::Zero()};
        for (int i = 0; i < m; ++i) {
          const auto& f = fine[k * m + i];
          agg.dZ += f.dZ + h_ref * agg.dW;
          agg.dW += f.dW;
        }
        x = srk15_additive_step<decltype(drift), 4, 2>(drift, x, model.B, coarse[c], agg);
      }
      sq_err[c] += (x - ref).squaredNorm();
    }
  }
  const double ratio = std::sqrt(sq_err[0] / sq_err[1]);
  INFO("rms error ratio on halving dt: " << ratio);
  CHECK(ratio >= 2.5);
}

TEST_CASE("trajectory input checks", "[sde]") {
  const auto model = build_measurement_model(SystemParams::loop(0.0, 0.0, 1.0));
  auto rng = make_stream(0, 0);
  CHECK_THROWS_AS(simulate_trajectory(model, 0.1 * Mat4::Identity(), 0.01, 1.0, rng), ValidationError);
  CHECK_THROWS_AS(simulate_trajectory(model, 0.5 * Mat4::Identity(), 0.0, 1.0, rng), ValidationError);
  Mat4 indef = 0.5 * Mat4::Identity();
  indef(0, 0) = -1.0;
  CHECK_THROWS_AS(simulate_trajectory(model, indef, 0.01, 1.0, rng), ValidationError);
}
