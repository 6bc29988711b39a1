#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>

namespace loopent {

/// Independent, reproducible random stream for work item `index` of a run.
inline std::mt19937_64 make_stream(std::uint64_t master_seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(master_seed), static_cast<std::uint32_t>(master_seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

/// Wiener increment dW and its time integral dZ = int (W(s) - W(t_n)) ds over
/// one step of length h, for M independent noise channels.
template <int M>
struct NoiseIncrement {
  Eigen::Matrix<double, M, 1> dW;
  Eigen::Matrix<double, M, 1> dZ;
};

template <int M, typename Rng>
NoiseIncrement<M> draw_increment(Rng& rng, double h) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::Matrix<double, M, 1> u1, u2;
  for (int j = 0; j < M; ++j) u1(j) = normal(rng);
  for (int j = 0; j < M; ++j) u2(j) = normal(rng);
  const double sh = std::sqrt(h);
  return {sh * u1, 0.5 * h * sh * (u1 + u2 / std::sqrt(3.0))};
}

/// One step of the explicit, derivative-free strong order-1.5 scheme for
/// dY = a(Y) dt + B dW with constant diffusion B (additive noise).
template <typename Drift, int N, int M>
Eigen::Matrix<double, N, 1> srk15_additive_step(const Drift& a, const Eigen::Matrix<double, N, 1>& y,
                                                const Eigen::Matrix<double, N, M>& b, double h,
                                                const NoiseIncrement<M>& inc) {
  using Vec = Eigen::Matrix<double, N, 1>;
  const Vec ay = a(y);
  const Vec ybar = y + ay * h;
  const Vec abar = a(ybar);
  Vec next = y + b * inc.dW + 0.5 * (abar + ay) * h;
  const double sh = std::sqrt(h);
  for (int j = 0; j < M; ++j) {
    const Vec ap = a(Vec(ybar + b.col(j) * sh));
    const Vec am = a(Vec(ybar - b.col(j) * sh));
    next += (ap - am) * (inc.dZ(j) / (2.0 * sh)) + 0.25 * h * (ap - 2.0 * abar + am);
  }
  return next;
}

}  // namespace loopent
