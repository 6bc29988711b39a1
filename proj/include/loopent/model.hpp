#pragma once

#include "loopent/errors.hpp"
#include "loopent/linalg.hpp"
#include "loopent/params.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>

namespace loopent {

/// Joint modes: Plus is the common motion (q1 + q2)/sqrt2, Minus the relative one.
enum class Mode { Plus = 0, Minus = 1 };

inline int mode_index(Mode m) { return m == Mode::Plus ? 0 : 1; }
inline double mode_sign(Mode m) { return m == Mode::Plus ? 1.0 : -1.0; }

/// D_pm = 1 + eta -+ 2 sqrt(eta) cos(theta).
inline double mode_denominator(double eta, double theta, Mode m) {
  return 1.0 + eta - mode_sign(m) * 2.0 * std::sqrt(eta) * std::cos(theta);
}

struct LoopCoefficients {
  cplx alpha;
  cplx g_L;
  double g_eta = 0.0;  // +inf at eta = 0
  double rho_opt = 1.0;
  double f1 = 0.0, f2 = 0.0, g1 = 0.0, g2 = 0.0;
  // Indexed by mode_index: [0] = plus, [1] = minus.
  std::array<double, 2> s1{}, s2{}, sc{};

  double s1_of(Mode m) const { return s1[mode_index(m)]; }
  double s2_of(Mode m) const { return s2[mode_index(m)]; }
  double sc_of(Mode m) const { return sc[mode_index(m)]; }
};

inline LoopCoefficients loop_coefficients(const SystemParams& p) {
  const double eta = p.eta();
  const double th = p.theta();
  const double se = std::sqrt(eta);
  LoopCoefficients c;
  c.alpha = std::polar(se, th);
  c.g_L = c.alpha / (1.0 - c.alpha * c.alpha);
  c.g_eta = eta > 0.0 ? std::sqrt((1.0 - eta) / eta) : std::numeric_limits<double>::infinity();

  const double den = 1.0 - 2.0 * eta * std::cos(2.0 * th) + eta * eta;
  c.rho_opt = (1.0 - eta * eta) / den;
  c.f1 = se * (1.0 + eta) * std::sin(th) / den;
  c.f2 = se * (1.0 - eta) * std::cos(th) / den;
  c.g1 = eta * std::sin(2.0 * th) / den;
  c.g2 = eta * (std::cos(2.0 * th) - eta) / den;

  for (Mode m : {Mode::Plus, Mode::Minus}) {
    const int i = mode_index(m);
    const double s = mode_sign(m);
    const double d = mode_denominator(eta, th, m);
    c.s1[i] = -s * se * std::sin(th) / d;
    c.s2[i] = (eta - s * se * std::cos(th)) / d;
    c.sc[i] = (s * se * std::cos(th) - 1.0) / d;
  }
  return c;
}

struct ModeSpectrum {
  double omega0 = 1.0;
  double omega_plus_sq = 1.0, omega_minus_sq = 1.0;
  double n_plus_sq = 0.5, n_minus_sq = 0.5;
  double gamma_plus = 0.0, gamma_minus = 0.0;
  cplx r_plus{1.0, 0.0}, r_minus{1.0, 0.0};
  bool stable = true;  // both squared frequencies non-negative

  double omega_sq(Mode m) const { return m == Mode::Plus ? omega_plus_sq : omega_minus_sq; }
  double n_sq(Mode m) const { return m == Mode::Plus ? n_plus_sq : n_minus_sq; }
  double gamma(Mode m) const { return m == Mode::Plus ? gamma_plus : gamma_minus; }
  cplx r(Mode m) const { return m == Mode::Plus ? r_plus : r_minus; }
  // Principal square root: purely imaginary with positive imaginary part when unstable.
  cplx omega(Mode m) const { return std::sqrt(cplx(omega_sq(m), 0.0)); }
  bool mode_stable(Mode m) const { return omega_sq(m) >= 0.0; }
};

inline ModeSpectrum mode_spectrum(const SystemParams& p) {
  const double w0 = p.omega0();
  const double G = p.gamma_q();
  const double eta = p.eta();
  const double th = p.theta();
  const double se = std::sqrt(eta);
  const LoopCoefficients c = loop_coefficients(p);

  ModeSpectrum s;
  s.omega0 = w0;
  std::array<double, 2> w2{}, n2{};
  for (Mode m : {Mode::Plus, Mode::Minus}) {
    const int i = mode_index(m);
    const double d = mode_denominator(eta, th, m);
    w2[i] = w0 * (w0 + mode_sign(m) * 4.0 * G * se * std::sin(th) / d);
    const double compact = w0 * w0 - 4.0 * G * w0 * c.s1[i];
    if (std::abs(w2[i] - compact) > 1e-12 * std::max(1.0, std::abs(compact)))
      throw NumericalError("mode_spectrum: squared-frequency forms disagree");
    n2[i] = 0.5 * (1.0 - eta) / d;
  }
  s.omega_plus_sq = w2[0];
  s.omega_minus_sq = w2[1];
  s.n_plus_sq = n2[0];
  s.n_minus_sq = n2[1];
  s.gamma_plus = 2.0 * G * n2[0];
  s.gamma_minus = 2.0 * G * n2[1];
  s.r_plus = w0 / std::sqrt(cplx(w2[0], 0.0));
  s.r_minus = w0 / std::sqrt(cplx(w2[1], 0.0));
  s.stable = w2[0] >= 0.0 && w2[1] >= 0.0;
  return s;
}

struct NoiseCorrelations {
  double variance = 0.5;
  double cross_correlation = 0.0;
};

inline NoiseCorrelations input_noise_correlations(const SystemParams& p) {
  const double eta = p.eta();
  const double rho = loop_coefficients(p).rho_opt;
  return {0.5 * rho, std::sqrt(eta) * std::cos(p.theta()) * rho / (1.0 - eta * eta)};
}

struct StabilityBand {
  double theta_minus = 0.0;
  double theta_plus = 0.0;

  bool contains(double theta) const { return theta > theta_minus && theta < theta_plus; }
};

/// Unstable interval of the relative mode in theta in [0, pi]. Empty when the
/// system is stable for every phase.
inline std::optional<StabilityBand> stability_boundary(const SystemParams& p) {
  const double eta = p.eta();
  if (eta == 0.0) throw ValidationError("stability_boundary: eta = 0 has no coupling");
  const double G = p.gamma_q();
  if (G == 0.0) return std::nullopt;
  const double w0 = p.omega0();
  const double gm = p.gamma_mech();
  const double se = std::sqrt(eta);
  const double A = gm > 0.0 ? (0.25 * gm * gm + w0 * w0) / (4.0 * G * w0 * se)
                            : w0 / (4.0 * G * se);
  if (!std::isfinite(A)) return std::nullopt;
  const double A2 = A * A;
  const double disc = 1.0 - A2 * (eta - 1.0) * (eta - 1.0);
  if (disc < 0.0) return std::nullopt;
  const double b = 2.0 * A2 * se * (1.0 + eta);
  const double den = 1.0 + 4.0 * A2 * eta;
  const double c_lo = -(b - std::sqrt(disc)) / den;  // larger cosine -> smaller angle
  const double c_hi = -(b + std::sqrt(disc)) / den;
  if (c_lo > 1.0 || c_lo < -1.0 || c_hi > 1.0 || c_hi < -1.0) return std::nullopt;
  return StabilityBand{std::acos(c_lo), std::acos(c_hi)};
}

/// Omega0 L / (F c_g) with finesse F = (1 - eta^2) / (1 - eta)^2. The Markovian
/// loop model needs this to be small; 0.1 is a reasonable warning level.
inline constexpr double kDelayWarningRatio = 0.1;

inline double delay_validity(const SystemParams& p, double loop_length, double group_velocity) {
  if (!(loop_length >= 0.0)) throw ValidationError("delay_validity: loop_length must be >= 0");
  if (!(group_velocity > 0.0)) throw ValidationError("delay_validity: group_velocity must be > 0");
  const double eta = p.eta();
  const double finesse = (1.0 - eta * eta) / ((1.0 - eta) * (1.0 - eta));
  return p.omega0() * loop_length / (finesse * group_velocity);
}

}  // namespace loopent
