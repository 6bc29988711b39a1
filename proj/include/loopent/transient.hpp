#pragma once

#include "loopent/errors.hpp"
#include "loopent/gaussian.hpp"
#include "loopent/linalg.hpp"
#include "loopent/model.hpp"
#include "loopent/parallel.hpp"
#include "loopent/params.hpp"

#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <string>
#include <vector>

namespace loopent {

inline void validate_grid(const std::vector<double>& g, const std::string& name) {
  if (g.empty()) throw ValidationError(name + ": grid is empty");
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!std::isfinite(g[i])) throw ValidationError(name + ": non-finite grid value");
    if (i > 0 && !(g[i] > g[i - 1])) throw ValidationError(name + ": grid must be strictly increasing");
  }
}

namespace detail {

inline cplx sinc(cplx z) {
  if (std::abs(z) < 1e-4) {
    const cplx z2 = z * z;
    return 1.0 - z2 / 6.0 + z2 * z2 / 120.0;
  }
  return std::sin(z) / z;
}

// (z - sin(2z)/2) / z^3, regular at z = 0.
inline cplx h_position(cplx z) {
  if (std::abs(z) < 0.5) {
    const cplx z2 = z * z;
    cplx term = 4.0 / 6.0;  // k = 1
    cplx sum = term;
    for (int k = 2; k < 20; ++k) {
      term *= -4.0 * z2 / ((2.0 * k) * (2.0 * k + 1.0));
      sum += term;
    }
    return sum;
  }
  return (z - std::sin(2.0 * z) / 2.0) / (z * z * z);
}

using CMat2 = Eigen::Matrix2cd;

inline Mat2 checked_real(const CMat2& m, const char* what) {
  const double norm = std::max(1.0, m.cwiseAbs().maxCoeff());
  if (m.imag().cwiseAbs().maxCoeff() > 1e-9 * norm)
    throw NumericalError(std::string(what) + ": imaginary residue in real-valued result");
  return m.real();
}

}  // namespace detail

/// Phase-space flow of one joint mode, written in terms of phi = Omega t so
/// that stable, marginal and unstable modes share one code path.
inline Mat2 flow_matrix(const ModeSpectrum& s, Mode m, double t) {
  if (!(t >= 0.0)) throw ValidationError("flow_matrix: t must be >= 0");
  const double w0 = s.omega0;
  const cplx w2(s.omega_sq(m), 0.0);
  const cplx phi = s.omega(m) * t;
  const cplx c = std::cos(phi);
  const cplx sn = detail::sinc(phi);
  detail::CMat2 f;
  f << c, w0 * t * sn, -(w2 * t / w0) * sn, c;
  return detail::checked_real(f, "flow_matrix");
}

inline Mat2 coherent_cov(const Mat2& sigma0_block, const ModeSpectrum& s, Mode m, double t) {
  const Mat2 f = flow_matrix(s, m, t);
  return symmetrized(f * sigma0_block * f.transpose());
}

/// Noise accumulated from t = 0 by photon recoil at rate Gamma_pm on one joint mode.
inline Mat2 incoherent_cov(const ModeSpectrum& s, Mode m, double t) {
  if (!(t >= 0.0)) throw ValidationError("incoherent_cov: t must be >= 0");
  const double w0 = s.omega0;
  const double g = s.gamma(m);
  const cplx phi = s.omega(m) * t;
  const cplx sn = detail::sinc(phi);
  detail::CMat2 n;
  const cplx qq = g * w0 * w0 * t * t * t * detail::h_position(phi);
  const cplx qp = g * w0 * t * t * sn * sn;
  const cplx pp = g * t * (1.0 + detail::sinc(2.0 * phi));
  n << qq, qp, qp, pp;
  return detail::checked_real(n, "incoherent_cov");
}

/// arg(1 - 1/r_pm), the squeezing-axis angle quoted for the unstable mode.
inline double squeezing_angle(const ModeSpectrum& s, Mode m) {
  return std::arg(1.0 - 1.0 / s.r(m));
}

inline Mat4 full_flow(const ModeSpectrum& s, double t) {
  return block_diag(flow_matrix(s, Mode::Plus, t), flow_matrix(s, Mode::Minus, t));
}

/// Closed-form covariance at time t, returned in the joint basis.
inline TwoModeState evolve(const TwoModeState& sigma0, const SystemParams& p, double t) {
  const ModeSpectrum s = mode_spectrum(p);
  const TwoModeState j = in_basis(sigma0, Basis::JointMode);
  const Mat4 f = full_flow(s, t);
  const Mat4 noise = block_diag(incoherent_cov(s, Mode::Plus, t), incoherent_cov(s, Mode::Minus, t));
  return TwoModeState(symmetrized(f * j.cov * f.transpose() + noise), Basis::JointMode, f * j.mean);
}

/// Drift and diffusion of the closed-loop joint-mode dynamics.
inline Mat4 joint_drift(const ModeSpectrum& s) {
  Mat4 a = Mat4::Zero();
  a(0, 1) = s.omega0;
  a(1, 0) = -s.omega_plus_sq / s.omega0;
  a(2, 3) = s.omega0;
  a(3, 2) = -s.omega_minus_sq / s.omega0;
  return a;
}

inline Mat4 joint_diffusion(const ModeSpectrum& s) {
  Mat4 w = Mat4::Zero();
  w(1, 1) = 2.0 * s.gamma_plus;
  w(3, 3) = 2.0 * s.gamma_minus;
  return w;
}

/// Reference solution: RK4 integration of dS/dt = A S + S A^T + W.
inline TwoModeState lyapunov_oracle(const TwoModeState& sigma0, const SystemParams& p, double t,
                                    double step = 1e-4) {
  if (!(t >= 0.0)) throw ValidationError("lyapunov_oracle: t must be >= 0");
  if (!(step > 0.0)) throw ValidationError("lyapunov_oracle: step must be > 0");
  const ModeSpectrum s = mode_spectrum(p);
  const Mat4 a = joint_drift(s);
  const Mat4 w = joint_diffusion(s);
  const double steps_real = std::ceil(t * p.omega0() / step);
  if (steps_real > 1e9) throw NumericalError("lyapunov_oracle: step count overflow");
  const long n = static_cast<long>(steps_real);
  Mat4 x = in_basis(sigma0, Basis::JointMode).cov;
  if (n == 0) return TwoModeState(x, Basis::JointMode);
  const double h = t / static_cast<double>(n);
  auto rhs = [&](const Mat4& m) -> Mat4 { return a * m + m * a.transpose() + w; };
  for (long k = 0; k < n; ++k) {
    const Mat4 k1 = rhs(x);
    const Mat4 k2 = rhs(x + 0.5 * h * k1);
    const Mat4 k3 = rhs(x + 0.5 * h * k2);
    const Mat4 k4 = rhs(x + h * k3);
    x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return TwoModeState(symmetrized(x), Basis::JointMode);
}

struct WitnessPoint {
  double t = 0.0;
  double nu_min = 1.0;
  double E_N = 0.0;
};

inline std::vector<WitnessPoint> witness_series(const TwoModeState& sigma0, const SystemParams& p,
                                                const std::vector<double>& t_grid) {
  validate_grid(t_grid, "witness_series");
  if (t_grid.front() < 0.0) throw ValidationError("witness_series: times must be >= 0");
  nu_min(sigma0);  // rejects non-physical input
  std::vector<WitnessPoint> out;
  out.reserve(t_grid.size());
  for (double t : t_grid) {
    // Far into an unstable growth the covariance no longer resolves det >= 1/16;
    // such points are reported as NaN.
    try {
      const double nu = nu_min(evolve(sigma0, p, t));
      out.push_back({t, nu, log_negativity(nu)});
    } catch (const ValidationError&) {
      out.push_back({t, std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()});
    }
  }
  return out;
}

struct OptimalSearch {
  int grid_points = 512;
  double tolerance = 1e-6;  // in units of 1/omega0
};

struct OptimalWitness {
  double t_star = 0.0;
  double nu_min = 1.0;
  double E_N = 0.0;
};

/// Period of the stiffer (real-frequency) joint mode; bounds the search for t*.
inline double stiff_period(const ModeSpectrum& s) {
  const double w2 = std::max(s.omega_plus_sq, s.omega_minus_sq);
  return w2 > 0.0 ? 2.0 * kPi / std::sqrt(w2) : 2.0 * kPi / s.omega0;
}

/// Minimizes nu_min(t) over (0, one stiff-mode period] by a dense scan and a
/// golden-section refinement around the best grid point.
inline OptimalWitness optimal_negativity(const TwoModeState& sigma0, const SystemParams& p,
                                         const OptimalSearch& cfg = {}) {
  if (cfg.grid_points < 3) throw ValidationError("optimal_negativity: need at least 3 grid points");
  const double nu0 = nu_min(sigma0);
  if (p.gamma_q() == 0.0) return {0.0, nu0, log_negativity(nu0)};

  // Late in the window a strongly unstable mode can push the covariance past
  // double precision; such points are skipped instead of aborting the search.
  auto f = [&](double t) {
    try {
      return nu_min(evolve(sigma0, p, t));
    } catch (const ValidationError&) {
      return std::numeric_limits<double>::infinity();
    }
  };

  const ModeSpectrum s = mode_spectrum(p);
  const double period = stiff_period(s);
  const int n = cfg.grid_points;
  int best = 1;
  double best_val = std::numeric_limits<double>::infinity();
  for (int i = 1; i <= n; ++i) {
    const double v = f(period * i / n);
    if (v < best_val) {
      best_val = v;
      best = i;
    }
  }
  if (!std::isfinite(best_val)) throw NumericalError("optimal_negativity: no valid time point");

  double lo = period * (best - 1) / n;
  double hi = period * std::min(best + 1, n) / n;
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = hi - inv_phi * (hi - lo), x2 = lo + inv_phi * (hi - lo);
  double f1 = f(x1), f2 = f(x2);
  const double tol = cfg.tolerance / p.omega0();
  while (hi - lo > tol) {
    if (f1 < f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - inv_phi * (hi - lo);
      f1 = f(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + inv_phi * (hi - lo);
      f2 = f(x2);
    }
  }
  OptimalWitness out{period * best / n, best_val, 0.0};
  const double tm = 0.5 * (lo + hi);
  const double fm = f(tm);
  if (fm < out.nu_min) out = {tm, fm, 0.0};
  out.E_N = log_negativity(out.nu_min);
  return out;
}

/// Initial state used for transient runs: each particle prepared in the Wiener
/// state with detection efficiency equal to the loop transmittance. With no
/// loop light (eta = 0) the particles start in vacuum.
inline TwoModeState transient_initial_state(const SystemParams& p) {
  if (p.eta() == 0.0) return TwoModeState::vacuum();
  return wiener_initial_state(p, p.eta());
}

struct MapCell {
  double theta = 0.0;
  double gamma_q = 0.0;
  double E_N = 0.0;
  double nu_min = 1.0;
  double t_star = 0.0;
  bool stable = true;
};

/// Row-major in theta: cells[i * gammaq_grid.size() + j].
struct NegativityMap {
  std::vector<double> theta_grid;
  std::vector<double> gammaq_grid;
  std::vector<MapCell> cells;

  const MapCell& at(std::size_t i, std::size_t j) const { return cells[i * gammaq_grid.size() + j]; }
};

using StatePolicy = std::function<TwoModeState(const SystemParams&)>;

inline NegativityMap negativity_map(const SystemParams& base, const std::vector<double>& theta_grid,
                                    const std::vector<double>& gammaq_grid,
                                    const StatePolicy& sigma0_policy = transient_initial_state,
                                    unsigned threads = 0) {
  validate_grid(theta_grid, "negativity_map theta");
  validate_grid(gammaq_grid, "negativity_map gamma_q");
  NegativityMap map{theta_grid, gammaq_grid, {}};
  const std::size_t ng = gammaq_grid.size();
  map.cells.resize(theta_grid.size() * ng);
  parallel_for(map.cells.size(), threads, [&](std::size_t k) {
    const SystemParams p = base.with_theta(theta_grid[k / ng]).with_gamma_q(gammaq_grid[k % ng]);
    const OptimalWitness w = optimal_negativity(sigma0_policy(p), p);
    map.cells[k] = {p.theta(), p.gamma_q(), w.E_N, w.nu_min, w.t_star, mode_spectrum(p).stable};
  });
  return map;
}

}  // namespace loopent
