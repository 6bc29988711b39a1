#pragma once

#include "loopent/errors.hpp"
#include "loopent/gaussian.hpp"
#include "loopent/model.hpp"
#include "loopent/parallel.hpp"
#include "loopent/params.hpp"
#include "loopent/transient.hpp"

#include <cmath>
#include <limits>
#include <utility>
#include <vector>

namespace loopent {

struct OptimalAngles {
  double plus = 0.0;
  double minus = 0.0;
  // sin(theta) = 0 or eta = 0: the position signal sits entirely in the phase
  // quadrature and both angles are reported as pi/2.
  bool degenerate = false;

  double of(Mode m) const { return m == Mode::Plus ? plus : minus; }
};

/// Homodyne angles in (-pi/2, pi/2] at which imprecision and backaction noise
/// of each joint mode decorrelate.
inline OptimalAngles optimal_angle(const SystemParams& p) {
  if (!(p.eta_c() * p.eta_m() > 0.0))
    throw ValidationError("optimal_angle: requires eta_c * eta_m > 0");
  const LoopCoefficients c = loop_coefficients(p);
  const double se = std::sqrt(p.eta());
  const double sin_th = std::sin(p.theta());
  OptimalAngles out;
  for (Mode m : {Mode::Plus, Mode::Minus}) {
    const double s1 = c.s1_of(m);
    double phi = 0.5 * kPi;
    if (std::abs(s1) > 1e-15) {
      const double tan_phi = -c.sc_of(m) / s1;
      const double closed = std::cos(p.theta()) / sin_th - mode_sign(m) / (se * sin_th);
      if (std::abs(tan_phi - closed) > 1e-12 * std::max(1.0, std::abs(closed)))
        throw NumericalError("optimal_angle: closed-form and coefficient forms disagree");
      phi = std::atan(tan_phi);
    } else {
      out.degenerate = true;
    }
    (m == Mode::Plus ? out.plus : out.minus) = phi;
  }
  return out;
}

/// Symmetrized correlation between imprecision and backaction noise at analyzer angle phi.
inline double imprecision_backaction_correlator(const SystemParams& p, Mode m, double phi) {
  const LoopCoefficients c = loop_coefficients(p);
  return std::sqrt(p.eta_c() * p.eta_m()) *
         (std::cos(phi) * c.sc_of(m) + std::sin(phi) * c.s1_of(m));
}

/// Measured-signal amplitude per unit joint-mode position.
inline double signal_gain(const SystemParams& p, Mode m, double phi) {
  const LoopCoefficients c = loop_coefficients(p);
  const double gamma_m = p.eta_c() * p.eta_m() * p.gamma_q();
  return std::sqrt(4.0 * gamma_m) * (std::sin(phi) * c.sc_of(m) - std::cos(phi) * c.s1_of(m));
}

/// Effective measurement efficiency of each joint mode at the optimal angle.
inline std::pair<double, double> effective_efficiency(const SystemParams& p) {
  const double eta = p.eta();
  const double e = p.eta_c() * p.eta_m() / (1.0 - eta);
  if (p.eta_m() > 0.0 && p.eta_m() < 1.0) {
    const double alt = eta * p.eta_m() / ((1.0 - eta) * (1.0 - p.eta_m()));
    // Tap consistency is only enforced to 1e-12, so compare at that level.
    if (std::abs(alt - e) > 1e-12 * std::max(1.0, e))
      throw NumericalError("effective_efficiency: equivalent forms disagree");
  }
  return {e, e};
}

/// Steady conditional state of the joint modes under optimal in-loop detection:
/// the single-oscillator Wiener state with omega -> Omega_pm, gamma -> Gamma_pm
/// and efficiency -> effective efficiency. Requires both modes stable.
inline TwoModeState conditional_joint_state(const SystemParams& p) {
  const ModeSpectrum s = mode_spectrum(p);
  if (!(s.omega_plus_sq > 0.0 && s.omega_minus_sq > 0.0))
    throw ValidationError("conditional_joint_state: unstable joint mode, no steady state");
  const double eff = effective_efficiency(p).first;
  const Mat2 plus = wiener_block(eff, s.gamma_plus, std::sqrt(s.omega_plus_sq));
  const Mat2 minus = wiener_block(eff, s.gamma_minus, std::sqrt(s.omega_minus_sq));
  return TwoModeState::product(plus, minus, Basis::JointMode);
}

struct ConditionalCell {
  double theta = 0.0;
  double gamma_q = 0.0;
  bool stable = true;
  double nu_min = std::numeric_limits<double>::quiet_NaN();  // NaN when masked
  double E_N = std::numeric_limits<double>::quiet_NaN();
};

/// Row-major in theta: cells[i * gammaq_grid.size() + j].
struct ConditionalMap {
  std::vector<double> theta_grid;
  std::vector<double> gammaq_grid;
  std::vector<ConditionalCell> cells;

  const ConditionalCell& at(std::size_t i, std::size_t j) const {
    return cells[i * gammaq_grid.size() + j];
  }
};

inline ConditionalMap conditional_witness_map(const SystemParams& base,
                                              const std::vector<double>& theta_grid,
                                              const std::vector<double>& gammaq_grid,
                                              unsigned threads = 0) {
  validate_grid(theta_grid, "conditional_witness_map theta");
  validate_grid(gammaq_grid, "conditional_witness_map gamma_q");
  ConditionalMap map{theta_grid, gammaq_grid, {}};
  const std::size_t ng = gammaq_grid.size();
  map.cells.resize(theta_grid.size() * ng);
  parallel_for(map.cells.size(), threads, [&](std::size_t k) {
    const SystemParams p = base.with_theta(theta_grid[k / ng]).with_gamma_q(gammaq_grid[k % ng]);
    const ModeSpectrum s = mode_spectrum(p);
    ConditionalCell cell;
    cell.theta = p.theta();
    cell.gamma_q = p.gamma_q();
    cell.stable = s.omega_plus_sq > 0.0 && s.omega_minus_sq > 0.0;
    if (cell.stable) {
      cell.nu_min = nu_min(conditional_joint_state(p));
      cell.E_N = log_negativity(cell.nu_min);
    }
    map.cells[k] = cell;
  });
  return map;
}

}  // namespace loopent
