#pragma once

#include "loopent/errors.hpp"
#include "loopent/linalg.hpp"
#include "loopent/params.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

namespace loopent {

// SingleParticle orders (q1, p1, q2, p2); JointMode orders (q+, p+, q-, p-).
enum class Basis { SingleParticle, JointMode };

inline const char* basis_name(Basis b) {
  return b == Basis::SingleParticle ? "single-particle" : "joint-mode";
}

/// Two-mode Gaussian state. Vacuum variance is 1/2 per quadrature.
struct TwoModeState {
  Mat4 cov = 0.5 * Mat4::Identity();
  Basis basis = Basis::SingleParticle;
  Vec4 mean = Vec4::Zero();

  TwoModeState() = default;
  TwoModeState(const Mat4& c, Basis b, const Vec4& m = Vec4::Zero()) : basis(b), mean(m) {
    const double scale = std::max(1.0, max_abs(c));
    if (!c.allFinite()) throw ValidationError("TwoModeState: covariance has non-finite entries");
    if (max_abs(c - c.transpose()) > 1e-12 * scale)
      throw ValidationError("TwoModeState: covariance is not symmetric");
    cov = symmetrized(c);
  }

  static TwoModeState vacuum(Basis b = Basis::SingleParticle) {
    return TwoModeState(0.5 * Mat4::Identity(), b);
  }
  /// Block-diagonal state: first/second mode of the given basis.
  static TwoModeState product(const Mat2& first, const Mat2& second, Basis b) {
    return TwoModeState(block_diag(first, second), b);
  }

  Mat2 block(int i, int j) const { return cov.block<2, 2>(2 * i, 2 * j); }
};

/// Orthogonal, symmetric and involutory map between the two bases.
inline const Mat4& basis_matrix() {
  static const Mat4 R = [] {
    Mat4 m;
    m << 1, 0, 1, 0,
         0, 1, 0, 1,
         1, 0, -1, 0,
         0, 1, 0, -1;
    return Mat4(m / std::sqrt(2.0));
  }();
  return R;
}

inline TwoModeState basis_change(const TwoModeState& s) {
  // R = H / sqrt(2) with integer H, so the covariance only picks up an exact 1/2.
  Mat4 h = Mat4::Zero();
  h.topLeftCorner<2, 2>() = h.topRightCorner<2, 2>() = h.bottomLeftCorner<2, 2>() = Mat2::Identity();
  h.bottomRightCorner<2, 2>() = -Mat2::Identity();
  const Basis other = s.basis == Basis::SingleParticle ? Basis::JointMode : Basis::SingleParticle;
  return TwoModeState(symmetrized(0.5 * (h * s.cov * h.transpose())), other, basis_matrix() * s.mean);
}

inline TwoModeState in_basis(const TwoModeState& s, Basis b) {
  return s.basis == b ? s : basis_change(s);
}

namespace detail {

// Symplectic invariants, evaluated in the joint basis. The partial transpose
// (p2 -> -p2) acts there as the swap p+ <-> p-, so no rotation mixes the large
// and small entries of a strongly squeezed mode.
struct SymplecticInvariants {
  double delta;     // det a + det b + 2 det c of the state
  double delta_pt;  // same for the partially transposed state
  double det_all;
};

inline double det_schur(const Mat4& m) {
  const Mat2 a = m.topLeftCorner<2, 2>();
  const Mat2 b = m.bottomRightCorner<2, 2>();
  const Mat2 c = m.topRightCorner<2, 2>();
  const double da = a.determinant();
  if (c.isZero(0.0)) return da * b.determinant();
  if (!(da > 0.0)) return m.determinant();
  return da * (b - c.transpose() * a.inverse() * c).determinant();
}

inline SymplecticInvariants invariants(const TwoModeState& s) {
  const Mat4 j = in_basis(s, Basis::JointMode).cov;
  Mat4 pt = j;
  pt.row(1).swap(pt.row(3));
  pt.col(1).swap(pt.col(3));
  auto delta_of = [](const Mat4& m) {
    return m.topLeftCorner<2, 2>().determinant() + m.bottomRightCorner<2, 2>().determinant() +
           2.0 * m.topRightCorner<2, 2>().determinant();
  };
  return {delta_of(j), delta_of(pt), det_schur(j)};
}

}  // namespace detail

namespace detail {

// Symplectic eigenvalues (paper normalization) from the singular values of
// L^T Omega L with Sigma = L L^T. Absolute accuracy ~ eps * nu_max, so it is
// used only when the two eigenvalues nearly coincide and the closed form
// loses half its digits in sqrt(rad).
inline std::pair<double, double> symplectic_pair_svd(const Mat4& cov) {
  Eigen::LLT<Mat4> llt(cov);
  if (llt.info() != Eigen::Success) throw ValidationError("symplectic eigenvalues: covariance not positive definite");
  Mat4 om = Mat4::Zero();
  om(0, 1) = om(2, 3) = 1.0;
  om(1, 0) = om(3, 2) = -1.0;
  const Mat4 l = llt.matrixL();
  const Vec4 sv = Eigen::JacobiSVD<Mat4>(Mat4(l.transpose() * om * l)).singularValues();  // descending
  return {sv(3) + sv(2), sv(1) + sv(0)};
}

inline constexpr double kNearDegenerate = 1e-4;

inline Mat4 partial_transpose_joint(const TwoModeState& s) {
  Mat4 pt = in_basis(s, Basis::JointMode).cov;
  pt.row(1).swap(pt.row(3));
  pt.col(1).swap(pt.col(3));
  return pt;
}

}  // namespace detail

/// Smallest symplectic eigenvalue of the partially transposed state (vacuum
/// -> 1). Entangled iff < 1.
inline double nu_min(const TwoModeState& s) {
  const auto inv = detail::invariants(s);
  const double delta = inv.delta_pt;
  double rad = delta * delta - 4.0 * inv.det_all;
  if (rad < 0.0) {
    if (rad < -1e-9 * std::max(1.0, delta * delta))
      throw ValidationError("nu_min: non-physical state (negative radicand)");
    rad = 0.0;
  }
  // Physical states have det >= 1/16; far below that, precision has been lost.
  if (!(delta > 0.0) || inv.det_all < (1.0 - 1e-6) / 16.0)
    throw ValidationError("nu_min: non-physical state");
  if (rad > 0.0 && rad < detail::kNearDegenerate * delta * delta)
    return detail::symplectic_pair_svd(detail::partial_transpose_joint(s)).first;
  // 2 delta - 2 sqrt(rad), rationalized to avoid cancellation for large states.
  return std::sqrt(8.0 * inv.det_all / (delta + std::sqrt(rad)));
}

/// Same as nu_min, but clamps instead of raising. Intended for noisy estimates
/// (bootstrap resamples) that may be slightly non-physical.
inline double nu_min_lenient(const TwoModeState& s) {
  const auto inv = detail::invariants(s);
  const double delta = inv.delta_pt;
  const double rad = std::max(0.0, delta * delta - 4.0 * inv.det_all);
  const double denom = delta + std::sqrt(rad);
  const double nu2 = denom > 0.0 ? 8.0 * inv.det_all / denom : 2.0 * delta - 2.0 * std::sqrt(rad);
  return std::sqrt(std::max(0.0, nu2));
}

inline double log_negativity(double nu) {
  if (!(nu > 0.0)) throw ValidationError("log_negativity: nu_min must be positive");
  return nu >= 1.0 ? 0.0 : -10.0 * std::log10(nu);
}

inline double log_negativity(const TwoModeState& s) { return log_negativity(nu_min(s)); }

/// Symplectic eigenvalues of the state itself, ascending, vacuum -> (1, 1).
inline std::pair<double, double> symplectic_eigenvalues(const TwoModeState& s) {
  const auto inv = detail::invariants(s);
  const double delta = inv.delta;
  const double rad = delta * delta - 4.0 * inv.det_all;
  if (delta > 0.0 && inv.det_all > 0.0 && rad < detail::kNearDegenerate * delta * delta)
    return detail::symplectic_pair_svd(in_basis(s, Basis::JointMode).cov);
  const double root = std::sqrt(std::max(0.0, rad));
  const double hi2 = 2.0 * (delta + root);
  const double lo2 = hi2 > 0.0 ? 8.0 * inv.det_all / (delta + root) : 2.0 * (delta - root);
  return {std::sqrt(std::max(0.0, lo2)), std::sqrt(std::max(0.0, hi2))};
}

/// Steady-state covariance of an oscillator of frequency `omega` under
/// continuous position monitoring at backaction rate `gamma` and detection
/// efficiency `eta_hat`. Returns [[Q^2, E], [E, P^2]] with det = 1/(4 eta_hat).
///
/// Evaluated in a form free of 1/gamma so that gamma -> 0 is regular.
inline Mat2 wiener_block(double eta_hat, double gamma, double omega) {
  if (!(eta_hat > 0.0 && eta_hat <= 1.0))
    throw ValidationError("wiener_block: efficiency must lie in (0, 1]");
  if (!(gamma >= 0.0)) throw ValidationError("wiener_block: gamma must be >= 0");
  if (!(omega > 0.0)) throw ValidationError("wiener_block: omega must be > 0");
  const double x = eta_hat * std::pow(4.0 * gamma / omega, 2);
  const double s = std::sqrt(1.0 + x);  // Omega_W^2 / omega^2
  const double q2 = std::sqrt(2.0 / (s + 1.0)) / (2.0 * std::sqrt(eta_hat));
  const double p2 = q2 * s;
  const double e = 2.0 * gamma / (omega * (s + 1.0));
  Mat2 m;
  m << q2, e, e, p2;
  return m;
}

/// Product of two identical per-particle Wiener states (single-particle basis).
inline TwoModeState wiener_initial_state(const SystemParams& p, double detection_efficiency) {
  if (!(detection_efficiency > 0.0))
    throw ValidationError("wiener_initial_state: detection efficiency must be > 0");
  const Mat2 w = wiener_block(detection_efficiency, p.gamma_q(), p.omega0());
  return TwoModeState::product(w, w, Basis::SingleParticle);
}

struct EllipseSummary {
  std::pair<double, double> semi_axes;  // standard deviations, major first
  double orientation = 0.0;             // major axis angle from the q axis, [0, pi)
  double squeezing_db = 0.0;            // relative to vacuum variance 1/2
};

inline EllipseSummary ellipse_summary(const Mat2& block) {
  const double scale = std::max(1.0, block.cwiseAbs().maxCoeff());
  if (!block.allFinite() || std::abs(block(0, 1) - block(1, 0)) > 1e-12 * scale)
    throw ValidationError("ellipse_summary: block must be finite and symmetric");
  Eigen::SelfAdjointEigenSolver<Mat2> es(symmetrized(block));
  const Vec2 ev = es.eigenvalues();  // ascending
  if (!(ev(0) > 0.0)) throw ValidationError("ellipse_summary: block is not positive definite");
  EllipseSummary out;
  out.semi_axes = {std::sqrt(ev(1)), std::sqrt(ev(0))};
  out.squeezing_db = -10.0 * std::log10(ev(0) / 0.5);
  if (ev(1) - ev(0) > 1e-12 * ev(1)) {
    const Vec2 major = es.eigenvectors().col(1);
    double ang = std::atan2(major(1), major(0));
    if (ang < 0.0) ang += kPi;
    if (ang >= kPi) ang -= kPi;
    out.orientation = ang;
  }
  return out;
}

}  // namespace loopent
