#pragma once

#include "loopent/errors.hpp"
#include "loopent/gaussian.hpp"
#include "loopent/linalg.hpp"
#include "loopent/model.hpp"
#include "loopent/parallel.hpp"
#include "loopent/params.hpp"
#include "loopent/sde.hpp"
#include "loopent/transient.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace loopent {

using Mat16 = Eigen::Matrix<double, 16, 16>;

/// Open-loop continuous position measurement of both joint modes.
struct MeasurementModel {
  Mat4 A = Mat4::Zero();       // drift
  Mat4 W = Mat4::Zero();       // force-noise intensity
  Mat42 B = Mat42::Zero();     // W = B B^T, one column per force-noise channel
  Mat42 C = Mat42::Zero();     // observation (real part)
  Mat42 C_imag = Mat42::Zero();
  Mat2 V = 0.5 * Mat2::Identity();  // measurement-noise intensity
  Mat4 sigma_sym = Mat4::Zero();
  double omega0 = 1.0;
  double gamma_q = 0.0;
  double eta_c = 1.0;
};

inline MeasurementModel build_measurement_model(const SystemParams& p) {
  if (!(p.eta_c() > 0.0)) throw ValidationError("build_measurement_model: eta_c must be > 0");
  MeasurementModel m;
  m.omega0 = p.omega0();
  m.gamma_q = p.gamma_q();
  m.eta_c = p.eta_c();
  const double w0 = p.omega0();
  m.A(0, 1) = w0;
  m.A(1, 0) = -w0;
  m.A(2, 3) = w0;
  m.A(3, 2) = -w0;
  const double b = std::sqrt(2.0 * p.gamma_q());
  m.B(1, 0) = b;
  m.B(3, 1) = b;
  m.W = m.B * m.B.transpose();
  const double g = std::sqrt(4.0 * p.eta_c() * p.gamma_q());
  m.C(0, 0) = g;
  m.C(2, 1) = g;
  m.sigma_sym(0, 1) = 1.0;
  m.sigma_sym(1, 0) = -1.0;
  m.sigma_sym(2, 3) = 1.0;
  m.sigma_sym(3, 2) = -1.0;
  return m;
}

struct TrajectoryRecord {
  double dt = 0.0;
  std::vector<Vec4> path;    // x(t_k), k = 0..n
  std::vector<Vec2> record;  // binned outcome over [t_k, t_k + dt), k = 0..n-1
  std::uint64_t stream = 0;

  std::size_t steps() const { return record.size(); }
  double time(std::size_t k) const { return static_cast<double>(k) * dt; }
};

inline std::size_t step_count(double t_max, double dt) {
  if (!(dt > 0.0)) throw ValidationError("step_count: dt must be > 0");
  if (!(t_max > 0.0)) throw ValidationError("step_count: t_max must be > 0");
  const double n = std::round(t_max / dt);
  if (n < 1.0 || n > 1e8) throw ValidationError("step_count: unreasonable number of steps");
  return static_cast<std::size_t>(n);
}

/// Samples x(0) from the Wigner distribution of `sigma_init` (joint basis),
/// integrates the Langevin equations with the order-1.5 scheme and bins the
/// homodyne record. Draw order per step: force noise, then measurement noise.
template <typename Rng>
TrajectoryRecord simulate_trajectory(const MeasurementModel& m, const Mat4& sigma_init, double dt,
                                     double t_max, Rng& rng, std::uint64_t stream_id = 0) {
  const std::size_t n = step_count(t_max, dt);
  Eigen::LLT<Mat4> llt(sigma_init);
  if (llt.info() != Eigen::Success)
    throw ValidationError("simulate_trajectory: initial covariance is not positive definite");
  const auto nu = symplectic_eigenvalues(TwoModeState(sigma_init, Basis::JointMode));
  if (nu.first < 1.0 - 1e-9) throw ValidationError("simulate_trajectory: non-physical initial state");

  std::normal_distribution<double> normal(0.0, 1.0);
  TrajectoryRecord tr;
  tr.dt = dt;
  tr.stream = stream_id;
  tr.path.reserve(n + 1);
  tr.record.reserve(n);

  Vec4 u;
  for (int i = 0; i < 4; ++i) u(i) = normal(rng);
  Vec4 x = llt.matrixL() * u;
  tr.path.push_back(x);

  const Mat4 A = m.A;
  auto drift = [&A](const Vec4& v) -> Vec4 { return A * v; };
  const Eigen::LLT<Mat2> vchol(m.V / dt);
  const Mat2 lv = vchol.matrixL();
  for (std::size_t k = 0; k < n; ++k) {
    const auto inc = draw_increment<2>(rng, dt);
    Vec2 xi;
    xi << normal(rng), normal(rng);
    tr.record.push_back(m.C.transpose() * x + lv * xi);
    x = srk15_additive_step<decltype(drift), 4, 2>(drift, x, m.B, dt, inc);
    tr.path.push_back(x);
  }
  return tr;
}

namespace detail {

inline Mat4 effective_drift(const MeasurementModel& m) {
  return m.A + 2.0 * m.sigma_sym * m.C_imag * m.C.transpose();
}

// Backward-time derivative of the information matrix J = V_E^{-1}.
inline Mat4 info_rhs(const MeasurementModel& m, const Mat4& a_eff, const Mat4& j) {
  return j * a_eff + a_eff.transpose() * j - j * m.W * j + 2.0 * m.C * m.C.transpose();
}

inline Mat4 info_rk4(const MeasurementModel& m, const Mat4& a_eff, const Mat4& j, double h) {
  const Mat4 k1 = info_rhs(m, a_eff, j);
  const Mat4 k2 = info_rhs(m, a_eff, j + 0.5 * h * k1);
  const Mat4 k3 = info_rhs(m, a_eff, j + 0.5 * h * k2);
  const Mat4 k4 = info_rhs(m, a_eff, j + h * k3);
  return symmetrized(j + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
}

// Solves F X + X F^T = Q through its 16x16 Kronecker form.
inline Mat4 solve_lyapunov(const Mat4& f, const Mat4& q) {
  Mat16 k = Mat16::Zero();
  const Mat4 id = Mat4::Identity();
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) k(4 * j + i, 4 * c + r) = id(j, c) * f(i, r) + f(j, c) * id(i, r);
  Eigen::Matrix<double, 16, 1> rhs;
  for (int j = 0; j < 4; ++j)
    for (int i = 0; i < 4; ++i) rhs(4 * j + i) = q(i, j);
  const Eigen::Matrix<double, 16, 1> sol = k.fullPivLu().solve(rhs);
  Mat4 x;
  for (int j = 0; j < 4; ++j)
    for (int i = 0; i < 4; ++i) x(i, j) = sol(4 * j + i);
  return symmetrized(x);
}

}  // namespace detail

/// Residual of the stationary retrodiction Riccati equation
/// A' V + V A'^T + 2 V C C^T V - W.
inline Mat4 riccati_residual(const MeasurementModel& m, const Mat4& v) {
  const Mat4 a = detail::effective_drift(m);
  return a * v + v * a.transpose() + 2.0 * v * m.C * m.C.transpose() * v - m.W;
}

struct RiccatiConfig {
  double prior = 1e6;         // V_E(t_max) = prior * I
  double step = 1e-3;         // in units of 1/omega0
  double rel_change = 1e-10;  // per-step stopping criterion
  long max_steps = 50000000;
};

struct RiccatiSteadyState {
  Mat4 V;           // stationary estimator covariance V_E
  double t_settle;  // backward time needed to reach the stopping criterion
  long steps;
};

/// Integrates the retrodiction Riccati equation backward from an uninformative
/// prior until it is stationary, then polishes the fixed point with Newton
/// iterations on the algebraic equation.
inline RiccatiSteadyState riccati_retrodiction(const MeasurementModel& m, const RiccatiConfig& cfg = {}) {
  if (m.C.isZero(0.0))
    throw NumericalError("riccati_retrodiction: no measurement information, V_E diverges");
  const Mat4 a_eff = detail::effective_drift(m);
  const double h = cfg.step / m.omega0;
  // Upper bound on what the record can add over the whole budget.
  if (2.0 * max_abs(Mat4(m.C * m.C.transpose())) * h * static_cast<double>(cfg.max_steps) < 1e3 / cfg.prior)
    throw NumericalError("riccati_retrodiction: measurement too weak to inform the estimate");
  Mat4 j = Mat4::Identity() / cfg.prior;
  long k = 0;
  for (; k < cfg.max_steps; ++k) {
    const Mat4 next = detail::info_rk4(m, a_eff, j, h);
    const double change = max_abs(next - j) / max_abs(next);
    j = next;
    if (!j.allFinite()) throw NumericalError("riccati_retrodiction: integration blew up");
    if (change < cfg.rel_change) break;
  }
  if (k >= cfg.max_steps) throw NumericalError("riccati_retrodiction: no convergence within step budget");
  if (Eigen::SelfAdjointEigenSolver<Mat4>(j).eigenvalues()(0) < 1e3 / cfg.prior)
    throw NumericalError("riccati_retrodiction: information did not grow past the prior");

  Mat4 v = symmetrized(Mat4(j.inverse()));
  for (int it = 0; it < 4; ++it) {
    const Mat4 f = a_eff + 2.0 * v * m.C * m.C.transpose();
    v = symmetrized(Mat4(v + detail::solve_lyapunov(f, -riccati_residual(m, v))));
  }
  if (!v.allFinite() || max_abs(riccati_residual(m, v)) > 1e-6 * std::max(1.0, max_abs(v)))
    throw NumericalError("riccati_retrodiction: Newton polish failed");
  return {v, static_cast<double>(k + 1) * h, k + 1};
}

/// Information matrix J = V_E^{-1} along a record: at bin edges t_k (k = 0..n)
/// and bin midpoints.
struct InformationPath {
  double dt = 0.0;
  std::vector<Mat4> node;
  std::vector<Mat4> mid;

  std::size_t steps() const { return mid.size(); }
  Mat4 V_E(std::size_t k) const { return symmetrized(Mat4(node[k].inverse())); }
};

inline InformationPath information_path(const MeasurementModel& m, double dt, std::size_t n,
                                        const RiccatiConfig& cfg = {}, int substeps = 10) {
  if (m.C.isZero(0.0))
    throw NumericalError("information_path: no measurement information, V_E diverges");
  if (substeps < 2 || substeps % 2 != 0) throw ValidationError("information_path: substeps must be even");
  const Mat4 a_eff = detail::effective_drift(m);
  InformationPath path;
  path.dt = dt;
  path.node.resize(n + 1);
  path.mid.resize(n);
  const double h = dt / substeps;
  Mat4 j = Mat4::Identity() / cfg.prior;
  path.node[n] = j;
  for (std::size_t k = n; k-- > 0;) {
    for (int s = 0; s < substeps; ++s) {
      j = detail::info_rk4(m, a_eff, j, h);
      if (s == substeps / 2 - 1) path.mid[k] = j;
    }
    if (!j.allFinite()) throw NumericalError("information_path: integration blew up");
    path.node[k] = j;
  }
  return path;
}

/// Backward propagation of the retrodicted state from x_E(t_max) = 0. Returns
/// x_E at the requested bin edges (each in [0, n]).
inline std::vector<Vec4> retrodict_at(const MeasurementModel& m, const std::vector<Vec2>& record,
                                      const InformationPath& path, const std::vector<std::size_t>& bins) {
  const std::size_t n = record.size();
  if (path.steps() != n) throw ValidationError("retrodict: record and information path lengths differ");
  for (std::size_t b : bins)
    if (b > n) throw ValidationError("retrodict: requested bin outside the record");
  const Mat4 a_eff = detail::effective_drift(m);
  const double dt = path.dt;
  std::vector<Vec4> out(bins.size(), Vec4::Zero());
  Vec4 y = Vec4::Zero();  // y = J x_E
  auto emit = [&](std::size_t k) {
    for (std::size_t i = 0; i < bins.size(); ++i)
      if (bins[i] == k) out[i] = path.node[k].ldlt().solve(y);
  };
  emit(n);
  for (std::size_t k = n; k-- > 0;) {
    const Vec2& z = record[k];
    const Vec4 src = 2.0 * m.C * z;
    auto g = [&](const Mat4& j, const Vec4& v) -> Vec4 {
      return (a_eff.transpose() - j * m.W) * v + src + j * m.sigma_sym * m.C_imag * z;
    };
    const Vec4 k1 = g(path.node[k + 1], y);
    const Vec4 k2 = g(path.mid[k], y + 0.5 * dt * k1);
    const Vec4 k3 = g(path.mid[k], y + 0.5 * dt * k2);
    const Vec4 k4 = g(path.node[k], y + dt * k3);
    y += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    emit(k);
  }
  return out;
}

inline Vec4 retrodict(const MeasurementModel& m, const std::vector<Vec2>& record, const InformationPath& path) {
  return retrodict_at(m, record, path, {0}).front();
}

/// Unbiased sample covariance of the retrodicted vectors minus V_E.
inline Mat4 ensemble_estimate(const std::vector<Vec4>& samples, const Mat4& v_e) {
  const std::size_t n = samples.size();
  if (n < 2) throw ValidationError("ensemble_estimate: need at least 2 samples");
  Vec4 mean = Vec4::Zero();
  for (const auto& s : samples) mean += s;
  mean /= static_cast<double>(n);
  Mat4 cov = Mat4::Zero();
  for (const auto& s : samples) cov += (s - mean) * (s - mean).transpose();
  cov /= static_cast<double>(n - 1);
  return symmetrized(Mat4(cov - v_e));
}

struct Interval {
  double lower = 0.0;
  double upper = 0.0;
};

/// Linear-interpolation percentile of sorted data, q in [0, 1].
inline double percentile_sorted(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) throw ValidationError("percentile: empty data");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const std::size_t i = static_cast<std::size_t>(std::floor(pos));
  if (i + 1 >= sorted.size()) return sorted.back();
  const double w = pos - static_cast<double>(i);
  return sorted[i] + w * (sorted[i + 1] - sorted[i]);
}

inline constexpr double kTwoSigmaLow = 0.02275;
inline constexpr double kTwoSigmaHigh = 0.97725;
inline constexpr std::uint64_t kBootstrapStream = 0xB0075747ULL;

/// Percentile bootstrap (2-sigma coverage) of `stat` over resamples of the
/// samples with replacement. Deterministic given the seed.
template <typename Sample, typename Statistic>
Interval bootstrap_ci(const std::vector<Sample>& samples, Statistic&& stat, int n_resamples,
                      std::uint64_t seed) {
  if (n_resamples < 100) throw ValidationError("bootstrap_ci: need at least 100 resamples");
  if (samples.empty()) throw ValidationError("bootstrap_ci: no samples");
  auto rng = make_stream(seed, kBootstrapStream);
  std::uniform_int_distribution<std::size_t> pick(0, samples.size() - 1);
  std::vector<double> values(static_cast<std::size_t>(n_resamples));
  std::vector<Sample> resample(samples.size());
  for (auto& v : values) {
    for (auto& r : resample) r = samples[pick(rng)];
    v = stat(resample);
  }
  std::sort(values.begin(), values.end());
  return {percentile_sorted(values, kTwoSigmaLow), percentile_sorted(values, kTwoSigmaHigh)};
}

struct RelativeErrors {
  double omega0 = 1e-3;
  double gamma_q = 0.05;
  double eta_c = 0.05;
};

struct SystematicError {
  double nu_VE = 0.0;      // witness of the stationary estimator covariance
  double two_sigma = 0.0;  // absolute, on the witness scale (threshold 1)
  double relative = 0.0;   // two_sigma / nu_VE
  std::array<double, 3> gradient{};  // d nu / d (omega0, gamma_q, eta_c)
};

inline double nu_of_steady_estimator(const SystemParams& p) {
  const Mat4 v = riccati_retrodiction(build_measurement_model(p)).V;
  return nu_min_lenient(TwoModeState(v, Basis::JointMode));
}

/// First-order propagation of parameter uncertainties into nu_min[V_E]:
/// central differences with relative step 1e-4, uncorrelated errors added in
/// quadrature, doubled for a 2-sigma level.
inline SystematicError systematic_error(const SystemParams& p, const RelativeErrors& rel = {}) {
  if (rel.omega0 < 0.0 || rel.gamma_q < 0.0 || rel.eta_c < 0.0)
    throw ValidationError("systematic_error: relative errors must be non-negative");
  constexpr double kStep = 1e-4;
  SystematicError out;
  out.nu_VE = nu_of_steady_estimator(p);

  auto shifted = [&](int which, double factor) {
    SystemParams::Fields f = p.fields();
    f.eta_m = 0.0;  // the verification stage measures without the loop tap
    if (which == 0) f.omega0 *= factor;
    if (which == 1) f.gamma_q *= factor;
    if (which == 2) f.eta_c = std::min(1.0, f.eta_c * factor);
    return SystemParams(f);
  };
  const std::array<double, 3> values{p.omega0(), p.gamma_q(), p.eta_c()};
  const std::array<double, 3> errs{rel.omega0, rel.gamma_q, rel.eta_c};
  double var = 0.0;
  for (int i = 0; i < 3; ++i) {
    const SystemParams up = shifted(i, 1.0 + kStep);
    const SystemParams dn = shifted(i, 1.0 - kStep);
    const double hi_val = (i == 0 ? up.omega0() : i == 1 ? up.gamma_q() : up.eta_c());
    const double lo_val = (i == 0 ? dn.omega0() : i == 1 ? dn.gamma_q() : dn.eta_c());
    const double d = (nu_of_steady_estimator(up) - nu_of_steady_estimator(dn)) / (hi_val - lo_val);
    out.gradient[i] = d;
    const double sigma = d * errs[i] * values[i];
    var += sigma * sigma;
  }
  out.two_sigma = 2.0 * std::sqrt(var);
  out.relative = out.nu_VE > 0.0 ? out.two_sigma / out.nu_VE : 0.0;
  return out;
}

struct VerifyConfig {
  int n_traj = 1000;
  double dt = 1e-2;
  std::uint64_t seed = 20240826;
  unsigned threads = 0;
  double grid_end = 1.0;   // retrodiction grid: [0, grid_end]
  double grid_step = 0.05;
  double tail = 0.0;       // record length past the grid; 0 -> 10 / (eta_c gamma_q)
  int n_bootstrap = 1000;
  RelativeErrors rel_errors{};
  int min_ensemble = 100;  // below this the report is flagged
};

struct CurvePoint {
  double t = 0.0;
  double nu_theory = 0.0;
  double nu_estimate = 0.0;
  Interval ci_stat;
  Interval ci_combined;
  bool covered = false;  // theory value inside the combined band
};

struct RetrodictionReport {
  // run metadata
  std::uint64_t seed = 0;
  int n_traj = 0;
  double dt = 0.0;
  double t_max = 0.0;
  int n_bootstrap = 0;
  bool insufficient_ensemble = false;
  SystemParams::Fields params{};
  // prepared state
  double t_star = 0.0;
  double nu_prepared = 0.0;
  Mat4 sigma0_true = Mat4::Zero();      // joint basis
  Mat4 sigma0_estimate = Mat4::Zero();  // joint basis, V_E already subtracted
  Mat4 V_E = Mat4::Zero();
  SystematicError ci_sys;
  std::vector<CurvePoint> curve;

  double coverage() const {
    if (curve.empty()) return 0.0;
    double c = 0.0;
    for (const auto& p : curve) c += p.covered ? 1.0 : 0.0;
    return c / static_cast<double>(curve.size());
  }
};

/// Parameters for the closed-loop preparation and open-loop verification.
/// The verification measurement has no tap; only eta_c enters it.
inline SystemParams open_loop(const SystemParams& p) {
  SystemParams::Fields f = p.fields();
  f.eta = 0.0;
  f.theta = 0.0;
  f.eta_m = 0.0;
  return SystemParams(f);
}

/// Full certification run: prepare the transient optimum, simulate N open-loop
/// measurement records, retrodict, reconstruct the covariance on a time grid
/// and attach statistical and systematic 2-sigma bands.
inline RetrodictionReport verify_experiment(const SystemParams& p, const VerifyConfig& cfg = {}) {
  if (cfg.n_traj < 2) throw ValidationError("verify_experiment: need at least 2 trajectories");
  if (!(p.gamma_q() > 0.0)) throw ValidationError("verify_experiment: gamma_q must be > 0");
  if (!(cfg.grid_step > 0.0 && cfg.grid_end >= 0.0))
    throw ValidationError("verify_experiment: invalid retrodiction grid");

  RetrodictionReport rep;
  rep.seed = cfg.seed;
  rep.n_traj = cfg.n_traj;
  rep.dt = cfg.dt;
  rep.n_bootstrap = cfg.n_bootstrap;
  rep.insufficient_ensemble = cfg.n_traj < cfg.min_ensemble;
  rep.params = p.fields();

  const TwoModeState prepared0 = transient_initial_state(p);
  const OptimalWitness opt = optimal_negativity(prepared0, p);
  rep.t_star = opt.t_star;
  rep.nu_prepared = opt.nu_min;
  const TwoModeState sigma0 = evolve(prepared0, p, opt.t_star);
  rep.sigma0_true = sigma0.cov;

  const SystemParams free = open_loop(p);
  const MeasurementModel model = build_measurement_model(free);
  const double tail = cfg.tail > 0.0 ? cfg.tail : 10.0 / (p.eta_c() * p.gamma_q());
  const std::size_t n_grid = static_cast<std::size_t>(std::floor(cfg.grid_end / cfg.grid_step + 1e-9)) + 1;
  std::vector<double> grid(n_grid);
  std::vector<std::size_t> bins(n_grid);
  for (std::size_t i = 0; i < n_grid; ++i) {
    grid[i] = static_cast<double>(i) * cfg.grid_step;
    bins[i] = static_cast<std::size_t>(std::llround(grid[i] / cfg.dt));
  }
  const std::size_t n = step_count(grid.back() + tail, cfg.dt);
  rep.t_max = static_cast<double>(n) * cfg.dt;

  const InformationPath info = information_path(model, cfg.dt, n);
  rep.V_E = riccati_retrodiction(model).V;

  // estimates[g][i]: retrodicted vector at grid time g for trajectory i.
  std::vector<std::vector<Vec4>> estimates(n_grid, std::vector<Vec4>(cfg.n_traj));
  parallel_for(static_cast<std::size_t>(cfg.n_traj), cfg.threads, [&](std::size_t i) {
    auto rng = make_stream(cfg.seed, i);
    const TrajectoryRecord tr = simulate_trajectory(model, sigma0.cov, cfg.dt, rep.t_max, rng, i);
    const std::vector<Vec4> xe = retrodict_at(model, tr.record, info, bins);
    for (std::size_t g = 0; g < n_grid; ++g) estimates[g][i] = xe[g];
  });

  rep.ci_sys = systematic_error(free, cfg.rel_errors);
  const double sys = rep.ci_sys.two_sigma;

  rep.curve.resize(n_grid);
  parallel_for(n_grid, cfg.threads, [&](std::size_t g) {
    const Mat4 v_e = info.V_E(bins[g]);
    auto stat = [&v_e](const std::vector<Vec4>& s) {
      return nu_min_lenient(TwoModeState(ensemble_estimate(s, v_e), Basis::JointMode));
    };
    CurvePoint& cp = rep.curve[g];
    cp.t = grid[g];
    cp.nu_theory = nu_min(evolve(sigma0, free, grid[g]));
    cp.nu_estimate = stat(estimates[g]);
    cp.ci_stat = bootstrap_ci(estimates[g], stat, cfg.n_bootstrap, cfg.seed);
    const double dl = std::hypot(std::max(0.0, cp.nu_estimate - cp.ci_stat.lower), sys);
    const double du = std::hypot(std::max(0.0, cp.ci_stat.upper - cp.nu_estimate), sys);
    cp.ci_combined = {cp.nu_estimate - dl, cp.nu_estimate + du};
    cp.covered = cp.nu_theory >= cp.ci_combined.lower && cp.nu_theory <= cp.ci_combined.upper;
  });
  rep.sigma0_estimate = ensemble_estimate(estimates[0], info.V_E(bins[0]));
  return rep;
}

}  // namespace loopent
