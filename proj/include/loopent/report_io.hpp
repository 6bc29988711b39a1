#pragma once

#include "loopent/linalg.hpp"
#include "loopent/params.hpp"
#include "loopent/verify.hpp"

#include <json.hpp>

#include <cmath>
#include <string>

namespace loopent {

inline nlohmann::json to_json(const Mat4& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (int i = 0; i < 4; ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (int j = 0; j < 4; ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

inline nlohmann::json to_json(const SystemParams::Fields& f) {
  return {{"omega0", f.omega0}, {"gamma_q", f.gamma_q}, {"eta", f.eta},      {"theta", f.theta},
          {"eta_c", f.eta_c},   {"eta_m", f.eta_m},     {"gamma_mech", f.gamma_mech}};
}

// Non-finite numbers become null.
inline nlohmann::json num(double x) { return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(); }

/// Report schema: metadata, theory_curve[], retrodicted_curve[], ci_stat[],
/// ci_sys, ci_combined[], plus the prepared and reconstructed covariances.
/// Contains nothing that depends on the worker count.
inline nlohmann::json to_json(const RetrodictionReport& r) {
  nlohmann::json j;
  j["metadata"] = {{"seed", r.seed},
                   {"n_traj", r.n_traj},
                   {"dt", r.dt},
                   {"t_max", r.t_max},
                   {"n_bootstrap", r.n_bootstrap},
                   {"insufficient_ensemble", r.insufficient_ensemble},
                   {"params", to_json(r.params)},
                   {"t_star", r.t_star},
                   {"nu_prepared", r.nu_prepared},
                   {"basis", "joint-mode (q+, p+, q-, p-)"},
                   {"coverage", r.coverage()}};
  j["sigma0_true"] = to_json(r.sigma0_true);
  j["sigma0_estimate"] = to_json(r.sigma0_estimate);
  j["V_E"] = to_json(r.V_E);
  auto& theory = j["theory_curve"] = nlohmann::json::array();
  auto& retro = j["retrodicted_curve"] = nlohmann::json::array();
  auto& stat = j["ci_stat"] = nlohmann::json::array();
  auto& comb = j["ci_combined"] = nlohmann::json::array();
  for (const auto& p : r.curve) {
    theory.push_back({{"t", p.t}, {"nu_min", num(p.nu_theory)}});
    retro.push_back({{"t", p.t}, {"nu_min", num(p.nu_estimate)}, {"covered", p.covered}});
    stat.push_back({{"t", p.t}, {"lower", num(p.ci_stat.lower)}, {"upper", num(p.ci_stat.upper)}});
    comb.push_back({{"t", p.t}, {"lower", num(p.ci_combined.lower)}, {"upper", num(p.ci_combined.upper)}});
  }
  j["ci_sys"] = {{"two_sigma", r.ci_sys.two_sigma},
                 {"relative", r.ci_sys.relative},
                 {"nu_V_E", r.ci_sys.nu_VE},
                 {"gradient", {{"omega0", r.ci_sys.gradient[0]},
                               {"gamma_q", r.ci_sys.gradient[1]},
                               {"eta_c", r.ci_sys.gradient[2]}}}};
  return j;
}

}  // namespace loopent
