// Batch driver: regenerates the figure datasets as CSV/JSON files.

#include "loopent/loopent.hpp"
#include "loopent/report_io.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace {

using loopent::kPi;
using nlohmann::json;

constexpr int kExitValidation = 2;
constexpr int kExitNumerical = 3;

struct RunConfig {
  std::string command;
  double omega0 = 1.0;
  double eta = 0.5;
  double theta = 2.0 * kPi / 3.0;
  double gammaq = 2.0;
  double eta_c = 0.5;
  double eta_m = 0.8;
  double gamma_mech = 0.0;
  std::uint64_t seed = 20240826;
  unsigned threads = 0;
  std::string out;
  std::string config;

  double theta_min = 0.0;
  double theta_max = kPi;
  int theta_n = 100;
  double gammaq_min = 0.1;
  double gammaq_max = 10.0;
  int gammaq_n = 100;
  std::string gammaq_scale = "log";
  std::vector<double> gammaq_list;

  double t_max = 3.0;
  int n_points = 301;
  std::string ellipse_out;

  int n_traj = 1000;
  double dt = 1e-2;
  int n_bootstrap = 1000;
  double grid_end = 1.0;
  double grid_step = 0.05;
  double tail = 0.0;
};

json to_json(const RunConfig& c) {
  return {{"command", c.command},       {"omega0", c.omega0},         {"eta", c.eta},
          {"theta", c.theta},           {"gammaq", c.gammaq},         {"eta_c", c.eta_c},
          {"eta_m", c.eta_m},           {"gamma_mech", c.gamma_mech}, {"seed", c.seed},
          {"theta_min", c.theta_min},   {"theta_max", c.theta_max},   {"theta_n", c.theta_n},
          {"gammaq_min", c.gammaq_min}, {"gammaq_max", c.gammaq_max}, {"gammaq_n", c.gammaq_n},
          {"gammaq_scale", c.gammaq_scale}, {"gammaq_list", c.gammaq_list}, {"t_max", c.t_max},
          {"n_points", c.n_points},     {"n_traj", c.n_traj},         {"dt", c.dt},
          {"n_bootstrap", c.n_bootstrap}, {"grid_end", c.grid_end},   {"grid_step", c.grid_step},
          {"tail", c.tail}};
}

// Values in the JSON file take precedence over command-line flags.
void apply_config_file(RunConfig& c) {
  if (c.config.empty()) return;
  std::ifstream in(c.config);
  if (!in) throw loopent::ValidationError("cannot open config file " + c.config);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw loopent::ValidationError(std::string("malformed config file: ") + e.what());
  }
  if (!j.is_object()) throw loopent::ValidationError("config file must hold a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    const json& v = it.value();
    try {
      if (k == "omega0") c.omega0 = v.get<double>();
      else if (k == "eta") c.eta = v.get<double>();
      else if (k == "theta") c.theta = v.get<double>();
      else if (k == "gammaq") c.gammaq = v.get<double>();
      else if (k == "eta_c") c.eta_c = v.get<double>();
      else if (k == "eta_m") c.eta_m = v.get<double>();
      else if (k == "gamma_mech") c.gamma_mech = v.get<double>();
      else if (k == "seed") c.seed = v.get<std::uint64_t>();
      else if (k == "threads") c.threads = v.get<unsigned>();
      else if (k == "theta_min") c.theta_min = v.get<double>();
      else if (k == "theta_max") c.theta_max = v.get<double>();
      else if (k == "theta_n") c.theta_n = v.get<int>();
      else if (k == "gammaq_min") c.gammaq_min = v.get<double>();
      else if (k == "gammaq_max") c.gammaq_max = v.get<double>();
      else if (k == "gammaq_n") c.gammaq_n = v.get<int>();
      else if (k == "gammaq_scale") c.gammaq_scale = v.get<std::string>();
      else if (k == "gammaq_list") c.gammaq_list = v.get<std::vector<double>>();
      else if (k == "t_max") c.t_max = v.get<double>();
      else if (k == "n_points") c.n_points = v.get<int>();
      else if (k == "n_traj") c.n_traj = v.get<int>();
      else if (k == "dt") c.dt = v.get<double>();
      else if (k == "n_bootstrap") c.n_bootstrap = v.get<int>();
      else if (k == "grid_end") c.grid_end = v.get<double>();
      else if (k == "grid_step") c.grid_step = v.get<double>();
      else if (k == "tail") c.tail = v.get<double>();
      else if (k == "command") continue;
      else throw loopent::ValidationError("unknown config key '" + k + "'");
    } catch (const json::exception&) {
      throw loopent::ValidationError("config key '" + k + "' has the wrong type");
    }
  }
}

std::vector<double> linspace(double lo, double hi, int n) {
  if (n < 1) throw loopent::ValidationError("grid needs at least one point");
  if (n == 1) return {lo};
  std::vector<double> g(n);
  for (int i = 0; i < n; ++i) g[i] = lo + (hi - lo) * i / (n - 1);
  return g;
}

std::vector<double> theta_grid(const RunConfig& c) { return linspace(c.theta_min, c.theta_max, c.theta_n); }

std::vector<double> gammaq_grid(const RunConfig& c) {
  if (c.gammaq_scale == "lin") return linspace(c.gammaq_min, c.gammaq_max, c.gammaq_n);
  if (c.gammaq_scale != "log") throw loopent::ValidationError("gammaq-scale must be 'lin' or 'log'");
  if (!(c.gammaq_min > 0.0)) throw loopent::ValidationError("log gamma_q grid needs gammaq-min > 0");
  std::vector<double> g = linspace(std::log10(c.gammaq_min), std::log10(c.gammaq_max), c.gammaq_n);
  for (double& x : g) x = std::pow(10.0, x);
  return g;
}

std::vector<double> gammaq_values(const RunConfig& c) {
  return c.gammaq_list.empty() ? std::vector<double>{c.gammaq} : c.gammaq_list;
}

loopent::SystemParams loop_params(const RunConfig& c, double gammaq) {
  loopent::SystemParams::Fields f;
  f.omega0 = c.omega0;
  f.eta = c.eta;
  f.theta = c.theta;
  f.gamma_q = gammaq;
  f.gamma_mech = c.gamma_mech;
  return loopent::SystemParams(f);
}

class Output {
 public:
  explicit Output(const std::string& path) {
    if (!path.empty()) {
      file_ = std::make_unique<std::ofstream>(path);
      if (!*file_) throw std::runtime_error("cannot open output file " + path);
    }
  }
  std::ostream& stream() { return file_ ? *file_ : std::cout; }

 private:
  std::unique_ptr<std::ofstream> file_;
};

void write_header(std::ostream& os, const RunConfig& c, const std::string& columns) {
  os << "# loopent " << c.command << "\n";
  os << "# config: " << to_json(c).dump() << "\n";
  os << "# seed: " << c.seed << "\n";
  os << "# units: frequencies and rates in omega0, times in 1/omega0\n";
  os << columns << "\n";
}

std::string fmt(double x) {
  if (std::isnan(x)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", x);
  return buf;
}

const char* flag(bool b) { return b ? "true" : "false"; }

void cmd_spectrum(const RunConfig& c) {
  Output out(c.out);
  auto& os = out.stream();
  write_header(os, c, "theta,omega_plus_sq,omega_minus_sq,gamma_plus_norm,gamma_minus_norm,stable");
  for (double th : theta_grid(c)) {
    const auto s = loopent::mode_spectrum(loop_params(c, c.gammaq).with_theta(th));
    os << fmt(th) << ',' << fmt(s.omega_plus_sq / (c.omega0 * c.omega0)) << ','
       << fmt(s.omega_minus_sq / (c.omega0 * c.omega0)) << ',' << fmt(s.n_plus_sq) << ','
       << fmt(s.n_minus_sq) << ',' << flag(s.stable) << '\n';
  }
}

json ellipse_json(const loopent::EllipseSummary& e) {
  return {{"semi_axes", {e.semi_axes.first, e.semi_axes.second}},
          {"orientation", e.orientation},
          {"squeezing_db", e.squeezing_db}};
}

void cmd_transient(const RunConfig& c) {
  if (c.n_points < 2 || !(c.t_max > 0.0)) throw loopent::ValidationError("transient: need t-max > 0 and n-points >= 2");
  const std::vector<double> times = linspace(0.0, c.t_max, c.n_points);
  Output out(c.out);
  auto& os = out.stream();
  write_header(os, c, "gammaq,t,nu_min,E_N");
  json ellipses = json::array();
  for (double g : gammaq_values(c)) {
    const auto p = loop_params(c, g);
    const auto s = loopent::mode_spectrum(p);
    if (!(s.omega_plus_sq > 0.0))
      throw loopent::ValidationError("transient: the (+) joint mode is unstable for these parameters");
    const auto sigma0 = loopent::transient_initial_state(p);
    for (const auto& w : loopent::witness_series(sigma0, p, times))
      os << fmt(g) << ',' << fmt(w.t) << ',' << fmt(w.nu_min) << ',' << fmt(w.E_N) << '\n';

    const auto opt = loopent::optimal_negativity(sigma0, p);
    const auto j0 = loopent::in_basis(sigma0, loopent::Basis::JointMode);
    const auto js = loopent::evolve(sigma0, p, opt.t_star);
    ellipses.push_back(
        {{"gammaq", g},
         {"t_star", opt.t_star},
         {"nu_min_star", opt.nu_min},
         {"E_N_star", opt.E_N},
         {"quarter_period_plus", kPi / (2.0 * std::sqrt(s.omega_plus_sq))},
         {"xi_minus", loopent::squeezing_angle(s, loopent::Mode::Minus)},
         {"t0", {{"plus", ellipse_json(loopent::ellipse_summary(j0.block(0, 0)))},
                 {"minus", ellipse_json(loopent::ellipse_summary(j0.block(1, 1)))}}},
         {"t_star_ellipses", {{"plus", ellipse_json(loopent::ellipse_summary(js.block(0, 0)))},
                              {"minus", ellipse_json(loopent::ellipse_summary(js.block(1, 1)))}}}});
  }
  std::string side = c.ellipse_out;
  if (side.empty() && !c.out.empty()) side = c.out + ".ellipses.json";
  if (!side.empty()) {
    Output eo(side);
    eo.stream() << json{{"config", to_json(c)}, {"ellipses", ellipses}}.dump(2) << '\n';
  }
}

std::optional<loopent::StabilityBand> band_or_empty(const loopent::SystemParams& p) {
  if (p.eta() == 0.0) return std::nullopt;
  return loopent::stability_boundary(p);
}

void cmd_negativity_map(const RunConfig& c) {
  const auto base = loop_params(c, c.gammaq);
  const auto map = loopent::negativity_map(base, theta_grid(c), gammaq_grid(c),
                                           loopent::transient_initial_state, c.threads);
  Output out(c.out);
  auto& os = out.stream();
  write_header(os, c, "theta,gammaq,E_N,nu_min,t_star,stable,band_theta_minus,band_theta_plus");
  const double nan = std::nan("");
  for (std::size_t j = 0; j < map.gammaq_grid.size(); ++j) {
    const auto band = band_or_empty(base.with_gamma_q(map.gammaq_grid[j]));
    for (std::size_t i = 0; i < map.theta_grid.size(); ++i) {
      const auto& cell = map.at(i, j);
      os << fmt(cell.theta) << ',' << fmt(cell.gamma_q) << ',' << fmt(cell.E_N) << ','
         << fmt(cell.nu_min) << ',' << fmt(cell.t_star) << ',' << flag(cell.stable) << ','
         << fmt(band ? band->theta_minus : nan) << ',' << fmt(band ? band->theta_plus : nan) << '\n';
    }
  }
}

void cmd_conditional_map(const RunConfig& c) {
  auto base = loopent::SystemParams::tapped(c.eta_c, c.eta_m, c.theta, c.gammaq, c.omega0);
  const auto map = loopent::conditional_witness_map(base, theta_grid(c), gammaq_grid(c), c.threads);
  Output out(c.out);
  auto& os = out.stream();
  write_header(os, c, "theta,gammaq,stable,nu_min,E_N");
  for (std::size_t j = 0; j < map.gammaq_grid.size(); ++j)
    for (std::size_t i = 0; i < map.theta_grid.size(); ++i) {
      const auto& cell = map.at(i, j);
      os << fmt(cell.theta) << ',' << fmt(cell.gamma_q) << ',' << flag(cell.stable) << ','
         << fmt(cell.nu_min) << ',' << fmt(cell.E_N) << '\n';
    }
}

void cmd_stability(const RunConfig& c) {
  Output out(c.out);
  auto& os = out.stream();
  write_header(os, c, "eta,gammaq,gamma_mech,unstable_band,theta_minus,theta_plus");
  const double nan = std::nan("");
  for (double g : gammaq_values(c)) {
    const auto band = loopent::stability_boundary(loop_params(c, g));
    os << fmt(c.eta) << ',' << fmt(g) << ',' << fmt(c.gamma_mech) << ',' << flag(band.has_value()) << ','
       << fmt(band ? band->theta_minus : nan) << ',' << fmt(band ? band->theta_plus : nan) << '\n';
  }
}

void cmd_verify(const RunConfig& c) {
  loopent::SystemParams::Fields f;
  f.omega0 = c.omega0;
  f.eta = c.eta;
  f.theta = c.theta;
  f.gamma_q = c.gammaq;
  f.eta_c = c.eta_c;
  f.eta_m = 0.0;
  loopent::VerifyConfig vc;
  vc.n_traj = c.n_traj;
  vc.dt = c.dt;
  vc.seed = c.seed;
  vc.threads = c.threads;
  vc.n_bootstrap = c.n_bootstrap;
  vc.grid_end = c.grid_end;
  vc.grid_step = c.grid_step;
  vc.tail = c.tail;
  const auto rep = loopent::verify_experiment(loopent::SystemParams(f), vc);
  json j = loopent::to_json(rep);
  j["config"] = to_json(c);
  Output out(c.out);
  out.stream() << j.dump(2) << '\n';
  std::fprintf(stderr, "verify: coverage %.3f, systematic 2-sigma %.4f%s\n", rep.coverage(),
               rep.ci_sys.two_sigma, rep.insufficient_ensemble ? " (insufficient ensemble)" : "");
}

void add_common(CLI::App* sub, RunConfig& c) {
  sub->add_option("--omega0", c.omega0, "Mechanical frequency (frequency unit)");
  sub->add_option("--eta", c.eta, "Loop transmittance");
  sub->add_option("--theta", c.theta, "Transmission-line phase [rad]");
  sub->add_option("--gammaq", c.gammaq, "Backaction rate in units of omega0");
  sub->add_option("--eta-c", c.eta_c, "Collection efficiency");
  sub->add_option("--eta-m", c.eta_m, "Measured fraction of the collected light");
  sub->add_option("--gamma-mech", c.gamma_mech, "Mechanical damping rate");
  sub->add_option("--seed", c.seed, "Master random seed");
  sub->add_option("--threads", c.threads, "Worker threads (0 = all cores)");
  sub->add_option("--out", c.out, "Output file (default: stdout)");
  sub->add_option("--config", c.config, "JSON file whose keys override the flags");
}

void add_grids(CLI::App* sub, RunConfig& c) {
  sub->add_option("--theta-min", c.theta_min, "Lower edge of the theta grid [rad]");
  sub->add_option("--theta-max", c.theta_max, "Upper edge of the theta grid [rad]");
  sub->add_option("--theta-n", c.theta_n, "Number of theta points");
  sub->add_option("--gammaq-min", c.gammaq_min, "Smallest gamma_q");
  sub->add_option("--gammaq-max", c.gammaq_max, "Largest gamma_q");
  sub->add_option("--gammaq-n", c.gammaq_n, "Number of gamma_q points");
  sub->add_option("--gammaq-scale", c.gammaq_scale, "lin or log");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Loop-coupled levitated-particle entanglement toolkit"};
  app.require_subcommand(1);
  RunConfig c;

  auto* spectrum = app.add_subcommand("spectrum", "Joint-mode frequencies and recoil rates versus theta");
  add_common(spectrum, c);
  spectrum->add_option("--theta-min", c.theta_min, "Lower edge of the theta grid [rad]");
  spectrum->add_option("--theta-max", c.theta_max, "Upper edge of the theta grid [rad]");
  spectrum->add_option("--theta-n", c.theta_n, "Number of theta points");

  auto* transient = app.add_subcommand("transient", "Witness time series for a list of gamma_q");
  add_common(transient, c);
  transient->add_option("--gammaq-list", c.gammaq_list, "Comma-separated gamma_q values")->delimiter(',');
  transient->add_option("--t-max", c.t_max, "End of the time grid (units of 1/omega0)");
  transient->add_option("--n-points", c.n_points, "Number of time points");
  transient->add_option("--ellipse-out", c.ellipse_out, "Ellipse JSON path (default: <out>.ellipses.json)");

  auto* negmap = app.add_subcommand("negativity-map", "Maximal transient log negativity over (theta, gamma_q)");
  add_common(negmap, c);
  add_grids(negmap, c);

  auto* condmap = app.add_subcommand("conditional-map", "Conditional steady-state witness over (theta, gamma_q)");
  add_common(condmap, c);
  add_grids(condmap, c);

  auto* stability = app.add_subcommand("stability", "Unstable theta band for each gamma_q");
  add_common(stability, c);
  stability->add_option("--gammaq-list", c.gammaq_list, "Comma-separated gamma_q values")->delimiter(',');

  auto* verify = app.add_subcommand("verify", "Simulated retrodiction certification run");
  add_common(verify, c);
  verify->add_option("--n-traj", c.n_traj, "Number of simulated trajectories");
  verify->add_option("--dt", c.dt, "Record sampling step (units of 1/omega0)");
  verify->add_option("--n-bootstrap", c.n_bootstrap, "Bootstrap resamples");
  verify->add_option("--grid-end", c.grid_end, "Last verification time (units of 1/omega0)");
  verify->add_option("--grid-step", c.grid_step, "Spacing of the verification times");
  verify->add_option("--tail", c.tail, "Record length past the grid (0 = 10 / (eta_c gamma_q))");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  try {
    c.command = app.get_subcommands().front()->get_name();
    apply_config_file(c);
    if (c.command == "spectrum") cmd_spectrum(c);
    else if (c.command == "transient") cmd_transient(c);
    else if (c.command == "negativity-map") cmd_negativity_map(c);
    else if (c.command == "conditional-map") cmd_conditional_map(c);
    else if (c.command == "stability") cmd_stability(c);
    else if (c.command == "verify") cmd_verify(c);
  } catch (const loopent::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const loopent::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
