#pragma once

#include "loopent/errors.hpp"
#include "loopent/linalg.hpp"

#include <cmath>
#include <sstream>
#include <string>

namespace loopent {

/// Physical and loop parameters in units where the bare mechanical frequency
/// omega0 sets the frequency scale (time in 1/omega0).
///
/// Validation happens once, on construction. When the measurement tap is
/// active (eta_m > 0) the loop transmittance must equal eta_c * (1 - eta_m).
class SystemParams {
 public:
  struct Fields {
    double omega0 = 1.0;      // mechanical frequency
    double gamma_q = 0.0;     // quantum backaction rate
    double eta = 0.0;         // loop power transmittance, [0, 1)
    double theta = 0.0;       // transmission-line phase, [0, 2pi]
    double eta_c = 1.0;       // collection efficiency
    double eta_m = 0.0;       // measured fraction (0 = tap inactive)
    double gamma_mech = 0.0;  // mechanical damping, stability criterion only
  };

  static constexpr double kTapTolerance = 1e-12;

  explicit SystemParams(const Fields& f) : f_(f) { validate(f_); }

  /// Closed loop without a measurement tap.
  static SystemParams loop(double eta, double theta, double gamma_q, double omega0 = 1.0) {
    Fields f;
    f.eta = eta;
    f.theta = theta;
    f.gamma_q = gamma_q;
    f.omega0 = omega0;
    return SystemParams(f);
  }

  /// Loop with a pick-off tap: a fraction eta_m of the collected light is measured,
  /// eta = eta_c (1 - eta_m) keeps circulating.
  static SystemParams tapped(double eta_c, double eta_m, double theta, double gamma_q,
                             double omega0 = 1.0) {
    Fields f;
    f.eta_c = eta_c;
    f.eta_m = eta_m;
    f.eta = eta_c * (1.0 - eta_m);
    f.theta = theta;
    f.gamma_q = gamma_q;
    f.omega0 = omega0;
    return SystemParams(f);
  }

  double omega0() const { return f_.omega0; }
  double gamma_q() const { return f_.gamma_q; }
  double eta() const { return f_.eta; }
  double theta() const { return f_.theta; }
  double eta_c() const { return f_.eta_c; }
  double eta_m() const { return f_.eta_m; }
  double gamma_mech() const { return f_.gamma_mech; }
  const Fields& fields() const { return f_; }

  SystemParams with_theta(double theta) const {
    Fields f = f_;
    f.theta = theta;
    return SystemParams(f);
  }
  SystemParams with_gamma_q(double gamma_q) const {
    Fields f = f_;
    f.gamma_q = gamma_q;
    return SystemParams(f);
  }
  SystemParams with_omega0(double omega0) const {
    Fields f = f_;
    f.omega0 = omega0;
    return SystemParams(f);
  }
  SystemParams with_eta_c(double eta_c) const {
    Fields f = f_;
    f.eta_c = eta_c;
    if (f.eta_m > 0.0) f.eta = eta_c * (1.0 - f.eta_m);
    return SystemParams(f);
  }
  SystemParams with_gamma_mech(double gamma_mech) const {
    Fields f = f_;
    f.gamma_mech = gamma_mech;
    return SystemParams(f);
  }

 private:
  static void require(bool ok, const std::string& msg) {
    if (!ok) throw ValidationError("SystemParams: " + msg);
  }

  static void validate(const Fields& f) {
    auto finite = [](double x) { return std::isfinite(x); };
    require(finite(f.omega0) && f.omega0 > 0.0, "omega0 must be positive");
    require(finite(f.gamma_q) && f.gamma_q >= 0.0, "gamma_q must be non-negative");
    require(finite(f.eta) && f.eta >= 0.0, "eta must be non-negative");
    require(f.eta < 1.0, "eta must be < 1 (loop gain diverges at eta = 1)");
    require(finite(f.theta) && f.theta >= 0.0 && f.theta <= 2.0 * kPi,
            "theta must lie in [0, 2pi]");
    require(finite(f.eta_c) && f.eta_c >= 0.0 && f.eta_c <= 1.0, "eta_c must lie in [0, 1]");
    require(finite(f.eta_m) && f.eta_m >= 0.0 && f.eta_m <= 1.0, "eta_m must lie in [0, 1]");
    require(finite(f.gamma_mech) && f.gamma_mech >= 0.0, "gamma_mech must be non-negative");
    if (f.eta_m > 0.0) {
      const double expected = f.eta_c * (1.0 - f.eta_m);
      if (std::abs(f.eta - expected) > kTapTolerance) {
        std::ostringstream os;
        os << "eta = " << f.eta << " inconsistent with eta_c (1 - eta_m) = " << expected;
        require(false, os.str());
      }
    }
  }

  Fields f_;
};

}  // namespace loopent
