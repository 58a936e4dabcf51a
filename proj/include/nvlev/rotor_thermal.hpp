#pragma once

// Electric-dipole rotor in a rotating in-plane field with rarefied-gas drag,
// and the steady-state internal temperature of a laser-heated particle.

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/tools/roots.hpp>

#include "nvlev/constants.hpp"
#include "nvlev/numeric/least_squares.hpp"
#include "nvlev/trap.hpp"

namespace nvlev {

struct GasEnvironment {
  double pressure = 0.0;       // Pa
  double T0 = 298.0;           // K
  double mean_speed = 0.0;     // m/s; 0 = sqrt(8 k T0 / (pi m_gas))
  double gamma_prime = 1.4;    // specific heat ratio
  double kappa = 1.0;          // thermal accommodation
  double eta_prime = 1.0;      // momentum accommodation
  double molecular_mass = kAirMolecularMass;  // kg

  void validate() const {
    require(pressure >= 0.0, Errc::InvalidArgument, "pressure must be non-negative");
    require(T0 > 0.0, Errc::InvalidArgument, "T0 must be positive");
    require(mean_speed >= 0.0 && molecular_mass > 0.0, Errc::InvalidArgument, "bad gas kinetic parameters");
    require(gamma_prime > 1.0, Errc::InvalidArgument, "gamma' must exceed 1");
  }

  double speed() const {
    return mean_speed > 0.0 ? mean_speed : std::sqrt(8.0 * kBoltzmann * T0 / (kPi * molecular_mass));
  }
};

// ------------------------------------------------------------------- rotor

struct DipoleRotor {
  double dipole;   // |p|, C m
  double inertia;  // kg m^2

  static DipoleRotor sphere(double dipole, const ChargedParticle& p) {
    return {dipole, 0.4 * p.mass * p.radius * p.radius};
  }

  void validate() const {
    require(dipole >= 0.0, Errc::InvalidArgument, "dipole magnitude must be non-negative");
    require(inertia > 0.0, Errc::InvalidArgument, "moment of inertia must be positive");
  }
};

struct RotatingField {
  double e_xy = 0.0;         // V/m
  double omega_drive = 0.0;  // rad/s, magnitude
  int direction = 1;         // +1 counterclockwise, -1 clockwise (seen from +z)
};

/// gamma_d = 40 eta' p R^2 / (3 m v).
inline double gas_damping_rate(const ChargedParticle& particle, const GasEnvironment& gas) {
  gas.validate();
  return 40.0 * gas.eta_prime * gas.pressure * particle.radius * particle.radius /
         (3.0 * particle.mass * gas.speed());
}

/// z torque |p| E_xy sin(beta), beta = field angle - dipole angle.
inline double electric_torque(const DipoleRotor& rotor, const RotatingField& field, double beta) {
  return rotor.dipole * field.e_xy * std::sin(beta);
}

/// Terminal rotation rate at beta = pi/2.
inline double max_rotation(const DipoleRotor& rotor, const RotatingField& field, const ChargedParticle& particle,
                           const GasEnvironment& gas) {
  const double gd = gas_damping_rate(particle, gas);
  if (gd == 0.0) throw Error(Errc::ZeroDamping, "max_rotation: no gas damping, rotation rate unbounded");
  return rotor.dipole * field.e_xy / (rotor.inertia * gd);
}

/// Field needed for a given terminal rate (inverse of max_rotation).
inline double field_for_max_rotation(double omega_max, const DipoleRotor& rotor, const ChargedParticle& particle,
                                     const GasEnvironment& gas) {
  require(rotor.dipole > 0.0, Errc::InvalidArgument, "dipole must be positive");
  return omega_max * rotor.inertia * gas_damping_rate(particle, gas) / rotor.dipole;
}

struct RotorSample {
  double t;
  double angle;  // rad, dipole azimuth
  double omega;  // rad/s
};

struct RotorOptions {
  double ramp_duration = 0.0;  // drive rate ramps linearly from 0 over this time
  double omega_initial = 0.0;  // rad/s
  std::size_t record_every = 1;
};

/// I domega/dt = |p| E sin(alpha_E - alpha) - I gamma_d omega, RK4.
/// The field angle is direction * integral of the (possibly ramped) drive rate.
inline std::vector<RotorSample> rotor_trajectory(const DipoleRotor& rotor, const RotatingField& field,
                                                 double gamma_d, double duration, double dt,
                                                 const RotorOptions& opt = {}) {
  rotor.validate();
  require(dt > 0.0 && duration > 0.0, Errc::InvalidArgument, "rotor_trajectory: dt and duration must be positive");
  require(gamma_d >= 0.0, Errc::InvalidArgument, "rotor_trajectory: damping must be non-negative");
  if (dt * field.omega_drive >= 0.1) throw Error(Errc::StepTooLarge, "rotor_trajectory: dt * omega_drive >= 0.1 rad");
  const double s = field.direction >= 0 ? 1.0 : -1.0;
  const double tr = opt.ramp_duration;
  auto field_angle = [&](double t) {
    if (tr > 0.0 && t < tr) return s * field.omega_drive * t * t / (2.0 * tr);
    return s * field.omega_drive * (t - 0.5 * tr);
  };
  const double k = rotor.dipole * field.e_xy / rotor.inertia;
  auto accel = [&](double t, double a, double w) { return k * std::sin(field_angle(t) - a) - gamma_d * w; };

  const auto n = static_cast<std::size_t>(std::ceil(duration / dt));
  const std::size_t every = std::max<std::size_t>(1, opt.record_every);
  std::vector<RotorSample> out;
  out.reserve(n / every + 2);
  double a = 0.0, w = s * std::abs(opt.omega_initial);
  out.push_back({0.0, a, w});
  for (std::size_t i = 0; i < n; ++i) {
    const double t = double(i) * dt;
    const double k1a = w, k1w = accel(t, a, w);
    const double k2a = w + 0.5 * dt * k1w, k2w = accel(t + 0.5 * dt, a + 0.5 * dt * k1a, k2a);
    const double k3a = w + 0.5 * dt * k2w, k3w = accel(t + 0.5 * dt, a + 0.5 * dt * k2a, k3a);
    const double k4a = w + dt * k3w, k4w = accel(t + dt, a + dt * k3a, k4a);
    a += dt / 6.0 * (k1a + 2.0 * k2a + 2.0 * k3a + k4a);
    w += dt / 6.0 * (k1w + 2.0 * k2w + 2.0 * k3w + k4w);
    if ((i + 1) % every == 0 || i + 1 == n) out.push_back({double(i + 1) * dt, a, w});
  }
  return out;
}

struct LockAnalysis {
  bool locked;
  double mean_omega;  // rad/s, signed, over the analysis window
  double beta;        // rad, field angle - dipole angle at the end (wrapped to (-pi, pi])
};

/// Mean rate over the last `window` fraction of the record; locked when it
/// matches the drive within rel_tol.
inline LockAnalysis analyze_lock(const std::vector<RotorSample>& traj, const RotatingField& field,
                                 double ramp_duration = 0.0, double window = 0.25, double rel_tol = 1e-3) {
  require(traj.size() >= 4, Errc::InvalidArgument, "analyze_lock: trajectory too short");
  const auto& last = traj.back();
  std::size_t i0 = traj.size() - 1;
  while (i0 > 0 && traj[i0].t > last.t * (1.0 - window)) --i0;
  const double mean = (last.angle - traj[i0].angle) / (last.t - traj[i0].t);
  const double s = field.direction >= 0 ? 1.0 : -1.0;
  const double drive = s * field.omega_drive;
  const double field_angle = drive * (last.t - 0.5 * ramp_duration);
  const double beta = s * std::remainder(field_angle - last.angle, kTwoPi);
  return {std::abs(mean - drive) <= rel_tol * field.omega_drive, mean, beta};
}

/// Lock condition of the steady state: |p| E >= I gamma_d omega_drive.
inline double lock_ratio(const DipoleRotor& rotor, const RotatingField& field, double gamma_d) {
  return rotor.inertia * gamma_d * field.omega_drive / (rotor.dipole * field.e_xy);
}

// ----------------------------------------------------------------- thermal

struct AbsorptionLine {
  std::string tag;
  double intensity;   // W/m^2
  double absorption;  // 1/m
};

struct OpticalHeating {
  std::vector<AbsorptionLine> lines;
  double volume;  // m^3

  double power() const {
    double a = 0.0;
    for (const auto& l : lines) {
      require(l.intensity >= 0.0 && l.absorption >= 0.0, Errc::InvalidArgument,
              "intensities and absorptions must be non-negative");
      a += l.absorption * l.intensity * volume;
    }
    return a;
  }
};

/// 72 zeta(5) k_B^5 / (pi^2 c^3 hbar^4), W / (K^5 m^3).
inline double blackbody_unit_coefficient() {
  const double kb5 = std::pow(kBoltzmann, 5);
  return 72.0 * kZeta5 * kb5 / (kPi * kPi * std::pow(kSpeedOfLight, 3) * std::pow(kHbar, 4));
}

struct BlackBodyModel {
  double volume;   // m^3
  double im_eps;   // Im((eps - 1)/(eps + 2))

  double coefficient() const { return blackbody_unit_coefficient() * volume * im_eps; }
};

/// Gas conduction coefficient kappa pi R^2 v / (2 T0) (g'+1)/(g'-1), m^3/(s K).
inline double gas_cooling_coefficient(const GasEnvironment& gas, double radius) {
  gas.validate();
  return gas.kappa * kPi * radius * radius * gas.speed() / (2.0 * gas.T0) * (gas.gamma_prime + 1.0) /
         (gas.gamma_prime - 1.0);
}

struct ThermalCoefficients {
  double a_heat;  // W
  double a_gas;   // m^3/(s K)
  double a_bb;    // W/K^5
};

inline double thermal_cooling(const ThermalCoefficients& c, double pressure, double T0, double T) {
  return c.a_gas * pressure * (T - T0) + c.a_bb * (std::pow(T, 5) - std::pow(T0, 5));
}

inline constexpr double kThermalTmax = 5000.0;

/// Root of A_a = A_gas p (T - T0) + A_bb (T^5 - T0^5) on [T0, 5000 K].
inline double thermal_balance_solve(const ThermalCoefficients& c, double pressure, double T0) {
  require(c.a_heat >= 0.0 && c.a_gas >= 0.0 && c.a_bb >= 0.0 && pressure >= 0.0, Errc::InvalidArgument,
          "thermal_balance_solve: coefficients must be non-negative");
  if (c.a_heat == 0.0) return T0;
  const double cap = thermal_cooling(c, pressure, T0, kThermalTmax);
  if (cap < c.a_heat) throw Error(Errc::NoBracket, "thermal_balance_solve: heating exceeds cooling up to 5000 K");
  auto f = [&](double T) { return thermal_cooling(c, pressure, T0, T) - c.a_heat; };
  // Both terms are increasing in T; bisection-safe TOMS 748 to full precision.
  boost::uintmax_t it = 300;
  auto r = boost::math::tools::toms748_solve(f, T0, kThermalTmax, f(T0), cap - c.a_heat,
                                             boost::math::tools::eps_tolerance<double>(52), it);
  const double T = std::abs(f(r.first)) < std::abs(f(r.second)) ? r.first : r.second;
  return T;
}

inline ThermalCoefficients thermal_coefficients(const OpticalHeating& heating, const GasEnvironment& gas,
                                                double radius, const BlackBodyModel& bb,
                                                std::optional<double> a_gas_override = {}) {
  return {heating.power(), a_gas_override ? *a_gas_override : gas_cooling_coefficient(gas, radius),
          bb.coefficient()};
}

/// Im((eps-1)/(eps+2)) that puts the steady state at T_target.
inline double calibrate_im_eps(double T_target, double a_heat, double a_gas, double pressure, double T0,
                               double volume) {
  require(T_target > T0, Errc::InvalidArgument, "calibrate_im_eps: target must exceed T0");
  const double rad = a_heat - a_gas * pressure * (T_target - T0);
  if (rad <= 0.0) throw Error(Errc::NoSolution, "calibrate_im_eps: gas cooling alone exceeds heating");
  return rad / (blackbody_unit_coefficient() * volume * (std::pow(T_target, 5) - std::pow(T0, 5)));
}

struct ThermalObservation {
  double i532;      // W/m^2
  double i1064;     // W/m^2
  double pressure;  // Pa
  double T;         // K
};

struct AbsorptionFitResult {
  double eta_532 = 0.0;   // 1/m
  double eta_1064 = 0.0;  // 1/m
  bool identifiable_532 = false;
  bool identifiable_1064 = false;
  double sigma_532 = 0.0, sigma_1064 = 0.0;
  double rms_T = 0.0;  // K
};

/// Least-squares absorption coefficients from (I_532, I_1064, p, T) points,
/// minimizing sum (T_model - T_measured)^2. A linear solve on the heating
/// power seeds the nonlinear refinement.
inline AbsorptionFitResult absorption_fit(const std::vector<ThermalObservation>& obs, double a_gas, double a_bb,
                                          double T0, double volume) {
  require(obs.size() >= 2, Errc::InvalidArgument, "absorption_fit: need at least two observations");
  const auto n = Eigen::Index(obs.size());
  Eigen::MatrixXd X(n, 2);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& o = obs[std::size_t(i)];
    X(i, 0) = o.i532 * volume;
    X(i, 1) = o.i1064 * volume;
    y(i) = a_gas * o.pressure * (o.T - T0) + a_bb * (std::pow(o.T, 5) - std::pow(T0, 5));
  }
  AbsorptionFitResult out;
  out.identifiable_532 = X.col(0).cwiseAbs().maxCoeff() > 0.0;
  out.identifiable_1064 = X.col(1).cwiseAbs().maxCoeff() > 0.0;
  std::vector<int> cols;
  if (out.identifiable_532) cols.push_back(0);
  if (out.identifiable_1064) cols.push_back(1);
  if (cols.empty()) throw Error(Errc::SingularDesign, "absorption_fit: all intensities are zero");
  Eigen::MatrixXd A(n, Eigen::Index(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) A.col(Eigen::Index(j)) = X.col(cols[j]);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A);
  const auto sv = svd.singularValues();
  if (sv(sv.size() - 1) <= 1e-10 * sv(0))
    throw Error(Errc::SingularDesign, "absorption_fit: intensity pairs are collinear");
  Eigen::VectorXd eta0 = A.colPivHouseholderQr().solve(y);

  // Refine on temperature residuals; parameters scaled by the linear estimate.
  Eigen::VectorXd scale = eta0.cwiseAbs().cwiseMax(1e-300);
  auto residual = [&](const Eigen::VectorXd& x, Eigen::VectorXd& r) {
    for (Eigen::Index i = 0; i < n; ++i) {
      double heat = 0.0;
      for (Eigen::Index j = 0; j < x.size(); ++j) heat += std::max(0.0, x(j) * scale(j)) * A(i, j);
      const ThermalCoefficients c{heat, a_gas, a_bb};
      r(i) = thermal_balance_solve(c, obs[std::size_t(i)].pressure, T0) - obs[std::size_t(i)].T;
    }
  };
  Eigen::VectorXd x0 = eta0.cwiseQuotient(scale);
  numeric::LMResult res;
  if (n > Eigen::Index(cols.size())) {
    res = numeric::levenberg_marquardt(residual, x0, n);
  } else {
    res.params = x0;
    res.covariance = Eigen::MatrixXd::Zero(x0.size(), x0.size());
    Eigen::VectorXd r(n);
    residual(x0, r);
    res.cost = r.squaredNorm();
  }
  for (std::size_t j = 0; j < cols.size(); ++j) {
    const double v = res.params(Eigen::Index(j)) * scale(Eigen::Index(j));
    const double sd = std::sqrt(std::max(0.0, res.covariance(Eigen::Index(j), Eigen::Index(j)))) * scale(Eigen::Index(j));
    if (cols[j] == 0) { out.eta_532 = v; out.sigma_532 = sd; }
    else { out.eta_1064 = v; out.sigma_1064 = sd; }
  }
  out.rms_T = std::sqrt(res.cost / double(n));
  return out;
}

}  // namespace nvlev
