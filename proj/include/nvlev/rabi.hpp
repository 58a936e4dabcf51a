#pragma once

// Rabi frequency versus rotation phase: geometric factor and a full
// time-dependent simulation of the 0 <-> +1 transition.

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nvlev/berry.hpp"
#include "nvlev/numeric/least_squares.hpp"

namespace nvlev {

inline constexpr double kDefaultMwTilt = 8.5 * kPi / 180.0;

struct RabiGeometry {
  double theta = 0.0;                 // NV axis vs z, rad
  double theta_prime = kDefaultMwTilt;  // microwave tilt from z in the yz-plane, rad
};

/// (cos phi sin theta, sin phi sin theta, cos theta).
inline Eigen::Vector3d nv_direction(double theta, double phi) {
  return {std::cos(phi) * std::sin(theta), std::sin(phi) * std::sin(theta), std::cos(theta)};
}

/// (0, -sin theta', cos theta').
inline Eigen::Vector3d mw_direction(double theta_prime) {
  return {0.0, -std::sin(theta_prime), std::cos(theta_prime)};
}

/// Fraction of the microwave field perpendicular to the NV axis,
/// sqrt(1 - (n_NV . n_MW)^2).
inline double rabi_factor(const RabiGeometry& g, double phi) {
  const double c = std::cos(g.theta) * std::cos(g.theta_prime) - std::sin(phi) * std::sin(g.theta) * std::sin(g.theta_prime);
  return std::sqrt(std::max(0.0, 1.0 - c * c));
}

/// Rabi frequency of the 0 <-> +-1 transition for a linearly polarized drive.
inline double rabi_frequency_analytic(double gamma, double b_mw, const RabiGeometry& g, double phi) {
  return gamma * b_mw * rabi_factor(g, phi) / std::sqrt(2.0);
}

/// Omega(phi) scaled so that Omega(pi/2) = reference.
inline std::vector<double> phase_sweep(const RabiGeometry& g, const std::vector<double>& phis, double reference) {
  const double norm = rabi_factor(g, kPi / 2.0);
  require(norm > 0.0, Errc::InvalidArgument, "phase_sweep: rabi factor vanishes at phi = pi/2");
  std::vector<double> out(phis.size());
  for (std::size_t i = 0; i < phis.size(); ++i) out[i] = reference * rabi_factor(g, phis[i]) / norm;
  return out;
}

struct PulseSequence {
  double init_duration = 1.05e-3;  // s, bookkeeping only
  double mw_start_phase = 0.0;     // rotation phase phi at the start of the pulse, rad
  double mw_duration = 0.0;        // s, longest pulse
  double readout_delay = 0.0;      // s, bookkeeping only
  double rotation_period = 0.0;    // s (0 = not rotating)

  std::vector<std::string> warnings() const {
    std::vector<std::string> w;
    if (rotation_period > 0.0 && mw_duration >= rotation_period / 10.0)
      w.emplace_back("mw_duration >= rotation_period/10: phase is not frozen during the pulse");
    return w;
  }
};

struct RabiTrace {
  std::vector<double> pulse_length;  // s
  std::vector<double> population;    // P(+1)
  double drive_frequency = 0.0;      // rad/s
};

/// Eigenvector of h_lab(t) continuously connected to |m_s, t> = R(t)|m_s>.
inline SpinState instantaneous_eigenstate(const NVConfiguration& cfg, const FieldEnvironment& env, double t, int ms) {
  Eigen::SelfAdjointEigenSolver<SpinMatrix> es(h_lab(cfg, env, t));
  const SpinState ref = eigenstates_lab(cfg, env, t)[ms];
  int best = 0;
  double w = -1.0;
  for (int k = 0; k < 3; ++k) {
    const double p = std::norm(ref.dot(es.eigenvectors().col(k)));
    if (p > w) { w = p; best = k; }
  }
  return es.eigenvectors().col(best);
}

/// P(+1) after pulses of each length in [0, seq.mw_duration] (n_samples
/// points). cfg.phi0 is replaced so that the NV azimuth at the pulse start
/// equals seq.mw_start_phase; the azimuth keeps advancing during the pulse.
/// env.mw_frequency = 0 selects the exact resonance of the longitudinal line.
inline RabiTrace simulate_rabi(NVConfiguration cfg, FieldEnvironment env, const PulseSequence& seq,
                               std::size_t n_samples, std::optional<double> decay_t2rabi = {},
                               int target_ms = 1, double step_target = 0.2) {
  cfg.validate();
  require(n_samples >= 2 && seq.mw_duration > 0.0, Errc::InvalidArgument, "simulate_rabi: need pulse samples");
  require(env.mw_amplitude > 0.0, Errc::InvalidArgument, "simulate_rabi: microwave amplitude must be positive");
  cfg.phi0 = seq.mw_start_phase;
  if (env.mw_frequency == 0.0) {
    ResonanceQuery q{target_ms, DriveComponent::longitudinal, cfg, env};
    env.mw_frequency = exact_resonance_frequency(q);
  }
  const SpinMatrix op = mw_operator(env.mw_tilt, DriveComponent::both);
  const double offset = 2.0 * cfg.zfs / 3.0;
  const DrivenLabHamiltonian h(cfg, env, op, offset);
  FieldEnvironment still = env;
  still.mw_amplitude = 0.0;
  const double bound = operator_norm_bound(DrivenLabHamiltonian(cfg, still, op, offset)(0.0)) +
                       operator_norm_bound(cplx(cfg.gamma_e * env.mw_amplitude) * op);

  RabiTrace tr;
  tr.drive_frequency = env.mw_frequency;
  SpinState psi = instantaneous_eigenstate(cfg, env, 0.0, 0);
  double t = 0.0;
  for (std::size_t k = 0; k < n_samples; ++k) {
    const double tk = seq.mw_duration * double(k) / double(n_samples - 1);
    if (tk > t) {
      psi = propagate_unitary_final(h, psi, t, tk, steps_for(bound, tk - t, step_target));
      t = tk;
    }
    double p = std::norm(instantaneous_eigenstate(cfg, env, tk, target_ms).dot(psi));
    if (decay_t2rabi) p = 0.5 + (p - 0.5) * std::exp(-tk / *decay_t2rabi);
    tr.pulse_length.push_back(tk);
    tr.population.push_back(p);
  }
  return tr;
}

struct RabiFit {
  double omega;        // rad/s
  double amplitude;    // half peak-to-peak
  double offset;
  double phase;
  double decay_time;   // s, infinity when no decay was fitted
  double residual_rms;
};

/// Fits P = offset - amplitude exp(-t/T) cos(Omega t + phase). Raises
/// OffResonance when the oscillation contrast shows detuning > Omega/2
/// (peak transfer below 0.8).
inline RabiFit fit_rabi(const RabiTrace& tr, bool with_decay = false) {
  const auto n = tr.population.size();
  require(n >= 8, Errc::InvalidArgument, "fit_rabi: need at least 8 samples");
  // Seed Omega from the first local maximum after the start.
  std::size_t kmax = 0;
  for (std::size_t k = 1; k + 1 < n; ++k)
    if (tr.population[k] >= tr.population[k - 1] && tr.population[k] > tr.population[k + 1]) { kmax = k; break; }
  if (kmax == 0) throw Error(Errc::OffResonance, "fit_rabi: no oscillation maximum in the trace");
  const double w0 = kPi / tr.pulse_length[kmax];
  const double tscale = tr.pulse_length.back();
  Eigen::VectorXd p(with_decay ? 5 : 4);
  p << w0 * tscale, 0.5, 0.5, 0.0;
  if (with_decay) p(4) = 0.1;  // rate in units of 1/tscale
  auto residual = [&](const Eigen::VectorXd& x, Eigen::VectorXd& r) {
    for (std::size_t k = 0; k < n; ++k) {
      const double s = tr.pulse_length[k] / tscale;
      const double env = with_decay ? std::exp(-std::abs(x(4)) * s) : 1.0;
      r(Eigen::Index(k)) = x(2) - x(1) * env * std::cos(x(0) * s + x(3)) - tr.population[k];
    }
  };
  const auto res = numeric::levenberg_marquardt(residual, p, Eigen::Index(n));
  RabiFit f;
  f.omega = std::abs(res.params(0)) / tscale;
  f.amplitude = std::abs(res.params(1));
  f.offset = res.params(2);
  f.phase = res.params(3);
  f.decay_time = with_decay && res.params(4) != 0.0 ? tscale / std::abs(res.params(4))
                                                    : std::numeric_limits<double>::infinity();
  f.residual_rms = std::sqrt(res.cost / double(n));
  if (!with_decay && 2.0 * f.amplitude < 0.8)
    throw Error(Errc::OffResonance, "fit_rabi: oscillation contrast implies detuning > Omega/2");
  return f;
}

}  // namespace nvlev
