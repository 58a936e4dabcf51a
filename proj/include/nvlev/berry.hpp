#pragma once

// Berry phases of rotating NV eigenstates and microwave resonance frequencies.

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "nvlev/nv_model.hpp"
#include "nvlev/numeric/parallel.hpp"

namespace nvlev {

enum class PathType { open, closed_loop };

struct BerryPhaseResult {
  double phase;  // rad
  PathType path_type;
};

inline void check_ms(int ms, bool allow_zero = true) {
  const bool ok = ms == 1 || ms == -1 || (allow_zero && ms == 0);
  require(ok, Errc::InvalidArgument, allow_zero ? "m_s must be -1, 0 or +1" : "m_s must be -1 or +1");
}

/// Open-path phase m_s omega_r t cos(theta), unreduced.
inline BerryPhaseResult berry_phase_open(int ms, double theta, double omega_r, double t) {
  check_ms(ms);
  return {ms * omega_r * t * std::cos(theta), PathType::open};
}

/// Gauge-invariant loop phase -2 pi m_s (1 - cos theta) for one counterclockwise
/// revolution. Not reduced, so theta = pi/2 gives exactly -2 pi.
inline BerryPhaseResult berry_phase_closed(int ms, double theta) {
  check_ms(ms);
  return {-kTwoPi * ms * (1.0 - std::cos(theta)), PathType::closed_loop};
}

/// Distance of an angle to the nearest multiple of 2 pi.
inline double wrap_distance(double a) {
  return std::abs(std::remainder(a, kTwoPi));
}

struct PathSample {
  double theta;
  double phi;
};

/// Discrete overlap phase -sum arg<m_k|m_{k+1}> along sampled eigenstates.
inline BerryPhaseResult berry_phase_numeric(int ms, const std::vector<PathSample>& path) {
  check_ms(ms);
  require(path.size() >= 2, Errc::InvalidArgument, "berry_phase_numeric: need at least two samples");
  double phase = 0.0;
  SpinState prev = eigenstates_at_phase(path[0].theta, path[0].phi)[ms];
  for (std::size_t k = 1; k < path.size(); ++k) {
    const SpinState cur = eigenstates_at_phase(path[k].theta, path[k].phi)[ms];
    const cplx ov = prev.dot(cur);  // <prev|cur>, dot conjugates the left operand
    if (std::abs(ov) < 0.999)
      throw Error(Errc::PathTooCoarse, "berry_phase_numeric: successive overlap below 0.999");
    phase -= std::arg(ov);
    prev = cur;
  }
  const bool closed = std::abs(path.front().theta - path.back().theta) < 1e-12 &&
                      wrap_distance(path.front().phi - path.back().phi) < 1e-12 &&
                      path.front().phi != path.back().phi;
  return {phase, closed ? PathType::closed_loop : PathType::open};
}

/// Circular path at fixed theta, n samples per revolution over the given
/// number of revolutions (end point included).
inline std::vector<PathSample> circular_path(double theta, double phi0, std::size_t samples_per_rev,
                                             double revolutions = 1.0, double direction = 1.0) {
  const auto n = static_cast<std::size_t>(std::llround(samples_per_rev * revolutions));
  std::vector<PathSample> p(n + 1);
  for (std::size_t k = 0; k <= n; ++k)
    p[k] = {theta, phi0 + direction * kTwoPi * revolutions * static_cast<double>(k) / static_cast<double>(n)};
  return p;
}

struct ResonanceQuery {
  int target_ms = 1;
  DriveComponent drive_component = DriveComponent::longitudinal;
  NVConfiguration cfg;
  FieldEnvironment env;
};

/// Adiabatic resonance including the rotation-induced shift.
/// longitudinal: D + m gB cos(theta) - m omega_r cos(theta)
/// transverse:   D + m gB cos(theta) + m omega_r (1 - cos(theta))
inline double resonance_frequency(const ResonanceQuery& q) {
  check_ms(q.target_ms, false);
  const double m = q.target_ms;
  const double c = std::cos(q.cfg.theta);
  const double base = q.cfg.zfs + m * q.cfg.gamma_e * q.env.b_static * c;
  if (q.drive_component == DriveComponent::transverse) return base + m * q.env.omega_r * (1.0 - c);
  return base - m * q.env.omega_r * c;
}

/// Rotation-induced part of resonance_frequency.
inline double resonance_shift(const ResonanceQuery& q) {
  ResonanceQuery still = q;
  still.env.omega_r = 0.0;
  return resonance_frequency(q) - resonance_frequency(still);
}

/// Transition frequency from the exact eigenvalues of the rotating-frame
/// Hamiltonian (no perturbative step). Transverse drives add the rotational
/// Doppler term m omega_r.
inline double exact_resonance_frequency(const ResonanceQuery& q) {
  check_ms(q.target_ms, false);
  const SpinMatrix h = h_rot(q.cfg, q.env).full;
  Eigen::SelfAdjointEigenSolver<SpinMatrix> es(h);
  auto level_of = [&](int ms) {
    int best = 0;
    double w = -1.0;
    for (int k = 0; k < 3; ++k) {
      const double p = std::norm(es.eigenvectors()(1 - ms, k));
      if (p > w) { w = p; best = k; }
    }
    return es.eigenvalues()(best);
  };
  double f = level_of(q.target_ms) - level_of(0);
  if (q.drive_component == DriveComponent::transverse) f += q.target_ms * q.env.omega_r;
  return f;
}

struct DynamicsOptions {
  double rabi = 0.0;             // target Rabi frequency, rad/s; 0 = derive from sweep spacing
  double step_target = 0.12;     // |H| dt per RK4 step
  double min_transfer = 0.5;
  unsigned threads = 0;
};

struct DynamicsResonance {
  double frequency = 0.0;      // rad/s
  double peak_transfer = 0.0;  // max |<m_s, tau|psi(tau)>|^2 on the grid
  double rabi = 0.0;           // rad/s used for the pi pulse
  std::vector<double> sweep;
  std::vector<double> transfer;
};

namespace detail {

inline double drive_tilt(DriveComponent c) {
  return c == DriveComponent::transverse ? kPi / 2.0 : 0.0;
}

// Strongest Fourier harmonic (n = -2..2) in phi of <m|R^dag Op R|0>; sets the
// drive amplitude needed for a given Rabi frequency.
inline double effective_coupling(const ResonanceQuery& q) {
  const SpinMatrix op = mw_operator(drive_tilt(q.drive_component), q.drive_component);
  constexpr int kSamples = 32;
  std::array<cplx, 5> harm{};
  for (int k = 0; k < kSamples; ++k) {
    const double phi = kTwoPi * k / kSamples;
    const SpinMatrix r = nv_rotation(q.cfg.theta, phi);
    const cplx m = r.col(1 - q.target_ms).dot(op * r.col(1));
    for (int n = -2; n <= 2; ++n) harm[n + 2] += m * std::polar(1.0, -n * phi) / double(kSamples);
  }
  double best = 0.0;
  for (const auto& h : harm) best = std::max(best, std::abs(h));
  return best;
}

}  // namespace detail

/// Population transferred from |0, t=0> into |m_s, tau> by a pi pulse of
/// length tau = pi/Omega at drive frequency omega_mw, integrating the full
/// lab-frame Hamiltonian plus a linearly polarized microwave (no RWA).
inline double pi_pulse_transfer(const ResonanceQuery& q, double omega_mw, double rabi,
                                double step_target = 0.12) {
  const double coupling = detail::effective_coupling(q);
  if (coupling < 1e-9)
    throw Error(Errc::NoPeakFound, "drive component has no matrix element for this transition");
  FieldEnvironment env = q.env;
  env.mw_tilt = detail::drive_tilt(q.drive_component);
  env.mw_frequency = omega_mw;
  env.mw_amplitude = rabi / (q.cfg.gamma_e * coupling);
  const double offset = 2.0 * q.cfg.zfs / 3.0;  // trace/3, a global phase only
  const SpinMatrix op = mw_operator(env.mw_tilt, q.drive_component);
  const DrivenLabHamiltonian h(q.cfg, env, op, offset);
  const double tau = kPi / rabi;
  // Entry magnitudes of h_lab do not depend on phi, so this bounds |H(t)|.
  FieldEnvironment still = env;
  still.mw_amplitude = 0.0;
  const double bound = operator_norm_bound(DrivenLabHamiltonian(q.cfg, still, op, offset)(0.0)) +
                       operator_norm_bound(cplx(q.cfg.gamma_e * env.mw_amplitude) * op);
  const std::size_t n = steps_for(bound, tau, step_target);
  const SpinState psi0 = eigenstates_lab(q.cfg, env, 0.0)[0];
  const SpinState psi = propagate_final(h, psi0, 0.0, tau, n);
  const SpinState target = eigenstates_lab(q.cfg, env, tau)[q.target_ms];
  return std::norm(target.dot(psi));
}

/// Peak of pi-pulse transfer over a user-supplied uniform sweep.
inline DynamicsResonance resonance_from_dynamics(const ResonanceQuery& q, const std::vector<double>& sweep,
                                                 const DynamicsOptions& opt = {}) {
  check_ms(q.target_ms, false);
  q.cfg.validate();
  require(sweep.size() >= 3, Errc::InvalidArgument, "resonance_from_dynamics: sweep needs >= 3 points");
  for (std::size_t i = 1; i < sweep.size(); ++i)
    require(sweep[i] > sweep[i - 1], Errc::InvalidArgument, "resonance_from_dynamics: sweep must increase");
  const double spacing = (sweep.back() - sweep.front()) / double(sweep.size() - 1);
  const double rabi = opt.rabi > 0.0 ? opt.rabi : 5.0 * spacing;
  DynamicsResonance out;
  out.rabi = rabi;
  out.sweep = sweep;
  out.transfer = numeric::parallel_map(
      sweep.size(), [&](std::size_t i) { return pi_pulse_transfer(q, sweep[i], rabi, opt.step_target); },
      opt.threads);
  const auto it = std::max_element(out.transfer.begin(), out.transfer.end());
  const auto k = static_cast<std::size_t>(it - out.transfer.begin());
  out.peak_transfer = *it;
  if (out.peak_transfer < opt.min_transfer)
    throw Error(Errc::NoPeakFound, "resonance_from_dynamics: maximum transfer below threshold");
  out.frequency = sweep[k];
  if (k > 0 && k + 1 < sweep.size()) {
    const double a = out.transfer[k - 1], b = out.transfer[k], c = out.transfer[k + 1];
    const double den = a - 2.0 * b + c;
    if (den < 0.0) out.frequency += 0.5 * (sweep[k + 1] - sweep[k - 1]) * 0.5 * (a - c) / den;
  }
  return out;
}

inline std::vector<double> uniform_grid(double lo, double hi, std::size_t n) {
  std::vector<double> g(n);
  for (std::size_t i = 0; i < n; ++i) g[i] = lo + (hi - lo) * double(i) / double(n - 1);
  return g;
}

struct LocateOptions {
  double final_rabi = 0.0;  // rad/s; 0 = max(|omega_r|/16, 2 pi * 50 kHz)
  double step_target = 0.12;
  unsigned threads = 0;
};

/// Coarse-to-fine search: each level narrows the sweep to +-3 Rabi widths
/// around the previous peak and lowers the Rabi frequency 4x.
inline DynamicsResonance locate_resonance_dynamics(const ResonanceQuery& q, const LocateOptions& opt = {}) {
  const double predicted = resonance_frequency(q);
  const double exact = exact_resonance_frequency(q);
  const double wr = std::abs(q.env.omega_r);
  const double final_rabi = opt.final_rabi > 0.0 ? opt.final_rabi : std::max(wr / 16.0, kTwoPi * 50e3);
  double rabi = std::max(final_rabi, wr > 0.0 ? wr : final_rabi * 16.0);
  DynamicsOptions dopt;
  dopt.step_target = opt.step_target;
  dopt.threads = opt.threads;

  const double lo = std::min(predicted, exact) - 3.0 * rabi;
  const double hi = std::max(predicted, exact) + 3.0 * rabi;
  auto n0 = static_cast<std::size_t>(std::ceil((hi - lo) / (rabi / 5.0))) + 1;
  dopt.rabi = rabi;
  DynamicsResonance r = resonance_from_dynamics(q, uniform_grid(lo, hi, n0), dopt);
  while (rabi > final_rabi * 1.0000001) {
    rabi = std::max(rabi / 4.0, final_rabi);
    dopt.rabi = rabi;
    r = resonance_from_dynamics(q, uniform_grid(r.frequency - 3.0 * rabi, r.frequency + 3.0 * rabi, 31), dopt);
  }
  return r;
}

}  // namespace nvlev
