#pragma once

// Centre-of-mass Langevin dynamics of a trapped particle, Welch PSDs,
// thermal-oscillator fits and velocity-feedback cooling.
//
// PSD convention: one-sided in Hz, so that integral_0^inf S_x(f) df = <x^2>.
// A thermal oscillator then reads
//   S_x(f) = (4 k_B T gamma / m) / ((w0^2 - w^2)^2 + gamma^2 w^2),  w = 2 pi f.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <deque>
#include <string>
#include <mutex>
#include <optional>
#include <random>
#include <vector>

#include <fftw3.h>

#include "nvlev/constants.hpp"
#include "nvlev/numeric/least_squares.hpp"
#include "nvlev/numeric/parallel.hpp"
#include "nvlev/rotor_thermal.hpp"

namespace nvlev {

enum class ModeAxis { x = 0, y = 1, z = 2 };

struct HarmonicMode {
  ModeAxis axis = ModeAxis::x;
  double omega0 = 0.0;  // rad/s
  double mass = 0.0;    // kg
  double gamma = 0.0;   // 1/s, gas damping
  double bath_T = 0.0;  // K

  void validate() const {
    require(omega0 > 0.0, Errc::InvalidArgument, "mode omega0 must be positive");
    require(mass > 0.0, Errc::InvalidArgument, "mode mass must be positive");
    require(gamma >= 0.0 && bath_T >= 0.0, Errc::InvalidArgument, "mode damping and bath T must be >= 0");
  }
};

enum class FeedbackMode {
  ideal_velocity,  // force -m g v using the true velocity
  delayed_position // bandpass(x + noise), delayed by a quarter period, as a velocity estimate
};

struct FeedbackConfig {
  std::array<double, 3> gain{0.0, 0.0, 0.0};  // 1/s per axis
  double phase_delay = kPi / 2.0;             // rad at omega0
  std::optional<std::pair<double, double>> bandpass;  // rad/s (low, high); default omega0 * (0.5, 2)
  FeedbackMode mode = FeedbackMode::ideal_velocity;
  double measurement_noise = 0.0;  // one-sided displacement noise density, m^2/Hz

  void validate() const {
    for (double g : gain) require(g >= 0.0, Errc::InvalidArgument, "feedback gain must be >= 0");
  }
};

struct TimeSeries {
  double dt = 0.0;
  std::vector<double> samples;
  std::uint64_t seed = 0;
  std::vector<double> velocity;  // same length as samples when recorded
};

struct SimulationOptions {
  std::size_t record_every = 1;
  bool record_velocity = false;
  std::uint64_t stream = 0;  // extra stream index, e.g. for independent repeats
};

namespace detail {

// Per-axis generator seeded from (seed, stream, axis).
inline std::mt19937_64 axis_rng(std::uint64_t seed, std::uint64_t stream, int axis) {
  std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32), std::uint32_t(stream),
                    std::uint32_t(stream >> 32), std::uint32_t(axis)};
  return std::mt19937_64(seq);
}

// RBJ band-pass biquad (0 dB peak gain) with the centre at sqrt(lo*hi).
class Biquad {
 public:
  Biquad(double lo, double hi, double dt) {
    const double w0 = std::sqrt(lo * hi);
    const double q = w0 / (hi - lo);
    const double wd = w0 * dt;
    const double alpha = std::sin(wd) / (2.0 * q);
    const double a0 = 1.0 + alpha;
    b0_ = alpha / a0;
    b2_ = -alpha / a0;
    a1_ = -2.0 * std::cos(wd) / a0;
    a2_ = (1.0 - alpha) / a0;
  }
  double operator()(double x) {
    const double y = b0_ * x + b2_ * x2_ - a1_ * y1_ - a2_ * y2_;
    x2_ = x1_;
    x1_ = x;
    y2_ = y1_;
    y1_ = y;
    return y;
  }

 private:
  double b0_, b2_, a1_, a2_;
  double x1_ = 0, x2_ = 0, y1_ = 0, y2_ = 0;
};

}  // namespace detail

/// BAOAB integration of x'' = -w0^2 x - gamma x' + F_th/m + F_fb/m for one
/// mode. The O substep is the exact Ornstein-Uhlenbeck update; ideal velocity
/// feedback enters there as extra friction without extra noise.
inline TimeSeries simulate_mode(const HarmonicMode& mode, const FeedbackConfig* fb, double duration, double dt,
                                std::uint64_t seed, const SimulationOptions& opt = {},
                                std::optional<std::pair<double, double>> initial = {}) {
  mode.validate();
  require(dt > 0.0 && duration > 0.0, Errc::InvalidArgument, "simulate_com: dt and duration must be positive");
  if (dt > 0.05 * kTwoPi / mode.omega0) throw Error(Errc::StepTooLarge, "simulate_com: dt > 0.05 * 2 pi / omega0");
  const int ax = int(mode.axis);
  const double g = fb ? fb->gain[std::size_t(ax)] : 0.0;
  const bool ideal = fb && fb->mode == FeedbackMode::ideal_velocity;
  const bool delayed = fb && fb->mode == FeedbackMode::delayed_position && g > 0.0;

  const double w2 = mode.omega0 * mode.omega0;
  const double friction = mode.gamma + (ideal ? g : 0.0);
  const double c1 = std::exp(-friction * dt);
  const double v_var = friction > 0.0 ? kBoltzmann * mode.bath_T / mode.mass * mode.gamma / friction : 0.0;
  const double c2 = std::sqrt(std::max(0.0, v_var * (1.0 - c1 * c1)));

  auto rng = detail::axis_rng(seed, opt.stream, ax);
  std::normal_distribution<double> normal(0.0, 1.0);

  // Delayed-position estimator state.
  std::optional<detail::Biquad> filt;
  std::deque<double> delay_line;
  std::size_t delay_samples = 0;
  double meas_sigma = 0.0;
  if (delayed) {
    auto band = fb->bandpass.value_or(std::make_pair(0.5 * mode.omega0, 2.0 * mode.omega0));
    filt.emplace(band.first, band.second, dt);
    delay_samples = std::size_t(std::llround(fb->phase_delay / mode.omega0 / dt));
    meas_sigma = std::sqrt(fb->measurement_noise / (2.0 * dt));
  }
  double fb_accel = 0.0;

  const auto n = static_cast<std::size_t>(std::llround(duration / dt));
  const std::size_t every = std::max<std::size_t>(1, opt.record_every);
  TimeSeries ts;
  ts.dt = dt * double(every);
  ts.seed = seed;
  ts.samples.reserve(n / every + 1);

  double x = 0.0, v = 0.0;
  if (initial) {
    x = initial->first;
    v = initial->second;
  } else if (mode.bath_T > 0.0) {
    // Start from the (feedback-free) equilibrium distribution.
    x = normal(rng) * std::sqrt(kBoltzmann * mode.bath_T / (mode.mass * w2));
    v = normal(rng) * std::sqrt(kBoltzmann * mode.bath_T / mode.mass);
  }
  for (std::size_t i = 0; i < n; ++i) {
    v += 0.5 * dt * (-w2 * x + fb_accel);
    x += 0.5 * dt * v;
    v = c1 * v + (c2 > 0.0 ? c2 * normal(rng) : 0.0);
    x += 0.5 * dt * v;
    if (delayed) {
      const double meas = x + (meas_sigma > 0.0 ? meas_sigma * normal(rng) : 0.0);
      delay_line.push_back((*filt)(meas));
      double xd = 0.0;
      if (delay_line.size() > delay_samples) {
        xd = delay_line.front();
        delay_line.pop_front();
      }
      fb_accel = -g * (-mode.omega0 * xd);  // v_est = -w0 x(t - pi/(2 w0))
    }
    v += 0.5 * dt * (-w2 * x + fb_accel);
    if ((i + 1) % every == 0) {
      ts.samples.push_back(x);
      if (opt.record_velocity) ts.velocity.push_back(v);
    }
  }
  return ts;
}

/// One TimeSeries per mode; axes use independent RNG streams so the result
/// does not depend on evaluation order.
inline std::vector<TimeSeries> simulate_com(const std::vector<HarmonicMode>& modes, const FeedbackConfig* fb,
                                            double duration, double dt, std::uint64_t seed,
                                            const SimulationOptions& opt = {}) {
  if (fb) fb->validate();
  return numeric::parallel_map(modes.size(),
                               [&](std::size_t i) { return simulate_mode(modes[i], fb, duration, dt, seed, opt); });
}

/// Independent records of one mode (streams 0..repeats-1), for ensemble
/// statistics that a single record cannot resolve.
inline std::vector<TimeSeries> simulate_repeats(const HarmonicMode& mode, const FeedbackConfig* fb, double duration,
                                                double dt, std::uint64_t seed, std::size_t repeats,
                                                SimulationOptions opt = {}) {
  if (fb) fb->validate();
  return numeric::parallel_map(repeats, [&](std::size_t r) {
    SimulationOptions o = opt;
    o.stream = opt.stream + r;
    return simulate_mode(mode, fb, duration, dt, seed, o);
  });
}

inline double variance(const std::vector<double>& x) {
  require(x.size() >= 2, Errc::InvalidArgument, "variance: need >= 2 samples");
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= double(x.size());
  double s = 0.0;
  for (double v : x) s += (v - mean) * (v - mean);
  return s / double(x.size() - 1);
}

/// Equipartition temperature m w0^2 <x^2> / k_B.
inline double temperature_from_variance(double var_x, double mass, double omega0) {
  return mass * omega0 * omega0 * var_x / kBoltzmann;
}

// ---------------------------------------------------------------------- PSD

struct PSDEstimate {
  std::vector<double> freq;   // Hz
  std::vector<double> value;  // m^2/Hz, one-sided
  std::size_t segments = 0;
  std::string window = "hann";
};

namespace detail {
inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace detail

/// Welch estimate: Hann window, 50 % overlap, per-segment mean removal,
/// one-sided density. Needs at least 4 segments.
inline PSDEstimate psd(const TimeSeries& series, std::size_t segment_length) {
  const auto n = series.samples.size();
  require(segment_length >= 8 && series.dt > 0.0, Errc::InvalidArgument, "psd: segment too short or dt invalid");
  const std::size_t hop = segment_length / 2;
  const std::size_t nseg = n >= segment_length ? (n - segment_length) / hop + 1 : 0;
  if (nseg < 4) throw Error(Errc::TooFewSegments, "psd: fewer than 4 Welch segments");

  const std::size_t L = segment_length, nf = L / 2 + 1;
  std::vector<double> w(L);
  double wss = 0.0;
  for (std::size_t k = 0; k < L; ++k) {
    w[k] = 0.5 - 0.5 * std::cos(kTwoPi * double(k) / double(L));  // periodic Hann
    wss += w[k] * w[k];
  }
  std::vector<double> buf(L);
  std::vector<std::complex<double>> spec(nf);
  fftw_plan plan;
  {
    std::lock_guard lk(detail::fftw_planner_mutex());
    plan = fftw_plan_dft_r2c_1d(int(L), buf.data(), reinterpret_cast<fftw_complex*>(spec.data()), FFTW_ESTIMATE);
  }
  PSDEstimate out;
  out.segments = nseg;
  out.value.assign(nf, 0.0);
  for (std::size_t s = 0; s < nseg; ++s) {
    const double* x = series.samples.data() + s * hop;
    double mean = 0.0;
    for (std::size_t k = 0; k < L; ++k) mean += x[k];
    mean /= double(L);
    for (std::size_t k = 0; k < L; ++k) buf[k] = (x[k] - mean) * w[k];
    fftw_execute(plan);
    for (std::size_t k = 0; k < nf; ++k) out.value[k] += std::norm(spec[k]);
  }
  {
    std::lock_guard lk(detail::fftw_planner_mutex());
    fftw_destroy_plan(plan);
  }
  const double fs = 1.0 / series.dt;
  for (std::size_t k = 0; k < nf; ++k) {
    const bool edge = k == 0 || (L % 2 == 0 && k == nf - 1);
    out.value[k] *= (edge ? 1.0 : 2.0) / (fs * wss * double(nseg));
  }
  out.freq.resize(nf);
  for (std::size_t k = 0; k < nf; ++k) out.freq[k] = double(k) * fs / double(L);
  return out;
}

/// Element-wise mean of PSDs sharing one frequency grid.
inline PSDEstimate average_psd(const std::vector<PSDEstimate>& parts) {
  require(!parts.empty(), Errc::InvalidArgument, "average_psd: nothing to average");
  PSDEstimate out = parts.front();
  for (std::size_t i = 1; i < parts.size(); ++i) {
    require(parts[i].value.size() == out.value.size(), Errc::InvalidArgument, "average_psd: grid mismatch");
    for (std::size_t k = 0; k < out.value.size(); ++k) out.value[k] += parts[i].value[k];
    out.segments += parts[i].segments;
  }
  for (double& v : out.value) v /= double(parts.size());
  return out;
}

/// Trapezoidal integral of the PSD (equals the variance by construction).
inline double integrate_psd(const PSDEstimate& p) {
  double s = 0.0;
  for (std::size_t k = 1; k < p.freq.size(); ++k) s += 0.5 * (p.value[k] + p.value[k - 1]) * (p.freq[k] - p.freq[k - 1]);
  return s;
}

struct LorentzianFitResult {
  double omega0 = 0.0;       // rad/s
  double gamma = 0.0;        // 1/s
  double T_eff = 0.0;        // K
  double noise_floor = 0.0;  // m^2/Hz
  double sigma_omega0 = 0.0, sigma_gamma = 0.0, sigma_T = 0.0, sigma_floor = 0.0;
  std::vector<double> cost_history;
};

inline double thermal_oscillator_psd(double f, double omega0, double gamma, double T, double mass, double floor) {
  const double w = kTwoPi * f;
  const double d = omega0 * omega0 - w * w;
  return 4.0 * kBoltzmann * T * gamma / mass / (d * d + gamma * gamma * w * w) + floor;
}

struct PSDFitOptions {
  double band_low = 0.2;   // fit band in units of the peak frequency
  double band_high = 3.0;
};

/// Fits the thermal-oscillator density plus a white floor, on log residuals
/// inside a band around the peak.
inline LorentzianFitResult fit_lorentzian_psd(const PSDEstimate& p, double mass, const PSDFitOptions& opt = {}) {
  require(mass > 0.0 && p.freq.size() == p.value.size() && p.freq.size() > 16, Errc::InvalidArgument,
          "fit_lorentzian_psd: bad input");
  const auto nf = p.freq.size();
  // Peak test on a 5-bin running median so single noisy bins do not count.
  std::vector<double> smooth(nf);
  for (std::size_t k = 0; k < nf; ++k) {
    std::array<double, 5> win{};
    std::size_t c = 0;
    for (std::size_t j = k >= 2 ? k - 2 : 0; j <= std::min(nf - 1, k + 2); ++j) win[c++] = p.value[j];
    std::nth_element(win.begin(), win.begin() + c / 2, win.begin() + c);
    smooth[k] = win[c / 2];
  }
  std::vector<double> sorted(p.value.begin() + 1, p.value.end());
  std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
  const double median = sorted[sorted.size() / 2];
  const auto kpk = std::size_t(std::max_element(smooth.begin() + 1, smooth.end()) - smooth.begin());
  if (!(smooth[kpk] >= 3.0 * median)) throw Error(Errc::PeakNotResolved, "fit_lorentzian_psd: peak/floor below 3");

  const double f_pk = p.freq[kpk];
  const double half = 0.5 * smooth[kpk];
  std::size_t kl = kpk, kr = kpk;
  while (kl > 1 && smooth[kl] > half) --kl;
  while (kr + 1 < nf && smooth[kr] > half) ++kr;
  const double df = p.freq[1] - p.freq[0];
  const double gamma0 = std::max(kTwoPi * (p.freq[kr] - p.freq[kl]), kTwoPi * df);
  const double w0 = kTwoPi * f_pk;

  std::vector<std::size_t> idx;
  for (std::size_t k = 1; k < nf; ++k)
    if (p.freq[k] >= opt.band_low * f_pk && p.freq[k] <= opt.band_high * f_pk && p.value[k] > 0.0) idx.push_back(k);
  require(idx.size() > 8, Errc::PeakNotResolved, "fit_lorentzian_psd: too few bins in the fit band");

  // Area-based temperature seed and a floor seed from the band edges.
  double area = 0.0;
  for (std::size_t k = kl; k <= kr; ++k) area += p.value[k] * df;
  area *= 2.0;  // half-max window holds about half the Lorentzian area
  const double T0 = std::max(mass * w0 * w0 * area / kBoltzmann, 1e-12);
  const double floor0 = std::max(std::min(p.value[idx.front()], p.value[idx.back()]) * 0.1, 1e-300);

  auto model = [&](const Eigen::VectorXd& x, double f) {
    return thermal_oscillator_psd(f, w0 * std::exp(x(0)), gamma0 * std::exp(x(1)), T0 * std::exp(x(2)), mass,
                                  floor0 * std::exp(x(3)));
  };
  auto residual = [&](const Eigen::VectorXd& x, Eigen::VectorXd& r) {
    for (std::size_t i = 0; i < idx.size(); ++i)
      r(Eigen::Index(i)) = std::log(model(x, p.freq[idx[i]])) - std::log(p.value[idx[i]]);
  };
  const auto res = numeric::levenberg_marquardt(residual, Eigen::VectorXd::Zero(4), Eigen::Index(idx.size()));
  LorentzianFitResult out;
  out.omega0 = w0 * std::exp(res.params(0));
  out.gamma = gamma0 * std::exp(res.params(1));
  out.T_eff = T0 * std::exp(res.params(2));
  out.noise_floor = floor0 * std::exp(res.params(3));
  auto sd = [&](int i) { return std::sqrt(std::max(0.0, res.covariance(i, i))); };
  out.sigma_omega0 = out.omega0 * sd(0);
  out.sigma_gamma = out.gamma * sd(1);
  out.sigma_T = out.T_eff * sd(2);
  out.sigma_floor = out.noise_floor * sd(3);
  out.cost_history = res.cost_history;
  return out;
}

// ------------------------------------------------------------ radius model

/// Free-molecular (Epstein) translational damping with diffuse-reflection
/// correction delta = 1 + (pi/8) eta':
///   gamma_t = delta * 8 p / (pi R rho v).
inline double translational_damping_rate(double radius, double density, const GasEnvironment& gas) {
  gas.validate();
  require(radius > 0.0 && density > 0.0, Errc::InvalidArgument, "radius and density must be positive");
  const double delta = 1.0 + kPi / 8.0 * gas.eta_prime;
  return delta * 8.0 * gas.pressure / (kPi * radius * density * gas.speed());
}

/// Radius for which translational_damping_rate equals the fitted gamma.
inline double infer_radius(const LorentzianFitResult& fit, const GasEnvironment& gas, double density) {
  gas.validate();
  if (!(fit.gamma > 0.0) || !(gas.pressure > 0.0) || !(density > 0.0))
    throw Error(Errc::NoSolution, "infer_radius: needs gamma_fit > 0, pressure > 0, density > 0");
  const double delta = 1.0 + kPi / 8.0 * gas.eta_prime;
  return delta * 8.0 * gas.pressure / (kPi * fit.gamma * density * gas.speed());
}

}  // namespace nvlev
