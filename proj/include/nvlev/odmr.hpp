#pragma once

// Ensemble ODMR spectra, widths, multi-Lorentzian fits and D(T) thermometry.
//
// Spectra are fractional contrast 1 - PL/PL_off, so a PL dip shows up as a
// positive peak on a zero baseline.

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <vector>

#include <Eigen/Geometry>
#include <boost/math/tools/roots.hpp>

#include "nvlev/berry.hpp"
#include "nvlev/numeric/least_squares.hpp"

namespace nvlev {

/// The four <111> NV axes in the crystal frame.
inline std::array<Eigen::Vector3d, 4> nv_axes_crystal() {
  const double r = 1.0 / std::sqrt(3.0);
  return {Eigen::Vector3d(r, r, r), Eigen::Vector3d(r, -r, -r), Eigen::Vector3d(-r, r, -r),
          Eigen::Vector3d(-r, -r, r)};
}

struct OrientationEnsemble {
  Eigen::Quaterniond crystal_rotation = Eigen::Quaterniond::Identity();  // crystal -> lab
};

/// Crystal orientation that puts the [111] axis at angle theta from lab z
/// (tilted about lab y). theta = 0 aligns it with z.
inline OrientationEnsemble ensemble_with_axis_at(double theta) {
  const Eigen::Vector3d n111 = Eigen::Vector3d::Ones().normalized();
  Eigen::Quaterniond align = Eigen::Quaterniond::FromTwoVectors(n111, Eigen::Vector3d::UnitZ());
  Eigen::Quaterniond tilt(Eigen::AngleAxisd(theta, Eigen::Vector3d::UnitY()));
  return {(tilt * align).normalized()};
}

/// Angles of the four NV axes to lab z. An axis and its reverse host the same
/// NV class (m_s = +1 and -1 swap), so angles are folded into [0, pi/2].
inline std::array<double, 4> tetrahedral_thetas(const OrientationEnsemble& e) {
  std::array<double, 4> out{};
  const auto axes = nv_axes_crystal();
  const Eigen::Quaterniond q = e.crystal_rotation.normalized();
  for (std::size_t i = 0; i < 4; ++i) {
    const double c = std::clamp(std::abs((q * axes[i]).z()), 0.0, 1.0);
    out[i] = std::acos(c);
  }
  return out;
}

struct LineShape {
  double intrinsic_fwhm = kTwoPi * 19e6;  // rad/s
  double contrast_per_dip = 0.02;
  double strain = 0.0;                     // E, rad/s

  void validate() const {
    require(intrinsic_fwhm > 0.0, Errc::InvalidArgument, "intrinsic_fwhm must be positive");
    require(contrast_per_dip > 0.0 && contrast_per_dip <= 0.25, Errc::InvalidArgument,
            "contrast_per_dip must lie in (0, 0.25]");
    require(strain >= 0.0, Errc::InvalidArgument, "strain must be non-negative");
  }
};

struct Spectrum {
  std::vector<double> freq;      // rad/s, strictly increasing
  std::vector<double> contrast;  // >= 0
};

struct Dip {
  double center;     // rad/s
  double fwhm;       // rad/s
  double amplitude;  // peak contrast
};

inline double lorentzian(double f, const Dip& d) {
  const double hw = 0.5 * d.fwhm;
  const double x = f - d.center;
  return d.amplitude * hw * hw / (x * x + hw * hw);
}

/// Resonance centers for every orientation and m_s = +-1. The rotation/field
/// shift s and the strain E combine as +-sqrt(s^2 + E^2), the eigenvalues of
/// the +-1 block with diagonal splitting 2s and off-diagonal E.
inline std::vector<double> dip_centers(const std::array<double, 4>& thetas, const NVConfiguration& base,
                                       const LineShape& line, const FieldEnvironment& env,
                                       DriveComponent component) {
  std::vector<double> centers;
  for (double th : thetas) {
    for (int ms : {1, -1}) {
      ResonanceQuery q;
      q.target_ms = ms;
      q.drive_component = component == DriveComponent::both ? DriveComponent::longitudinal : component;
      q.cfg = base;
      q.cfg.theta = th;
      q.env = env;
      const double s = resonance_frequency(q) - base.zfs;
      const double mag = std::hypot(s, line.strain);
      const double sign = s > 0.0 ? 1.0 : (s < 0.0 ? -1.0 : double(ms));
      centers.push_back(base.zfs + sign * mag);
    }
  }
  return centers;
}

inline Spectrum synth_spectrum(const OrientationEnsemble& ensemble, const LineShape& line,
                               const FieldEnvironment& env, DriveComponent component,
                               const std::vector<double>& grid, const NVConfiguration& base = {}) {
  line.validate();
  require(grid.size() >= 3, Errc::InvalidArgument, "synth_spectrum: grid needs >= 3 points");
  for (std::size_t i = 1; i < grid.size(); ++i)
    require(grid[i] > grid[i - 1], Errc::InvalidArgument, "synth_spectrum: grid must increase");
  const auto centers = dip_centers(tetrahedral_thetas(ensemble), base, line, env, component);
  const auto [lo, hi] = std::minmax_element(centers.begin(), centers.end());
  if (grid.front() > *lo - 5.0 * line.intrinsic_fwhm || grid.back() < *hi + 5.0 * line.intrinsic_fwhm)
    throw Error(Errc::GridTooNarrow, "synth_spectrum: grid must span all dips +- 5 FWHM");
  Spectrum s;
  s.freq = grid;
  s.contrast.assign(grid.size(), 0.0);
  for (std::size_t i = 0; i < grid.size(); ++i)
    for (double c : centers) s.contrast[i] += lorentzian(grid[i], {c, line.intrinsic_fwhm, line.contrast_per_dip});
  return s;
}

/// Full width at half depth of the deepest dip (largest contrast), with
/// linear interpolation of the two half-depth crossings.
inline double fwhm(const Spectrum& s) {
  const auto n = s.contrast.size();
  require(n >= 3 && s.freq.size() == n, Errc::InvalidArgument, "fwhm: malformed spectrum");
  const auto k = static_cast<std::size_t>(std::max_element(s.contrast.begin(), s.contrast.end()) -
                                          s.contrast.begin());
  const double half = 0.5 * s.contrast[k];
  auto cross = [&](std::size_t a, std::size_t b) {
    const double t = (s.contrast[a] - half) / (s.contrast[a] - s.contrast[b]);
    return s.freq[a] + t * (s.freq[b] - s.freq[a]);
  };
  std::optional<double> left, right;
  for (std::size_t i = k; i > 0; --i)
    if (s.contrast[i - 1] < half) { left = cross(i, i - 1); break; }
  for (std::size_t i = k; i + 1 < n; ++i)
    if (s.contrast[i + 1] < half) { right = cross(i, i + 1); break; }
  if (!left || !right) throw Error(Errc::NoHalfCrossing, "fwhm: dip does not recover to half depth in grid");
  return *right - *left;
}

struct ODMRFit {
  std::vector<Dip> dips;
  double residual_rms = 0.0;
  std::vector<double> cost_history;
  Eigen::MatrixXd covariance;  // in (center, fwhm, amplitude) order per dip, rad/s units
};

/// Local contrast maxima, highest first.
inline std::vector<std::size_t> local_maxima(const Spectrum& s) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 1; i + 1 < s.contrast.size(); ++i)
    if (s.contrast[i] > s.contrast[i - 1] && s.contrast[i] >= s.contrast[i + 1]) idx.push_back(i);
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return s.contrast[a] > s.contrast[b]; });
  return idx;
}

/// Multi-Lorentzian least-squares fit. Without an initial guess, the n
/// highest local maxima seed the centers and the width is estimated from
/// the global dip.
inline ODMRFit fit_dips(const Spectrum& s, std::size_t n_dips, std::optional<std::vector<Dip>> guess = {},
                        const numeric::LMOptions& opt = {}) {
  require(n_dips >= 1, Errc::InvalidArgument, "fit_dips: n_dips must be >= 1");
  const auto m = s.freq.size();
  require(m > 3 * n_dips, Errc::InvalidArgument, "fit_dips: not enough samples for the requested dips");
  const double step = (s.freq.back() - s.freq.front()) / double(m - 1);

  std::vector<Dip> init;
  if (guess) {
    require(guess->size() == n_dips, Errc::InvalidArgument, "fit_dips: guess size differs from n_dips");
    init = *guess;
  } else {
    const auto all_peaks = local_maxima(s);
    if (all_peaks.empty()) throw Error(Errc::DegenerateGuess, "fit_dips: no local maxima to seed the fit");
    double w_global = 0.0;
    try {
      w_global = fwhm(s);
    } catch (const Error&) {
      w_global = 10.0 * step;
    }
    // Noise ripples sit next to real maxima; keep seeds half a width apart.
    std::vector<std::size_t> peaks;
    for (auto i : all_peaks) {
      bool near = false;
      for (auto j : peaks) near = near || std::abs(s.freq[i] - s.freq[j]) < 0.5 * w_global;
      if (!near) peaks.push_back(i);
      if (peaks.size() == n_dips) break;
    }
    const double w0 = w_global / std::max<double>(1.0, double(n_dips) / double(peaks.size()));
    for (std::size_t i = 0; i < n_dips; ++i) {
      const std::size_t p = peaks[std::min(i, peaks.size() - 1)];
      // Surplus dips beyond the resolved maxima are offset by a fraction of the width.
      const double off = i < peaks.size() ? 0.0 : 0.25 * w0 * double(i - peaks.size() + 1);
      init.push_back({s.freq[p] + off, w0, s.contrast[p]});
    }
  }
  for (std::size_t i = 0; i < n_dips; ++i)
    for (std::size_t j = i + 1; j < n_dips; ++j)
      if (std::abs(init[i].center - init[j].center) < 0.5 * step)
        throw Error(Errc::DegenerateGuess, "fit_dips: two initial centers coincide");

  // Work in units of the grid step around the grid midpoint for conditioning.
  const double f_mid = 0.5 * (s.freq.front() + s.freq.back());
  Eigen::VectorXd p(3 * n_dips);
  double amp_scale = 0.0;
  for (const auto& d : init) amp_scale = std::max(amp_scale, std::abs(d.amplitude));
  if (amp_scale == 0.0) amp_scale = 1.0;
  for (std::size_t i = 0; i < n_dips; ++i) {
    p(3 * i) = (init[i].center - f_mid) / step;
    p(3 * i + 1) = init[i].fwhm / step;
    p(3 * i + 2) = init[i].amplitude / amp_scale;
  }
  auto unpack = [&](const Eigen::VectorXd& x, std::size_t i) {
    return Dip{f_mid + x(3 * i) * step, std::abs(x(3 * i + 1)) * step, x(3 * i + 2) * amp_scale};
  };
  auto residual = [&](const Eigen::VectorXd& x, Eigen::VectorXd& r) {
    for (std::size_t k = 0; k < m; ++k) {
      double model = 0.0;
      for (std::size_t i = 0; i < n_dips; ++i) model += lorentzian(s.freq[k], unpack(x, i));
      r(Eigen::Index(k)) = (model - s.contrast[k]) / amp_scale;
    }
  };
  const auto res = numeric::levenberg_marquardt(residual, p, Eigen::Index(m), opt);

  ODMRFit fit;
  for (std::size_t i = 0; i < n_dips; ++i) fit.dips.push_back(unpack(res.params, i));
  std::sort(fit.dips.begin(), fit.dips.end(), [](const Dip& a, const Dip& b) { return a.center < b.center; });
  fit.residual_rms = std::sqrt(res.cost / double(m)) * amp_scale;
  for (double c : res.cost_history) fit.cost_history.push_back(c * amp_scale * amp_scale);
  Eigen::VectorXd scale(3 * n_dips);
  for (std::size_t i = 0; i < n_dips; ++i) scale.segment(3 * i, 3) << step, step, amp_scale;
  fit.covariance = scale.asDiagonal() * res.covariance * scale.asDiagonal();
  return fit;
}

// ---------------------------------------------------------------- thermometry

struct ThermometryConstants {
  double c0 = 2.8697;     // GHz
  double c1 = 9.7e-5;     // GHz/K
  double c2 = -3.7e-7;    // GHz/K^2
  double c3 = 1.7e-10;    // GHz/K^3
  double delta_pressure = 1.5e-6;  // GHz/bar
  double delta_strain = 0.0;       // GHz
};

inline constexpr double kThermometryTmin = 250.0;
inline constexpr double kThermometryTmax = 600.0;

inline double d_polynomial(double T, const ThermometryConstants& k, double pressure_bar) {
  return k.c0 + T * (k.c1 + T * (k.c2 + T * k.c3)) + k.delta_pressure * pressure_bar + k.delta_strain;
}

/// Zero-field splitting in GHz at temperature T (K) and pressure (bar).
inline double d_from_temperature(double T, const ThermometryConstants& k = {}, double pressure_bar = 0.0) {
  if (!(T >= kThermometryTmin && T <= kThermometryTmax))
    throw Error(Errc::OutOfValidityRange, "d_from_temperature: T outside [250, 600] K");
  return d_polynomial(T, k, pressure_bar);
}

/// Inverts d_from_temperature on [250, 600] K (TOMS 748 bracketing).
inline double temperature_from_d(double d_ghz, const ThermometryConstants& k = {}, double pressure_bar = 0.0) {
  auto f = [&](double T) { return d_polynomial(T, k, pressure_bar) - d_ghz; };
  const double flo = f(kThermometryTmin), fhi = f(kThermometryTmax);
  if (flo == 0.0) return kThermometryTmin;
  if (fhi == 0.0) return kThermometryTmax;
  if ((flo > 0.0) == (fhi > 0.0))
    throw Error(Errc::NoRootInWindow, "temperature_from_d: D outside the range covered by [250, 600] K");
  boost::uintmax_t iters = 200;
  const auto r = boost::math::tools::toms748_solve(f, kThermometryTmin, kThermometryTmax, flo, fhi,
                                                   boost::math::tools::eps_tolerance<double>(48), iters);
  return 0.5 * (r.first + r.second);
}

/// Strain offset that makes d_from_temperature(T_ref) equal the measured D.
inline double calibrate_delta_strain(double d_meas_ghz, double T_ref, ThermometryConstants k = {},
                                     double pressure_bar = 0.0) {
  k.delta_strain = 0.0;
  return d_meas_ghz - d_from_temperature(T_ref, k, pressure_bar);
}

}  // namespace nvlev
