#include <gtest/gtest.h>

#include <random>

#include "nvlev/odmr.hpp"

using namespace nvlev;

namespace {
constexpr double kD = kTwoPi * 2.870e9;
constexpr double kGamma = kTwoPi * 19e6;

std::vector<double> grid_around(double lo, double hi, double step) {
  std::vector<double> g;
  for (double f = lo; f <= hi; f += step) g.push_back(f);
  return g;
}

// Projections spread so that all eight 10 mT lines are > 3 linewidths apart.
OrientationEnsemble generic_orientation() {
  return {Eigen::Quaterniond(Eigen::AngleAxisd(1.065, Eigen::Vector3d::UnitX())) *
          Eigen::Quaterniond(Eigen::AngleAxisd(1.118, Eigen::Vector3d::UnitY()))};
}

double broadened_fwhm(const OrientationEnsemble& e, double f_rot, double strain) {
  LineShape line;
  line.strain = strain;
  FieldEnvironment env;
  env.omega_r = kTwoPi * f_rot;
  const auto g = grid_around(kD - kTwoPi * 300e6, kD + kTwoPi * 300e6, kTwoPi * 0.1e6);
  return fwhm(synth_spectrum(e, line, env, DriveComponent::longitudinal, g));
}
}  // namespace

TEST(Orientation, IdentityGivesMagicAngle) {
  for (double th : tetrahedral_thetas({})) EXPECT_NEAR(rad_to_deg(th), 54.7356, 1e-4);
}

TEST(Orientation, AlignedAxis) {
  auto th = tetrahedral_thetas(ensemble_with_axis_at(0.0));
  std::sort(th.begin(), th.end());
  EXPECT_NEAR(rad_to_deg(th[0]), 0.0, 1e-6);
  for (int i = 1; i < 4; ++i) EXPECT_NEAR(rad_to_deg(th[i]), 70.5288, 1e-4);
}

TEST(Orientation, CosineSquareSumIsIsotropic) {
  std::srand(21);
  for (int k = 0; k < 200; ++k) {
    const OrientationEnsemble e{Eigen::Quaterniond::UnitRandom()};
    double s = 0.0;
    for (double th : tetrahedral_thetas(e)) s += std::pow(std::cos(th), 2);
    EXPECT_NEAR(s, 4.0 / 3.0, 1e-12);
  }
}

TEST(Spectrum, ZeroFieldIsOneBroadDip) {
  LineShape line;
  line.strain = kTwoPi * 6.7e6;
  const auto g = grid_around(kD - kTwoPi * 200e6, kD + kTwoPi * 200e6, kTwoPi * 0.2e6);
  const auto s = synth_spectrum({}, line, {}, DriveComponent::longitudinal, g);
  // D +- E lines sit inside one linewidth: at most a dimple at D of under 3 %.
  const auto peaks = local_maxima(s);
  ASSERT_LE(peaks.size(), 2u);
  for (auto i : peaks) EXPECT_NEAR(s.freq[i], kD, line.strain);
  const double top = *std::max_element(s.contrast.begin(), s.contrast.end());
  const auto mid = std::size_t(std::lround((kD - g.front()) / (kTwoPi * 0.2e6)));
  EXPECT_GT(s.contrast[mid], 0.97 * top);
  for (double c : s.contrast) EXPECT_GE(c, 0.0);
}

TEST(Spectrum, FieldResolvesEightDips) {
  LineShape line;
  FieldEnvironment env;
  env.b_static = 0.01;
  // Generic orientation with well separated projections.
  const OrientationEnsemble e = generic_orientation();
  auto centers = dip_centers(tetrahedral_thetas(e), {}, line, env, DriveComponent::longitudinal);
  std::sort(centers.begin(), centers.end());
  for (std::size_t i = 1; i < centers.size(); ++i) ASSERT_GT(centers[i] - centers[i - 1], kGamma);
  const auto g = grid_around(kD - kTwoPi * 500e6, kD + kTwoPi * 500e6, kTwoPi * 0.5e6);
  const auto s = synth_spectrum(e, line, env, DriveComponent::longitudinal, g);
  const double top = *std::max_element(s.contrast.begin(), s.contrast.end());
  std::size_t deep = 0;
  for (auto i : local_maxima(s)) deep += s.contrast[i] > 0.5 * top;
  EXPECT_EQ(deep, 8u);
}

TEST(Spectrum, GridTooNarrow) {
  const auto g = grid_around(kD - kTwoPi * 20e6, kD + kTwoPi * 20e6, kTwoPi * 1e6);
  try {
    synth_spectrum({}, {}, {}, DriveComponent::longitudinal, g);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::GridTooNarrow);
  }
}

TEST(Spectrum, RotationShapesDifferBetweenAxes) {
  LineShape line;
  FieldEnvironment env;
  env.omega_r = kTwoPi * 20e6;
  const auto g = grid_around(kD - kTwoPi * 300e6, kD + kTwoPi * 300e6, kTwoPi * 0.5e6);
  const auto a = synth_spectrum(ensemble_with_axis_at(0.0), line, env, DriveComponent::longitudinal, g);
  const auto b = synth_spectrum(ensemble_with_axis_at(deg_to_rad(45.0)), line, env, DriveComponent::longitudinal, g);
  double diff = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) diff = std::max(diff, std::abs(a.contrast[i] - b.contrast[i]));
  EXPECT_GT(diff, 1e-3);
}

TEST(Fwhm, SingleLorentzian) {
  Spectrum s;
  const double step = kTwoPi * 0.1e6;
  s.freq = grid_around(kD - 10 * kGamma, kD + 10 * kGamma, step);
  for (double f : s.freq) s.contrast.push_back(lorentzian(f, {kD, kGamma, 0.02}));
  EXPECT_NEAR(fwhm(s), kGamma, step);
}

TEST(Fwhm, NoHalfCrossing) {
  Spectrum s;
  s.freq = {1.0, 2.0, 3.0, 4.0};
  s.contrast = {0.9, 1.0, 0.95, 0.8};
  try {
    fwhm(s);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::NoHalfCrossing);
  }
}

TEST(Fwhm, RotationBroadening) {
  const double strain = kTwoPi * 6.7e6;
  const auto e0 = ensemble_with_axis_at(0.0);
  EXPECT_GT(broadened_fwhm(e0, 14e6, strain), broadened_fwhm(e0, 0.1e6, strain));
  double prev = 0.0;
  for (double f = 0.0; f <= 20e6; f += 1e6) {
    const double w = broadened_fwhm(e0, f, strain);
    EXPECT_GE(w, prev - 1e-6 * w) << f;
    EXPECT_GE(w, kGamma * (1.0 - 1e-3));
    prev = w;
  }
}

TEST(Fit, NoiselessRoundTrip) {
  LineShape line;
  FieldEnvironment env;
  env.b_static = 0.01;
  const auto e = ensemble_with_axis_at(deg_to_rad(20.0));
  const auto g = grid_around(kD - kTwoPi * 450e6, kD + kTwoPi * 450e6, kTwoPi * 1e6);
  const auto s = synth_spectrum(e, line, env, DriveComponent::longitudinal, g);
  auto centers = dip_centers(tetrahedral_thetas(e), {}, line, env, DriveComponent::longitudinal);
  std::sort(centers.begin(), centers.end());
  // Orientations sharing a projection give coincident dips; fit the distinct ones.
  std::vector<double> distinct;
  for (double c : centers)
    if (distinct.empty() || c - distinct.back() > 1e-3 * kGamma) distinct.push_back(c);
  const auto fit = fit_dips(s, distinct.size());
  ASSERT_EQ(fit.dips.size(), distinct.size());
  for (std::size_t i = 0; i < distinct.size(); ++i) EXPECT_NEAR(fit.dips[i].center, distinct[i], 1e-3 * kGamma);
  EXPECT_LT(fit.residual_rms, 1e-8);
  EXPECT_GE(fit.cost_history.size(), 1u);
}

TEST(Fit, StrainPairCentersAndMidpoint) {
  const double E = kTwoPi * 30e6;
  Spectrum s;
  s.freq = grid_around(kD - kTwoPi * 200e6, kD + kTwoPi * 200e6, kTwoPi * 0.5e6);
  for (double f : s.freq) s.contrast.push_back(lorentzian(f, {kD - E, kGamma, 0.02}) + lorentzian(f, {kD + E, kGamma, 0.02}));
  const auto fit = fit_dips(s, 2);
  EXPECT_NEAR(fit.dips[0].center, kD - E, 1e-3 * kGamma);
  EXPECT_NEAR(fit.dips[1].center, kD + E, 1e-3 * kGamma);
  EXPECT_NEAR(0.5 * (fit.dips[0].center + fit.dips[1].center), kD, 1e-3 * kGamma);
}

TEST(Fit, NoisyEightDips) {
  LineShape line;
  FieldEnvironment env;
  env.b_static = 0.01;  // 100 G
  const OrientationEnsemble e = generic_orientation();
  const auto g = grid_around(kD - kTwoPi * 500e6, kD + kTwoPi * 500e6, kTwoPi * 0.5e6);
  auto s = synth_spectrum(e, line, env, DriveComponent::longitudinal, g);
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> noise(0.0, 0.01 * line.contrast_per_dip);
  for (double& c : s.contrast) c += noise(rng);
  auto centers = dip_centers(tetrahedral_thetas(e), {}, line, env, DriveComponent::longitudinal);
  std::sort(centers.begin(), centers.end());
  const auto fit = fit_dips(s, 8);
  for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(fit.dips[i].center, centers[i], kGamma / 10.0);
}

TEST(Fit, DegenerateGuess) {
  Spectrum s;
  s.freq = grid_around(0.0, 100.0, 1.0);
  for (double f : s.freq) s.contrast.push_back(lorentzian(f, {50.0, 5.0, 1.0}));
  try {
    fit_dips(s, 2, std::vector<Dip>{{50.0, 5.0, 1.0}, {50.1, 5.0, 1.0}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::DegenerateGuess);
  }
}

TEST(Thermometry, PolynomialAnchor) {
  EXPECT_NEAR(d_from_temperature(300.0), 2.87009, 5e-6);
  ThermometryConstants k;
  EXPECT_LT(std::abs(k.delta_pressure * torr_to_pa(1e-5) / kPascalPerBar), 1e-12);
  for (double T = 300.0; T < 400.0; T += 1.0) EXPECT_LT(d_from_temperature(T + 1.0), d_from_temperature(T));
}

TEST(Thermometry, RoundTrip) {
  for (double T = 260.0; T <= 590.0; T += 10.0) EXPECT_NEAR(temperature_from_d(d_from_temperature(T)), T, 0.01);
  EXPECT_NEAR(temperature_from_d(d_from_temperature(350.0)), 350.0, 0.01);
}

TEST(Thermometry, StrainCalibration) {
  ThermometryConstants k;
  const double p10 = torr_to_pa(10.0) / kPascalPerBar;
  k.delta_strain = calibrate_delta_strain(2.8694, 298.0, k, p10);
  EXPECT_NEAR(k.delta_strain, -8.473506e-4, 1e-10);
  EXPECT_NEAR(temperature_from_d(2.8650, k), 347.64, 0.01);
}

TEST(Thermometry, Errors) {
  try {
    temperature_from_d(3.5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::NoRootInWindow);
  }
  try {
    d_from_temperature(100.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::OutOfValidityRange);
  }
}
