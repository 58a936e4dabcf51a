#include <gtest/gtest.h>

#include <random>

#include "nvlev/langevin_cooling.hpp"

using namespace nvlev;

namespace {
constexpr double kMass = 2.69754e-16;
constexpr double kW0 = kTwoPi * 1e3;

HarmonicMode mode(double gamma, double T = 300.0) { return {ModeAxis::x, kW0, kMass, gamma, T}; }

double mean_variance(const std::vector<TimeSeries>& runs) {
  double s = 0.0;
  for (const auto& r : runs) s += variance(r.samples);
  return s / double(runs.size());
}

double equipartition(double T) { return kBoltzmann * T / (kMass * kW0 * kW0); }
}  // namespace

TEST(Langevin, EnergyConservedWithoutBath) {
  const double dt = 0.05 / kW0;
  const auto ts = simulate_mode(mode(0.0, 0.0), nullptr, 1e6 * dt, dt, 1, {1000, true}, std::make_pair(1e-9, 0.0));
  const double e0 = 0.5 * kW0 * kW0 * 1e-18;
  for (std::size_t i = 0; i < ts.samples.size(); ++i) {
    const double e = 0.5 * kW0 * kW0 * ts.samples[i] * ts.samples[i] + 0.5 * ts.velocity[i] * ts.velocity[i];
    ASSERT_NEAR(e / e0, 1.0, 1e-3);
  }
}

TEST(Langevin, StepTooLarge) {
  try {
    simulate_mode(mode(10.0), nullptr, 1.0, 0.1 / 1e3, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::StepTooLarge);
  }
}

TEST(Langevin, Deterministic) {
  const std::vector<HarmonicMode> modes{mode(100.0), {ModeAxis::y, 1.2 * kW0, kMass, 80.0, 300.0}};
  const auto a = simulate_com(modes, nullptr, 0.05, 2e-5, 99);
  const auto b = simulate_com(modes, nullptr, 0.05, 2e-5, 99);
  ASSERT_EQ(a.size(), 2u);
  for (std::size_t k = 0; k < a.size(); ++k) EXPECT_EQ(a[k].samples, b[k].samples);
  EXPECT_NE(a[0].samples, a[1].samples);
  const auto c = simulate_com(modes, nullptr, 0.05, 2e-5, 100);
  EXPECT_NE(a[0].samples, c[0].samples);
}

TEST(Langevin, Equipartition) {
  const double gamma = kTwoPi * 20.0;
  const auto runs = simulate_repeats(mode(gamma), nullptr, 200.0 / gamma, 2e-5, 7, 32);
  EXPECT_NEAR(mean_variance(runs) / equipartition(300.0), 1.0, 0.05);
}

TEST(Langevin, IdealFeedbackClosedForm) {
  const double gamma = kTwoPi * 5.0;
  double prev = 1e300;
  for (double ratio : {0.0, 1.0, 10.0, 100.0}) {
    FeedbackConfig fb;
    fb.gain = {ratio * gamma, 0.0, 0.0};
    const auto runs = simulate_repeats(mode(gamma), &fb, 200.0 / gamma, 2e-5, 11, 16);
    const double T = temperature_from_variance(mean_variance(runs), kMass, kW0);
    EXPECT_NEAR(T / (300.0 / (1.0 + ratio)), 1.0, 0.3) << ratio;
    EXPECT_LE(T, prev);
    prev = T;
  }
}

TEST(Langevin, DelayedPositionFeedbackCools) {
  const double gamma = kTwoPi * 5.0;
  FeedbackConfig fb;
  fb.mode = FeedbackMode::delayed_position;
  fb.gain = {10.0 * gamma, 0.0, 0.0};
  const auto runs = simulate_repeats(mode(gamma), &fb, 200.0 / gamma, 2e-5, 12, 8);
  const double T = temperature_from_variance(mean_variance(runs), kMass, kW0);
  EXPECT_LT(T, 300.0 / 5.0);
  // A measurement floor limits the cooling.
  fb.measurement_noise = 1e-15;
  const auto noisy = simulate_repeats(mode(gamma), &fb, 200.0 / gamma, 2e-5, 12, 8);
  EXPECT_GT(temperature_from_variance(mean_variance(noisy), kMass, kW0), T);
}

TEST(Psd, ToneParseval) {
  TimeSeries ts;
  ts.dt = 1e-4;
  const double A = 2.5, f = 123.4;
  for (int i = 0; i < 200000; ++i) ts.samples.push_back(A * std::sin(kTwoPi * f * i * ts.dt));
  const auto p = psd(ts, 8192);
  EXPECT_NEAR(integrate_psd(p) / (A * A / 2.0), 1.0, 0.02);
}

TEST(Psd, WhiteNoiseLevel) {
  TimeSeries ts;
  ts.dt = 1e-3;
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 0.7);
  for (int i = 0; i < 1 << 18; ++i) ts.samples.push_back(n(rng));
  const auto p = psd(ts, 1024);
  double mean = 0.0;
  for (std::size_t k = 1; k + 1 < p.value.size(); ++k) mean += p.value[k];
  mean /= double(p.value.size() - 2);
  EXPECT_NEAR(mean / (2.0 * 0.49 * ts.dt), 1.0, 0.1);
  EXPECT_NEAR(integrate_psd(p) / variance(ts.samples), 1.0, 0.05);
}

TEST(Psd, TooFewSegments) {
  TimeSeries ts;
  ts.dt = 1.0;
  ts.samples.assign(100, 0.0);
  try {
    psd(ts, 64);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::TooFewSegments);
  }
}

TEST(Psd, LangevinPeakAndParseval) {
  const double gamma = kTwoPi * 20.0;
  const auto ts = simulate_mode(mode(gamma), nullptr, 400.0 / gamma, 2e-5, 3);
  const auto p = psd(ts, ts.samples.size() / 8);
  const auto k = std::max_element(p.value.begin() + 1, p.value.end()) - p.value.begin();
  EXPECT_NEAR(p.freq[std::size_t(k)], 1e3, 15.0);
  EXPECT_NEAR(integrate_psd(p) / variance(ts.samples), 1.0, 0.05);
}

namespace {
PSDEstimate ensemble_psd(const std::vector<TimeSeries>& runs) {
  std::vector<PSDEstimate> parts;
  for (const auto& r : runs) parts.push_back(psd(r, r.samples.size() / 4));
  return average_psd(parts);
}
}  // namespace

TEST(LorentzianFit, RecoversThermalParameters) {
  const double gamma = kTwoPi * 20.0;
  const auto runs = simulate_repeats(mode(gamma), nullptr, 200.0 / gamma, 2e-5, 21, 16);
  const auto fit = fit_lorentzian_psd(ensemble_psd(runs), kMass);
  EXPECT_NEAR(fit.omega0 / kW0, 1.0, 0.01);
  EXPECT_NEAR(fit.gamma / gamma, 1.0, 0.10);
  EXPECT_NEAR(fit.T_eff / 300.0, 1.0, 0.10);
  EXPECT_GT(fit.sigma_T, 0.0);
  const double t_area = temperature_from_variance(mean_variance(runs), kMass, kW0);
  EXPECT_NEAR(fit.T_eff / t_area, 1.0, 0.10);
}

TEST(LorentzianFit, CooledData) {
  const double gamma = kTwoPi * 5.0;
  FeedbackConfig fb;
  fb.gain = {99.0 * gamma, 0.0, 0.0};
  const auto runs = simulate_repeats(mode(gamma), &fb, 200.0 / gamma, 2e-5, 22, 8);
  const auto fit = fit_lorentzian_psd(ensemble_psd(runs), kMass);
  EXPECT_NEAR(fit.T_eff / 3.0, 1.0, 0.3);
}

TEST(LorentzianFit, FloorOnly) {
  TimeSeries ts;
  ts.dt = 1e-4;
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n(0.0, 1e-9);
  for (int i = 0; i < 1 << 17; ++i) ts.samples.push_back(n(rng));
  try {
    fit_lorentzian_psd(psd(ts, 4096), kMass);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::PeakNotResolved);
  }
}

TEST(Radius, DampingInversion) {
  GasEnvironment gas;
  gas.pressure = torr_to_pa(0.01);
  const double g = translational_damping_rate(264e-9, 3500.0, gas);
  LorentzianFitResult fit;
  fit.gamma = g;
  EXPECT_NEAR(infer_radius(fit, gas, 3500.0), 264e-9, 1e-18);
  GasEnvironment gas2 = gas;
  gas2.pressure *= 2.0;
  EXPECT_NEAR(translational_damping_rate(264e-9, 3500.0, gas2) / g, 2.0, 1e-12);
  EXPECT_NEAR(infer_radius(fit, gas2, 3500.0) / infer_radius(fit, gas, 3500.0), 2.0, 1e-12);
  fit.gamma = 0.0;
  try {
    infer_radius(fit, gas, 3500.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::NoSolution);
  }
}
