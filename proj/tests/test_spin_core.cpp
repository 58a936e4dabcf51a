#include <gtest/gtest.h>

#include <random>

#include "nvlev/constants.hpp"
#include "nvlev/spin_core.hpp"

using namespace nvlev;

namespace {

SpinMatrix random_hermitian(std::mt19937_64& rng, double scale) {
  std::normal_distribution<double> n(0.0, scale);
  SpinMatrix a;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) a(i, j) = cplx(n(rng), n(rng));
  return 0.5 * (a + a.adjoint());
}

SpinState random_state(std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  SpinState s;
  for (int i = 0; i < 3; ++i) s(i) = cplx(n(rng), n(rng));
  return s.normalized();
}

}  // namespace

TEST(SpinOperators, SzIsDiagonal) {
  const auto& s = spin1_operators();
  SpinMatrix expect = SpinMatrix::Zero();
  expect(0, 0) = 1.0;
  expect(2, 2) = -1.0;
  EXPECT_LT((s.Sz - expect).norm(), 1e-15);
}

TEST(SpinOperators, CommutationRelations) {
  const auto& s = spin1_operators();
  EXPECT_LT((s.Sx * s.Sy - s.Sy * s.Sx - kI * s.Sz).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LT((s.Sy * s.Sz - s.Sz * s.Sy - kI * s.Sx).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LT((s.Sz * s.Sx - s.Sx * s.Sz - kI * s.Sy).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(SpinOperators, RaisingFromZero) {
  const SpinState up = spin1_operators().Splus * basis_state(0);
  EXPECT_NEAR(up(0).real(), std::sqrt(2.0), 1e-15);
  EXPECT_EQ(up(1), cplx(0.0));
  EXPECT_EQ(up(2), cplx(0.0));
}

TEST(SpinOperators, CasimirIsTwo) {
  const auto& s = spin1_operators();
  const SpinMatrix c = s.Sx * s.Sx + s.Sy * s.Sy + s.Sz * s.Sz;
  EXPECT_LT((c - 2.0 * SpinMatrix::Identity()).norm(), 1e-14);
}

TEST(Rotation, ZeroAngleIsIdentity) {
  for (auto ax : {Axis::x, Axis::y, Axis::z})
    EXPECT_LT((rotation_operator(ax, 0.0) - SpinMatrix::Identity()).norm(), 1e-14);
}

TEST(Rotation, AboutZIsPhaseMatrix) {
  const double phi = 0.734;
  const SpinMatrix r = rotation_operator(Axis::z, phi);
  EXPECT_LT(std::abs(r(0, 0) - std::exp(-kI * phi)), 1e-15);
  EXPECT_LT(std::abs(r(1, 1) - 1.0), 1e-15);
  EXPECT_LT(std::abs(r(2, 2) - std::exp(kI * phi)), 1e-15);
}

TEST(Rotation, FullTurnIsIdentityForIntegerSpin) {
  for (auto ax : {Axis::x, Axis::y, Axis::z})
    EXPECT_LT((rotation_operator(ax, kTwoPi) - SpinMatrix::Identity()).norm(), 1e-12);
}

TEST(Rotation, ClosedFormYMatchesExponential) {
  for (double a : {0.1, 0.9, 2.3, -1.7}) {
    const SpinMatrix ref = expm_hermitian(spin1_operators().Sy, a);
    EXPECT_LT((rotation_operator(Axis::y, a) - ref).norm(), 1e-13);
  }
}

TEST(Expm, UnitarityOnRandomHermitian) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> ut(-10.0, 10.0);
  for (int k = 0; k < 1000; ++k) {
    const SpinMatrix h = random_hermitian(rng, 3.0);
    const SpinState psi = random_state(rng);
    const SpinMatrix u = expm_hermitian(h, ut(rng));
    EXPECT_NEAR((u * psi).norm(), 1.0, 1e-10);
    EXPECT_TRUE(is_unitary(u));
  }
}

TEST(Propagate, EigenstateKeepsPopulation) {
  const double d = kTwoPi * 2.87e9;
  const SpinMatrix h = d * spin1_operators().Sz * spin1_operators().Sz;
  std::vector<double> grid(2001);
  for (std::size_t i = 0; i < grid.size(); ++i) grid[i] = 1e-11 * double(i);
  const auto out = propagate([&](double) { return h; }, basis_state(0), grid);
  EXPECT_LT((out.back() - basis_state(0)).norm(), 1e-12);
}

TEST(Propagate, ZeroHamiltonianIsStatic) {
  std::mt19937_64 rng(3);
  const SpinState psi = random_state(rng);
  const std::vector<double> grid{0.0, 0.5, 1.0, 2.0};
  const auto out = propagate([](double) { return SpinMatrix::Zero().eval(); }, psi, grid);
  for (const auto& s : out) EXPECT_LT((s - psi).norm(), 1e-15);
}

TEST(Propagate, CompositionOfIntervals) {
  auto h = [](double t) {
    const auto& s = spin1_operators();
    return (1.3 * s.Sz * s.Sz + 0.7 * std::cos(2.1 * t) * s.Sx + 0.4 * std::sin(t) * s.Sy).eval();
  };
  const SpinState psi0 = basis_state(1);
  const SpinState whole = propagate_final(h, psi0, 0.0, 4.0, 4000);
  const SpinState a = propagate_final(h, psi0, 0.0, 1.5, 1500);
  const SpinState b = propagate_final(h, a, 1.5, 4.0, 2500);
  EXPECT_LT((whole - b).norm(), 1e-8);
}

TEST(Propagate, FourthOrderConvergence) {
  std::mt19937_64 rng(5);
  const SpinMatrix h = random_hermitian(rng, 1.0);
  const SpinState psi0 = random_state(rng);
  const double T = 3.0;
  const SpinState exact = expm_hermitian(h, T) * psi0;
  auto err = [&](std::size_t n) {
    return (propagate_final([&](double) { return h; }, psi0, 0.0, T, n) - exact).norm();
  };
  const double e1 = err(100), e2 = err(200);
  EXPECT_GE(e1 / e2, 8.0);
}

TEST(Propagate, RejectsLargeStep) {
  const SpinMatrix h = 10.0 * spin1_operators().Sz;
  const std::vector<double> grid{0.0, 0.1};
  EXPECT_THROW(
      {
        try {
          propagate([&](double) { return h; }, basis_state(1), grid);
        } catch (const Error& e) {
          EXPECT_EQ(e.code(), Errc::StepTooLarge);
          throw;
        }
      },
      Error);
}

TEST(Propagate, RejectsNonHermitian) {
  SpinMatrix h = SpinMatrix::Zero();
  h(0, 1) = 1.0;
  const std::vector<double> grid{0.0, 0.01};
  try {
    propagate([&](double) { return h; }, basis_state(1), grid);
    FAIL() << "expected NonHermitian";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::NonHermitian);
  }
}

TEST(PropagateUnitary, NormAndOrder) {
  auto h = [](double t) {
    const auto& s = spin1_operators();
    return (1.3 * s.Sz * s.Sz + 0.7 * std::cos(2.1 * t) * s.Sx + 0.4 * std::sin(t) * s.Sy).eval();
  };
  const SpinState psi0 = basis_state(0);
  const SpinState ref = propagate_final(h, psi0, 0.0, 5.0, 200000);
  const SpinState a = propagate_unitary_final(h, psi0, 0.0, 5.0, 100);
  const SpinState b = propagate_unitary_final(h, psi0, 0.0, 5.0, 200);
  EXPECT_NEAR(a.norm(), 1.0, 1e-13);
  EXPECT_GE((a - ref).norm() / (b - ref).norm(), 12.0);
}
