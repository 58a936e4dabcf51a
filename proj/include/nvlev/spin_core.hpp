#pragma once

// Spin-1 linear algebra and Schrodinger propagation.
// Basis order is (m_s = +1, 0, -1) everywhere. Hamiltonians are in rad/s.

#include <cmath>
#include <complex>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "nvlev/error.hpp"

namespace nvlev {

using cplx = std::complex<double>;
using SpinMatrix = Eigen::Matrix3cd;
using SpinState = Eigen::Vector3cd;

inline constexpr cplx kI{0.0, 1.0};

struct SpinOperators {
  SpinMatrix Sx, Sy, Sz, Splus, Sminus;
};

inline const SpinOperators& spin1_operators() {
  static const SpinOperators ops = [] {
    SpinOperators o;
    const double r = 1.0 / std::sqrt(2.0);
    o.Sz = SpinMatrix::Zero();
    o.Sz(0, 0) = 1.0;
    o.Sz(2, 2) = -1.0;
    o.Splus = SpinMatrix::Zero();
    o.Splus(0, 1) = std::sqrt(2.0);
    o.Splus(1, 2) = std::sqrt(2.0);
    o.Sminus = o.Splus.adjoint();
    o.Sx = SpinMatrix::Zero();
    o.Sx(0, 1) = o.Sx(1, 0) = o.Sx(1, 2) = o.Sx(2, 1) = r;
    o.Sy = (o.Splus - o.Sminus) / (2.0 * kI);
    return o;
  }();
  return ops;
}

inline SpinState basis_state(int ms) {
  require(ms >= -1 && ms <= 1, Errc::InvalidArgument, "m_s must be -1, 0 or +1");
  SpinState s = SpinState::Zero();
  s(1 - ms) = 1.0;
  return s;
}

inline double hermiticity_defect(const SpinMatrix& m) {
  return (m - m.adjoint()).cwiseAbs().maxCoeff();
}

inline bool is_hermitian(const SpinMatrix& m, double tol = 1e-12) {
  // Relative to the matrix scale so that rad/s-sized entries are judged fairly.
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  return hermiticity_defect(m) <= tol * scale;
}

inline bool is_unitary(const SpinMatrix& u, double tol = 1e-10) {
  return (u.adjoint() * u - SpinMatrix::Identity()).cwiseAbs().maxCoeff() <= tol;
}

/// Induced infinity norm (max absolute row sum). Bounds the spectral radius.
inline double operator_norm_bound(const SpinMatrix& m) {
  return m.cwiseAbs().rowwise().sum().maxCoeff();
}

/// exp(-i H t) for Hermitian H, via eigendecomposition.
inline SpinMatrix expm_hermitian(const SpinMatrix& h, double t) {
  if (!is_hermitian(h, 1e-10)) throw Error(Errc::NonHermitian, "expm_hermitian: H != H^dagger");
  const SpinMatrix hs = 0.5 * (h + h.adjoint());
  Eigen::SelfAdjointEigenSolver<SpinMatrix> es(hs);
  Eigen::Vector3cd phases;
  for (int k = 0; k < 3; ++k) phases(k) = std::exp(-kI * es.eigenvalues()(k) * t);
  return es.eigenvectors() * phases.asDiagonal() * es.eigenvectors().adjoint();
}

enum class Axis { x, y, z };

/// R_n(angle) = exp(-i angle n.S).
inline SpinMatrix rotation_operator(Axis axis, double angle) {
  if (!std::isfinite(angle)) throw Error(Errc::InvalidArgument, "rotation angle must be finite");
  const auto& s = spin1_operators();
  if (axis == Axis::z) {
    SpinMatrix r = SpinMatrix::Zero();
    r(0, 0) = std::exp(-kI * angle);
    r(1, 1) = 1.0;
    r(2, 2) = std::exp(kI * angle);
    return r;
  }
  if (axis == Axis::y) {
    // Wigner small-d matrix for j = 1 (real, closed form).
    const double c = std::cos(angle), sn = std::sin(angle), r2 = std::sqrt(2.0);
    SpinMatrix d;
    d << 0.5 * (1 + c), -sn / r2, 0.5 * (1 - c),
         sn / r2,        c,       -sn / r2,
         0.5 * (1 - c),  sn / r2,  0.5 * (1 + c);
    return d;
  }
  return expm_hermitian(s.Sx, angle);
}

/// Checks applied to each Hamiltonian sample during propagation.
inline void check_step(const SpinMatrix& h, double dt) {
  if (!is_hermitian(h)) throw Error(Errc::NonHermitian, "propagate: H(t) is not Hermitian");
  if (operator_norm_bound(h) * dt >= 0.5)
    throw Error(Errc::StepTooLarge, "propagate: |H| dt >= 0.5 rad, refine the time grid");
}

namespace detail {

// One RK4 step for d psi/dt = -i H(t) psi. h0 = H(t), hm = H(t+dt/2), h1 = H(t+dt).
inline SpinState rk4_step(const SpinMatrix& h0, const SpinMatrix& hm, const SpinMatrix& h1,
                          const SpinState& psi, double dt) {
  const cplx a = -kI * dt;
  const SpinState k1 = a * (h0 * psi);
  const SpinState k2 = a * (hm * (psi + 0.5 * k1));
  const SpinState k3 = a * (hm * (psi + 0.5 * k2));
  const SpinState k4 = a * (h1 * (psi + k3));
  return psi + (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0;
}

}  // namespace detail

/// Integrates i d psi/dt = H(t) psi with classic RK4 over the given grid.
/// Returns one state per grid point, the first being psi0. No renormalization.
template <class HamiltonianFn>
std::vector<SpinState> propagate(HamiltonianFn&& hamiltonian, const SpinState& psi0,
                                 std::span<const double> t_grid) {
  require(!t_grid.empty(), Errc::InvalidArgument, "propagate: empty time grid");
  std::vector<SpinState> out;
  out.reserve(t_grid.size());
  out.push_back(psi0);
  if (t_grid.size() == 1) return out;
  SpinMatrix h0 = hamiltonian(t_grid[0]);
  SpinState psi = psi0;
  for (std::size_t k = 1; k < t_grid.size(); ++k) {
    const double t = t_grid[k - 1];
    const double dt = t_grid[k] - t;
    if (!(dt > 0.0)) throw Error(Errc::InvalidArgument, "propagate: time grid must be strictly increasing");
    const SpinMatrix hm = hamiltonian(t + 0.5 * dt);
    const SpinMatrix h1 = hamiltonian(t_grid[k]);
    check_step(h0, dt);
    check_step(hm, dt);
    check_step(h1, dt);
    psi = detail::rk4_step(h0, hm, h1, psi, dt);
    out.push_back(psi);
    h0 = h1;
  }
  return out;
}

/// Same integrator on a uniform grid of n_steps over [t0, t1], returning only
/// the final state. Used by sweeps that need millions of steps.
template <class HamiltonianFn>
SpinState propagate_final(HamiltonianFn&& hamiltonian, const SpinState& psi0, double t0, double t1,
                          std::size_t n_steps) {
  require(n_steps > 0 && t1 > t0, Errc::InvalidArgument, "propagate_final: need t1 > t0 and n_steps > 0");
  const double dt = (t1 - t0) / static_cast<double>(n_steps);
  SpinMatrix h0 = hamiltonian(t0);
  check_step(h0, dt);
  SpinState psi = psi0;
  for (std::size_t k = 0; k < n_steps; ++k) {
    const double t = t0 + static_cast<double>(k) * dt;
    const SpinMatrix hm = hamiltonian(t + 0.5 * dt);
    const SpinMatrix h1 = hamiltonian(t + dt);
    // Checked on a sparse subset of steps; sweeps run millions of them.
    if ((k & 255u) == 0u) check_step(hm, dt);
    psi = detail::rk4_step(h0, hm, h1, psi, dt);
    h0 = h1;
  }
  return psi;
}

/// Fourth-order commutator-free Magnus integrator on a uniform grid: two
/// Hermitian exponentials per step built from H at the Gauss-Legendre nodes.
/// Exactly unitary, so the norm is conserved to rounding.
template <class HamiltonianFn>
SpinState propagate_unitary_final(HamiltonianFn&& hamiltonian, const SpinState& psi0, double t0, double t1,
                                  std::size_t n_steps) {
  require(n_steps > 0 && t1 > t0, Errc::InvalidArgument, "propagate_unitary_final: need t1 > t0 and n_steps > 0");
  const double dt = (t1 - t0) / static_cast<double>(n_steps);
  const double c1 = 0.5 - std::sqrt(3.0) / 6.0, c2 = 0.5 + std::sqrt(3.0) / 6.0;
  const double a1 = 0.25 + std::sqrt(3.0) / 6.0, a2 = 0.25 - std::sqrt(3.0) / 6.0;
  SpinState psi = psi0;
  for (std::size_t k = 0; k < n_steps; ++k) {
    const double t = t0 + static_cast<double>(k) * dt;
    const SpinMatrix h1 = hamiltonian(t + c1 * dt);
    const SpinMatrix h2 = hamiltonian(t + c2 * dt);
    if ((k & 255u) == 0u) check_step(h1, dt);
    psi = expm_hermitian(a2 * h1 + a1 * h2, dt) * (expm_hermitian(a1 * h1 + a2 * h2, dt) * psi).eval();
  }
  return psi;
}

/// Number of uniform steps over a span so that norm_bound * dt <= target.
inline std::size_t steps_for(double norm_bound, double span, double target = 0.1) {
  return static_cast<std::size_t>(std::ceil(norm_bound * span / target)) + 1;
}

}  // namespace nvlev
