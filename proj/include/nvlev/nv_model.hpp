#pragma once

// NV ground-state Hamiltonians in the laboratory and co-rotating frames.
//
// Rotation convention: the NV azimuth advances as phi(t) = phi0 + omega_r t,
// i.e. omega_r > 0 is counterclockwise seen from +z. Use signed_omega() to
// build omega_r from a rotation rate and a sense.

#include <cmath>
#include <string>
#include <vector>

#include "nvlev/constants.hpp"
#include "nvlev/spin_core.hpp"

namespace nvlev {

struct NVConfiguration {
  double theta = 0.0;  // NV axis vs rotation axis z, rad
  double phi0 = 0.0;   // azimuth at t = 0, rad
  double zfs = kZeroFieldSplitting;  // D, rad/s
  double strain = 0.0;               // E, rad/s
  double gamma_e = kGammaElectron;   // rad/s/T

  void validate() const {
    require(theta >= 0.0 && theta <= kPi, Errc::InvalidArgument, "theta must lie in [0, pi]");
    require(zfs > 0.0, Errc::InvalidArgument, "zero-field splitting D must be positive");
    require(strain >= 0.0, Errc::InvalidArgument, "strain E must be non-negative");
    require(strain < zfs / 10.0, Errc::InvalidArgument, "strain E must satisfy E < D/10");
  }
};

struct FieldEnvironment {
  double b_static = 0.0;      // T, along z
  double omega_r = 0.0;       // rad/s, signed (see header note)
  double mw_amplitude = 0.0;  // T
  double mw_frequency = 0.0;  // rad/s
  double mw_tilt = 0.0;       // theta', tilt from z inside the yz-plane, rad

  /// Non-fatal checks. Empty when the adiabatic assumption holds.
  std::vector<std::string> warnings(const NVConfiguration& cfg) const {
    std::vector<std::string> w;
    if (std::abs(omega_r) >= cfg.zfs)
      w.emplace_back("|omega_r| >= D: adiabatic approximation not valid");
    return w;
  }
};

enum class RotationSense { clockwise, counterclockwise };

/// Signed omega_r for a rotation of angular rate |rate| with the given sense
/// (viewed from +z).
inline double signed_omega(double rate, RotationSense sense) {
  return sense == RotationSense::counterclockwise ? std::abs(rate) : -std::abs(rate);
}

enum class DriveComponent { longitudinal, transverse, both };

inline double nv_azimuth(const NVConfiguration& cfg, const FieldEnvironment& env, double t) {
  return cfg.phi0 + env.omega_r * t;
}

/// D S_z^2 + E (S_x^2 - S_y^2) in the NV frame.
inline SpinMatrix h_zero_field_static(const NVConfiguration& cfg) {
  cfg.validate();
  const auto& s = spin1_operators();
  return cfg.zfs * s.Sz * s.Sz + cfg.strain * (s.Sx * s.Sx - s.Sy * s.Sy);
}

/// R(phi, theta) = R_z(phi) R_y(theta), mapping NV-frame states to the lab.
inline SpinMatrix nv_rotation(double theta, double phi) {
  return rotation_operator(Axis::z, phi) * rotation_operator(Axis::y, theta);
}

/// Lab-frame NV Hamiltonian at azimuth phi (no microwave, strain neglected).
inline SpinMatrix h_lab_at_phase(const NVConfiguration& cfg, double b_static, double phi) {
  const double d = cfg.zfs;
  const double c = std::cos(cfg.theta), s = std::sin(cfg.theta);
  const double r2 = std::sqrt(2.0);
  const cplx e1 = std::polar(1.0, -phi);
  const cplx e2 = std::polar(1.0, -2.0 * phi);
  const double zee = cfg.gamma_e * b_static;
  SpinMatrix h;
  h(0, 0) = d * (c * c + 0.5 * s * s) + zee;
  h(0, 1) = d * e1 * c * s / r2;
  h(0, 2) = d * e2 * 0.5 * s * s;
  h(1, 1) = d * s * s;
  h(1, 2) = -d * e1 * c * s / r2;
  h(2, 2) = d * (c * c + 0.5 * s * s) - zee;
  h(1, 0) = std::conj(h(0, 1));
  h(2, 0) = std::conj(h(0, 2));
  h(2, 1) = std::conj(h(1, 2));
  return h;
}

inline SpinMatrix h_lab(const NVConfiguration& cfg, const FieldEnvironment& env, double t) {
  return h_lab_at_phase(cfg, env.b_static, nv_azimuth(cfg, env, t));
}

/// h_lab(t) + gamma_e B_MW cos(omega_MW t) op - offset*I, with the
/// phi-independent parts precomputed. Intended for long propagations.
class DrivenLabHamiltonian {
 public:
  DrivenLabHamiltonian(const NVConfiguration& cfg, const FieldEnvironment& env, const SpinMatrix& op,
                       double offset = 0.0)
      : phi0_(cfg.phi0), omega_r_(env.omega_r), omega_mw_(env.mw_frequency) {
    const double d = cfg.zfs, c = std::cos(cfg.theta), s = std::sin(cfg.theta);
    const double zee = cfg.gamma_e * env.b_static;
    base_ = SpinMatrix::Zero();
    base_(0, 0) = d * (c * c + 0.5 * s * s) + zee - offset;
    base_(1, 1) = d * s * s - offset;
    base_(2, 2) = d * (c * c + 0.5 * s * s) - zee - offset;
    a1_ = d * c * s / std::sqrt(2.0);
    a2_ = 0.5 * d * s * s;
    drive_ = cfg.gamma_e * env.mw_amplitude * op;
  }

  SpinMatrix operator()(double t) const {
    const double phi = phi0_ + omega_r_ * t;
    const cplx e1 = std::polar(1.0, -phi);
    const cplx e2 = e1 * e1;
    SpinMatrix h = base_ + std::cos(omega_mw_ * t) * drive_;
    h(0, 1) += a1_ * e1;
    h(0, 2) += a2_ * e2;
    h(1, 2) -= a1_ * e1;
    h(1, 0) += a1_ * std::conj(e1);
    h(2, 0) += a2_ * std::conj(e2);
    h(2, 1) -= a1_ * std::conj(e1);
    return h;
  }

 private:
  double phi0_, omega_r_, omega_mw_;
  SpinMatrix base_, drive_;
  double a1_, a2_;
};

/// Lab-fixed microwave direction n_MW = (0, -sin theta', cos theta') projected
/// on the requested component, as a spin operator (no amplitude, no time factor).
inline SpinMatrix mw_operator(double tilt, DriveComponent component) {
  const auto& s = spin1_operators();
  SpinMatrix op = SpinMatrix::Zero();
  if (component != DriveComponent::transverse) op += std::cos(tilt) * s.Sz;
  if (component != DriveComponent::longitudinal) op -= std::sin(tilt) * s.Sy;
  return op;
}

/// gamma_e B_MW cos(omega_MW t) n_MW.S, no rotating-wave approximation.
inline SpinMatrix h_microwave(const NVConfiguration& cfg, const FieldEnvironment& env, double t,
                              DriveComponent component = DriveComponent::both) {
  return cfg.gamma_e * env.mw_amplitude * std::cos(env.mw_frequency * t) *
         mw_operator(env.mw_tilt, component);
}

struct RotatingFrameHamiltonian {
  SpinMatrix full;
  SpinMatrix secular;
};

/// Hamiltonian in the frame co-rotating with the NV axis, psi_rot = R(t)^dagger psi_lab.
/// full = D S_z^2 + (gamma_e B - omega_r) R_y^dagger S_z R_y, time-independent.
inline RotatingFrameHamiltonian h_rot(const NVConfiguration& cfg, const FieldEnvironment& env) {
  cfg.validate();
  const auto& s = spin1_operators();
  const SpinMatrix ry = rotation_operator(Axis::y, cfg.theta);
  const SpinMatrix sz_nv = ry.adjoint() * s.Sz * ry;
  RotatingFrameHamiltonian out;
  out.full = cfg.zfs * s.Sz * s.Sz + (cfg.gamma_e * env.b_static - env.omega_r) * sz_nv;
  out.full = 0.5 * (out.full + out.full.adjoint()).eval();
  out.secular = out.full.diagonal().asDiagonal();
  return out;
}

struct LabEigenstates {
  SpinState plus, zero, minus;
  const SpinState& operator[](int ms) const {
    require(ms >= -1 && ms <= 1, Errc::InvalidArgument, "m_s must be -1, 0 or +1");
    return ms == 1 ? plus : (ms == 0 ? zero : minus);
  }
};

/// Columns of R(t): instantaneous zero-field eigenstates |m_s, t>.
inline LabEigenstates eigenstates_at_phase(double theta, double phi) {
  const SpinMatrix r = nv_rotation(theta, phi);
  return {r.col(0), r.col(1), r.col(2)};
}

inline LabEigenstates eigenstates_lab(const NVConfiguration& cfg, const FieldEnvironment& env,
                                      double t) {
  return eigenstates_at_phase(cfg.theta, nv_azimuth(cfg, env, t));
}

struct PseudoField {
  double magnitude;               // T
  double gyromagnetic_ratio_used; // rad/s/T
};

inline PseudoField pseudo_field(double omega_r, double gamma) {
  if (gamma == 0.0) throw Error(Errc::ZeroGyromagneticRatio, "pseudo_field: gamma = 0");
  return {std::abs(omega_r / gamma), gamma};
}

}  // namespace nvlev
