#pragma once

// Ring surface Paul trap along the symmetry axis z: trapping height, secular
// frequency, Mathieu q and the pseudopotential well.

#include <cmath>
#include <vector>

#include <boost/math/tools/minima.hpp>

#include "nvlev/constants.hpp"
#include "nvlev/error.hpp"

namespace nvlev {

struct RingTrapGeometry {
  double a;  // inner radius, m
  double b;  // outer radius, m

  void validate() const {
    require(a > 0.0 && a < b, Errc::InvalidArgument, "ring geometry requires 0 < a < b");
  }
};

struct TrapDrive {
  double voltage;    // V_d, V (amplitude)
  double frequency;  // f_d, Hz

  void validate() const {
    require(voltage > 0.0 && frequency > 0.0, Errc::InvalidArgument, "trap drive needs V_d > 0 and f_d > 0");
  }
};

struct ChargedParticle {
  double charge;   // C, signed
  double mass;     // kg
  double radius;   // m
  double density;  // kg/m^3

  static ChargedParticle sphere(double charge, double radius, double density) {
    require(radius > 0.0 && density > 0.0, Errc::InvalidArgument, "particle radius and density must be positive");
    return {charge, 4.0 / 3.0 * kPi * radius * radius * radius * density, radius, density};
  }

  void validate() const {
    require(mass > 0.0 && radius > 0.0 && density > 0.0, Errc::InvalidArgument,
            "particle mass, radius and density must be positive");
    const double expected = 4.0 / 3.0 * kPi * radius * radius * radius * density;
    require(std::abs(mass - expected) <= 1e-9 * expected, Errc::InvalidArgument,
            "particle mass inconsistent with radius and density");
  }
};

struct TrapCharacterization {
  double z0;       // m
  double omega_z;  // rad/s
  double q_z;
  double depth;    // eV
  double depth_position;  // m, barrier location above z0
};

/// f(a, b) in 1/m^2: |d/dz| of the on-axis field shape at z0.
inline double geometric_factor(const RingTrapGeometry& g) {
  g.validate();
  const double a23 = std::cbrt(g.a * g.a), b23 = std::cbrt(g.b * g.b);
  const double a43 = a23 * a23, b43 = b23 * b23;
  const double num = 9.0 * std::pow(b23 - a23, 2) * std::pow(b23 + a23, 6);
  const double den = a43 * b43 * std::pow(a43 + a23 * b23 + b43, 5);
  return std::sqrt(num / den);
}

/// Height of the field null above the ring plane.
inline double trap_height(const RingTrapGeometry& g) {
  g.validate();
  const double a23 = std::cbrt(g.a * g.a), b23 = std::cbrt(g.b * g.b);
  return std::sqrt(a23 * a23 * b23 * b23 / (a23 + b23));
}

struct SecularResult {
  double omega_z;  // rad/s
  double q_z;
};

inline SecularResult secular_frequency(const RingTrapGeometry& g, const TrapDrive& d, const ChargedParticle& p) {
  d.validate();
  require(p.mass > 0.0, Errc::InvalidArgument, "particle mass must be positive");
  const double wz = std::abs(p.charge) * d.voltage * geometric_factor(g) / (2.0 * std::sqrt(2.0) * kPi * p.mass * d.frequency);
  return {wz, 2.0 * std::sqrt(2.0) * wz / (kTwoPi * d.frequency)};
}

struct StabilityResult {
  bool stable;
  double margin;  // 0.908 - q
};

inline constexpr double kMathieuQLimit = 0.908;

inline StabilityResult stability_check(double q_z) {
  require(q_z >= 0.0, Errc::InvalidArgument, "q_z must be non-negative");
  return {q_z < kMathieuQLimit, kMathieuQLimit - q_z};
}

namespace detail {

// d/dz of z/sqrt(z^2+a^2) - z/sqrt(z^2+b^2).
inline double ring_field_shape(const RingTrapGeometry& g, double z) {
  return g.a * g.a / std::pow(z * z + g.a * g.a, 1.5) - g.b * g.b / std::pow(z * z + g.b * g.b, 1.5);
}

inline double pseudopotential_prefactor(const TrapDrive& d, const ChargedParticle& p) {
  return p.charge * p.charge * d.voltage * d.voltage / (16.0 * kPi * kPi * p.mass * d.frequency * d.frequency);
}

}  // namespace detail

/// Full on-axis pseudopotential at height z, in eV.
inline double pseudopotential(const RingTrapGeometry& g, const TrapDrive& d, const ChargedParticle& p, double z) {
  const double e = detail::ring_field_shape(g, z);
  return detail::pseudopotential_prefactor(d, p) * e * e / kJoulePerEv;
}

/// Harmonic approximation (1/2) m omega_z^2 (z - z0)^2, in eV.
inline double pseudopotential_harmonic(const RingTrapGeometry& g, const TrapDrive& d, const ChargedParticle& p,
                                       double z) {
  const double f = geometric_factor(g);
  const double dz = z - trap_height(g);
  return detail::pseudopotential_prefactor(d, p) * f * f * dz * dz / kJoulePerEv;
}

enum class PotentialModel { full, harmonic };

inline std::vector<double> pseudopotential_profile(const RingTrapGeometry& g, const TrapDrive& d,
                                                   const ChargedParticle& p, const std::vector<double>& z_grid,
                                                   PotentialModel model = PotentialModel::full) {
  g.validate();
  d.validate();
  std::vector<double> v(z_grid.size());
  for (std::size_t i = 0; i < z_grid.size(); ++i) {
    require(z_grid[i] > 0.0, Errc::InvalidArgument, "pseudopotential_profile: z must be positive");
    v[i] = model == PotentialModel::full ? pseudopotential(g, d, p, z_grid[i])
                                         : pseudopotential_harmonic(g, d, p, z_grid[i]);
  }
  return v;
}

struct WellDepth {
  double depth;     // eV
  double position;  // m
};

/// Escape barrier along +z: maximum of the pseudopotential above z0
/// (the potential vanishes as z -> infinity).
inline WellDepth well_depth(const RingTrapGeometry& g, const TrapDrive& d, const ChargedParticle& p) {
  const double z0 = trap_height(g);
  // Coarse log scan to isolate the hump, then Brent refinement.
  const int n = 400;
  const double zmax = 100.0 * g.b;
  double best_z = z0, best_v = 0.0;
  int best_i = 0;
  for (int i = 1; i <= n; ++i) {
    const double z = z0 * std::pow(zmax / z0, double(i) / n);
    const double v = pseudopotential(g, d, p, z);
    if (v > best_v) { best_v = v; best_z = z; best_i = i; }
  }
  const double lo = z0 * std::pow(zmax / z0, double(std::max(best_i - 1, 0)) / n);
  const double hi = z0 * std::pow(zmax / z0, double(std::min(best_i + 1, n)) / n);
  const auto r = boost::math::tools::brent_find_minima(
      [&](double z) { return -pseudopotential(g, d, p, z); }, lo, hi, 52);
  if (-r.second > best_v) { best_v = -r.second; best_z = r.first; }
  return {best_v, best_z};
}

inline TrapCharacterization characterize_trap(const RingTrapGeometry& g, const TrapDrive& d, const ChargedParticle& p) {
  const auto sec = secular_frequency(g, d, p);
  const auto w = well_depth(g, d, p);
  return {trap_height(g), sec.omega_z, sec.q_z, w.depth, w.position};
}

}  // namespace nvlev
