#pragma once

#include <numbers>

namespace nvlev {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

// CODATA 2018 exact / recommended values, SI.
inline constexpr double kBoltzmann = 1.380649e-23;         // J/K
inline constexpr double kHbar = 1.054571817e-34;           // J s
inline constexpr double kSpeedOfLight = 299792458.0;       // m/s
inline constexpr double kElementaryCharge = 1.602176634e-19;  // C
inline constexpr double kAtomicMassUnit = 1.66053906660e-27;  // kg
inline constexpr double kZeta5 = 1.0369277551433699;       // Riemann zeta(5)

// Fixed unit conversions used at every I/O boundary.
inline constexpr double kPascalPerTorr = 133.322;
inline constexpr double kPascalPerBar = 1.0e5;
inline constexpr double kTeslaPerGauss = 1.0e-4;
inline constexpr double kWattPerM2PerWattPerMm2 = 1.0e6;
inline constexpr double kPerMeterPerPerCm = 100.0;
inline constexpr double kJoulePerEv = kElementaryCharge;

// NV defaults (angular units, rad/s and rad/s/T).
inline constexpr double kGammaElectron = kTwoPi * 28.024e9;  // g mu_B / hbar
inline constexpr double kGammaN14 = kTwoPi * 3.077e6;
inline constexpr double kZeroFieldSplitting = kTwoPi * 2.870e9;

// Mean molecular mass of dry air.
inline constexpr double kAirMolecularMass = 28.97 * kAtomicMassUnit;

constexpr double torr_to_pa(double torr) { return torr * kPascalPerTorr; }
constexpr double pa_to_torr(double pa) { return pa / kPascalPerTorr; }
constexpr double deg_to_rad(double deg) { return deg * kPi / 180.0; }
constexpr double rad_to_deg(double rad) { return rad * 180.0 / kPi; }
constexpr double hz_to_rad_s(double hz) { return kTwoPi * hz; }
constexpr double rad_s_to_hz(double w) { return w / kTwoPi; }

}  // namespace nvlev
