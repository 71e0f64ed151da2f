#pragma once

namespace cortex {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kDeg2Rad = kPi / 180.0;
inline constexpr double kRad2Deg = 180.0 / kPi;
inline constexpr double kInvSqrt2 = 0.70710678118654752440;

inline constexpr double kMuEarth = 3.986e14;        // m^3/s^2
inline constexpr double kEarthRadius = 6378137.0;   // m, umbra cylinder radius
inline constexpr double kJ2 = 1.08262668e-3;
inline constexpr double kG0 = 9.80665;              // m/s^2
inline constexpr double kAstronomicalUnit = 1.495978707e11;  // m

inline constexpr double kSecondsPerDay = 86400.0;
inline constexpr double kJdJ2000 = 2451545.0;

}  // namespace cortex
