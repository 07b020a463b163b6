#pragma once

#include <numbers>

// Unit conventions used throughout: every rate, detuning and frequency is an
// angular frequency in rad/s inside the library. Configuration files, CSV
// outputs and reports use ordinary frequency (Hz) and degrees; the conversion
// happens exactly once, at the I/O boundary.

namespace rydsim {

inline constexpr double pi = std::numbers::pi;
inline constexpr double two_pi = 2.0 * std::numbers::pi;

// reduced Planck constant (J s), 2018 CODATA
inline constexpr double hbar = 1.054571817e-34;

constexpr double angular_from_hz(double f_hz) { return two_pi * f_hz; }
constexpr double hz_from_angular(double w_rad_s) { return w_rad_s / two_pi; }

constexpr double rad_from_deg(double deg) { return deg * pi / 180.0; }
constexpr double deg_from_rad(double rad) { return rad * 180.0 / pi; }

} // namespace rydsim
