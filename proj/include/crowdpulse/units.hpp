// Unit conventions: all internal frequencies are angular (rad/ns), all
// times are ns. Cyclic frequencies (GHz, MHz) appear only at the config
// boundary and are converted here.
#pragma once

#include <numbers>

namespace crowdpulse {

inline constexpr double pi = std::numbers::pi;
inline constexpr double two_pi = 2.0 * std::numbers::pi;

constexpr double ghz_to_radns(double f_ghz) { return two_pi * f_ghz; }
constexpr double mhz_to_radns(double f_mhz) { return two_pi * 1e-3 * f_mhz; }
constexpr double radns_to_ghz(double w) { return w / two_pi; }
constexpr double radns_to_mhz(double w) { return 1e3 * w / two_pi; }

}  // namespace crowdpulse
