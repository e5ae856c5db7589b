// Shared test fixtures.
#pragma once

#include <vector>

#include <crowdpulse/model.hpp>
#include <crowdpulse/pulses.hpp>
#include <crowdpulse/units.hpp>

namespace testutil {

// The crowded two-transmon system used throughout: omega/2pi = 5.508 and
// 5.903 GHz, Delta/2pi = -350 MHz, giving delta/2pi = 45 MHz.
inline crowdpulse::SystemParams params() {
  return crowdpulse::SystemParams::from_frequencies(
      crowdpulse::ghz_to_radns(5.508), crowdpulse::ghz_to_radns(5.903),
      crowdpulse::mhz_to_radns(-350.0));
}

inline crowdpulse::ControlField field(const crowdpulse::SystemParams& p, double tg,
                                      std::vector<crowdpulse::cd> c1,
                                      std::vector<crowdpulse::cd> c2, double L1,
                                      double L2, const crowdpulse::TargetRotation& target,
                                      bool exact = false) {
  using namespace crowdpulse;
  ControlField f;
  f.shape1 = HanningShape(std::move(c1), tg);
  f.shape2 = HanningShape(std::move(c2), tg);
  f.Lambda1 = L1;
  f.Lambda2 = L2;
  f.tg = tg;
  f.params = p;
  if (exact) {
    auto [a1, a2] = solve_amplitudes_exact(f.shape1, f.shape2, target, p, L1, L2);
    f.a1 = a1;
    f.a2 = a2;
  } else {
    f.a1 = solve_amplitude_approx(f.shape1, target.theta1, p.lambda1[0], L1);
    f.a2 = solve_amplitude_approx(f.shape2, target.theta2, p.lambda1[1], L2);
  }
  return f;
}

}  // namespace testutil
