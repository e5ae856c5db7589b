// Pulse-shape ansatzes (Hanning superpositions, Gaussians with optional
// derivative quadratures, sideband-modulated WahWah), the combined drive
// chi(t), the finite Fourier transform with closed forms on the Hanning
// basis, and the lowest-order spectral conditions that fix the drive
// amplitudes.
#pragma once

#include <cmath>
#include <complex>
#include <functional>
#include <stdexcept>
#include <variant>
#include <vector>

#include "crowdpulse/model.hpp"
#include "crowdpulse/quadrature.hpp"
#include "crowdpulse/units.hpp"

namespace crowdpulse {

class DegenerateShapeError : public std::runtime_error {
 public:
  explicit DegenerateShapeError(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {
// E(x) = integral of exp(i*x*t) over [0, tg] = tg * e^{i x tg/2} sinc(x tg/2).
inline cd phase_integral(double x, double tg) {
  const double z = 0.5 * x * tg;
  const double sinc = std::abs(z) < 1e-8 ? 1.0 - z * z / 6.0 : std::sin(z) / z;
  return tg * std::polar(sinc, z);
}

inline void check_pulse_time(double t, double tg) {
  if (t < -1e-12 || t > tg + 1e-12)
    throw std::domain_error("pulse envelope evaluated outside [0, tg]");
}
}  // namespace detail

// Superposition of Hanning windows, sum_n c_n (1 - cos(2*pi*n*t/tg)).
// The basis vanishes at t = 0 and t = tg exactly.
struct HanningShape {
  std::vector<cd> coeffs;  // c_1 ... c_N
  double tg = 0.0;

  HanningShape() = default;
  HanningShape(std::vector<cd> c, double gate_time) : coeffs(std::move(c)), tg(gate_time) {
    if (coeffs.empty()) throw std::invalid_argument("HanningShape: need N >= 1 coefficients");
    if (!(tg > 0.0)) throw std::invalid_argument("HanningShape: tg must be > 0");
  }

  cd envelope(double t) const {
    detail::check_pulse_time(t, tg);
    cd acc{0.0, 0.0};
    for (std::size_t n = 0; n < coeffs.size(); ++n)
      acc += coeffs[n] * (1.0 - std::cos(two_pi * double(n + 1) * t / tg));
    return acc;
  }

  // Closed-form finite Fourier transform; for window n only the dc and
  // cos(2*pi*n*t/tg) terms contribute.
  cd fourier(double rho) const {
    cd acc{0.0, 0.0};
    const cd e0 = detail::phase_integral(rho, tg);
    for (std::size_t n = 0; n < coeffs.size(); ++n) {
      const double wn = two_pi * double(n + 1) / tg;
      acc += coeffs[n] * (e0 - 0.5 * (detail::phase_integral(rho + wn, tg) +
                                      detail::phase_integral(rho - wn, tg)));
    }
    return acc;
  }
};

// Truncated Gaussian, shifted so the envelope starts and ends at zero.
// With drag_beta != 0 a derivative quadrature beta * d/dt is added in the
// imaginary part.
struct GaussianShape {
  double tg = 0.0;
  double sigma = 0.0;
  double drag_beta = 0.0;  // ns

  GaussianShape() = default;
  GaussianShape(double gate_time, double sig, double beta = 0.0)
      : tg(gate_time), sigma(sig), drag_beta(beta) {
    if (!(tg > 0.0) || !(sigma > 0.0))
      throw std::invalid_argument("GaussianShape: tg and sigma must be > 0");
  }

  double x_part(double t) const {
    const double u = t - 0.5 * tg;
    return std::exp(-u * u / (2.0 * sigma * sigma)) - boundary();
  }
  double x_dot(double t) const {
    const double u = t - 0.5 * tg;
    return -(u / (sigma * sigma)) * std::exp(-u * u / (2.0 * sigma * sigma));
  }
  double boundary() const { return std::exp(-tg * tg / (8.0 * sigma * sigma)); }

  cd envelope(double t) const {
    detail::check_pulse_time(t, tg);
    return cd{x_part(t), drag_beta * x_dot(t)};
  }
};

// Sideband-modulated Gaussian with a derivative quadrature; drives a
// rotation on qutrit 1 while idling the crowded qutrit 2. The Gaussian has
// sigma = tg/6, so the quadratures start and end close to (but not exactly
// at) zero, with an O(exp(-4.5)) truncation residual.
struct WahWahShape {
  double api = 0.0;      // rad/ns
  double tg = 0.0;       // ns
  double omega_x = 0.0;  // rad/ns sideband frequency
  double Delta = 0.0;    // rad/ns anharmonicity entering the -1/(2*Delta) quadrature

  WahWahShape() = default;
  WahWahShape(double amplitude, double gate_time, double sideband, double anharmonicity)
      : api(amplitude), tg(gate_time), omega_x(sideband), Delta(anharmonicity) {
    if (!(tg > 0.0)) throw std::invalid_argument("WahWahShape: tg must be > 0");
    if (Delta == 0.0) throw std::invalid_argument("WahWahShape: Delta must be nonzero");
  }

  double sigma() const { return tg / 6.0; }

  // Unit-amplitude in-phase part and its analytic derivative.
  double x_unit(double t) const {
    const double u = t - 0.5 * tg;
    const double s = sigma();
    return std::exp(-u * u / (2.0 * s * s)) * (1.0 - std::cos(omega_x * u));
  }
  double x_unit_dot(double t) const {
    const double u = t - 0.5 * tg;
    const double s = sigma();
    const double g = std::exp(-u * u / (2.0 * s * s));
    return -(u / (s * s)) * g * (1.0 - std::cos(omega_x * u)) +
           g * omega_x * std::sin(omega_x * u);
  }

  cd envelope(double t) const {
    detail::check_pulse_time(t, tg);
    return cd{x_unit(t), -x_unit_dot(t) / (2.0 * Delta)};
  }
};

using Shape = std::variant<HanningShape, GaussianShape, WahWahShape>;

inline cd shape_envelope(const Shape& s, double t) {
  return std::visit([&](const auto& sh) { return sh.envelope(t); }, s);
}

inline double shape_tg(const Shape& s) {
  return std::visit([](const auto& sh) { return sh.tg; }, s);
}

inline double quadrature_tolerance(double tg) { return 1e-12 * tg; }

// Finite Fourier transform S(Omega, rho) = integral of Omega(t) e^{i rho t}
// over [0, tg], by adaptive quadrature.
inline cd finite_fourier(const std::function<cd(double)>& envelope, double rho, double tg) {
  return quad::integrate(
      [&](double t) { return envelope(t) * std::polar(1.0, rho * t); }, 0.0, tg,
      quadrature_tolerance(tg));
}

// Shape-aware overload: Hanning uses the closed form, other shapes fall
// back to quadrature.
inline cd finite_fourier(const Shape& s, double rho) {
  if (const auto* h = std::get_if<HanningShape>(&s)) return h->fourier(rho);
  return finite_fourier([&](double t) { return shape_envelope(s, t); }, rho, shape_tg(s));
}

inline cd hanning_envelope(const HanningShape& s, double t) { return s.envelope(t); }

// The realized four-quadrature drive: two shaped tones at carriers
// omega_d1 = omega1 + Lambda1 and omega_d2 = omega2 + Lambda2, with the
// carrier beat gamma always derived from the parameter snapshot.
struct ControlField {
  Shape shape1;
  Shape shape2;
  cd a1{0.0, 0.0};
  cd a2{0.0, 0.0};
  double Lambda1 = 0.0;
  double Lambda2 = 0.0;
  double tg = 0.0;
  SystemParams params;          // nominal parameters the drive was built for
  double phi1 = 0.0, phi2 = 0.0;  // carrier phases, irrelevant after the RWA

  double gamma() const { return params.Delta - params.delta + Lambda1 - Lambda2; }
  double omega_d1() const { return params.omega1 + Lambda1; }
  double omega_d2() const { return params.omega2 + Lambda2; }

  cd chi(double t) const {
    return a1 * shape_envelope(shape1, t) +
           a2 * std::polar(1.0, gamma() * t) * shape_envelope(shape2, t);
  }

  // S(chi, rho); the second tone's beat shifts its argument by gamma.
  cd chi_fourier(double rho) const {
    return a1 * finite_fourier(shape1, rho) + a2 * finite_fourier(shape2, rho + gamma());
  }
};

inline cd chi(const ControlField& f, double t) { return f.chi(t); }

struct QuadratureSamples {
  double ex1 = 0.0, ey1 = 0.0, ex2 = 0.0, ey2 = 0.0;
};

inline QuadratureSamples realize_quadratures(const ControlField& f, double t) {
  const cd o1 = f.a1 * shape_envelope(f.shape1, t);
  const cd o2 = f.a2 * shape_envelope(f.shape2, t);
  return {o1.real(), o1.imag(), o2.real(), o2.imag()};
}

// Single-tone area condition: a = (theta/lambda1) / S(shape, -Lambda).
inline cd solve_amplitude_approx(const Shape& shape, cd theta, double lambda1,
                                 double Lambda) {
  if (theta == cd{0.0, 0.0}) return {0.0, 0.0};
  const double tg = shape_tg(shape);
  const cd s = finite_fourier(shape, -Lambda);
  if (std::abs(s) < 1e-9 * tg)
    throw DegenerateShapeError("solve_amplitude_approx: shape has (near-)zero area");
  return theta / lambda1 / s;
}

// Coupled amplitude conditions from the two working-transition integrals:
//   lambda1^(1) S(chi, -Lambda1)            = theta1
//   lambda1^(2) S(chi, delta-Delta-Lambda1) = theta2
// written as a 2x2 linear system in (a1, a2).
inline std::pair<cd, cd> solve_amplitudes_exact(const Shape& shape1, const Shape& shape2,
                                                const TargetRotation& target,
                                                const SystemParams& p, double Lambda1,
                                                double Lambda2) {
  const double tg = shape_tg(shape1);
  const double gamma = p.Delta - p.delta + Lambda1 - Lambda2;
  const cd m11 = finite_fourier(shape1, -Lambda1);
  const cd m12 = finite_fourier(shape2, -Lambda1 + gamma);  // = S(O2, Delta-delta-Lambda2)
  const cd m21 = finite_fourier(shape1, p.delta - p.Delta - Lambda1);
  const cd m22 = finite_fourier(shape2, p.delta - p.Delta - Lambda1 + gamma);  // = S(O2, -Lambda2)
  const cd b1 = target.theta1 / p.lambda1[0];
  const cd b2 = target.theta2 / p.lambda1[1];
  const cd det = m11 * m22 - m12 * m21;
  if (std::abs(m11) < 1e-9 * tg || std::abs(m22) < 1e-9 * tg ||
      std::abs(det) < 1e-9 * tg * tg)
    throw DegenerateShapeError("solve_amplitudes_exact: near-singular spectral system");
  return {(b1 * m22 - m12 * b2) / det, (m11 * b2 - b1 * m21) / det};
}

// Residuals of the four lowest-order spectral conditions; the working
// residuals r1, r3 vanish after amplitude solving, the leakage residuals
// r2, r4 are what numerical optimization suppresses.
inline std::array<cd, 4> magnus_condition_residuals(const ControlField& f,
                                                    const TargetRotation& target,
                                                    const SystemParams& p) {
  const EigenFrequencies d = eigenfrequencies(p, f.Lambda1);
  return {p.lambda1[0] * f.chi_fourier(d.d11) - target.theta1,
          p.lambda2[0] * f.chi_fourier(d.d21),
          p.lambda1[1] * f.chi_fourier(d.d12) - target.theta2,
          p.lambda2[1] * f.chi_fourier(d.d22)};
}

// WahWah quadratures at time t, including the amplitude:
//   ex = api * (gaussian - edge) * (1 - cos(omega_x (t - tg/2)))
//   ey = -d(ex)/dt / (2*Delta), evaluated analytically.
inline std::pair<double, double> wahwah_quadratures(const WahWahShape& s, double Delta,
                                                    double t) {
  detail::check_pulse_time(t, s.tg);
  return {s.api * s.x_unit(t), -s.api * s.x_unit_dot(t) / (2.0 * Delta)};
}

// Optimal normalized sideband frequency omega_x/delta as a function of the
// normalized gate time tg*delta/(2*pi). Only defined beyond the speed limit
// at tg_bar = 3/4.
inline double wahwah_sideband_model(double tg_bar) {
  if (tg_bar <= 0.75)
    throw std::domain_error("wahwah_sideband_model: tg_bar below the 3/4 speed limit");
  if (tg_bar <= 1.25) return 2.3 * std::erf(2.13 * std::sqrt(tg_bar - 0.75));
  return 2.3 * std::erf(2.13 / std::sqrt(2.0)) + 0.41 * (tg_bar - 1.25);
}

// Naive per-qubit resonant Gaussian pulses (sigma = tg/6, shifted to zero at
// the window edges), amplitudes from the single-tone area condition.
inline ControlField gaussian_baseline(double tg, const TargetRotation& target,
                                      const SystemParams& p, double beta = 0.0) {
  ControlField f;
  f.shape1 = GaussianShape(tg, tg / 6.0, beta);
  f.shape2 = GaussianShape(tg, tg / 6.0, beta);
  f.Lambda1 = 0.0;
  f.Lambda2 = 0.0;
  f.tg = tg;
  f.params = p;
  f.a1 = solve_amplitude_approx(f.shape1, target.theta1, p.lambda1[0], 0.0);
  f.a2 = solve_amplitude_approx(f.shape2, target.theta2, p.lambda1[1], 0.0);
  return f;
}

// Gaussian baseline with a derivative quadrature ey = beta * d(ex)/dt on
// both controls; beta is the single optimizable constant.
inline ControlField derivative_baseline(double tg, const TargetRotation& target,
                                        const SystemParams& p, double beta) {
  return gaussian_baseline(tg, target, p, beta);
}

// Builds a WahWah field on tone 1 (resonant, single tone, a1 = api).
inline ControlField wahwah_field(const WahWahShape& shape, const SystemParams& p) {
  ControlField f;
  WahWahShape unit = shape;
  f.shape1 = unit;
  f.shape2 = HanningShape({cd{0.0, 0.0}}, shape.tg);
  f.a1 = shape.api;
  f.a2 = {0.0, 0.0};
  f.Lambda1 = 0.0;
  f.Lambda2 = 0.0;
  f.tg = shape.tg;
  f.params = p;
  return f;
}

}  // namespace crowdpulse
