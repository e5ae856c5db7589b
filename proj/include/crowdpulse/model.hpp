// Physical model of two frequency-crowded three-level transmons: system
// parameters, frame transformations, the interaction- and rotating-frame
// Hamiltonians after the RWA, and the target rotation unitaries.
#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <stdexcept>

#include "crowdpulse/linalg.hpp"
#include "crowdpulse/units.hpp"

namespace crowdpulse {

// Angular frequencies in rad/ns. The crowding relation
//   omega2 + Delta = omega1 + delta
// ties the four frequencies together; delta is always derived, never set
// independently of the other three.
struct SystemParams {
  static constexpr int levels = 3;

  double omega1 = 0.0;     // qutrit 1 working transition
  double omega2 = 0.0;     // qutrit 2 working transition
  double Delta = 0.0;      // anharmonicity, negative for transmons
  double delta = 0.0;      // crowding frequency, derived
  std::array<double, 2> lambda1{1.0, 1.0};                    // |0>-|1> drive weight
  std::array<double, 2> lambda2{std::sqrt(2.0), std::sqrt(2.0)};  // |1>-|2> drive weight

  static SystemParams from_frequencies(double omega1, double omega2, double Delta,
                                       std::array<double, 2> lambda1 = {1.0, 1.0},
                                       std::array<double, 2> lambda2 = {std::sqrt(2.0),
                                                                        std::sqrt(2.0)}) {
    SystemParams p;
    p.omega1 = omega1;
    p.omega2 = omega2;
    p.Delta = Delta;
    p.delta = omega2 + Delta - omega1;
    p.lambda1 = lambda1;
    p.lambda2 = lambda2;
    p.validate();
    return p;
  }

  static SystemParams from_crowding(double omega1, double Delta, double delta,
                                    std::array<double, 2> lambda1 = {1.0, 1.0},
                                    std::array<double, 2> lambda2 = {std::sqrt(2.0),
                                                                     std::sqrt(2.0)}) {
    return from_frequencies(omega1, omega1 + delta - Delta, Delta, lambda1, lambda2);
  }

  // Deviated copies for robustness scans; omega2 is recomputed so the
  // crowding relation keeps holding.
  SystemParams with_crowding(double new_delta) const {
    return from_crowding(omega1, Delta, new_delta, lambda1, lambda2);
  }
  SystemParams with_anharmonicity(double new_Delta) const {
    return from_crowding(omega1, new_Delta, delta, lambda1, lambda2);
  }

  void validate() const {
    if (!(delta > 0.0)) throw std::invalid_argument("SystemParams: delta must be > 0");
    if (Delta == 0.0) throw std::invalid_argument("SystemParams: Delta must be nonzero");
    for (int k = 0; k < 2; ++k)
      if (!(lambda1[k] > 0.0) || !(lambda2[k] > 0.0))
        throw std::invalid_argument("SystemParams: lambda weights must be > 0");
  }
};

// The four interaction-frame transition detunings delta_j^(k).
struct EigenFrequencies {
  double d11 = 0.0;  // qutrit 1, |0>-|1>
  double d21 = 0.0;  // qutrit 1, |1>-|2>
  double d12 = 0.0;  // qutrit 2, |0>-|1>
  double d22 = 0.0;  // qutrit 2, |1>-|2>
};

inline EigenFrequencies eigenfrequencies(const SystemParams& p, double Lambda1) {
  EigenFrequencies f;
  f.d11 = -Lambda1;
  f.d21 = p.Delta - Lambda1;
  f.d12 = p.delta - p.Delta - Lambda1;
  f.d22 = p.delta - Lambda1;
  return f;
}

// Per-level frame frequencies omega_j^(k) defining the diagonal frame map
// R(t). Rotating: omega_j = j*omega_d1. Interaction: omega_j = j*omega^(k)
// plus the anharmonic shift on level 2.
struct FrameSpec {
  enum class Kind { Rotating, Interaction };
  Kind kind = Kind::Interaction;
  std::array<std::array<double, 3>, 2> level_freq{};  // [qutrit][level]

  static FrameSpec rotating(double omega_d1) {
    FrameSpec f;
    f.kind = Kind::Rotating;
    for (int k = 0; k < 2; ++k)
      f.level_freq[k] = {0.0, omega_d1, 2.0 * omega_d1};
    return f;
  }

  static FrameSpec interaction(const SystemParams& p) {
    FrameSpec f;
    f.kind = Kind::Interaction;
    f.level_freq[0] = {0.0, p.omega1, 2.0 * p.omega1 + p.Delta};
    f.level_freq[1] = {0.0, p.omega2, 2.0 * p.omega2 + p.Delta};
    return f;
  }
};

// R(t) = kron of per-qutrit diag(exp(-i*omega_j^(k)*t)).
inline Matrix9c frame_matrix(const FrameSpec& frame, double t) {
  Matrix3c r1 = Matrix3c::Zero(), r2 = Matrix3c::Zero();
  for (int j = 0; j < 3; ++j) {
    r1(j, j) = std::polar(1.0, -frame.level_freq[0][j] * t);
    r2(j, j) = std::polar(1.0, -frame.level_freq[1][j] * t);
  }
  return kron(r1, r2);
}

// Maps a unitary computed in the source frame: U -> R(tg) U R(0)^dagger.
inline Matrix9c transform_frame(const Matrix9c& u, const FrameSpec& frame, double tg) {
  return frame_matrix(frame, tg) * u * frame_matrix(frame, 0.0).adjoint();
}

// Complex rotation angles; Re(theta) drives the X component of the axis,
// Im(theta) the Y component. Angles beyond |theta| = 2*pi are rejected:
// multi-turn targets are expressed by gate sequencing instead.
struct TargetRotation {
  cd theta1{0.0, 0.0};
  cd theta2{0.0, 0.0};

  TargetRotation() = default;
  TargetRotation(cd t1, cd t2) : theta1(t1), theta2(t2) {
    if (std::abs(t1) > two_pi || std::abs(t2) > two_pi)
      throw std::invalid_argument("TargetRotation: |theta| must be <= 2*pi");
  }
};

// Interaction Hamiltonian pair H_I^(1), H_I^(2) at time t for combined drive
// value chi. Entry (j, j-1) is (chi/2)*lambda_j^(k)*exp(i*delta_j^(k)*t);
// the diagonal vanishes. The two-qutrit generator is H1 (x) 1 + 1 (x) H2.
inline std::pair<Matrix3c, Matrix3c> interaction_hamiltonian(const SystemParams& p,
                                                             double Lambda1, cd chi,
                                                             double t) {
  const EigenFrequencies f = eigenfrequencies(p, Lambda1);
  const cd half = 0.5 * chi;
  auto build = [&](double lam1, double lam2, double d1, double d2) {
    Matrix3c h = Matrix3c::Zero();
    h(1, 0) = half * lam1 * std::polar(1.0, d1 * t);
    h(2, 1) = half * lam2 * std::polar(1.0, d2 * t);
    h(0, 1) = std::conj(h(1, 0));
    h(1, 2) = std::conj(h(2, 1));
    return h;
  };
  return {build(p.lambda1[0], p.lambda2[0], f.d11, f.d21),
          build(p.lambda1[1], p.lambda2[1], f.d12, f.d22)};
}

// Rotating-frame (at omega_d1) Hamiltonian after the RWA: static projector
// diagonal plus the chi/2 coupling ladder on both qutrits, embedded in 9x9.
inline Matrix9c rotating_hamiltonian(const SystemParams& p, double Lambda1, cd chi,
                                     double t) {
  (void)t;  // the rotating-frame generator depends on t only through chi
  const cd half = 0.5 * chi;
  auto build = [&](double e1, double e2, double lam1, double lam2) {
    Matrix3c h = Matrix3c::Zero();
    h(1, 1) = e1;
    h(2, 2) = e2;
    h(1, 0) = half * lam1;
    h(2, 1) = half * lam2;
    h(0, 1) = std::conj(h(1, 0));
    h(1, 2) = std::conj(h(2, 1));
    return h;
  };
  const Matrix3c h1 =
      build(-Lambda1, p.Delta - 2.0 * Lambda1, p.lambda1[0], p.lambda2[0]);
  const Matrix3c h2 = build(p.delta - p.Delta - Lambda1,
                            2.0 * p.delta - p.Delta - 2.0 * Lambda1, p.lambda1[1],
                            p.lambda2[1]);
  return kron(h1, Matrix3c::Identity()) + kron(Matrix3c::Identity(), h2);
}

// One-qutrit target block exp(-i/2 [[0, theta, 0], [theta*, 0, 0], [0,0,0]]);
// the leakage level idles with zero phase.
inline Matrix3c target_block(cd theta) {
  return expm_i_coupling(std::conj(theta) / 2.0, cd{0.0, 0.0}, 1.0);
}

inline Matrix9c target_unitary(const TargetRotation& target) {
  return kron(target_block(target.theta1), target_block(target.theta2));
}

}  // namespace crowdpulse
