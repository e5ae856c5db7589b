// Time-ordered propagation of the interaction-frame Hamiltonian and
// numerical Magnus terms. Steppers: piecewise-constant midpoint
// exponentiation (2nd order), a commutator-free 4th-order two-node scheme
// (default), and classic RK4. The per-qutrit coupling structure admits a
// closed-form step exponential, which keeps optimization loops cheap.
#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "crowdpulse/linalg.hpp"
#include "crowdpulse/model.hpp"
#include "crowdpulse/pulses.hpp"

namespace crowdpulse {

enum class Method { PiecewiseExpMidpoint, Rk4, MagnusCf4 };

struct PropagationGrid {
  double tg = 0.0;
  int steps = 4096;
  Method method = Method::MagnusCf4;

  PropagationGrid() = default;
  PropagationGrid(double gate_time, int n, Method m = Method::MagnusCf4)
      : tg(gate_time), steps(n), method(m) {
    validate();
  }

  void validate() const {
    if (!(tg > 0.0)) throw std::invalid_argument("PropagationGrid: tg must be > 0");
    if (steps < 16) throw std::invalid_argument("PropagationGrid: need steps >= 16");
  }

  // Power-of-two step count >= max(4096, tg/0.01ns); halving/doubling stays
  // grid-aligned for Richardson checks.
  static PropagationGrid defaults(double tg) {
    int steps = 4096;
    while (steps * 0.01 < tg) steps *= 2;
    return PropagationGrid(tg, steps, Method::MagnusCf4);
  }

  double h() const { return tg / steps; }
};

namespace detail {

inline constexpr double cf4_c1 = 0.5 - 0.2886751345948129;  // 1/2 -+ sqrt(3)/6
inline constexpr double cf4_c2 = 0.5 + 0.2886751345948129;
inline constexpr double cf4_a1 = 0.25 + 0.2886751345948129;
inline constexpr double cf4_a2 = 0.25 - 0.2886751345948129;

template <typename M>
void require_hermitian(const M& h) {
  const double scale = 1.0 + h.cwiseAbs().maxCoeff();
  if (hermiticity_defect(h) > 1e-12 * scale)
    throw std::invalid_argument("propagate: sampled Hamiltonian is not Hermitian");
}

// Unit-modulus phasor walked along a uniform time grid, renormalized
// periodically against direct evaluation.
struct Phasor {
  cd value{1.0, 0.0};
  cd step{1.0, 0.0};
  double omega = 0.0;
  double t0 = 0.0;
  double dt = 0.0;
  int k = 0;

  void init(double w, double start, double increment) {
    omega = w;
    t0 = start;
    dt = increment;
    k = 0;
    value = std::polar(1.0, omega * t0);
    step = std::polar(1.0, omega * dt);
  }
  cd advance() {
    const cd out = value;
    ++k;
    if (k % 512 == 0)
      value = std::polar(1.0, omega * (t0 + k * dt));
    else
      value *= step;
    return out;
  }
};

}  // namespace detail

using HamiltonianSampler3 = std::function<Matrix3c(double)>;
using HamiltonianSampler9 = std::function<Matrix9c(double)>;

// Generic propagation of a 3x3 Hermitian sampler over [0, tg].
inline Matrix3c propagate_qutrit(const HamiltonianSampler3& hamiltonian,
                                 const PropagationGrid& grid) {
  grid.validate();
  const double h = grid.h();
  Matrix3c u = Matrix3c::Identity();
  auto sample = [&](double t) {
    Matrix3c m = hamiltonian(t);
    detail::require_hermitian(m);
    return m;
  };
  for (int k = 0; k < grid.steps; ++k) {
    const double t = k * h;
    switch (grid.method) {
      case Method::PiecewiseExpMidpoint: {
        u = expm_i_hermitian<Matrix3c>(sample(t + 0.5 * h), h) * u;
        break;
      }
      case Method::MagnusCf4: {
        const Matrix3c h1 = sample(t + detail::cf4_c1 * h);
        const Matrix3c h2 = sample(t + detail::cf4_c2 * h);
        const Matrix3c e1 = expm_i_hermitian<Matrix3c>(
            Matrix3c(detail::cf4_a1 * h1 + detail::cf4_a2 * h2), h);
        const Matrix3c e2 = expm_i_hermitian<Matrix3c>(
            Matrix3c(detail::cf4_a2 * h1 + detail::cf4_a1 * h2), h);
        u = e2 * (e1 * u);
        break;
      }
      case Method::Rk4: {
        const Matrix3c ht = sample(t);
        const Matrix3c hm = sample(t + 0.5 * h);
        const Matrix3c he = sample(t + h);
        const Matrix3c k1 = -ci * (ht * u);
        const Matrix3c k2 = -ci * (hm * (u + 0.5 * h * k1));
        const Matrix3c k3 = -ci * (hm * (u + 0.5 * h * k2));
        const Matrix3c k4 = -ci * (he * (u + h * k3));
        u += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        break;
      }
    }
  }
  return u;
}

// Same loop on the full 9x9 space; used as the tensor-structure oracle and
// for rotating-frame propagation.
inline Matrix9c propagate_full(const HamiltonianSampler9& hamiltonian,
                               const PropagationGrid& grid) {
  grid.validate();
  const double h = grid.h();
  Matrix9c u = Matrix9c::Identity();
  auto sample = [&](double t) {
    Matrix9c m = hamiltonian(t);
    detail::require_hermitian(m);
    return m;
  };
  for (int k = 0; k < grid.steps; ++k) {
    const double t = k * h;
    switch (grid.method) {
      case Method::PiecewiseExpMidpoint:
        u = expm_i_hermitian<Matrix9c>(sample(t + 0.5 * h), h) * u;
        break;
      case Method::MagnusCf4: {
        const Matrix9c h1 = sample(t + detail::cf4_c1 * h);
        const Matrix9c h2 = sample(t + detail::cf4_c2 * h);
        u = expm_i_hermitian<Matrix9c>(
                Matrix9c(detail::cf4_a2 * h1 + detail::cf4_a1 * h2), h) *
            (expm_i_hermitian<Matrix9c>(
                 Matrix9c(detail::cf4_a1 * h1 + detail::cf4_a2 * h2), h) *
             u);
        break;
      }
      case Method::Rk4: {
        const Matrix9c ht = sample(t);
        const Matrix9c hm = sample(t + 0.5 * h);
        const Matrix9c he = sample(t + h);
        const Matrix9c k1 = -ci * (ht * u);
        const Matrix9c k2 = -ci * (hm * (u + 0.5 * h * k1));
        const Matrix9c k3 = -ci * (hm * (u + 0.5 * h * k2));
        const Matrix9c k4 = -ci * (he * (u + h * k3));
        u += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        break;
      }
    }
  }
  return u;
}

namespace detail {

// Stepping engine for the pair of interaction-frame qutrits under a shared
// drive. Couplings at node time t are
//   w1^(k) = (chi/2) lambda_1^(k) e^{i d1k t},  w2^(k) = (chi/2) lambda_2^(k) e^{i d2k t}
// and every step factor is a closed-form coupling exponential. The drive is
// queried as chi(step, family, t) where family 0/1 distinguishes the two
// quadrature nodes of the 4th-order scheme; node times start at t0. Visitor
// receives the two 3x3 step unitaries.
template <typename ChiNodeFn, typename Visitor>
void pair_steps(const ChiNodeFn& chi, const SystemParams& p, const EigenFrequencies& d,
                const PropagationGrid& grid, double t0, Visitor&& visit) {
  grid.validate();
  const double h = grid.h();
  const bool cf4 = grid.method == Method::MagnusCf4;
  if (!cf4 && grid.method != Method::PiecewiseExpMidpoint)
    throw std::invalid_argument("pair_steps: unsupported method");

  struct NodeFamily {
    Phasor p11, p21, p12, p22;
    void init(const EigenFrequencies& d, double start, double dt) {
      p11.init(d.d11, start, dt);
      p21.init(d.d21, start, dt);
      p12.init(d.d12, start, dt);
      p22.init(d.d22, start, dt);
    }
  };

  NodeFamily fam_a, fam_b;
  if (cf4) {
    fam_a.init(d, t0 + cf4_c1 * h, h);
    fam_b.init(d, t0 + cf4_c2 * h, h);
  } else {
    fam_a.init(d, t0 + 0.5 * h, h);
  }

  struct NodeW {
    cd w11, w21, w12, w22;  // [transition][qutrit]
  };
  auto eval_node = [&](NodeFamily& fam, int k, int family, double t) {
    const cd half = 0.5 * chi(k, family, t);
    NodeW w;
    w.w11 = half * p.lambda1[0] * fam.p11.advance();
    w.w21 = half * p.lambda2[0] * fam.p21.advance();
    w.w12 = half * p.lambda1[1] * fam.p12.advance();
    w.w22 = half * p.lambda2[1] * fam.p22.advance();
    return w;
  };

  for (int k = 0; k < grid.steps; ++k) {
    const double t = t0 + k * h;
    Matrix3c s1, s2;
    if (cf4) {
      const NodeW wa = eval_node(fam_a, k, 0, t + cf4_c1 * h);
      const NodeW wb = eval_node(fam_b, k, 1, t + cf4_c2 * h);
      const cd f1 = h * cd(cf4_a1), f2 = h * cd(cf4_a2);
      s1 = expm_i_coupling(f2 * wa.w11 + f1 * wb.w11, f2 * wa.w21 + f1 * wb.w21, 1.0) *
           expm_i_coupling(f1 * wa.w11 + f2 * wb.w11, f1 * wa.w21 + f2 * wb.w21, 1.0);
      s2 = expm_i_coupling(f2 * wa.w12 + f1 * wb.w12, f2 * wa.w22 + f1 * wb.w22, 1.0) *
           expm_i_coupling(f1 * wa.w12 + f2 * wb.w12, f1 * wa.w22 + f2 * wb.w22, 1.0);
    } else {
      const NodeW w = eval_node(fam_a, k, 0, t + 0.5 * h);
      s1 = expm_i_coupling(w.w11, w.w21, h);
      s2 = expm_i_coupling(w.w12, w.w22, h);
    }
    visit(s1, s2, t + h);
  }
}

}  // namespace detail

// Per-qutrit propagation of a drive chi(t) with explicit transition
// detunings, starting at time t0; returns the two 3x3 blocks.
template <typename ChiFn>
std::pair<Matrix3c, Matrix3c> propagate_pair_blocks_detuned(const ChiFn& chi,
                                                            const SystemParams& p,
                                                            const EigenFrequencies& d,
                                                            const PropagationGrid& grid,
                                                            double t0 = 0.0) {
  Matrix3c u1 = Matrix3c::Identity();
  Matrix3c u2 = Matrix3c::Identity();
  detail::pair_steps([&](int, int, double t) { return chi(t); }, p, d, grid, t0,
                     [&](const Matrix3c& s1, const Matrix3c& s2, double) {
                       u1 = s1 * u1;
                       u2 = s2 * u2;
                     });
  return {u1, u2};
}

template <typename ChiFn>
std::pair<Matrix3c, Matrix3c> propagate_pair_blocks_fn(const ChiFn& chi,
                                                       const SystemParams& p,
                                                       double Lambda1,
                                                       const PropagationGrid& grid,
                                                       double t0 = 0.0) {
  if (grid.method == Method::Rk4) {
    auto sampler = [&](int qutrit) {
      return [&, qutrit](double t) -> Matrix3c {
        auto [h1, h2] = interaction_hamiltonian(p, Lambda1, chi(t0 + t), t0 + t);
        return qutrit == 0 ? h1 : h2;
      };
    };
    return {propagate_qutrit(sampler(0), grid), propagate_qutrit(sampler(1), grid)};
  }
  return propagate_pair_blocks_detuned(chi, p, eigenfrequencies(p, Lambda1), grid, t0);
}

// Node-indexed variant for precomputed drives (e.g. filtered waveforms).
template <typename ChiNodeFn>
std::pair<Matrix3c, Matrix3c> propagate_pair_blocks_nodes(const ChiNodeFn& chi_node,
                                                          const SystemParams& p,
                                                          double Lambda1,
                                                          const PropagationGrid& grid,
                                                          double t0 = 0.0) {
  Matrix3c u1 = Matrix3c::Identity();
  Matrix3c u2 = Matrix3c::Identity();
  detail::pair_steps(chi_node, p, eigenfrequencies(p, Lambda1), grid, t0,
                     [&](const Matrix3c& s1, const Matrix3c& s2, double) {
                       u1 = s1 * u1;
                       u2 = s2 * u2;
                     });
  return {u1, u2};
}

inline std::pair<Matrix3c, Matrix3c> propagate_pair_blocks(const ControlField& field,
                                                           const SystemParams& p,
                                                           double Lambda1,
                                                           const PropagationGrid& grid) {
  return propagate_pair_blocks_fn([&](double t) { return field.chi(t); }, p, Lambda1,
                                  grid);
}

// U^(1) (x) U^(2) from independent per-qutrit propagation.
inline Matrix9c propagate_pair(const ControlField& field, const SystemParams& p,
                               double Lambda1, const PropagationGrid& grid) {
  auto [u1, u2] = propagate_pair_blocks(field, p, Lambda1, grid);
  return kron(u1, u2);
}

// First two Magnus terms, the accumulated norm integral and the sufficient
// convergence flag (integral < pi).
template <typename M>
struct MagnusTermsT {
  M theta0;
  M theta1;
  double norm_integral = 0.0;
  bool sufficient = false;
};

using MagnusTerms = MagnusTermsT<Matrix3c>;
using MagnusTerms9 = MagnusTermsT<Matrix9c>;

// Midpoint-cell evaluation of Theta0 = int H dt and
// Theta1 = -(i/2) int dt2 int_0^{t2} dt1 [H(t2), H(t1)]; within a cell the
// self-commutator vanishes, so piecewise-constant Hamiltonians with jumps on
// grid nodes are integrated exactly.
template <typename M>
MagnusTermsT<M> magnus_terms_impl(const std::function<M(double)>& hamiltonian,
                                  const PropagationGrid& grid) {
  grid.validate();
  const double h = grid.h();
  M cum = M::Zero();
  M theta1_acc = M::Zero();
  double norm_int = 0.0;
  for (int k = 0; k < grid.steps; ++k) {
    M hm = hamiltonian((k + 0.5) * h);
    detail::require_hermitian(hm);
    theta1_acc += (hm * cum - cum * hm) * h;
    cum += hm * h;
    Eigen::SelfAdjointEigenSolver<M> es(hm, Eigen::EigenvaluesOnly);
    norm_int += es.eigenvalues().cwiseAbs().maxCoeff() * h;
  }
  MagnusTermsT<M> out;
  out.theta0 = cum;
  out.theta1 = cd{0.0, -0.5} * theta1_acc;
  out.norm_integral = norm_int;
  out.sufficient = norm_int < pi;
  return out;
}

inline MagnusTerms magnus_terms(const HamiltonianSampler3& hamiltonian,
                                const PropagationGrid& grid) {
  return magnus_terms_impl<Matrix3c>(hamiltonian, grid);
}
inline MagnusTerms9 magnus_terms(const HamiltonianSampler9& hamiltonian,
                                 const PropagationGrid& grid) {
  return magnus_terms_impl<Matrix9c>(hamiltonian, grid);
}

struct TrajectorySample {
  double t = 0.0;
  Vector9c state;
  double p_comp = 0.0;  // population inside the computational subspace
};

inline double computational_population(const Vector9c& psi) {
  // computational indices {|00>,|01>,|10>,|11>} = {0,1,3,4}
  return std::norm(psi(0)) + std::norm(psi(1)) + std::norm(psi(3)) + std::norm(psi(4));
}

// State evolution sampled roughly every sample_dt; norm is preserved by the
// unitary step factors.
inline std::vector<TrajectorySample> state_trajectory(const ControlField& field,
                                                      const SystemParams& p,
                                                      double Lambda1,
                                                      const PropagationGrid& grid,
                                                      const Vector9c& initial,
                                                      double sample_dt = 0.1) {
  if (std::abs(initial.norm() - 1.0) > 1e-9)
    throw std::invalid_argument("state_trajectory: initial state must be normalized");
  const int stride = std::max(1, int(std::floor(sample_dt / grid.h())));
  Matrix3c m;  // psi as 3x3 amplitude matrix, psi(3*j1+j2) = m(j1, j2)
  for (int i = 0; i < 9; ++i) m(i / 3, i % 3) = initial(i);
  std::vector<TrajectorySample> out;
  auto record = [&](double t) {
    TrajectorySample s;
    s.t = t;
    for (int i = 0; i < 9; ++i) s.state(i) = m(i / 3, i % 3);
    s.p_comp = computational_population(s.state);
    out.push_back(s);
  };
  record(0.0);
  int k = 0;
  detail::pair_steps([&](int, int, double t) { return field.chi(t); }, p,
                     eigenfrequencies(p, Lambda1), grid, 0.0,
                     [&](const Matrix3c& s1, const Matrix3c& s2, double t_end) {
                       m = s1 * m * s2.transpose();
                       ++k;
                       if (k % stride == 0 || k == grid.steps) record(t_end);
                     });
  return out;
}

}  // namespace crowdpulse
