// Small dense complex linear algebra helpers for the 3- and 9-dimensional
// spaces used throughout: Kronecker products, Hermitian exponentials and
// norm checks.
#pragma once

#include <complex>
#include <stdexcept>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

namespace crowdpulse {

using cd = std::complex<double>;
using Matrix3c = Eigen::Matrix3cd;
using Matrix9c = Eigen::Matrix<std::complex<double>, 9, 9>;
using Vector9c = Eigen::Matrix<std::complex<double>, 9, 1>;

inline constexpr cd ci{0.0, 1.0};

// Kronecker product of two 3x3 matrices; qutrit 1 is the left (slow) factor,
// so basis index is 3*j1 + j2.
inline Matrix9c kron(const Matrix3c& a, const Matrix3c& b) {
  Matrix9c out;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      out.block<3, 3>(3 * i, 3 * j) = a(i, j) * b;
  return out;
}

template <typename M>
double hermiticity_defect(const M& h) {
  return (h - h.adjoint()).cwiseAbs().maxCoeff();
}

template <typename M>
double unitarity_defect(const M& u) {
  return (u.adjoint() * u - M::Identity()).cwiseAbs().maxCoeff();
}

// exp(-i*tau*H) for Hermitian H via eigendecomposition. Works for any fixed
//-size Hermitian matrix; used on 9x9 generators and as the generic fallback
// for 3x3 ones.
template <typename M>
M expm_i_hermitian(const M& h, double tau) {
  Eigen::SelfAdjointEigenSolver<M> es(h);
  if (es.info() != Eigen::Success)
    throw std::runtime_error("expm_i_hermitian: eigensolver failed");
  const auto& vals = es.eigenvalues();
  const auto& vecs = es.eigenvectors();
  M out = M::Zero();
  for (int k = 0; k < h.rows(); ++k)
    out += std::polar(1.0, -tau * vals(k)) * (vecs.col(k) * vecs.col(k).adjoint());
  return out;
}

// exp(-i*tau*H) for the qutrit coupling generator
//   H = [[0, conj(w1), 0], [w1, 0, conj(w2)], [0, w2, 0]].
// H has eigenvalues {0, +sqrt(s), -sqrt(s)} with s = |w1|^2 + |w2|^2 and
// satisfies H^3 = s H, so the exponential closes after the H^2 term.
inline Matrix3c expm_i_coupling(cd w1, cd w2, double tau) {
  const double s = std::norm(w1) + std::norm(w2);
  const double u = std::sqrt(s);
  const double ut = u * tau;
  double sin_over_u;   // sin(u*tau)/u
  double cosm1_over_s; // (cos(u*tau)-1)/s
  if (ut < 1e-6) {
    sin_over_u = tau * (1.0 - ut * ut / 6.0);
    cosm1_over_s = -0.5 * tau * tau * (1.0 - ut * ut / 12.0);
  } else {
    sin_over_u = std::sin(ut) / u;
    cosm1_over_s = (std::cos(ut) - 1.0) / s;
  }
  const cd c1 = -ci * sin_over_u;
  Matrix3c out;
  const double n1 = std::norm(w1), n2 = std::norm(w2);
  out(0, 0) = 1.0 + cosm1_over_s * n1;
  out(1, 1) = 1.0 + cosm1_over_s * s;
  out(2, 2) = 1.0 + cosm1_over_s * n2;
  out(0, 1) = c1 * std::conj(w1);
  out(1, 0) = c1 * w1;
  out(1, 2) = c1 * std::conj(w2);
  out(2, 1) = c1 * w2;
  out(0, 2) = cosm1_over_s * std::conj(w1) * std::conj(w2);
  out(2, 0) = cosm1_over_s * w1 * w2;
  return out;
}

}  // namespace crowdpulse
