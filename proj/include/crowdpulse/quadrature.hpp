// Adaptive Gauss-Kronrod (G7,K15) quadrature for complex-valued integrands.
#pragma once

#include <cmath>
#include <complex>
#include <functional>

namespace crowdpulse::quad {

using cd = std::complex<double>;

namespace detail {
// Standard (G7,K15) nodes and weights on [-1, 1].
inline constexpr double kXgk[8] = {
    0.991455371120813, 0.949107912342759, 0.864864423359769, 0.741531185599394,
    0.586087235467691, 0.405845151377397, 0.207784955007898, 0.000000000000000};
inline constexpr double kWgk[8] = {
    0.022935322010529, 0.063092092629979, 0.104790010322250, 0.140653259715525,
    0.169004726639267, 0.190350578064785, 0.204432940075298, 0.209482141084728};
inline constexpr double kWg[4] = {0.129484966168870, 0.279705391489277,
                                  0.381830050505119, 0.417959183673469};

struct Panel {
  cd value;
  double error;
};

template <typename F>
Panel gk15(const F& f, double a, double b) {
  const double c = 0.5 * (a + b);
  const double h = 0.5 * (b - a);
  cd fv[15];
  for (int i = 0; i < 7; ++i) {
    fv[i] = f(c - h * kXgk[i]);
    fv[14 - i] = f(c + h * kXgk[i]);
  }
  fv[7] = f(c);
  cd k15{0.0, 0.0}, g7{0.0, 0.0};
  for (int i = 0; i < 8; ++i) {
    const cd sym = (i == 7) ? fv[7] : fv[i] + fv[14 - i];
    k15 += kWgk[i] * sym;
    if (i % 2 == 1) g7 += kWg[i / 2] * sym;  // odd Kronrod indices are Gauss nodes
  }
  return {h * k15, std::abs(h * (k15 - g7))};
}

template <typename F>
cd adaptive(const F& f, double a, double b, double tol, int depth) {
  const Panel p = gk15(f, a, b);
  if (p.error <= tol || depth >= 48) return p.value;
  const double c = 0.5 * (a + b);
  return adaptive(f, a, c, 0.5 * tol, depth + 1) +
         adaptive(f, c, b, 0.5 * tol, depth + 1);
}
}  // namespace detail

// Integrates f over [a, b] to the given absolute tolerance.
template <typename F>
cd integrate(const F& f, double a, double b, double abs_tol) {
  if (a == b) return {0.0, 0.0};
  return detail::adaptive(f, a, b, abs_tol, 0);
}

}  // namespace crowdpulse::quad
