// Transfer-function model of waveform hardware: a zero-phase Gaussian
// frequency response applied to the sampled envelope quadratures, and the
// 2-parameter amplitude retune against it.
#pragma once

#include <cmath>
#include <complex>
#include <stdexcept>
#include <vector>

#include "crowdpulse/optimizer.hpp"
#include "crowdpulse/pulses.hpp"

namespace crowdpulse {

struct FilterSpec {
  double omega0 = two_pi * 0.4254;  // rad/ns; Gaussian response width
  double pad_ns = -1.0;             // zero padding each side; < 0 means 5/omega0

  double response(double omega) const {
    return std::exp(-omega * omega / (omega0 * omega0));
  }
  double pad() const { return pad_ns < 0.0 ? 5.0 / omega0 : pad_ns; }

  void validate() const {
    if (!(omega0 > 0.0)) throw std::invalid_argument("FilterSpec: omega0 must be > 0");
  }
};

namespace detail {

// Plain O(N^2) DFT; waveforms here are a few thousand samples at most, and
// exactness for arbitrary N matters more than speed.
inline std::vector<cd> dft(const std::vector<cd>& x, bool inverse) {
  const int n = int(x.size());
  std::vector<cd> out(n);
  const double sign = inverse ? 1.0 : -1.0;
  for (int k = 0; k < n; ++k) {
    cd acc{0.0, 0.0};
    const cd wk = std::polar(1.0, sign * two_pi * k / n);
    cd w{1.0, 0.0};
    for (int j = 0; j < n; ++j) {
      acc += x[j] * w;
      w *= wk;
      if ((j & 31) == 31) w = std::polar(1.0, sign * two_pi * double(k) * (j + 1) / n);
    }
    out[k] = inverse ? acc / double(n) : acc;
  }
  return out;
}

// Signed bin frequency in rad/ns for bin k of an n-point DFT at spacing dt.
inline double bin_omega(int k, int n, double dt) {
  const int signed_k = k <= n / 2 ? k : k - n;
  return two_pi * signed_k / (n * dt);
}

}  // namespace detail

// Non-causal filtering as multiplication by F(omega) in the discrete
// frequency domain; the input is zero-padded by spec.pad() on each side and
// unpadded again, so output length equals input length.
inline std::vector<double> apply_filter(const std::vector<double>& samples, double dt,
                                        const FilterSpec& spec) {
  spec.validate();
  if (!(dt > 0.0) || dt > 0.1 + 1e-12)
    throw std::invalid_argument("apply_filter: need uniform sampling with dt <= 0.1 ns");
  const int pad = int(std::ceil(spec.pad() / dt));
  const int n = int(samples.size()) + 2 * pad;
  std::vector<cd> x(n, cd{0.0, 0.0});
  for (std::size_t i = 0; i < samples.size(); ++i) x[pad + i] = samples[i];
  std::vector<cd> spectrum = detail::dft(x, false);
  for (int k = 0; k < n; ++k) spectrum[k] *= spec.response(detail::bin_omega(k, n, dt));
  std::vector<cd> y = detail::dft(spectrum, true);
  std::vector<double> out(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) out[i] = y[pad + i].real();
  return out;
}

// A control field pushed through the filter. The two complex envelopes
// a_j*Omega_j(t) are sampled over a padded window, filtered in the frequency
// domain and kept as band-limited spectra, so the smeared drive (including
// its non-causal tails) can be evaluated at arbitrary times.
struct FilteredField {
  ControlField nominal;
  double dt = 0.05;
  double t_start = 0.0;  // start of the padded window (negative)
  int n = 0;
  std::vector<cd> spec1;
  std::vector<cd> spec2;

  cd eval(const std::vector<cd>& spectrum, double t) const {
    cd acc{0.0, 0.0};
    for (int k = 0; k < n; ++k)
      acc += spectrum[k] * std::polar(1.0, detail::bin_omega(k, n, dt) * (t - t_start));
    return acc / double(n);
  }

  // Drive with magnitude scales on the two tones.
  cd chi(double t, double scale1 = 1.0, double scale2 = 1.0) const {
    return scale1 * eval(spec1, t) +
           scale2 * std::polar(1.0, nominal.gamma() * t) * eval(spec2, t);
  }

  double window_end() const { return nominal.tg - t_start; }
};

inline FilteredField filter_field(const ControlField& field, const FilterSpec& spec,
                                  double dt = 0.05) {
  spec.validate();
  FilteredField out;
  out.nominal = field;
  out.dt = dt;
  const int pad = int(std::ceil(spec.pad() / dt));
  const int body = int(std::floor(field.tg / dt)) + 1;
  out.t_start = -pad * dt;
  out.n = body + 2 * pad;
  auto filtered_spectrum = [&](const Shape& shape, cd amplitude) {
    std::vector<cd> x(out.n, cd{0.0, 0.0});
    for (int i = 0; i < body; ++i)
      x[pad + i] = amplitude * shape_envelope(shape, std::min(i * dt, field.tg));
    std::vector<cd> s = detail::dft(x, false);
    for (int k = 0; k < out.n; ++k)
      s[k] *= spec.response(detail::bin_omega(k, out.n, dt));
    return s;
  };
  out.spec1 = filtered_spectrum(field.shape1, field.a1);
  out.spec2 = filtered_spectrum(field.shape2, field.a2);
  return out;
}

// Precomputed per-node drive values of a filtered field on a propagation
// grid over the padded window, split by tone so magnitude rescaling is a
// per-node linear combination.
struct FilteredNodeDrive {
  PropagationGrid grid{1.0, 16};
  double t0 = 0.0;
  std::vector<cd> tone1[2];  // [family][step]
  std::vector<cd> tone2[2];

  static FilteredNodeDrive build(const FilteredField& ff, const PropagationGrid& base) {
    FilteredNodeDrive out;
    const double pad = -ff.t_start;
    const double span = ff.nominal.tg + 2.0 * pad;
    int steps = base.steps;
    while (steps * (base.tg / base.steps) < span) steps *= 2;
    out.grid = PropagationGrid(span, steps, base.method);
    out.t0 = ff.t_start;
    const double h = out.grid.h();
    const bool cf4 = base.method == Method::MagnusCf4;
    const double offsets[2] = {cf4 ? detail::cf4_c1 : 0.5, cf4 ? detail::cf4_c2 : 0.5};
    const int families = cf4 ? 2 : 1;
    const double gamma = ff.nominal.gamma();
    for (int fam = 0; fam < families; ++fam) {
      out.tone1[fam].resize(steps);
      out.tone2[fam].resize(steps);
      for (int k = 0; k < steps; ++k) {
        const double t = out.t0 + (k + offsets[fam]) * h;
        out.tone1[fam][k] = ff.eval(ff.spec1, t);
        out.tone2[fam][k] = std::polar(1.0, gamma * t) * ff.eval(ff.spec2, t);
      }
    }
    return out;
  }

  // Gate error of the scaled, filtered drive against the target.
  double gate_error(double s1, double s2, const SystemParams& params, double Lambda1,
                    const Matrix9c& target) const {
    auto chi_node = [&](int k, int family, double) {
      return s1 * tone1[family][k] + s2 * tone2[family][k];
    };
    auto [u1, u2] =
        propagate_pair_blocks_nodes(chi_node, params, Lambda1, grid, t0);
    return 1.0 - gate_fidelity(kron(u1, u2), target);
  }
};

struct RetuneResult {
  double scale1 = 1.0;
  double scale2 = 1.0;
  double error_unfiltered = 0.0;
  double error_filtered = 0.0;
  double error_retuned = 0.0;
};

// 2-parameter Nelder-Mead over magnitude scales on (a1, a2) against the
// filtered propagation; the start simplex contains the identity scaling, so
// the retuned error can never exceed the filtered one.
inline RetuneResult retune_amplitudes(const ControlField& field, const FilterSpec& spec,
                                      const SystemParams& params,
                                      const TargetRotation& target,
                                      const PropagationGrid& grid, double dt = 0.05,
                                      int max_iters = 200) {
  RetuneResult out;
  out.error_unfiltered =
      simulate_field(field, params, field.Lambda1, grid, target).gate_error;

  const FilteredField ff = filter_field(field, spec, dt);
  const FilteredNodeDrive drive = FilteredNodeDrive::build(ff, grid);
  const Matrix9c tgt = target_unitary(target);
  auto error_at = [&](double s1, double s2) {
    return drive.gate_error(s1, s2, params, field.Lambda1, tgt);
  };

  out.error_filtered = error_at(1.0, 1.0);
  NmResult nm = nelder_mead(
      [&](const std::vector<double>& s) { return error_at(s[0], s[1]); }, {1.0, 1.0},
      {0.05, 0.05}, max_iters, 1e-14);
  out.scale1 = nm.x[0];
  out.scale2 = nm.x[1];
  if (nm.f <= out.error_filtered) {
    out.error_retuned = nm.f;
  } else {
    out.scale1 = 1.0;
    out.scale2 = 1.0;
    out.error_retuned = out.error_filtered;
  }
  return out;
}

}  // namespace crowdpulse
