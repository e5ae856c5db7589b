#include <catch2/catch_amalgamated.hpp>

#include <random>

#include <crowdpulse/hardware.hpp>
#include <crowdpulse/io.hpp>

#include "helpers.hpp"

using namespace crowdpulse;
using Catch::Approx;

TEST_CASE("filter response basics") {
  FilterSpec spec;
  CHECK(spec.response(0.0) == 1.0);
  CHECK(spec.response(spec.omega0) == Approx(std::exp(-1.0)).epsilon(1e-14));
  CHECK(spec.pad() == Approx(5.0 / spec.omega0).epsilon(1e-14));
  FilterSpec bad;
  bad.omega0 = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("dc gain is exactly one on a periodic constant") {
  FilterSpec spec;
  spec.pad_ns = 0.0;  // periodic test: no padding, pure dc bin
  const std::vector<double> input(240, 0.75);
  const std::vector<double> out = apply_filter(input, 0.05, spec);
  for (double v : out) CHECK(v == Approx(0.75).epsilon(1e-12));
}

TEST_CASE("long sinusoid is scaled by the response value") {
  FilterSpec spec;
  const double dt = 0.05;
  const int n = 4000;  // 200 ns window
  for (double f_ghz : {0.10, 0.25, 0.425}) {
    const double omega = two_pi * f_ghz;
    std::vector<double> input(n);
    for (int i = 0; i < n; ++i) input[i] = std::sin(omega * i * dt);
    const std::vector<double> out = apply_filter(input, dt, spec);
    const double expected = spec.response(omega);
    // compare away from the edges
    for (int i = n / 4; i < 3 * n / 4; i += 37) {
      CHECK(out[i] == Approx(expected * input[i]).margin(1.5e-3 * expected + 1e-6));
    }
  }
}

TEST_CASE("very wide filter is the identity") {
  // at x1e6 widening the Nyquist-bin response still deviates by 1.4e-10,
  // so widen a little further to probe the F -> 1 limit at 1e-10
  FilterSpec spec;
  spec.omega0 *= 1e7;
  std::mt19937_64 rng(3);
  std::vector<double> input(300);
  for (double& v : input) v = -1.0 + 2.0 * uniform_unit(rng);
  const std::vector<double> out = apply_filter(input, 0.1, spec);
  for (std::size_t i = 0; i < input.size(); ++i)
    CHECK(std::abs(out[i] - input[i]) < 1e-10);
}

TEST_CASE("filter is linear, passive and time symmetric") {
  FilterSpec spec;
  std::mt19937_64 rng(29);
  const int n = 257;  // deliberately not a power of two
  std::vector<double> f(n), g(n);
  for (int i = 0; i < n; ++i) {
    f[i] = -1.0 + 2.0 * uniform_unit(rng);
    g[i] = -1.0 + 2.0 * uniform_unit(rng);
  }

  SECTION("linearity") {
    const double a = 1.7, b = -0.45;
    std::vector<double> combo(n);
    for (int i = 0; i < n; ++i) combo[i] = a * f[i] + b * g[i];
    const auto ff = apply_filter(f, 0.05, spec);
    const auto fg = apply_filter(g, 0.05, spec);
    const auto fc = apply_filter(combo, 0.05, spec);
    for (int i = 0; i < n; ++i)
      CHECK(std::abs(fc[i] - (a * ff[i] + b * fg[i])) < 1e-12);
  }

  SECTION("energy never increases") {
    const auto ff = apply_filter(f, 0.05, spec);
    double ein = 0.0, eout = 0.0;
    for (int i = 0; i < n; ++i) {
      ein += f[i] * f[i];
      eout += ff[i] * ff[i];
    }
    CHECK(eout <= ein + 1e-12);
  }

  SECTION("time reversal commutes with the filter") {
    std::vector<double> rev(f.rbegin(), f.rend());
    const auto filt_rev = apply_filter(rev, 0.05, spec);
    auto filt = apply_filter(f, 0.05, spec);
    std::reverse(filt.begin(), filt.end());
    for (int i = 0; i < n; ++i) CHECK(std::abs(filt_rev[i] - filt[i]) < 1e-12);
  }
}

TEST_CASE("filtered field evaluation matches the sample-domain filter") {
  const SystemParams p = testutil::params();
  const TargetRotation xx(cd{pi, 0.0}, cd{pi, 0.0});
  const double tg = 24.0;
  const ControlField f = testutil::field(p, tg, {cd{1.0, 0.0}, cd{0.3, -0.2}},
                                         {cd{1.0, 0.0}, cd{-0.4, 0.1}},
                                         mhz_to_radns(0.7), 0.0, xx);
  FilterSpec spec;
  const double dt = 0.05;
  const FilteredField ff = filter_field(f, spec, dt);

  // filter the real x-quadrature of tone 1 via apply_filter and compare on
  // the sample grid
  const int body = int(std::floor(tg / dt)) + 1;
  std::vector<double> ex(body);
  for (int i = 0; i < body; ++i)
    ex[i] = (f.a1 * shape_envelope(f.shape1, std::min(i * dt, tg))).real();
  const std::vector<double> ex_filt = apply_filter(ex, dt, spec);
  for (int i = 0; i < body; i += 13)
    CHECK(std::abs(ff.eval(ff.spec1, i * dt).real() - ex_filt[i]) < 1e-9);
}

TEST_CASE("amplitude retune against the filter") {
  const SystemParams p = testutil::params();
  const TargetRotation xx(cd{pi, 0.0}, cd{pi, 0.0});
  const double tg = 26.0;
  const ControlField f = testutil::field(p, tg, {cd{1.0, 0.0}, cd{0.35, -0.10}},
                                         {cd{1.0, 0.0}, cd{-0.28, 0.22}},
                                         mhz_to_radns(0.5), mhz_to_radns(-1.1), xx);
  const PropagationGrid grid(tg, 1024);

  SECTION("infinitely wide filter leaves the error unchanged") {
    FilterSpec wide;
    wide.omega0 *= 1e6;
    const RetuneResult r = retune_amplitudes(f, wide, p, xx, grid, 0.05, 60);
    CHECK(r.error_filtered == Approx(r.error_unfiltered).margin(1e-8));
    CHECK(r.error_retuned <= r.error_filtered + 1e-15);
    // scales settling at (1,1) is a statement about optimized pulses and is
    // asserted in the acceptance suite, where one is available
  }

  SECTION("retuned error never exceeds the filtered error") {
    FilterSpec spec;
    const RetuneResult r = retune_amplitudes(f, spec, p, xx, grid, 0.05, 120);
    CHECK(r.error_retuned <= r.error_filtered + 1e-15);
    CHECK(r.scale1 > 0.8);
    CHECK(r.scale1 < 1.25);
    CHECK(r.scale2 > 0.8);
    CHECK(r.scale2 < 1.25);
  }
}
