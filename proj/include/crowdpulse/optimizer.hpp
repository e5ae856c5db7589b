// Derivative-free synthesis: the pulse parameter vector, the Nelder-Mead
// simplex, the gate-error objective and deterministic multi-start search.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <vector>

#include "crowdpulse/io.hpp"
#include "crowdpulse/metrics.hpp"
#include "crowdpulse/model.hpp"
#include "crowdpulse/propagator.hpp"
#include "crowdpulse/pulses.hpp"

namespace crowdpulse {

// The optimizer's decision variables: complex c2, c3 per control (c1 is
// fixed to 1 and absorbed into the amplitude) plus the carrier detunings.
struct PulseAnsatz {
  cd c2_1{0.0, 0.0}, c3_1{0.0, 0.0};
  cd c2_2{0.0, 0.0}, c3_2{0.0, 0.0};
  double Lambda1 = 0.0;
  double Lambda2 = 0.0;
  double tg = 0.0;  // carried along, not searched

  HanningShape shape1() const { return HanningShape({cd{1.0, 0.0}, c2_1, c3_1}, tg); }
  HanningShape shape2() const { return HanningShape({cd{1.0, 0.0}, c2_2, c3_2}, tg); }
};

// Ordered real coordinates: Re/Im of c2^(1), c3^(1), c2^(2), c3^(2), then
// Lambda1, Lambda2. encode/decode are bit-exact inverses.
struct ParamVector {
  static constexpr int dim = 10;
  std::array<double, dim> v{};

  static ParamVector encode(const PulseAnsatz& a) {
    ParamVector x;
    x.v = {a.c2_1.real(), a.c2_1.imag(), a.c3_1.real(), a.c3_1.imag(),
           a.c2_2.real(), a.c2_2.imag(), a.c3_2.real(), a.c3_2.imag(),
           a.Lambda1,     a.Lambda2};
    return x;
  }

  PulseAnsatz decode(double tg) const {
    PulseAnsatz a;
    a.c2_1 = {v[0], v[1]};
    a.c3_1 = {v[2], v[3]};
    a.c2_2 = {v[4], v[5]};
    a.c3_2 = {v[6], v[7]};
    a.Lambda1 = v[8];
    a.Lambda2 = v[9];
    a.tg = tg;
    return a;
  }
};

struct ParamBounds {
  double coeff_mod_max = 10.0;              // |c_n| <= 10
  double detuning_max = two_pi * 0.05;      // |Lambda_j| <= 2*pi*50 MHz
};

// Pulls x back inside the bounds; returns the squared violation distance.
inline double clamp_to_bounds(ParamVector& x, const ParamBounds& b) {
  double violation2 = 0.0;
  for (int c = 0; c < 4; ++c) {
    const double re = x.v[2 * c], im = x.v[2 * c + 1];
    const double mod = std::hypot(re, im);
    if (mod > b.coeff_mod_max) {
      const double scale = b.coeff_mod_max / mod;
      x.v[2 * c] *= scale;
      x.v[2 * c + 1] *= scale;
      violation2 += (mod - b.coeff_mod_max) * (mod - b.coeff_mod_max);
    }
  }
  for (int j = 8; j < 10; ++j) {
    const double cl = std::clamp(x.v[j], -b.detuning_max, b.detuning_max);
    violation2 += (x.v[j] - cl) * (x.v[j] - cl);
    x.v[j] = cl;
  }
  return violation2;
}

struct OptimizerConfig {
  int restarts = 32;
  int max_iters = 2000;
  double tolerance = 1e-12;          // simplex objective-spread termination
  double simplex_scale_coeff = 0.25;
  double simplex_scale_detuning = two_pi * 0.002;
  std::uint64_t seed = 1;            // mandatory for reproducibility
  double init_coeff_range = 2.5;     // uniform start draws for Re/Im c_n
  double init_detuning_range = two_pi * 0.005;
  double stop_below = 0.0;           // stop spawning restarts once reached (0 = off)
  int workers = 0;                   // 0 = hardware concurrency
  bool machine_log = false;          // "restart, iter, f" lines to stderr

  void validate() const {
    if (restarts < 1 || max_iters < 1 || !(tolerance > 0.0))
      throw std::invalid_argument("OptimizerConfig: counts and tolerance must be positive");
  }
};

// Everything the objective needs: what to rotate, on which system, scored on
// which grid. `objective_steps` may coarsen the grid during search; final
// reporting always uses `grid`.
struct SynthesisContext {
  SystemParams params;
  TargetRotation target;
  double tg = 0.0;
  PropagationGrid grid;
  bool resonant = false;          // freeze Lambda1 = Lambda2 = 0
  bool exact_amplitudes = false;  // coupled 2x2 solve instead of per-tone areas
  double leakage_weight = 0.0;
  double drive_cap = two_pi;      // soft cap on peak |chi| (rad/ns)
  int objective_steps = 1024;
  ParamBounds bounds;

  Matrix9c target_matrix() const { return target_unitary(target); }
  // The spectral area conditions fix the conjugate entry of the rotation
  // generator, so the drive is solved for conj(theta).
  TargetRotation drive_target() const {
    return TargetRotation(std::conj(target.theta1), std::conj(target.theta2));
  }
};

// Builds the control field for an ansatz: amplitudes are re-solved from the
// lowest-order conditions at every evaluation.
inline ControlField realize_field(const PulseAnsatz& ansatz, const SynthesisContext& ctx) {
  ControlField f;
  f.shape1 = ansatz.shape1();
  f.shape2 = ansatz.shape2();
  f.Lambda1 = ansatz.Lambda1;
  f.Lambda2 = ansatz.Lambda2;
  f.tg = ansatz.tg;
  f.params = ctx.params;
  const TargetRotation drive = ctx.drive_target();
  if (ctx.exact_amplitudes) {
    auto [a1, a2] = solve_amplitudes_exact(f.shape1, f.shape2, drive, ctx.params,
                                           f.Lambda1, f.Lambda2);
    f.a1 = a1;
    f.a2 = a2;
  } else {
    f.a1 = solve_amplitude_approx(f.shape1, drive.theta1, ctx.params.lambda1[0],
                                  f.Lambda1);
    f.a2 = solve_amplitude_approx(f.shape2, drive.theta2, ctx.params.lambda1[1],
                                  f.Lambda2);
  }
  return f;
}

inline double peak_drive(const ControlField& f, int samples = 64) {
  double peak = 0.0;
  for (int i = 0; i <= samples; ++i)
    peak = std::max(peak, std::abs(f.chi(f.tg * i / samples)));
  return peak;
}

// Full evaluation of a control field on a grid.
inline SimResult simulate_field(const ControlField& field, const SystemParams& params,
                                double Lambda1, const PropagationGrid& grid,
                                const TargetRotation& target) {
  SimResult r;
  r.unitary = propagate_pair(field, params, Lambda1, grid);
  const Matrix9c tgt = target_unitary(target);
  r.gate_error = 1.0 - gate_fidelity(r.unitary, tgt);
  r.leakage = leakage_error(r.unitary);
  r.leakage_worst = leakage_error_worst(r.unitary);
  r.phi_avg = reduced_fidelity(r.unitary, tgt).phi_avg;
  r.z_phases = z_error_phases(params, Lambda1, field.tg);
  r.params = params;
  r.pulse = field;
  r.grid = grid;
  return r;
}

// 1 - Phi (+ optional leakage weight), with bound violations and degenerate
// shapes surfaced as penalties so the simplex retreats.
inline double objective(const ParamVector& x, const SynthesisContext& ctx) {
  ParamVector inside = x;
  const double violation2 = clamp_to_bounds(inside, ctx.bounds);
  PulseAnsatz ansatz = inside.decode(ctx.tg);
  if (ctx.resonant) {
    ansatz.Lambda1 = 0.0;
    ansatz.Lambda2 = 0.0;
  }
  ControlField field;
  try {
    field = realize_field(ansatz, ctx);
  } catch (const DegenerateShapeError&) {
    return std::numeric_limits<double>::infinity();
  }
  double penalty = 10.0 * violation2;
  const double peak = peak_drive(field);
  if (peak > ctx.drive_cap) {
    const double excess = peak - ctx.drive_cap;
    penalty += 10.0 * excess * excess;
  }
  const int steps = ctx.objective_steps > 0 ? std::max(16, ctx.objective_steps)
                                            : ctx.grid.steps;
  PropagationGrid grid(ctx.tg, steps, ctx.grid.method);
  SimResult r = simulate_field(field, ctx.params, field.Lambda1, grid, ctx.target);
  return r.gate_error + ctx.leakage_weight * r.leakage + penalty;
}

// ---------------------------------------------------------------------------
// Nelder-Mead simplex
// ---------------------------------------------------------------------------

struct NmResult {
  std::vector<double> x;
  double f = std::numeric_limits<double>::infinity();
  int iterations = 0;
  int evaluations = 0;
};

// Standard simplex with reflection/expansion/contraction/shrink coefficients
// (1, 2, 0.5, 0.5); terminates on objective spread or the iteration cap.
// Vertex sorting is stable, so ties break by vertex index.
inline NmResult nelder_mead(const std::function<double(const std::vector<double>&)>& f,
                            const std::vector<double>& x0,
                            const std::vector<double>& simplex_steps, int max_iters,
                            double tolerance,
                            const std::function<void(int, double)>& on_iter = {}) {
  const int n = int(x0.size());
  int evals = 0;
  auto eval = [&](const std::vector<double>& x) {
    ++evals;
    return f(x);
  };

  std::vector<std::vector<double>> xs(n + 1, x0);
  std::vector<double> fs(n + 1);
  for (int i = 0; i < n; ++i) xs[i + 1][i] += simplex_steps[i];
  for (int i = 0; i <= n; ++i) fs[i] = eval(xs[i]);

  std::vector<int> order(n + 1);
  int iter = 0;
  for (; iter < max_iters; ++iter) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return fs[a] < fs[b]; });
    const int best = order[0], second_worst = order[n - 1], worst = order[n];
    if (on_iter) on_iter(iter, fs[best]);
    if (std::abs(fs[worst] - fs[best]) <= tolerance) break;

    std::vector<double> centroid(n, 0.0);
    for (int i = 0; i <= n; ++i) {
      if (i == worst) continue;
      for (int d = 0; d < n; ++d) centroid[d] += xs[i][d];
    }
    for (double& c : centroid) c /= n;

    auto affine = [&](double coeff) {
      std::vector<double> p(n);
      for (int d = 0; d < n; ++d)
        p[d] = centroid[d] + coeff * (centroid[d] - xs[worst][d]);
      return p;
    };

    const std::vector<double> xr = affine(1.0);
    const double fr = eval(xr);
    if (fr < fs[best]) {
      const std::vector<double> xe = affine(2.0);
      const double fe = eval(xe);
      if (fe < fr) {
        xs[worst] = xe;
        fs[worst] = fe;
      } else {
        xs[worst] = xr;
        fs[worst] = fr;
      }
    } else if (fr < fs[second_worst]) {
      xs[worst] = xr;
      fs[worst] = fr;
    } else {
      const bool outside = fr < fs[worst];
      const std::vector<double> xc = outside ? affine(0.5) : affine(-0.5);
      const double fc = eval(xc);
      if (fc < std::min(fr, fs[worst])) {
        xs[worst] = xc;
        fs[worst] = fc;
      } else {
        for (int i = 0; i <= n; ++i) {
          if (i == best) continue;
          for (int d = 0; d < n; ++d)
            xs[i][d] = xs[best][d] + 0.5 * (xs[i][d] - xs[best][d]);
          fs[i] = eval(xs[i]);
        }
      }
    }
  }

  int best = 0;
  for (int i = 1; i <= n; ++i)
    if (fs[i] < fs[best]) best = i;
  return {xs[best], fs[best], iter, evals};
}

// ---------------------------------------------------------------------------
// Multi-start
// ---------------------------------------------------------------------------

struct RestartRecord {
  int index = 0;
  std::uint64_t seed = 0;
  std::vector<double> x0;
  std::vector<double> x;
  double f = std::numeric_limits<double>::infinity();
  int iterations = 0;
  int evaluations = 0;
  bool skipped = false;  // early-stopped before this restart ran
};

struct MultistartResult {
  std::vector<RestartRecord> records;  // ordered by restart index
  int best_index = 0;

  const RestartRecord& best() const { return records[best_index]; }
};

// Generic multi-start driver: restart 0 uses the deterministic start, later
// restarts draw uniformly via `draw_start(rng)`. Restarts run concurrently in
// waves of `workers`; early stopping is decided only at wave boundaries, so
// the set of executed restarts (and the whole ledger) depends on the seed
// alone, never on thread timing.
inline MultistartResult multistart(
    const std::function<double(const std::vector<double>&)>& f, int dim,
    const std::vector<double>& deterministic_start,
    const std::function<std::vector<double>(std::mt19937_64&)>& draw_start,
    const std::vector<double>& simplex_steps, const OptimizerConfig& config) {
  config.validate();
  (void)dim;
  MultistartResult out;
  out.records.resize(config.restarts);

  auto run_one = [&](int r) {
    RestartRecord rec;
    rec.index = r;
    rec.seed = splitmix64(config.seed + std::uint64_t(r));
    if (r == 0) {
      rec.x0 = deterministic_start;
    } else {
      std::mt19937_64 rng(rec.seed);
      rec.x0 = draw_start(rng);
    }
    NmResult nm = nelder_mead(
        f, rec.x0, simplex_steps, config.max_iters, config.tolerance,
        config.machine_log
            ? std::function<void(int, double)>([r](int it, double fb) {
                std::fprintf(stderr, "%d, %d, %.6e\n", r, it, fb);
              })
            : std::function<void(int, double)>{});
    rec.x = nm.x;
    rec.f = nm.f;
    rec.iterations = nm.iterations;
    rec.evaluations = nm.evaluations;
    out.records[r] = rec;
  };

  int workers = config.workers > 0 ? config.workers
                                   : int(std::thread::hardware_concurrency());
  workers = std::max(1, workers);
  bool stopped = false;
  for (int wave = 0; wave < config.restarts; wave += workers) {
    const int wave_end = std::min(config.restarts, wave + workers);
    if (stopped) {
      for (int r = wave; r < wave_end; ++r) {
        out.records[r].index = r;
        out.records[r].skipped = true;
      }
      continue;
    }
    parallel_for(wave_end - wave, workers, [&](int i) { run_one(wave + i); });
    if (config.stop_below > 0.0) {
      for (int r = wave; r < wave_end; ++r)
        if (out.records[r].f <= config.stop_below) stopped = true;
    }
  }

  out.best_index = 0;
  for (int r = 1; r < config.restarts; ++r)
    if (out.records[r].f < out.records[out.best_index].f) out.best_index = r;
  return out;
}

struct SynthesisOutcome {
  SimResult best;
  MultistartResult restarts;
  double objective_value = 0.0;
};

// Multi-start over the pulse ansatz. Restart 0 is the deterministic
// "resonant single-window" start (c = (1,0,0), Lambda = 0); the rest draw
// uniformly inside the configured ranges. The winning ansatz is re-evaluated
// on the full-resolution grid for reporting.
inline SynthesisOutcome multistart_optimize(const SynthesisContext& ctx,
                                            const OptimizerConfig& config) {
  const int dim = ctx.resonant ? 8 : ParamVector::dim;
  auto unpack = [&](const std::vector<double>& x) {
    ParamVector p;
    for (int i = 0; i < dim; ++i) p.v[i] = x[i];
    return p;
  };
  auto f = [&](const std::vector<double>& x) { return objective(unpack(x), ctx); };

  const std::vector<double> deterministic(dim, 0.0);
  auto draw = [&](std::mt19937_64& rng) {
    std::vector<double> x(dim);
    for (int i = 0; i < std::min(dim, 8); ++i)
      x[i] = uniform_range(rng, -config.init_coeff_range, config.init_coeff_range);
    for (int i = 8; i < dim; ++i)
      x[i] = uniform_range(rng, -config.init_detuning_range, config.init_detuning_range);
    return x;
  };
  std::vector<double> steps(dim, config.simplex_scale_coeff);
  for (int i = 8; i < dim; ++i) steps[i] = config.simplex_scale_detuning;

  SynthesisOutcome out;
  out.restarts = multistart(f, dim, deterministic, draw, steps, config);
  const ParamVector best_x = unpack(out.restarts.best().x);
  ParamVector clamped = best_x;
  clamp_to_bounds(clamped, ctx.bounds);
  PulseAnsatz ansatz = clamped.decode(ctx.tg);
  if (ctx.resonant) {
    ansatz.Lambda1 = 0.0;
    ansatz.Lambda2 = 0.0;
  }
  const ControlField field = realize_field(ansatz, ctx);
  out.best = simulate_field(field, ctx.params, field.Lambda1, ctx.grid, ctx.target);
  out.objective_value = out.restarts.best().f;
  return out;
}

}  // namespace crowdpulse
