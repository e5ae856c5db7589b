// crowdpulse: analytic pulse synthesis and simulation for two
// frequency-crowded transmon qutrits.
//
// Exit codes: 0 success, 2 config error, 3 assertion miss with --assert.

#include <cstdio>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include <crowdpulse/experiments.hpp>

using namespace crowdpulse;

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir = "out";
  std::uint64_t seed = 0;
  bool seed_set = false;
  int workers = 0;
  bool check = false;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "experiment config (JSON)")->required();
  cmd->add_option("--out", args.out_dir, "output directory");
  cmd->add_option("--seed", args.seed, "override the optimizer seed")
      ->each([&](const std::string&) { args.seed_set = true; });
  cmd->add_option("--workers", args.workers, "worker threads (0 = hardware)");
  cmd->add_flag("--assert", args.check, "exit 3 when configured thresholds are missed");
}

ExperimentConfig load(const CommonArgs& args) {
  return ExperimentConfig::load(
      args.config_path,
      args.seed_set ? std::optional<std::uint64_t>(args.seed) : std::nullopt,
      args.workers);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"analytic microwave controls for frequency-crowded transmon pairs"};
  app.require_subcommand(1);

  CommonArgs synth_args, time_args, speed_args, robust_args, wahwah_args, filter_args,
      seq_args, wave_args;
  std::string robust_pulse, wave_pulse;
  double wave_dt = 0.0;

  add_common(app.add_subcommand("synthesize", "optimize one simultaneous rotation"),
             synth_args);
  add_common(app.add_subcommand("sweep-time", "benchmark strategies over gate times"),
             time_args);
  add_common(app.add_subcommand("speed-limit", "scan (delta, tg) and fit the speed limit"),
             speed_args);
  auto* robust_cmd =
      app.add_subcommand("robustness", "re-simulate a fixed pulse over (Delta, delta)");
  add_common(robust_cmd, robust_args);
  robust_cmd->add_option("--pulse", robust_pulse, "simresult.json with the pulse to scan");
  add_common(app.add_subcommand("wahwah", "separate-rotation study over normalized times"),
             wahwah_args);
  add_common(app.add_subcommand("filter-study", "transfer-function impact and retuning"),
             filter_args);
  add_common(app.add_subcommand("sequence", "compose corrected gates against a target"),
             seq_args);
  auto* wave_cmd = app.add_subcommand("export-waveform", "write quadrature samples as CSV");
  add_common(wave_cmd, wave_args);
  wave_cmd->add_option("--pulse", wave_pulse, "simresult.json to export (else analytic start)");
  wave_cmd->add_option("--dt", wave_dt, "sample spacing in ns");

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand("synthesize")) {
      const ExperimentConfig cfg = load(synth_args);
      const bool ok = run_synthesis(cfg, synth_args.out_dir, synth_args.check);
      return synth_args.check && !ok ? 3 : 0;
    }
    if (app.got_subcommand("sweep-time")) {
      const ExperimentConfig cfg = load(time_args);
      const bool ok = sweep_gate_time(cfg, time_args.out_dir, time_args.check);
      return time_args.check && !ok ? 3 : 0;
    }
    if (app.got_subcommand("speed-limit")) {
      const ExperimentConfig cfg = load(speed_args);
      const SpeedLimitOutcome out =
          sweep_speed_limit(cfg, speed_args.out_dir, speed_args.check);
      std::fprintf(stderr, "[speed-limit] alpha = %.4f over %zu deltas\n", out.alpha,
                   out.tmin_points.size());
      return speed_args.check && !out.pass ? 3 : 0;
    }
    if (app.got_subcommand("robustness")) {
      const ExperimentConfig cfg = load(robust_args);
      ControlField pulse;
      TargetRotation rotation = cfg.target.rotation;
      if (!robust_pulse.empty()) {
        std::ifstream in(robust_pulse);
        if (!in) throw ConfigError("cannot open pulse file '" + robust_pulse + "'");
        pulse = sim_result_from_json(json::parse(in)).pulse;
      } else {
        RecordStore store(robust_args.out_dir, "synthesis");
        const std::string coords =
            "synth|" + cfg.target.label + "|tg=" + format_sig12(cfg.gate_time);
        const json rec = synthesize_cached(cfg, store, coords, cfg.system, rotation,
                                           cfg.gate_time, cfg.workers);
        pulse = sim_result_from_json(rec).pulse;
      }
      const bool ok =
          sweep_robustness(cfg, pulse, rotation, robust_args.out_dir, robust_args.check);
      return robust_args.check && !ok ? 3 : 0;
    }
    if (app.got_subcommand("wahwah")) {
      const ExperimentConfig cfg = load(wahwah_args);
      wahwah_study(cfg, wahwah_args.out_dir);
      return 0;
    }
    if (app.got_subcommand("filter-study")) {
      const ExperimentConfig cfg = load(filter_args);
      bool ok = true;
      filter_study(cfg, filter_args.out_dir, filter_args.check, &ok);
      return filter_args.check && !ok ? 3 : 0;
    }
    if (app.got_subcommand("sequence")) {
      const ExperimentConfig cfg = load(seq_args);
      const bool ok = compose_sequence(cfg, seq_args.out_dir, seq_args.check);
      return seq_args.check && !ok ? 3 : 0;
    }
    if (app.got_subcommand("export-waveform")) {
      const ExperimentConfig cfg = load(wave_args);
      ControlField field;
      if (!wave_pulse.empty()) {
        std::ifstream in(wave_pulse);
        if (!in) throw ConfigError("cannot open pulse file '" + wave_pulse + "'");
        field = sim_result_from_json(json::parse(in)).pulse;
      } else {
        // analytic single-window start for the configured target
        const TargetRotation rot = cfg.target.rotation;
        const TargetRotation drive(std::conj(rot.theta1), std::conj(rot.theta2));
        ControlField f;
        f.shape1 = HanningShape({cd{1.0, 0.0}}, cfg.gate_time);
        f.shape2 = HanningShape({cd{1.0, 0.0}}, cfg.gate_time);
        f.tg = cfg.gate_time;
        f.params = cfg.system;
        f.a1 = solve_amplitude_approx(f.shape1, drive.theta1, cfg.system.lambda1[0], 0.0);
        f.a2 = solve_amplitude_approx(f.shape2, drive.theta2, cfg.system.lambda1[1], 0.0);
        field = f;
      }
      std::filesystem::create_directories(wave_args.out_dir);
      export_waveform(field, wave_dt > 0.0 ? wave_dt : cfg.waveform_dt,
                      std::filesystem::path(wave_args.out_dir) / "waveform.csv");
      return 0;
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const json::exception& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
