#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include <crowdpulse/experiments.hpp>

#include "helpers.hpp"

using namespace crowdpulse;
using Catch::Approx;
namespace fs = std::filesystem;

namespace {

json tiny_config_json() {
  return json::parse(R"({
    "system": {"omega1_GHz": 5.508, "omega2_GHz": 5.903, "Delta_MHz": -350.0},
    "target": {"qubit1": "Xpi", "qubit2": "Xpi"},
    "gate_time_ns": 20.0,
    "optimizer": {"restarts": 2, "max_iters": 30, "seed": 7, "objective_steps": 128},
    "grid": {"steps": 256}
  })");
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "crowdpulse_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("rotation grammar") {
  CHECK(parse_rotation("I") == cd{0.0, 0.0});
  CHECK(parse_rotation("Xpi").real() == Approx(pi));
  CHECK(parse_rotation("Xpi/2").real() == Approx(pi / 2.0));
  CHECK(parse_rotation("X3pi/4").real() == Approx(3.0 * pi / 4.0));
  CHECK(parse_rotation("X-pi/2").real() == Approx(-pi / 2.0));
  CHECK(parse_rotation("Ypi").imag() == Approx(-pi));
  CHECK(parse_rotation("Y_pi/2").imag() == Approx(-pi / 2.0));
  CHECK(parse_rotation("X1.5").real() == Approx(1.5));
  CHECK_THROWS_AS(parse_rotation("Zpi"), ConfigError);
  CHECK_THROWS_AS(parse_rotation(""), ConfigError);
}

TEST_CASE("the named rotation convention reproduces the Hadamard decomposition") {
  // U_H = X_pi * Y_pi/2 up to a global phase
  const Eigen::Matrix2cd x_pi = target_block(parse_rotation("Xpi")).block<2, 2>(0, 0);
  const Eigen::Matrix2cd y_half = target_block(parse_rotation("Ypi/2")).block<2, 2>(0, 0);
  const Eigen::Matrix2cd prod = x_pi * y_half;
  const Eigen::Matrix2cd had = named_composite_gate("H");
  const cd overlap = (had.adjoint() * prod).trace();
  CHECK(std::abs(overlap) / 2.0 == Approx(1.0).epsilon(1e-12));
}

TEST_CASE("config loading and validation") {
  SECTION("defaults round out an omitted block") {
    const ExperimentConfig cfg = ExperimentConfig::from_json(tiny_config_json(), {}, 1);
    CHECK(cfg.system.delta == Approx(mhz_to_radns(45.0)).epsilon(1e-12));
    CHECK(cfg.opt.restarts == 2);
    CHECK(cfg.grid_steps == 256);
    CHECK(cfg.threshold == 1e-4);
    CHECK(cfg.filter.omega0 == Approx(mhz_to_radns(425.4)).epsilon(1e-12));
  }

  SECTION("unknown keys are rejected with their path") {
    json j = tiny_config_json();
    j["optimizer"]["restart_count"] = 5;
    try {
      ExperimentConfig::from_json(j, {}, 1);
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("optimizer") != std::string::npos);
      CHECK(std::string(e.what()).find("restart_count") != std::string::npos);
    }
  }

  SECTION("omega2 and delta cannot both be given") {
    json j = tiny_config_json();
    j["system"]["delta_MHz"] = 45.0;
    CHECK_THROWS_AS(ExperimentConfig::from_json(j, {}, 1), ConfigError);
  }

  SECTION("seed override feeds the config hash") {
    const ExperimentConfig a = ExperimentConfig::from_json(tiny_config_json(), {}, 1);
    const ExperimentConfig b =
        ExperimentConfig::from_json(tiny_config_json(), std::uint64_t{99}, 1);
    CHECK(a.config_hash != b.config_hash);
    CHECK(b.opt.seed == 99);
  }

  SECTION("parse errors carry the line number") {
    const fs::path dir = fresh_dir("badcfg");
    const fs::path file = dir / "bad.json";
    std::ofstream(file) << "{\n  \"system\": {},\n  oops\n}\n";
    try {
      ExperimentConfig::load(file.string(), {}, 1);
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find(":3:") != std::string::npos);
    }
  }

  SECTION("allxy target set enumerates 25 pairs") {
    json j = tiny_config_json();
    j["target"] = {{"set", "allxy"}};
    const ExperimentConfig cfg = ExperimentConfig::from_json(j, {}, 1);
    CHECK(cfg.target.is_set);
    CHECK(cfg.target.set.size() == 25);
  }

  SECTION("raw complex angles") {
    json j = tiny_config_json();
    j["target"] = {{"theta1", {1.25, -0.5}}, {"theta2", {0.0, 0.9}}};
    const ExperimentConfig cfg = ExperimentConfig::from_json(j, {}, 1);
    CHECK(cfg.target.rotation.theta1 == cd{1.25, -0.5});
    CHECK(cfg.target.rotation.theta2 == cd{0.0, 0.9});
  }
}

TEST_CASE("speed limit fit identity") {
  std::vector<std::pair<double, double>> pts;
  for (double d_mhz : {30.0, 45.0, 60.0, 75.0, 90.0}) {
    const double d = mhz_to_radns(d_mhz);
    pts.emplace_back(d, two_pi / d);
  }
  CHECK(fit_speed_limit(pts) == Approx(1.0).epsilon(1e-12));
  // a uniform factor scales straight through
  for (auto& [d, t] : pts) t *= 0.85;
  CHECK(fit_speed_limit(pts) == Approx(0.85).epsilon(1e-12));
}

TEST_CASE("gate composition") {
  const SystemParams p = testutil::params();

  SECTION("two perfect simulated gates compose to fidelity 1") {
    const TargetRotation first(parse_rotation("Ypi/2"), parse_rotation("I"));
    const TargetRotation second(parse_rotation("Xpi"), parse_rotation("I"));
    const Matrix9c composite = kron(embed_qubit_gate(named_composite_gate("H")),
                                    embed_qubit_gate(named_composite_gate("I")));
    const double phi = compose_gates({target_unitary(first), target_unitary(second)},
                                     {0.0, 0.0}, {22.0, 30.0}, p, composite);
    CHECK(phi == Approx(1.0).epsilon(1e-12));
  }

  SECTION("error addition bound holds numerically") {
    std::mt19937_64 rng(37);
    const TargetRotation first(parse_rotation("Ypi/2"), parse_rotation("I"));
    const TargetRotation second(parse_rotation("Xpi"), parse_rotation("I"));
    const Matrix9c composite = kron(embed_qubit_gate(named_composite_gate("H")),
                                    embed_qubit_gate(named_composite_gate("I")));
    for (int trial = 0; trial < 20; ++trial) {
      auto perturbed = [&](const TargetRotation& rot) {
        // random Hermitian generator scaled to produce ~1e-4 gate error
        Matrix9c g;
        for (int i = 0; i < 9; ++i)
          for (int j = 0; j < 9; ++j)
            g(i, j) = cd{-0.5 + uniform_unit(rng), -0.5 + uniform_unit(rng)};
        Matrix9c h = 0.5 * (g + Matrix9c(g.adjoint()));
        h *= 0.02 / h.cwiseAbs().maxCoeff();
        Matrix9c u = expm_i_hermitian<Matrix9c>(h, 1.0) * target_unitary(rot);
        double err = 1.0 - gate_fidelity(u, target_unitary(rot));
        // rescale the perturbation to land near 1e-4
        h *= std::sqrt(1e-4 / std::max(err, 1e-12));
        return Matrix9c(expm_i_hermitian<Matrix9c>(h, 1.0) * target_unitary(rot));
      };
      const Matrix9c u1 = perturbed(first);
      const Matrix9c u2 = perturbed(second);
      const double e1 = 1.0 - gate_fidelity(u1, target_unitary(first));
      const double e2 = 1.0 - gate_fidelity(u2, target_unitary(second));
      REQUIRE(e1 < 1.6e-4);
      REQUIRE(e2 < 1.6e-4);
      const double phi = compose_gates({u1, u2}, {0.0, 0.0}, {20.0, 20.0}, p, composite);
      const double bound = std::sqrt(e1) + std::sqrt(e2);
      CHECK(1.0 - phi <= bound * bound * 1.05 + 1e-12);
    }
  }
}

TEST_CASE("deviated transition frequencies") {
  const SystemParams p = testutil::params();
  const double L1 = mhz_to_radns(1.3);
  const EigenFrequencies nominal = eigenfrequencies(p, L1);

  SECTION("zero deviation is bit-identical to nominal") {
    const EigenFrequencies same = robust_eigenfrequencies(p, L1, 1.0, 1.0);
    CHECK(same.d11 == nominal.d11);
    CHECK(same.d21 == nominal.d21);
    CHECK(same.d12 == nominal.d12);
    CHECK(same.d22 == nominal.d22);
  }

  SECTION("only the leakage transitions move") {
    const EigenFrequencies dev = robust_eigenfrequencies(p, L1, 1.04, 0.96);
    CHECK(dev.d11 == nominal.d11);
    CHECK(dev.d12 == nominal.d12);
    CHECK(dev.d21 == Approx(p.Delta * 1.04 - L1).epsilon(1e-15));
    CHECK(dev.d22 == Approx(p.delta * 0.96 - L1).epsilon(1e-15));
  }
}

TEST_CASE("synthesis run writes results and skips identity work") {
  json j = tiny_config_json();
  j["target"] = {{"qubit1", "I"}, {"qubit2", "I"}};
  const ExperimentConfig cfg = ExperimentConfig::from_json(j, {}, 2);
  const fs::path dir = fresh_dir("synth_identity");
  const bool ok = run_synthesis(cfg, dir, false);
  CHECK(ok);
  REQUIRE(fs::exists(dir / "simresult.json"));
  REQUIRE(fs::exists(dir / "waveform.csv"));
  const json rec = json::parse(slurp(dir / "simresult.json"));
  CHECK(rec.at("schema").get<int>() == 1);
  CHECK(rec.at("gate_error").get<double>() <= 1e-10);

  const std::string wave = slurp(dir / "waveform.csv");
  CHECK(wave.rfind("t_ns, ex1, ey1, ex2, ey2\n", 0) == 0);
  // 12 significant digits in fixed scientific layout
  CHECK(wave.find("0.00000000000e+00") != std::string::npos);
}

TEST_CASE("sweeps are resumable and deterministic") {
  json j = tiny_config_json();
  j["sweep"] = {{"tg_ns", {18.0, 22.0}}};
  j["optimizer"]["restarts"] = 2;
  j["optimizer"]["max_iters"] = 25;
  const ExperimentConfig cfg = ExperimentConfig::from_json(j, {}, 2);

  const fs::path dir1 = fresh_dir("sweep_a");
  sweep_gate_time(cfg, dir1, false);
  const std::string table1 = slurp(dir1 / "sweep_time.csv");

  SECTION("record count equals strategies x grid points") {
    const RecordStore store(dir1, "sweep_time");
    CHECK(store.size() == 4 * 2);
    CHECK(std::count(table1.begin(), table1.end(), '\n') == 1 + 4 * 2);
  }

  SECTION("rerunning with the existing directory reuses every record") {
    const auto t0 = std::chrono::steady_clock::now();
    sweep_gate_time(cfg, dir1, false);
    const auto t1 = std::chrono::steady_clock::now();
    CHECK(std::chrono::duration<double>(t1 - t0).count() < 1.0);  // no re-optimization
    CHECK(slurp(dir1 / "sweep_time.csv") == table1);
  }

  SECTION("a fresh run with the same seed reproduces all data columns") {
    const fs::path dir2 = fresh_dir("sweep_b");
    sweep_gate_time(cfg, dir2, false);
    const std::string table2 = slurp(dir2 / "sweep_time.csv");
    auto strip_wall = [](const std::string& s) {
      std::string out;
      std::istringstream lines(s);
      std::string line;
      while (std::getline(lines, line))
        out += line.substr(0, line.rfind(',')) + "\n";  // drop the wall-time column
      return out;
    };
    CHECK(strip_wall(table2) == strip_wall(table1));
  }

  SECTION("a different seed produces different record keys") {
    json j2 = j;
    const ExperimentConfig cfg2 = ExperimentConfig::from_json(j2, std::uint64_t{4242}, 2);
    CHECK(cfg2.config_hash != cfg.config_hash);
  }
}

TEST_CASE("sequence experiment composes identity steps to an identity composite") {
  json j = tiny_config_json();
  j.erase("target");
  j["sequence"] = {{"steps", {{{"qubit1", "I"}, {"qubit2", "I"}},
                              {{"qubit1", "I"}, {"qubit2", "I"}}}},
                   {"composite1", "I"},
                   {"composite2", "I"}};
  j["assert"] = {{"composite_error_max", 1e-9}};
  const ExperimentConfig cfg = ExperimentConfig::from_json(j, {}, 2);
  const fs::path dir = fresh_dir("sequence");
  CHECK(compose_sequence(cfg, dir, true));
  const json out = json::parse(slurp(dir / "sequence.json"));
  CHECK(out.at("composite_error").get<double>() <= 1e-9);
  CHECK(out.at("steps").size() == 2);
}

TEST_CASE("robustness sweep reproduces the nominal error at zero deviation") {
  json j = tiny_config_json();
  j["sweep"] = {{"deviation_frac", 0.02}, {"deviation_points", 3}};
  const ExperimentConfig cfg = ExperimentConfig::from_json(j, {}, 2);
  const TargetRotation rot = cfg.target.rotation;
  const ControlField pulse =
      testutil::field(cfg.system, cfg.gate_time, {cd{1.0, 0.0}, cd{0.2, -0.1}},
                      {cd{1.0, 0.0}, cd{-0.3, 0.2}}, mhz_to_radns(0.5), 0.0, rot);
  const fs::path dir = fresh_dir("robust");
  sweep_robustness(cfg, pulse, rot, dir, false);
  const SimResult nominal = simulate_field(pulse, cfg.system, pulse.Lambda1,
                                           cfg.grid_for(pulse.tg), rot);
  // middle row of the 3x3 grid is the zero-deviation point
  std::ifstream table(dir / "robustness.csv");
  std::string line;
  std::getline(table, line);  // header
  bool found = false;
  while (std::getline(table, line)) {
    std::istringstream ss(line);
    std::string dD, dd, err, leak;
    std::getline(ss, dD, ',');
    std::getline(ss, dd, ',');
    std::getline(ss, err, ',');
    std::getline(ss, leak, ',');
    if (std::stod(dD) == 0.0 && std::stod(dd) == 0.0) {
      found = true;
      CHECK(err.find(format_sig12(nominal.gate_error)) != std::string::npos);
    }
  }
  CHECK(found);
}
