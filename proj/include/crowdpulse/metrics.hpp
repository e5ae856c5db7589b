// Gate fidelity over the computational subspace, reduced (phase-insensitive)
// fidelities, leakage error, and Z-error phase bookkeeping with virtual
// corrections.
#pragma once

#include <array>
#include <cmath>
#include <string>

#include <json.hpp>

#include "crowdpulse/linalg.hpp"
#include "crowdpulse/model.hpp"
#include "crowdpulse/propagator.hpp"
#include "crowdpulse/pulses.hpp"
#include "crowdpulse/units.hpp"

namespace crowdpulse {

// Computational basis indices {|00>,|01>,|10>,|11>} in the 9-dim space.
inline constexpr std::array<int, 4> comp_idx{0, 1, 3, 4};
// States with qutrit 2 in its leakage level.
inline constexpr std::array<int, 3> q2_leak_idx{2, 5, 8};

// Overlap gate fidelity |Tr_comp(target^dag U)|^2 / 16; insensitive to a
// global phase.
inline double gate_fidelity(const Matrix9c& u, const Matrix9c& target) {
  cd tr{0.0, 0.0};
  for (int i : comp_idx) tr += target.col(i).dot(u.col(i));  // dot conjugates
  return std::norm(tr) / 16.0;
}

struct ReducedFidelity {
  double phi_q2_0 = 0.0;  // qubit 2 starts and ends in |0>
  double phi_q2_1 = 0.0;
  double phi_avg = 0.0;
};

// Reduced fidelities from the partial traces over {|0,i>,|1,i>}; the average
// is insensitive to a relative phase on qubit 2.
inline ReducedFidelity reduced_fidelity(const Matrix9c& u, const Matrix9c& target) {
  auto block_trace = [&](int i0, int i1) {
    return target.col(i0).dot(u.col(i0)) + target.col(i1).dot(u.col(i1));
  };
  ReducedFidelity r;
  r.phi_q2_0 = std::norm(block_trace(0, 3)) / 4.0;
  r.phi_q2_1 = std::norm(block_trace(1, 4)) / 4.0;
  r.phi_avg = 0.5 * (r.phi_q2_0 + r.phi_q2_1);
  return r;
}

// Fidelity maximized over a virtual Z phase on qubit 2, applied after the
// gate: max_phi |A + e^{i phi} B| = |A| + |B| on the two partial traces.
inline double gate_fidelity_q2_phase_opt(const Matrix9c& u, const Matrix9c& target) {
  const cd a = target.col(0).dot(u.col(0)) + target.col(3).dot(u.col(3));
  const cd b = target.col(1).dot(u.col(1)) + target.col(4).dot(u.col(4));
  const double m = std::abs(a) + std::abs(b);
  return m * m / 16.0;
}

// Average over the four computational inputs of the final population in
// qutrit-2 leakage states.
inline double leakage_error(const Matrix9c& u) {
  double acc = 0.0;
  for (int in : comp_idx)
    for (int l : q2_leak_idx) acc += std::norm(u(l, in));
  return acc / 4.0;
}

// Worst computational input instead of the average; diagnostic only.
inline double leakage_error_worst(const Matrix9c& u) {
  double worst = 0.0;
  for (int in : comp_idx) {
    double p = 0.0;
    for (int l : q2_leak_idx) p += std::norm(u(l, in));
    worst = std::max(worst, p);
  }
  return worst;
}

inline double wrap_zero_two_pi(double x) {
  double y = std::fmod(x, two_pi);
  if (y < 0.0) y += two_pi;
  return y;
}

inline double wrap_pm_pi(double x) {
  double y = wrap_zero_two_pi(x);
  if (y > pi) y -= two_pi;
  return y;
}

// Residual Z phases picked up by transforming the interaction-frame gate to
// the lab frame:
//   phi_Z1 = (omega_d1 - Lambda1) tg / 2,  phi_Z2 = (omega_d1 + delta - Delta - Lambda1) tg / 2.
inline std::array<double, 2> z_error_phases(const SystemParams& p, double Lambda1,
                                            double tg) {
  const double omega_d1 = p.omega1 + Lambda1;
  return {wrap_zero_two_pi((omega_d1 - Lambda1) * tg / 2.0),
          wrap_zero_two_pi((omega_d1 + p.delta - p.Delta - Lambda1) * tg / 2.0)};
}

// Required Z-control areas: the negatives of the Z-error phases, reported in
// (-pi, pi].
struct ZCorrection {
  double area1 = 0.0;
  double area2 = 0.0;
};

inline ZCorrection z_correction(const SystemParams& p, double Lambda1, double tg) {
  const auto phases = z_error_phases(p, Lambda1, tg);
  return {wrap_pm_pi(-phases[0]), wrap_pm_pi(-phases[1])};
}

// Applies the virtual corrections exp(i*area*Z) on both qubits after the
// gate; the leakage level keeps its phase.
inline Matrix9c apply_z_correction(const Matrix9c& u, const ZCorrection& corr) {
  auto zphase = [](double area) {
    Matrix3c m = Matrix3c::Identity();
    m(0, 0) = std::polar(1.0, area);
    m(1, 1) = std::polar(1.0, -area);
    return m;
  };
  return kron(zphase(corr.area1), zphase(corr.area2)) * u;
}

// Everything produced by one synthesis/simulation run.
struct SimResult {
  Matrix9c unitary = Matrix9c::Identity();
  double gate_error = 0.0;
  double leakage = 0.0;
  double leakage_worst = 0.0;
  std::array<double, 2> z_phases{0.0, 0.0};
  double phi_avg = 1.0;
  SystemParams params;
  ControlField pulse;
  PropagationGrid grid;
};

// ---------------------------------------------------------------------------
// JSON serialization (schema 1)
// ---------------------------------------------------------------------------

using nlohmann::json;

inline json to_json(cd z) { return json::array({z.real(), z.imag()}); }
inline cd cd_from_json(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

inline json to_json(const SystemParams& p) {
  return {{"omega1_radns", p.omega1}, {"omega2_radns", p.omega2},
          {"Delta_radns", p.Delta},   {"delta_radns", p.delta},
          {"lambda1", p.lambda1},     {"lambda2", p.lambda2}};
}

inline SystemParams system_params_from_json(const json& j) {
  return SystemParams::from_frequencies(
      j.at("omega1_radns").get<double>(), j.at("omega2_radns").get<double>(),
      j.at("Delta_radns").get<double>(), j.at("lambda1").get<std::array<double, 2>>(),
      j.at("lambda2").get<std::array<double, 2>>());
}

inline json to_json(const Shape& s) {
  if (const auto* h = std::get_if<HanningShape>(&s)) {
    json coeffs = json::array();
    for (cd c : h->coeffs) coeffs.push_back(to_json(c));
    return {{"kind", "hanning"}, {"coeffs", coeffs}, {"tg_ns", h->tg}};
  }
  if (const auto* g = std::get_if<GaussianShape>(&s))
    return {{"kind", "gaussian"}, {"tg_ns", g->tg}, {"sigma_ns", g->sigma},
            {"drag_beta_ns", g->drag_beta}};
  const auto& w = std::get<WahWahShape>(s);
  return {{"kind", "wahwah"}, {"api_radns", w.api}, {"tg_ns", w.tg},
          {"omega_x_radns", w.omega_x}, {"Delta_radns", w.Delta}};
}

inline Shape shape_from_json(const json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "hanning") {
    std::vector<cd> coeffs;
    for (const auto& c : j.at("coeffs")) coeffs.push_back(cd_from_json(c));
    return HanningShape(std::move(coeffs), j.at("tg_ns").get<double>());
  }
  if (kind == "gaussian")
    return GaussianShape(j.at("tg_ns").get<double>(), j.at("sigma_ns").get<double>(),
                         j.at("drag_beta_ns").get<double>());
  if (kind == "wahwah")
    return WahWahShape(j.at("api_radns").get<double>(), j.at("tg_ns").get<double>(),
                       j.at("omega_x_radns").get<double>(),
                       j.at("Delta_radns").get<double>());
  throw std::invalid_argument("shape_from_json: unknown kind '" + kind + "'");
}

inline json to_json(const ControlField& f) {
  return {{"shape1", to_json(f.shape1)}, {"shape2", to_json(f.shape2)},
          {"a1", to_json(f.a1)},         {"a2", to_json(f.a2)},
          {"Lambda1_radns", f.Lambda1},  {"Lambda2_radns", f.Lambda2},
          {"tg_ns", f.tg},               {"params", to_json(f.params)},
          {"gamma_radns", f.gamma()},    {"omega_d1_radns", f.omega_d1()},
          {"omega_d2_radns", f.omega_d2()}, {"phi1", f.phi1}, {"phi2", f.phi2}};
}

inline ControlField control_field_from_json(const json& j) {
  ControlField f;
  f.shape1 = shape_from_json(j.at("shape1"));
  f.shape2 = shape_from_json(j.at("shape2"));
  f.a1 = cd_from_json(j.at("a1"));
  f.a2 = cd_from_json(j.at("a2"));
  f.Lambda1 = j.at("Lambda1_radns").get<double>();
  f.Lambda2 = j.at("Lambda2_radns").get<double>();
  f.tg = j.at("tg_ns").get<double>();
  f.params = system_params_from_json(j.at("params"));
  return f;
}

inline std::string method_name(Method m) {
  switch (m) {
    case Method::PiecewiseExpMidpoint: return "midpoint";
    case Method::Rk4: return "rk4";
    case Method::MagnusCf4: return "cf4";
  }
  return "cf4";
}

inline Method method_from_name(const std::string& name) {
  if (name == "midpoint") return Method::PiecewiseExpMidpoint;
  if (name == "rk4") return Method::Rk4;
  if (name == "cf4") return Method::MagnusCf4;
  throw std::invalid_argument("unknown propagation method '" + name + "'");
}

inline json to_json(const PropagationGrid& g) {
  return {{"tg_ns", g.tg}, {"steps", g.steps}, {"method", method_name(g.method)}};
}

inline PropagationGrid grid_from_json(const json& j) {
  return PropagationGrid(j.at("tg_ns").get<double>(), j.at("steps").get<int>(),
                         method_from_name(j.at("method").get<std::string>()));
}

inline json to_json(const SimResult& r) {
  json u = json::array();
  for (int i = 0; i < 9; ++i) {
    json row = json::array();
    for (int k = 0; k < 9; ++k) row.push_back(to_json(r.unitary(i, k)));
    u.push_back(row);
  }
  return {{"schema", 1},
          {"gate_error", r.gate_error},
          {"leakage", r.leakage},
          {"leakage_worst", r.leakage_worst},
          {"z_phases", r.z_phases},
          {"phi_avg", r.phi_avg},
          {"unitary", u},
          {"params", to_json(r.params)},
          {"pulse", to_json(r.pulse)},
          {"grid", to_json(r.grid)}};
}

inline SimResult sim_result_from_json(const json& j) {
  if (j.at("schema").get<int>() != 1)
    throw std::invalid_argument("sim_result_from_json: unsupported schema");
  SimResult r;
  const auto& u = j.at("unitary");
  for (int i = 0; i < 9; ++i)
    for (int k = 0; k < 9; ++k) r.unitary(i, k) = cd_from_json(u.at(i).at(k));
  r.gate_error = j.at("gate_error").get<double>();
  r.leakage = j.at("leakage").get<double>();
  r.leakage_worst = j.at("leakage_worst").get<double>();
  r.z_phases = j.at("z_phases").get<std::array<double, 2>>();
  r.phi_avg = j.at("phi_avg").get<double>();
  r.params = system_params_from_json(j.at("params"));
  r.pulse = control_field_from_json(j.at("pulse"));
  r.grid = grid_from_json(j.at("grid"));
  return r;
}

}  // namespace crowdpulse
