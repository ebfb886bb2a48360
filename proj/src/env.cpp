#include "ctd/env.hpp"

#include <cmath>

#include "ctd/errors.hpp"
#include "ctd/jsonutil.hpp"
#include "ctd/mathutil.hpp"

namespace ctd {

using Eigen::VectorXd;

EnvState make_initial_state(const EnvConfig& cfg, double cmd_u, double cmd_v,
                            double cmd_r, double phase0, double u0_offset) {
  EnvState s;
  s.u = cmd_u + u0_offset;
  s.v = 0.0;
  s.r = 0.0;
  s.gait_phase = wrap_phase_2pi(phase0);
  s.step_count = 0;
  s.body_weight = cfg.body_weight;
  s.cmd_u = cmd_u;
  s.cmd_v = cmd_v;
  s.cmd_r = cmd_r;
  s.prev_action = VectorXd::Zero(kEnvActDim);
  return s;
}

VectorXd observe(const EnvState& state, const EnvConfig& cfg, Rng& rng) {
  VectorXd obs(kEnvObsDim);
  obs << state.u, state.v, state.r, state.cmd_u, state.cmd_v, state.cmd_r,
      state.prev_action(0), state.prev_action(1), state.prev_action(2),
      state.prev_action(3), contact_gate(state.gait_phase),
      contact_gate(state.gait_phase + 3.14159265358979323846);
  if (cfg.noise_std.size() > 0) {
    if (cfg.noise_std.size() != kEnvObsDim)
      throw ConfigError("env: noise_std must have one entry per channel");
    for (int i = 0; i < kEnvObsDim; ++i)
      if (cfg.noise_std(i) > 0.0) obs(i) += cfg.noise_std(i) * rng.normal();
  }
  return obs;
}

std::pair<EnvState, VectorXd> env_step(const EnvState& state,
                                       const VectorXd& action, double fx,
                                       double fy, const EnvConfig& cfg,
                                       Rng& rng) {
  if (action.size() != kEnvActDim)
    throw ConfigError("env_step: action must have 4 components");
  if (!action.allFinite()) throw NumericError("env_step: non-finite action");

  const double lim = cfg.act_limit;
  VectorXd sat = action.cwiseMax(-lim).cwiseMin(lim);

  const double dt = cfg.dt;
  const double m = cfg.mass();
  const double ga = contact_gate(state.gait_phase);
  const double gb = contact_gate(state.gait_phase + 3.14159265358979323846);

  EnvState next = state;
  next.u = state.u * (1.0 - cfg.damping * dt) + dt * cfg.act_gain * ga * sat(0) +
           dt * fx / m;
  next.v = state.v * (1.0 - cfg.damping * dt) + dt * cfg.act_gain * gb * sat(1) +
           dt * fy / m;
  next.r = state.r * (1.0 - cfg.damping * dt) + dt * cfg.act_gain * sat(2);
  next.gait_phase =
      wrap_phase_2pi(state.gait_phase + dt * cfg.gait_freq_gain * state.cmd_u);
  next.step_count = state.step_count + 1;
  next.prev_action = sat;

  next.v_violation_steps =
      (std::abs(next.v) > cfg.v_fall) ? state.v_violation_steps + 1 : 0;
  next.u_violation_steps = (std::abs(next.u - state.cmd_u) > cfg.u_fall)
                               ? state.u_violation_steps + 1
                               : 0;

  VectorXd obs = observe(next, cfg, rng);
  return {std::move(next), std::move(obs)};
}

Action teacher_action(const EnvConfig& cfg, const VectorXd& obs,
                      double internal_phase) {
  const TeacherGains& g = cfg.teacher;
  Action a;
  a.torque = VectorXd::Zero(kEnvActDim);
  a.torque(0) = g.k_u * (obs(3) - obs(0)) + g.amp_thrust * std::cos(internal_phase);
  a.torque(1) = g.k_v * (obs(4) - obs(1)) + g.amp_lat * std::sin(internal_phase);
  a.torque(2) = g.k_r * (obs(5) - obs(2));
  return a;
}

bool is_fallen(const EnvState& state, const EnvConfig& cfg) {
  return state.v_violation_steps >= cfg.n_fall ||
         state.u_violation_steps >= cfg.n_fall;
}

nlohmann::json EnvConfig::to_json() const {
  nlohmann::json j;
  j["dt"] = dt;
  j["damping"] = damping;
  j["act_gain"] = act_gain;
  j["act_limit"] = act_limit;
  j["gait_freq_gain"] = gait_freq_gain;
  j["body_weight"] = body_weight;
  j["gravity"] = gravity;
  j["noise_std"] = std::vector<double>(noise_std.data(),
                                       noise_std.data() + noise_std.size());
  j["v_fall"] = v_fall;
  j["u_fall"] = u_fall;
  j["n_fall"] = n_fall;
  j["teacher"] = {{"k_u", teacher.k_u},
                  {"k_v", teacher.k_v},
                  {"k_r", teacher.k_r},
                  {"amp_thrust", teacher.amp_thrust},
                  {"amp_lat", teacher.amp_lat}};
  return j;
}

EnvConfig EnvConfig::from_json(const nlohmann::json& j) {
  check_keys(j,
             {"dt", "damping", "act_gain", "act_limit", "gait_freq_gain",
              "body_weight", "gravity", "noise_std", "v_fall", "u_fall",
              "n_fall", "teacher"},
             "env config");
  EnvConfig cfg;
  cfg.dt = get_or(j, "dt", cfg.dt);
  cfg.damping = get_or(j, "damping", cfg.damping);
  cfg.act_gain = get_or(j, "act_gain", cfg.act_gain);
  cfg.act_limit = get_or(j, "act_limit", cfg.act_limit);
  cfg.gait_freq_gain = get_or(j, "gait_freq_gain", cfg.gait_freq_gain);
  cfg.body_weight = get_or(j, "body_weight", cfg.body_weight);
  cfg.gravity = get_or(j, "gravity", cfg.gravity);
  if (j.contains("noise_std")) {
    const auto stds = j.at("noise_std").get<std::vector<double>>();
    cfg.noise_std = Eigen::Map<const VectorXd>(stds.data(), stds.size());
  }
  cfg.v_fall = get_or(j, "v_fall", cfg.v_fall);
  cfg.u_fall = get_or(j, "u_fall", cfg.u_fall);
  cfg.n_fall = get_or(j, "n_fall", cfg.n_fall);
  if (j.contains("teacher")) {
    const auto& t = j.at("teacher");
    check_keys(t, {"k_u", "k_v", "k_r", "amp_thrust", "amp_lat"},
               "env config teacher");
    cfg.teacher.k_u = get_or(t, "k_u", cfg.teacher.k_u);
    cfg.teacher.k_v = get_or(t, "k_v", cfg.teacher.k_v);
    cfg.teacher.k_r = get_or(t, "k_r", cfg.teacher.k_r);
    cfg.teacher.amp_thrust = get_or(t, "amp_thrust", cfg.teacher.amp_thrust);
    cfg.teacher.amp_lat = get_or(t, "amp_lat", cfg.teacher.amp_lat);
  }
  if (cfg.dt <= 0) throw ConfigError("env config: dt must be positive");
  if (cfg.v_fall <= 0 || cfg.u_fall <= 0 || cfg.n_fall <= 0)
    throw ConfigError("env config: fall thresholds must be positive");
  return cfg;
}

}  // namespace ctd
