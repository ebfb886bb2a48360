#ifndef CTD_ENV_HPP
#define CTD_ENV_HPP

#include <Eigen/Dense>
#include <json.hpp>
#include <utility>

#include "ctd/policy.hpp"
#include "ctd/rng.hpp"

namespace ctd {

// Planar 3-DOF body with phase-gated actuation. Velocities are damped
// linear states; rhythm comes from a raised-cosine contact gate driven by
// the commanded forward speed. Forces are expressed in newtons and usually
// quoted in body-weight multiples.
//
// Observation layout (d_obs = 12):
//   0..2   u, v, r
//   3..5   u*, v*, r*
//   6..9   previous applied (saturated) action
//   10..11 contact gates g(phase), g(phase + pi)
struct TeacherGains {
  double k_u = 12.0;
  double k_v = 12.0;
  double k_r = 8.0;
  double amp_thrust = 1.0;
  double amp_lat = 1.0;
};

struct EnvConfig {
  double dt = 0.01;           // s; 100 ms and 200 ms pushes are 10 and 20 steps
  double damping = 0.3;       // 1/s
  double act_gain = 1.0;
  double act_limit = 10.0;    // saturation bound, m/s^2 equivalents
  double gait_freq_gain = 8.0;  // rad/s of gait phase per m/s of command
  double body_weight = 20.0;  // newtons
  double gravity = 9.81;
  Eigen::VectorXd noise_std;  // per observation channel; empty = no noise
  double v_fall = 1.5;
  double u_fall = 1.2;
  int n_fall = 10;            // consecutive steps a violation must persist
  TeacherGains teacher;

  double mass() const { return body_weight / gravity; }

  nlohmann::json to_json() const;
  static EnvConfig from_json(const nlohmann::json& j);
};

struct EnvState {
  double u = 0.0;
  double v = 0.0;
  double r = 0.0;
  double gait_phase = 0.0;  // [0, 2*pi)
  long step_count = 0;
  double body_weight = 0.0;
  double cmd_u = 0.0, cmd_v = 0.0, cmd_r = 0.0;
  Eigen::VectorXd prev_action;  // saturated, d_act
  int u_violation_steps = 0;
  int v_violation_steps = 0;
};

constexpr int kEnvObsDim = 12;
constexpr int kEnvActDim = 4;

// raised-cosine contact gate in [0, 1]
inline double contact_gate(double phase) {
  return 0.5 * (1.0 + std::cos(phase));
}

// Warm start: body already moving at the commanded forward speed.
EnvState make_initial_state(const EnvConfig& cfg, double cmd_u, double cmd_v,
                            double cmd_r, double phase0 = 0.0,
                            double u0_offset = 0.0);

Eigen::VectorXd observe(const EnvState& state, const EnvConfig& cfg, Rng& rng);

// One explicit first-order step. external_force = (fx, fy) newtons.
// Returns the new state and the observation taken from it.
std::pair<EnvState, Eigen::VectorXd> env_step(const EnvState& state,
                                              const Eigen::VectorXd& action,
                                              double fx, double fy,
                                              const EnvConfig& cfg, Rng& rng);

// Proportional velocity tracking plus rhythm terms phase-locked to the
// gait. Reads velocities and commands from the observation.
Action teacher_action(const EnvConfig& cfg, const Eigen::VectorXd& obs,
                      double internal_phase);

// Fall = lateral speed or forward tracking error out of band for at least
// n_fall consecutive steps.
bool is_fallen(const EnvState& state, const EnvConfig& cfg);

}  // namespace ctd

#endif
