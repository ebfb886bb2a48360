#ifndef CTD_ROLLOUT_HPP
#define CTD_ROLLOUT_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>

#include "ctd/env.hpp"
#include "ctd/policy.hpp"

namespace ctd {

// Constant external force over a step window [t_start, t_start + n_steps).
struct ForceWindow {
  long t_start = 0;
  long n_steps = 0;
  double fx = 0.0;
  double fy = 0.0;
};

struct RolloutOptions {
  double cmd_u = 2.0;
  double cmd_v = 0.0;
  double cmd_r = 0.0;
  long steps = 1000;
  bool randomize_phase = true;   // gait phase0 drawn from the rollout seed
  double u0_jitter = 0.0;        // uniform +- bound on the initial u offset
  std::optional<ForceWindow> force;
  // Recurrent-state intervention applied before the policy consumes its
  // state at step t (timeline below). Negative t = never.
  long state_jump_t = -1;
  std::function<RecurrentState(const RecurrentState&)> state_jump;
};

// Row t of a trace records step t of the loop:
//   obs(t)    observation the controller saw,
//   action(t) action it produced (pre-saturation),
//   state(t)  recurrent state AFTER consuming obs(t)  (empty for teacher),
//   env(t)    u, v, r, gait_phase AFTER the step,
//   force(t)  external force applied during the step,
//   fallen(t) fall predicate after the step.
// A state jump at t_apply modifies the state entering step t_apply, so rows
// strictly before t_apply are unaffected.
struct RolloutTrace {
  Eigen::MatrixXd obs;
  Eigen::MatrixXd actions;
  Eigen::MatrixXd states;
  Eigen::MatrixXd env;  // cols: u, v, r, gait_phase
  Eigen::MatrixXd force;
  std::vector<char> fallen;
  bool ever_fallen = false;
  double cmd_u = 0.0;

  long length() const { return obs.rows(); }
};

// net == nullptr runs the hand-designed teacher controller instead of a
// learned policy (used by environment tests and as a training baseline).
RolloutTrace run_rollout(const PolicyNet* net, const EnvConfig& cfg,
                         const RolloutOptions& opts, std::uint64_t seed);

void write_trace_csv(const RolloutTrace& trace, const std::string& path,
                     const std::string& meta_line);

}  // namespace ctd

#endif
