#include "ctd/rollout.hpp"

#include "ctd/csvio.hpp"
#include "ctd/errors.hpp"
#include "ctd/mathutil.hpp"
#include "ctd/rng.hpp"

namespace ctd {

RolloutTrace run_rollout(const PolicyNet* net, const EnvConfig& cfg,
                         const RolloutOptions& opts, std::uint64_t seed) {
  if (opts.steps <= 0) throw ConfigError("rollout steps must be positive");
  if (opts.state_jump_t >= 0 && !opts.state_jump)
    throw ConfigError("state_jump_t set without a state_jump function");

  Rng init_rng(derive_seed(seed, 1));
  Rng noise_rng(derive_seed(seed, 2));

  double phase0 = opts.randomize_phase ? init_rng.uniform() * kTwoPi : 0.0;
  double u_off = opts.u0_jitter > 0.0
                     ? (2.0 * init_rng.uniform() - 1.0) * opts.u0_jitter
                     : 0.0;
  EnvState env = make_initial_state(cfg, opts.cmd_u, opts.cmd_v, opts.cmd_r,
                                    phase0, u_off);

  const long n_state = net ? 2 * net->dims.n_cells : 0;
  RolloutTrace trace;
  trace.cmd_u = opts.cmd_u;
  trace.obs.resize(opts.steps, kEnvObsDim);
  trace.actions.resize(opts.steps, kEnvActDim);
  trace.states.resize(opts.steps, n_state);
  trace.env.resize(opts.steps, 4);
  trace.force.resize(opts.steps, 2);
  trace.fallen.assign(static_cast<std::size_t>(opts.steps), 0);

  RecurrentState s;
  if (net) s = RecurrentState::Zero(net->dims.n_cells);

  Eigen::VectorXd obs = observe(env, cfg, noise_rng);
  for (long t = 0; t < opts.steps; ++t) {
    if (net && t == opts.state_jump_t) s = opts.state_jump(s);

    Eigen::VectorXd action;
    if (net) {
      auto out = policy_step(*net, obs, s);
      action = out.first.torque;
      s = out.second;
    } else {
      action = teacher_action(cfg, obs, env.gait_phase).torque;
    }

    double fx = 0.0, fy = 0.0;
    if (opts.force && t >= opts.force->t_start &&
        t < opts.force->t_start + opts.force->n_steps) {
      fx = opts.force->fx;
      fy = opts.force->fy;
    }

    trace.obs.row(t) = obs.transpose();
    trace.actions.row(t) = action.transpose();
    if (net) trace.states.row(t) = s.concat().transpose();

    auto stepped = env_step(env, action, fx, fy, cfg, noise_rng);
    env = stepped.first;
    obs = stepped.second;

    trace.env(t, 0) = env.u;
    trace.env(t, 1) = env.v;
    trace.env(t, 2) = env.r;
    trace.env(t, 3) = env.gait_phase;
    trace.force(t, 0) = fx;
    trace.force(t, 1) = fy;
    bool down = is_fallen(env, cfg);
    trace.fallen[static_cast<std::size_t>(t)] = down ? 1 : 0;
    trace.ever_fallen = trace.ever_fallen || down;
  }
  return trace;
}

void write_trace_csv(const RolloutTrace& trace, const std::string& path,
                     const std::string& meta) {
  std::vector<std::string> header = {"t", "u", "v", "r", "gait_phase",
                                     "fx", "fy", "fallen"};
  for (long i = 0; i < trace.obs.cols(); ++i)
    header.push_back("obs" + std::to_string(i));
  for (long i = 0; i < trace.actions.cols(); ++i)
    header.push_back("act" + std::to_string(i));
  for (long i = 0; i < trace.states.cols(); ++i)
    header.push_back("s" + std::to_string(i));

  CsvWriter w(path, meta, header);
  std::vector<double> row;
  for (long t = 0; t < trace.length(); ++t) {
    row.clear();
    row.push_back(static_cast<double>(t));
    for (long j = 0; j < 4; ++j) row.push_back(trace.env(t, j));
    row.push_back(trace.force(t, 0));
    row.push_back(trace.force(t, 1));
    row.push_back(static_cast<double>(trace.fallen[static_cast<std::size_t>(t)]));
    for (long j = 0; j < trace.obs.cols(); ++j) row.push_back(trace.obs(t, j));
    for (long j = 0; j < trace.actions.cols(); ++j)
      row.push_back(trace.actions(t, j));
    for (long j = 0; j < trace.states.cols(); ++j)
      row.push_back(trace.states(t, j));
    w.row(row);
  }
}

}  // namespace ctd
