#include "ctd/config.hpp"

#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "ctd/csvio.hpp"
#include "ctd/errors.hpp"
#include "ctd/jsonutil.hpp"

namespace ctd {

using nlohmann::json;

namespace {

void require_file(const std::string& path, const std::string& key) {
  if (!std::filesystem::exists(path))
    throw ConfigError("config: " + key + " path does not exist: " + path);
}

PolicyDims dims_from_json(const json& j) {
  check_keys(j, {"d_obs", "mlp_widths", "n_cells", "d_act"}, "dims");
  PolicyDims dims;
  dims.d_obs = get_or(j, "d_obs", dims.d_obs);
  dims.mlp_widths = get_or(j, "mlp_widths", dims.mlp_widths);
  dims.n_cells = get_or(j, "n_cells", dims.n_cells);
  dims.d_act = get_or(j, "d_act", dims.d_act);
  if (dims.d_obs < 1 || dims.n_cells < 1 || dims.d_act < 1)
    throw ConfigError("dims: all sizes must be positive");
  return dims;
}

RolloutBlock rollout_from_json(const json& j) {
  check_keys(j, {"speeds", "steps", "warmup"}, "rollout");
  RolloutBlock b;
  b.speeds = get_or(j, "speeds", b.speeds);
  b.steps = get_or(j, "steps", b.steps);
  b.warmup = get_or(j, "warmup", b.warmup);
  if (b.speeds.empty()) throw ConfigError("rollout: speeds must be non-empty");
  if (b.warmup < 0 || b.warmup >= b.steps)
    throw ConfigError("rollout: warmup must lie in [0, steps)");
  return b;
}

FixedPointBlock fp_from_json(const json& j) {
  check_keys(j,
             {"n_inits", "lr", "max_iters", "q_tol", "merge_radius",
              "tol_marginal", "init_inflate", "decay_steps", "decay_offset",
              "grad_extent", "grad_resolution"},
             "fixed_points");
  FixedPointBlock b;
  b.n_inits = get_or(j, "n_inits", b.n_inits);
  b.opts.lr = get_or(j, "lr", b.opts.lr);
  b.opts.max_iters = get_or(j, "max_iters", b.opts.max_iters);
  b.opts.q_tol = get_or(j, "q_tol", b.opts.q_tol);
  b.opts.merge_radius = get_or(j, "merge_radius", b.opts.merge_radius);
  b.opts.tol_marginal = get_or(j, "tol_marginal", b.opts.tol_marginal);
  b.opts.init_inflate = get_or(j, "init_inflate", b.opts.init_inflate);
  b.decay_steps = get_or(j, "decay_steps", b.decay_steps);
  b.decay_offset = get_or(j, "decay_offset", b.decay_offset);
  b.grad_extent = get_or(j, "grad_extent", b.grad_extent);
  b.grad_resolution = get_or(j, "grad_resolution", b.grad_resolution);
  if (b.n_inits < 1) throw ConfigError("fixed_points: n_inits must be >= 1");
  return b;
}

NeuralBlock neural_from_json(const json& j) {
  check_keys(j, {"pc_index", "magnitude", "t_apply", "sign", "cmd_u", "steps",
                 "randomize_phase", "phase_settle_steps", "phase_window_steps"},
             "perturb_neural");
  NeuralBlock b;
  b.spec.pc_index = get_or(j, "pc_index", b.spec.pc_index);
  b.spec.magnitude = get_or(j, "magnitude", b.spec.magnitude);
  b.spec.t_apply = get_or(j, "t_apply", b.spec.t_apply);
  b.spec.sign = get_or(j, "sign", b.spec.sign);
  b.opts.cmd_u = get_or(j, "cmd_u", b.opts.cmd_u);
  b.opts.steps = get_or(j, "steps", b.opts.steps);
  b.opts.randomize_phase = get_or(j, "randomize_phase", b.opts.randomize_phase);
  b.opts.phase_settle_steps =
      get_or(j, "phase_settle_steps", b.opts.phase_settle_steps);
  b.opts.phase_window_steps =
      get_or(j, "phase_window_steps", b.opts.phase_window_steps);
  return b;
}

PhysicalBlock physical_from_json(const json& j) {
  check_keys(j, {"magnitude", "duration_ms", "t_apply", "cmd_u", "band_frac",
                 "sustain_steps", "horizon_steps"},
             "perturb_physical");
  PhysicalBlock b;
  b.spec.magnitude = get_or(j, "magnitude", b.spec.magnitude);
  b.spec.duration_ms = get_or(j, "duration_ms", b.spec.duration_ms);
  b.spec.t_apply = get_or(j, "t_apply", b.spec.t_apply);
  b.cmd_u = get_or(j, "cmd_u", b.cmd_u);
  b.recovery.band_frac = get_or(j, "band_frac", b.recovery.band_frac);
  b.recovery.sustain_steps = get_or(j, "sustain_steps", b.recovery.sustain_steps);
  b.recovery.horizon_steps = get_or(j, "horizon_steps", b.recovery.horizon_steps);
  return b;
}

GridBlock grid_from_json(const json& j) {
  check_keys(j, {"magnitudes", "durations_ms", "n_agents", "t_apply", "cmd_u",
                 "band_frac", "sustain_steps", "horizon_steps"},
             "grid");
  GridBlock b;
  b.magnitudes = get_or(j, "magnitudes", b.magnitudes);
  b.durations_ms = get_or(j, "durations_ms", b.durations_ms);
  b.n_agents = get_or(j, "n_agents", b.n_agents);
  b.opts.t_apply = get_or(j, "t_apply", b.opts.t_apply);
  b.opts.cmd_u = get_or(j, "cmd_u", b.opts.cmd_u);
  b.opts.recovery.band_frac = get_or(j, "band_frac", b.opts.recovery.band_frac);
  b.opts.recovery.sustain_steps =
      get_or(j, "sustain_steps", b.opts.recovery.sustain_steps);
  b.opts.recovery.horizon_steps =
      get_or(j, "horizon_steps", b.opts.recovery.horizon_steps);
  if (b.n_agents < 1) throw ConfigError("grid: n_agents must be >= 1");
  return b;
}

}  // namespace

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  check_keys(j,
             {"weights", "basis", "out_dir", "seed", "env", "dims", "train",
              "rollout", "fixed_points", "perturb_neural", "perturb_physical",
              "grid"},
             "experiment config");

  ExperimentConfig cfg;
  cfg.weights_path = get_or<std::string>(j, "weights", "");
  cfg.basis_path = get_or<std::string>(j, "basis", "");
  cfg.out_dir = get_or(j, "out_dir", cfg.out_dir);
  cfg.seed = get_or(j, "seed", cfg.seed);
  if (!cfg.weights_path.empty()) require_file(cfg.weights_path, "weights");
  if (!cfg.basis_path.empty()) require_file(cfg.basis_path, "basis");

  if (j.contains("env")) cfg.env = EnvConfig::from_json(j.at("env"));
  if (j.contains("dims")) cfg.dims = dims_from_json(j.at("dims"));
  if (j.contains("train")) cfg.train = TrainConfig::from_json(j.at("train"));
  if (j.contains("rollout")) cfg.rollout = rollout_from_json(j.at("rollout"));
  if (j.contains("fixed_points")) cfg.fp = fp_from_json(j.at("fixed_points"));
  if (j.contains("perturb_neural"))
    cfg.neural = neural_from_json(j.at("perturb_neural"));
  if (j.contains("perturb_physical"))
    cfg.physical = physical_from_json(j.at("perturb_physical"));
  if (j.contains("grid")) cfg.grid = grid_from_json(j.at("grid"));

  cfg.config_hash = fnv1a_hex(j.dump());
  return cfg;
}

}  // namespace ctd
