#ifndef CTD_CONFIG_HPP
#define CTD_CONFIG_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "ctd/env.hpp"
#include "ctd/fixed_points.hpp"
#include "ctd/perturb.hpp"
#include "ctd/policy.hpp"
#include "ctd/trainer.hpp"

namespace ctd {

struct RolloutBlock {
  std::vector<double> speeds = {0.8, 1.0, 1.2, 1.4, 1.6, 1.8, 2.0};
  long steps = 1000;
  long warmup = 200;
};

struct FixedPointBlock {
  FixedPointOptions opts;
  int n_inits = 50;
  long decay_steps = 200;
  double decay_offset = 0.05;  // ic distance along the leading eigenvector
  double grad_extent = 1.0;    // PC units
  int grad_resolution = 21;
};

struct NeuralBlock {
  NeuralPerturbationSpec spec;
  NeuralExperimentOptions opts;
};

struct PhysicalBlock {
  PhysicalPerturbationSpec spec;
  RecoveryParams recovery;
  double cmd_u = 2.0;
};

struct GridBlock {
  std::vector<double> magnitudes;    // empty = default 17 values -4..4
  std::vector<double> durations_ms;  // empty = {100, 200}
  int n_agents = 100;
  GridOptions opts;
};

// One config file drives every subcommand; blocks a command does not use
// are ignored by it but still validated. Unknown keys are rejected and
// referenced files must exist at load time.
struct ExperimentConfig {
  std::string weights_path;  // empty = not set
  std::string basis_path;    // empty = not set
  std::string out_dir = "out";
  std::uint64_t seed = 1;
  EnvConfig env;
  PolicyDims dims;
  TrainConfig train;
  RolloutBlock rollout;
  FixedPointBlock fp;
  NeuralBlock neural;
  PhysicalBlock physical;
  GridBlock grid;
  std::string config_hash;  // FNV-1a of the canonical loaded JSON
};

ExperimentConfig load_experiment_config(const std::string& path);

}  // namespace ctd

#endif
