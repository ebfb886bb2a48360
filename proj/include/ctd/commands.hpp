#ifndef CTD_COMMANDS_HPP
#define CTD_COMMANDS_HPP

#include "ctd/config.hpp"

namespace ctd {

// Subcommand bodies. Each validates what it needs, writes its outputs under
// cfg.out_dir, and throws (ConfigError/ParseError/NumericError) on failure;
// the CLI turns that into a diagnostic and a nonzero exit code.
void cmd_train(const ExperimentConfig& cfg, int threads);
void cmd_rollout(const ExperimentConfig& cfg, int threads);
void cmd_pca(const ExperimentConfig& cfg, int threads);
void cmd_fixed_points(const ExperimentConfig& cfg, int threads);
void cmd_perturb_neural(const ExperimentConfig& cfg, int threads);
void cmd_perturb_physical(const ExperimentConfig& cfg, int threads);
void cmd_robustness_grid(const ExperimentConfig& cfg, int threads);

}  // namespace ctd

#endif
