// ctdlab: train small recurrent walking policies in a toy closed-loop env
// and take them apart with fixed-point, PCA, and perturbation analyses.

#include <CLI11.hpp>
#include <iostream>
#include <string>

#include "ctd/commands.hpp"
#include "ctd/errors.hpp"
#include "ctd/parallel.hpp"
#include "ctd/version.hpp"

namespace {

struct CommonArgs {
  std::string config;
  std::string out;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int threads = 1;
};

void add_common(CLI::App* sub, CommonArgs& args) {
  sub->add_option("--config", args.config, "experiment config JSON")
      ->required();
  sub->add_option("--out", args.out, "output directory (overrides config)");
  sub->add_option("--seed", args.seed, "master seed (overrides config)")
      ->each([&](const std::string&) { args.seed_set = true; });
  sub->add_option("--threads", args.threads,
                  "worker threads; 1 = serial reference path, 0 = all cores");
}

ctd::ExperimentConfig resolve(const CommonArgs& args) {
  ctd::ExperimentConfig cfg = ctd::load_experiment_config(args.config);
  if (!args.out.empty()) cfg.out_dir = args.out;
  if (args.seed_set) cfg.seed = args.seed;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"recurrent locomotion policy dynamics lab"};
  app.set_version_flag("--version", std::string("ctdlab ") + ctd::kToolVersion);
  app.require_subcommand(1);

  struct Cmd {
    const char* name;
    const char* help;
    void (*fn)(const ctd::ExperimentConfig&, int);
  };
  const Cmd cmds[] = {
      {"train", "train a policy by closed-loop imitation with TBPTT",
       ctd::cmd_train},
      {"rollout", "collect the speed-sweep recurrent-state dataset",
       ctd::cmd_rollout},
      {"pca", "fit the PC basis over the speed sweep", ctd::cmd_pca},
      {"fixed-points", "find, cluster, and classify recurrent fixed points",
       ctd::cmd_fixed_points},
      {"perturb-neural", "paired rollout with a PC-aligned state jump",
       ctd::cmd_perturb_neural},
      {"perturb-physical", "single lateral-push trial with recovery check",
       ctd::cmd_perturb_physical},
      {"robustness-grid", "recovery fractions over magnitude x duration",
       ctd::cmd_robustness_grid},
  };

  CommonArgs args[sizeof(cmds) / sizeof(cmds[0])];
  CLI::App* subs[sizeof(cmds) / sizeof(cmds[0])];
  for (std::size_t i = 0; i < sizeof(cmds) / sizeof(cmds[0]); ++i) {
    subs[i] = app.add_subcommand(cmds[i].name, cmds[i].help);
    add_common(subs[i], args[i]);
  }

  CLI11_PARSE(app, argc, argv);

  for (std::size_t i = 0; i < sizeof(cmds) / sizeof(cmds[0]); ++i) {
    if (!subs[i]->parsed()) continue;
    try {
      cmds[i].fn(resolve(args[i]), ctd::resolve_threads(args[i].threads));
    } catch (const ctd::ConfigError& e) {
      std::cerr << "config error: " << e.what() << "\n";
      return 1;
    } catch (const ctd::ParseError& e) {
      std::cerr << "parse error: " << e.what() << "\n";
      return 1;
    } catch (const ctd::NumericError& e) {
      std::cerr << "numeric error: " << e.what() << "\n";
      return 1;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 1;
    }
  }
  return 0;
}
