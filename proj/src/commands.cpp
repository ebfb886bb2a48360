#include "ctd/commands.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>

#include "ctd/csvio.hpp"
#include "ctd/errors.hpp"
#include "ctd/pca.hpp"
#include "ctd/policy_io.hpp"
#include "ctd/rng.hpp"

namespace ctd {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string out_path(const ExperimentConfig& cfg, const std::string& name) {
  fs::create_directories(cfg.out_dir);
  return (fs::path(cfg.out_dir) / name).string();
}

PolicyNet require_weights(const ExperimentConfig& cfg) {
  if (cfg.weights_path.empty())
    throw ConfigError("this command needs a 'weights' path in the config");
  return load_weights(cfg.weights_path);
}

void require_noise_free(const EnvConfig& env, const std::string& cmd) {
  if (env.noise_std.size() != 0 && env.noise_std.cwiseAbs().maxCoeff() > 0.0)
    throw ConfigError(cmd + " analyses a noise-free env; remove env.noise_std");
}

RolloutDataset sweep_dataset(const PolicyNet& net, const ExperimentConfig& cfg,
                             int threads) {
  return collect_rollouts(net, cfg.env, cfg.rollout.speeds, cfg.rollout.steps,
                          cfg.rollout.warmup, cfg.seed, threads);
}

}  // namespace

void cmd_train(const ExperimentConfig& cfg, int threads) {
  TrainConfig tc = cfg.train;
  tc.seed = cfg.seed;  // the experiment seed governs everything
  PolicyNet init = random_policy(cfg.dims, derive_seed(cfg.seed, 100));
  auto [net, report] = train(init, cfg.env, tc, threads);

  const std::string weights = out_path(cfg, "weights.json");
  save_weights(net, weights);
  save_train_report(report, out_path(cfg, "train_report.json"));
  write_loss_csv(report, out_path(cfg, "loss.csv"),
                 meta_line(cfg.config_hash, cfg.seed));
  if (report.diverged)
    throw NumericError("training diverged; partial report written");
  std::cout << "trained k_trunc=" << tc.k_trunc << " final loss "
            << (report.losses.empty() ? 0.0 : report.losses.back())
            << " tracking error " << report.final_tracking_error << "\n"
            << "wrote " << weights << "\n";
}

void cmd_rollout(const ExperimentConfig& cfg, int threads) {
  PolicyNet net = require_weights(cfg);
  require_noise_free(cfg.env, "rollout");
  RolloutDataset ds = sweep_dataset(net, cfg, threads);
  const std::string path = out_path(cfg, "dataset.csv");
  save_dataset_csv(ds, path, meta_line(cfg.config_hash, cfg.seed));
  std::cout << "wrote " << path << " (" << ds.rows() << " rows)\n";
}

void cmd_pca(const ExperimentConfig& cfg, int threads) {
  PolicyNet net = require_weights(cfg);
  require_noise_free(cfg.env, "pca");
  RolloutDataset ds = sweep_dataset(net, cfg, threads);
  PCBasis basis = fit_pca(ds);
  if (basis.reduced_rank)
    std::cout << "warning: dataset is rank deficient; trailing variances "
                 "clamped to zero\n";

  const std::string bpath = out_path(cfg, "basis.json");
  save_basis_json(basis, bpath);
  CsvWriter var(out_path(cfg, "variance.csv"),
                meta_line(cfg.config_hash, cfg.seed),
                {"pc", "fraction", "cumulative"});
  for (const auto& row : explained_variance_report(basis))
    var.row({static_cast<double>(row.pc), row.fraction, row.cumulative});
  std::cout << "wrote " << bpath << "\n";
}

void cmd_fixed_points(const ExperimentConfig& cfg, int threads) {
  PolicyNet net = require_weights(cfg);
  require_noise_free(cfg.env, "fixed-points");
  RolloutDataset ds = sweep_dataset(net, cfg, threads);
  PCBasis basis =
      cfg.basis_path.empty() ? fit_pca(ds) : load_basis_json(cfg.basis_path);

  const Eigen::VectorXd x = zero_input_vector(net);
  auto cands = find_fixed_points(net, x, cfg.fp.n_inits, ds.states,
                                 cfg.fp.opts, cfg.seed, threads);
  auto clusters = cluster_candidates(cands, cfg.fp.opts.merge_radius);

  FinderSummary summary;
  summary.n_inits = cfg.fp.n_inits;
  for (const auto& c : cands)
    if (c.converged) ++summary.n_converged;
  summary.n_clusters = static_cast<int>(clusters.size());

  std::vector<FixedPointReport> reports;
  std::vector<int> sizes;
  for (const auto& cl : clusters) {
    reports.push_back(classify(net, x, cl.rep.state, cfg.fp.opts.tol_marginal));
    sizes.push_back(cl.size);
  }
  const std::string rpath = out_path(cfg, "fixed_points.json");
  save_fixed_point_report(reports, sizes, x, summary, rpath);

  const std::string meta = meta_line(cfg.config_hash, cfg.seed);
  CsvWriter eig(out_path(cfg, "eigvals.csv"), meta,
                {"fp", "index", "re", "im", "modulus"});
  for (std::size_t i = 0; i < reports.size(); ++i)
    for (long k = 0; k < reports[i].eigenvalues.size(); ++k) {
      const auto ev = reports[i].eigenvalues(k);
      eig.row({static_cast<double>(i), static_cast<double>(k), ev.real(),
               ev.imag(), std::abs(ev)});
    }

  for (std::size_t i = 0; i < reports.size(); ++i) {
    const auto& rep = reports[i];
    Eigen::MatrixXd field =
        local_gradient_field(net, x, rep.state, basis, cfg.fp.grad_extent,
                             cfg.fp.grad_resolution);
    write_gradient_field_csv(
        field, out_path(cfg, "grad_field_fp" + std::to_string(i) + ".csv"),
        meta);
    Eigen::VectorXd dir = rep.eigenvectors.col(0).real();
    if (dir.norm() < 1e-12)
      dir = Eigen::VectorXd::Ones(rep.state.size());
    dir.normalize();
    Eigen::MatrixXd orbit = unforced_rollout(
        net, x, rep.state + cfg.fp.decay_offset * dir, cfg.fp.decay_steps);
    write_decay_csv(orbit, basis, rep.state,
                    out_path(cfg, "decay_fp" + std::to_string(i) + ".csv"),
                    meta);
  }
  std::cout << "found " << reports.size() << " fixed point(s) from "
            << summary.n_converged << "/" << summary.n_inits
            << " converged runs\nwrote " << rpath << "\n";
}

void cmd_perturb_neural(const ExperimentConfig& cfg, int threads) {
  PolicyNet net = require_weights(cfg);
  require_noise_free(cfg.env, "perturb-neural");
  // no saved basis: fit one from this config's rollout block; a
  // single-speed sweep puts the gait cycle in the PC1-PC2 plane
  PCBasis basis = cfg.basis_path.empty()
                      ? fit_pca(sweep_dataset(net, cfg, threads))
                      : load_basis_json(cfg.basis_path);

  TracePair pair = neural_perturbation_experiment(net, cfg.env, basis,
                                                  cfg.neural.spec,
                                                  cfg.neural.opts, cfg.seed);
  const std::string meta = meta_line(cfg.config_hash, cfg.seed);
  const std::string tpath = out_path(cfg, "trace_pair.csv");
  write_trace_pair_csv(pair, basis, tpath, meta);

  json m;
  m["pc_index"] = pair.spec.pc_index;
  m["magnitude"] = pair.spec.magnitude;
  m["sign"] = pair.spec.sign;
  m["t_apply"] = pair.spec.t_apply;
  m["phase_shift_rad"] = pair.metrics.phase_shift_rad;
  m["phase_valid"] = pair.metrics.phase_valid;
  m["max_deviation"] = pair.metrics.max_deviation;
  m["settle_steps"] = pair.metrics.settle_steps;
  m["tangentiality_at_apply"] = pair.metrics.tangentiality_at_apply;
  m["fell_nominal"] = pair.metrics.fell_nominal;
  m["fell_perturbed"] = pair.metrics.fell_perturbed;
  std::ofstream out(out_path(cfg, "perturb_metrics.json"));
  out << m.dump(1) << "\n";
  std::cout << "wrote " << tpath << " (phase shift "
            << pair.metrics.phase_shift_rad << " rad, tangentiality "
            << pair.metrics.tangentiality_at_apply << ")\n";
}

void cmd_perturb_physical(const ExperimentConfig& cfg, int threads) {
  (void)threads;
  PolicyNet net = require_weights(cfg);
  auto res = physical_perturbation_trial(&net, cfg.env, cfg.physical.spec,
                                         cfg.physical.recovery,
                                         cfg.physical.cmd_u, cfg.seed);
  const std::string tpath = out_path(cfg, "physical_trace.csv");
  write_trace_csv(res.trace, tpath, meta_line(cfg.config_hash, cfg.seed));
  json m;
  m["recovered"] = res.recovered;
  m["magnitude_bw"] = cfg.physical.spec.magnitude;
  m["duration_ms"] = cfg.physical.spec.duration_ms;
  std::ofstream out(out_path(cfg, "physical_result.json"));
  out << m.dump(1) << "\n";
  std::cout << "wrote " << tpath << " (recovered: "
            << (res.recovered ? "yes" : "no") << ")\n";
}

void cmd_robustness_grid(const ExperimentConfig& cfg, int threads) {
  PolicyNet net = require_weights(cfg);
  std::vector<double> mags = cfg.grid.magnitudes.empty()
                                 ? default_grid_magnitudes()
                                 : cfg.grid.magnitudes;
  std::vector<double> durs = cfg.grid.durations_ms.empty()
                                 ? default_grid_durations()
                                 : cfg.grid.durations_ms;
  auto grid = robustness_grid(&net, cfg.env, mags, durs, cfg.grid.n_agents,
                              cfg.grid.opts, cfg.seed, threads);
  const std::string gpath = out_path(cfg, "grid.csv");
  write_grid_csv(grid, gpath, meta_line(cfg.config_hash, cfg.seed));
  std::cout << "wrote " << gpath << " (" << grid.size() << " cells, "
            << grid.size() * static_cast<std::size_t>(cfg.grid.n_agents)
            << " trials)\n";
}

}  // namespace ctd
