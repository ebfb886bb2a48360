#ifndef CTD_PCA_HPP
#define CTD_PCA_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "ctd/env.hpp"
#include "ctd/policy.hpp"

namespace ctd {

// Pooled recurrent states from closed-loop rollouts across commanded
// speeds; one metadata entry per row.
struct RolloutDataset {
  Eigen::MatrixXd states;  // rows x 2n
  std::vector<long> rollout_id;
  std::vector<double> speed;
  std::vector<long> t;

  long rows() const { return states.rows(); }
};

// Orthonormal PC basis over [h; c]. Columns of `components` are PCs in
// descending-variance order. Variances use the 1/N normalization so the
// mean squared truncation residual over the fitted data equals the sum of
// the trailing variances exactly.
struct PCBasis {
  Eigen::VectorXd mean;
  Eigen::MatrixXd components;
  Eigen::VectorXd variances;
  bool reduced_rank = false;
  std::string source_hash;

  int dim() const { return static_cast<int>(mean.size()); }
};

// One noise-free rollout per commanded speed (v*, r* = 0); the first
// `warmup` recorded states are discarded. Throws ConfigError if the env
// has observation noise configured.
RolloutDataset collect_rollouts(const PolicyNet& net, const EnvConfig& env,
                                const std::vector<double>& speeds, long steps,
                                long warmup, std::uint64_t seed, int threads);

// Mean-centered covariance eigendecomposition. Variances below
// 1e-12 * max variance are clamped to exactly 0 and the basis is flagged
// reduced-rank (also when rows < 2n). Column signs are fixed so the
// largest-magnitude entry of each component is positive.
PCBasis fit_pca(const RolloutDataset& ds);

Eigen::VectorXd project(const PCBasis& basis, const Eigen::VectorXd& s, int k);
Eigen::VectorXd reconstruct(const PCBasis& basis, const Eigen::VectorXd& coords);

struct VarianceRow {
  int pc;  // 1-based
  double fraction;
  double cumulative;
};
std::vector<VarianceRow> explained_variance_report(const PCBasis& basis);

void save_dataset_csv(const RolloutDataset& ds, const std::string& path,
                      const std::string& meta);
RolloutDataset load_dataset_csv(const std::string& path);
void save_basis_json(const PCBasis& basis, const std::string& path);
PCBasis load_basis_json(const std::string& path);

}  // namespace ctd

#endif
