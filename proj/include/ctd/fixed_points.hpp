#ifndef CTD_FIXED_POINTS_HPP
#define CTD_FIXED_POINTS_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "ctd/pca.hpp"
#include "ctd/policy.hpp"

namespace ctd {

struct FixedPointOptions {
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  long max_iters = 20000;
  double q_tol = 1e-10;
  double merge_radius = 0.1;
  double tol_marginal = 0.005;
  // init sampling: bounding box of the provided sample states inflated by
  // this fraction; falls back to [-default_box, default_box]^2n when no
  // samples are given
  double init_inflate = 0.25;
  double default_box = 1.0;
};

struct FixedPointCandidate {
  Eigen::VectorXd state;  // [h; c]
  double speed = 0.0;
  bool converged = false;
  long iterations = 0;
};

enum class FpClass { Attractor, Saddle, Marginal };
std::string to_string(FpClass k);

struct FixedPointReport {
  Eigen::VectorXd state;
  double speed = 0.0;
  Eigen::VectorXcd eigenvalues;  // descending modulus
  Eigen::MatrixXcd eigenvectors; // columns, matching eigenvalue order
  FpClass klass = FpClass::Attractor;
  int k_unstable = 0;
  // condition estimate of the eigenvector matrix; large values mean the
  // eigenbasis is unreliable (near-defective Jacobian)
  double eigvec_cond = 0.0;
  bool ill_conditioned = false;
};

struct Cluster {
  FixedPointCandidate rep;  // lowest-speed member
  int size = 0;
};

// One step of the recurrent map F([h; c]) under frozen input x.
Eigen::VectorXd step_map(const PolicyNet& net, const Eigen::VectorXd& x,
                         const Eigen::VectorXd& s);

// q(s) = 0.5 * ||F(s, x) - s||^2
double speed_q(const PolicyNet& net, const Eigen::VectorXd& x,
               const Eigen::VectorXd& s);

// Analytic gradient (J - I)^T (F(s) - s); the objective the finder descends.
Eigen::VectorXd speed_grad(const PolicyNet& net, const Eigen::VectorXd& x,
                           const Eigen::VectorXd& s);

// Constant LSTM input used by all fixed-point analysis: the encoder's
// response to an all-zero observation.
Eigen::VectorXd zero_input_vector(const PolicyNet& net);

// Adam descent on q from one start. Non-finite q or gradient flags the
// candidate diverged instead of throwing.
FixedPointCandidate minimize_speed(const PolicyNet& net,
                                   const Eigen::VectorXd& x,
                                   const Eigen::VectorXd& s0,
                                   const FixedPointOptions& opts);

// Independent Adam runs from n_inits sampled starts (see init_inflate).
// sample_states may have zero rows. Candidate order is by init index, so
// results are identical for any thread count.
std::vector<FixedPointCandidate> find_fixed_points(
    const PolicyNet& net, const Eigen::VectorXd& x, int n_inits,
    const Eigen::MatrixXd& sample_states, const FixedPointOptions& opts,
    std::uint64_t seed, int threads);

// Single-linkage merge of converged candidates at distance <= merge_radius
// (connected components). Representative = lowest-speed member. Candidates
// are sorted internally, so the result is independent of input order.
std::vector<Cluster> cluster_candidates(
    const std::vector<FixedPointCandidate>& cands, double merge_radius);

// Linearization at a point with speed below q_tol (caller's contract).
FixedPointReport classify(const PolicyNet& net, const Eigen::VectorXd& x,
                          const Eigen::VectorXd& fp_state, double tol_marginal);

// Iterates the map T times from s0; returns T+1 rows including s0.
Eigen::MatrixXd unforced_rollout(const PolicyNet& net,
                                 const Eigen::VectorXd& x,
                                 const Eigen::VectorXd& s0, long T);

// One-step displacements F(s) - s sampled on the PC1-PC2 plane anchored at
// the fixed point: rows are (pc1, pc2, dpc1, dpc2) offsets in PC
// coordinates, resolution^2 of them, row-major over the grid.
Eigen::MatrixXd local_gradient_field(const PolicyNet& net,
                                     const Eigen::VectorXd& x,
                                     const Eigen::VectorXd& fp_state,
                                     const PCBasis& basis, double extent,
                                     int resolution);

struct FinderSummary {
  int n_inits = 0;
  int n_converged = 0;
  int n_clusters = 0;
};

void save_fixed_point_report(const std::vector<FixedPointReport>& reports,
                             const std::vector<int>& cluster_sizes,
                             const Eigen::VectorXd& x,
                             const FinderSummary& summary,
                             const std::string& path);

void write_gradient_field_csv(const Eigen::MatrixXd& field,
                              const std::string& path,
                              const std::string& meta);

// Decay trace: t, pc1..pc_k (k = min(4, dim)), distance to the fixed point.
void write_decay_csv(const Eigen::MatrixXd& orbit, const PCBasis& basis,
                     const Eigen::VectorXd& fp_state, const std::string& path,
                     const std::string& meta);

}  // namespace ctd

#endif
