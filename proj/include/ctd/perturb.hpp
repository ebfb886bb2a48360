#ifndef CTD_PERTURB_HPP
#define CTD_PERTURB_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "ctd/env.hpp"
#include "ctd/pca.hpp"
#include "ctd/policy.hpp"
#include "ctd/rollout.hpp"

namespace ctd {

struct NeuralPerturbationSpec {
  int pc_index = 1;        // 1-based
  double magnitude = 2.0;  // in units of that PC's standard deviation
  long t_apply = 0;
  int sign = 1;
};

struct PhysicalPerturbationSpec {
  double magnitude = 0.0;  // body-weight multiples, lateral axis
  double duration_ms = 100.0;
  long t_apply = 0;
};

// Training-time stochastic force schedule. While active the force vector
// is frozen; the step that deactivates returns zero force.
struct TrainingPerturbSchedule {
  double p_start = 0.01;
  double p_stop = 0.02;
  double mag_lo = -0.23;  // per-axis uniform bounds, body-weight multiples
  double mag_hi = 0.23;
  bool active = false;
  double fx = 0.0;
  double fy = 0.0;
};

struct PairMetrics {
  double phase_shift_rad = 0.0;
  bool phase_valid = false;
  double max_deviation = 0.0;
  long settle_steps = -1;  // -1 = never re-entered the nominal orbit band
  double tangentiality_at_apply = 0.0;
  bool fell_nominal = false;
  bool fell_perturbed = false;
};

struct TracePair {
  RolloutTrace nominal;
  RolloutTrace perturbed;
  NeuralPerturbationSpec spec;
  PairMetrics metrics;
};

// s' = s + sign * magnitude * sigma_pc * component_pc
Eigen::VectorXd apply_neural_perturbation(const Eigen::VectorXd& s,
                                          const PCBasis& basis,
                                          const NeuralPerturbationSpec& spec);

inline RecurrentState zero_recurrent_state_perturbation(const RecurrentState& s) {
  return RecurrentState::Zero(static_cast<int>(s.h.size()));
}

// |cos angle| between direction and the one-step state velocity
// states.row(t+1) - states.row(t); 0 for zero velocity. Requires
// 0 <= t < length - 1.
double tangentiality(const RolloutTrace& trace, long t,
                     const Eigen::VectorXd& direction);

// Circular mean over [t_start, end) of the per-step angle difference
// between the two traces on the PC1-PC2 plane. Both traces are centered
// at the nominal trace's mean over the window, so a trace against itself
// gives exactly 0. Samples with radius below 1e-8 raise NumericError.
double phase_shift(const PCBasis& basis, const RolloutTrace& nominal,
                   const RolloutTrace& perturbed, long t_start);

struct NeuralExperimentOptions {
  double cmd_u = 2.0;
  long steps = 1200;
  bool randomize_phase = false;  // keep t_apply at a reproducible gait phase
  // Phase comparison window, relative to t_apply. The shift of a driven
  // rhythm decays as the perturbed trace re-entrains to the gait clock, so
  // where the window sits decides how much of the transient it sees.
  long phase_settle_steps = -1;  // window start lag; -1 = one gait period
  long phase_window_steps = -1;  // window width; -1 = to the end of the trace
};

// Paired rollouts (same seed) differing only by the state jump at
// spec.t_apply; fills all PairMetrics. Falls are flagged, not fatal.
TracePair neural_perturbation_experiment(const PolicyNet& net,
                                         const EnvConfig& env,
                                         const PCBasis& basis,
                                         const NeuralPerturbationSpec& spec,
                                         const NeuralExperimentOptions& opts,
                                         std::uint64_t seed);

struct RecoveryParams {
  double band_frac = 0.2;   // |u - u*| < band_frac * u*
  long sustain_steps = 100;
  long horizon_steps = 1000;  // window after perturbation end
};

struct PhysicalTrialResult {
  bool recovered = false;
  RolloutTrace trace;
};

// net == nullptr runs the teacher controller, as in run_rollout.
PhysicalTrialResult physical_perturbation_trial(const PolicyNet* net,
                                                const EnvConfig& env,
                                                const PhysicalPerturbationSpec& spec,
                                                const RecoveryParams& rec,
                                                double cmd_u,
                                                std::uint64_t seed);

struct GridCell {
  double magnitude = 0.0;
  double duration_ms = 0.0;
  int n_agents = 0;
  int n_recovered = 0;
};

struct GridOptions {
  double cmd_u = 2.0;
  long t_apply = 300;
  RecoveryParams recovery;
};

// Per (magnitude, duration): fraction of n_agents seed-varied trials that
// recover. Trial seeds are derived from (master_seed, mag idx, dur idx,
// agent idx), so the table never depends on execution order.
std::vector<GridCell> robustness_grid(const PolicyNet* net,
                                      const EnvConfig& env,
                                      const std::vector<double>& magnitudes,
                                      const std::vector<double>& durations_ms,
                                      int n_agents, const GridOptions& opts,
                                      std::uint64_t master_seed, int threads);

std::vector<double> default_grid_magnitudes();  // 17 values, -4..4
std::vector<double> default_grid_durations();   // {100, 200} ms

// One scheduler transition; returns the force (newtons) for this step.
Eigen::Vector2d scheduler_step(TrainingPerturbSchedule& sched,
                               double body_weight, Rng& rng);

void write_grid_csv(const std::vector<GridCell>& grid, const std::string& path,
                    const std::string& meta);

// t, pc1..pc4 of both traces, applied force magnitude (newtons)
void write_trace_pair_csv(const TracePair& pair, const PCBasis& basis,
                          const std::string& path, const std::string& meta);

}  // namespace ctd

#endif
