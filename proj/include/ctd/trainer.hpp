#ifndef CTD_TRAINER_HPP
#define CTD_TRAINER_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <json.hpp>
#include <string>
#include <utility>
#include <vector>

#include "ctd/env.hpp"
#include "ctd/perturb.hpp"
#include "ctd/policy.hpp"

namespace ctd {

// Gradients (or Adam moments) with the same shapes as PolicyNet weights.
struct GradientSet {
  std::vector<MlpLayer> mlp;
  Eigen::MatrixXd w_ih, w_hh;
  Eigen::VectorXd b_lstm;
  Eigen::MatrixXd w_fc;
  Eigen::VectorXd b_fc;

  static GradientSet zero_like(const PolicyNet& net);
  void add(const GradientSet& other);
  void scale(double a);
};

// One truncation window: the entering recurrent state is a constant with
// no gradient flowing past it, which is what makes the truncation exact.
struct TbpttWindow {
  RecurrentState state0;
  Eigen::MatrixXd obs;      // k x d_obs
  Eigen::MatrixXd targets;  // k x d_act
};

// Reverse accumulation through FC head, LSTM, and MLP encoder for the
// window MSE (mean over steps and action dims). Returns (gradients, loss).
std::pair<GradientSet, double> tbptt_gradients(const PolicyNet& net,
                                               const TbpttWindow& window);

struct AdamState {
  GradientSet m, v;
  long t = 0;
};

void adam_update(PolicyNet& net, AdamState& st, const GradientSet& g,
                 double lr, double beta1, double beta2, double eps);

struct TrainConfig {
  int k_trunc = 16;
  int epochs = 40;
  long rollout_steps = 400;
  int batch_rollouts = 8;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 1;
  double speed_lo = 0.8;  // commanded forward speed sampled per rollout
  double speed_hi = 2.0;
  bool perturb_during_training = false;
  TrainingPerturbSchedule sched;

  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

struct TrainReport {
  std::vector<double> losses;  // per epoch
  double final_tracking_error = 0.0;
  bool diverged = false;
  int k_trunc = 0;
  int epochs_run = 0;
};

// Closed-loop imitation: the student policy drives the env, the teacher
// labels every step, windows of exactly k_trunc steps are backpropagated
// and applied in a fixed order. Deterministic given (init, cfg, env).
std::pair<PolicyNet, TrainReport> train(const PolicyNet& init,
                                        const EnvConfig& env,
                                        const TrainConfig& cfg, int threads);

void save_train_report(const TrainReport& report, const std::string& path);
void write_loss_csv(const TrainReport& report, const std::string& path,
                    const std::string& meta);

}  // namespace ctd

#endif
