#ifndef CTD_POLICY_HPP
#define CTD_POLICY_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <utility>
#include <vector>

#include "ctd/rng.hpp"

namespace ctd {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Hidden and cell vectors of the recurrent core. Everything downstream
// (fixed points, PCA, perturbations) treats the concatenation [h; c] as
// the state of the discrete-time dynamical system. That order is fixed.
struct RecurrentState {
  VectorXd h;
  VectorXd c;

  RecurrentState() = default;
  RecurrentState(VectorXd h_, VectorXd c_) : h(std::move(h_)), c(std::move(c_)) {}

  static RecurrentState Zero(int n) {
    return RecurrentState(VectorXd::Zero(n), VectorXd::Zero(n));
  }

  VectorXd concat() const {
    VectorXd s(h.size() + c.size());
    s << h, c;
    return s;
  }

  static RecurrentState from_concat(const VectorXd& s) {
    const int n = static_cast<int>(s.size()) / 2;
    return RecurrentState(s.head(n), s.tail(n));
  }
};

struct MlpLayer {
  MatrixXd w;  // (out x in)
  VectorXd b;  // (out)
};

struct PolicyDims {
  int d_obs = 12;
  std::vector<int> mlp_widths = {32, 24};
  int n_cells = 32;
  int d_act = 4;

  int lstm_input() const { return mlp_widths.empty() ? d_obs : mlp_widths.back(); }
};

// MLP encoder (tanh layers) -> single-layer LSTM -> affine action head.
// LSTM gate blocks are stacked in the row order input, forget, cell, output;
// the weight file depends on that layout.
struct PolicyNet {
  PolicyDims dims;
  std::vector<MlpLayer> mlp;
  MatrixXd w_ih;  // (4n x lstm_input)
  MatrixXd w_hh;  // (4n x n)
  VectorXd b_lstm;  // (4n)
  MatrixXd w_fc;  // (d_act x n)
  VectorXd b_fc;  // (d_act)

  // throws ConfigError when any shape disagrees with dims
  void check_consistent() const;
};

struct Action {
  VectorXd torque;  // (d_act)
};

// all weights and biases zero, for planted-fixed-point constructions
PolicyNet zero_policy(const PolicyDims& dims);

// uniform +-1/sqrt(fan_in) weights, zero biases except the forget-gate
// bias which starts at 1
PolicyNet random_policy(const PolicyDims& dims, std::uint64_t seed,
                        double weight_scale = 1.0, bool zero_bias = false);

VectorXd mlp_forward(const PolicyNet& net, const VectorXd& obs);

RecurrentState lstm_step(const PolicyNet& net, const VectorXd& x,
                         const RecurrentState& s);

std::pair<Action, RecurrentState> policy_step(const PolicyNet& net,
                                              const VectorXd& obs,
                                              const RecurrentState& s);

// Analytic Jacobian of the map [h; c] -> [h'; c'] at fixed input x.
// Entry (i, j) = d out_i / d in_j, with rows/cols ordered [h; c].
MatrixXd recurrent_jacobian(const PolicyNet& net, const RecurrentState& s,
                            const VectorXd& x);

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace ctd

#endif
