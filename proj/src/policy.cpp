#include "ctd/policy.hpp"

#include <cmath>
#include <string>

#include "ctd/errors.hpp"

namespace ctd {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError("policy: " + what);
}

VectorXd sigmoid_vec(const VectorXd& z) {
  return z.unaryExpr([](double v) { return sigmoid(v); });
}

}  // namespace

void PolicyNet::check_consistent() const {
  require(dims.d_obs > 0 && dims.n_cells > 0 && dims.d_act > 0,
          "dims must be positive");
  require(mlp.size() == dims.mlp_widths.size(), "mlp layer count mismatch");
  int in = dims.d_obs;
  for (size_t i = 0; i < mlp.size(); ++i) {
    const int out = dims.mlp_widths[i];
    require(mlp[i].w.rows() == out && mlp[i].w.cols() == in,
            "mlp weight shape mismatch at layer " + std::to_string(i));
    require(mlp[i].b.size() == out,
            "mlp bias shape mismatch at layer " + std::to_string(i));
    in = out;
  }
  const int n = dims.n_cells;
  require(w_ih.rows() == 4 * n && w_ih.cols() == dims.lstm_input(),
          "lstm w_ih shape mismatch");
  require(w_hh.rows() == 4 * n && w_hh.cols() == n, "lstm w_hh shape mismatch");
  require(b_lstm.size() == 4 * n, "lstm bias shape mismatch");
  require(w_fc.rows() == dims.d_act && w_fc.cols() == n, "fc weight shape mismatch");
  require(b_fc.size() == dims.d_act, "fc bias shape mismatch");
}

PolicyNet zero_policy(const PolicyDims& dims) {
  PolicyNet net;
  net.dims = dims;
  int in = dims.d_obs;
  for (int w : dims.mlp_widths) {
    net.mlp.push_back({MatrixXd::Zero(w, in), VectorXd::Zero(w)});
    in = w;
  }
  const int n = dims.n_cells;
  net.w_ih = MatrixXd::Zero(4 * n, dims.lstm_input());
  net.w_hh = MatrixXd::Zero(4 * n, n);
  net.b_lstm = VectorXd::Zero(4 * n);
  net.w_fc = MatrixXd::Zero(dims.d_act, n);
  net.b_fc = VectorXd::Zero(dims.d_act);
  return net;
}

PolicyNet random_policy(const PolicyDims& dims, std::uint64_t seed,
                        double weight_scale, bool zero_bias) {
  PolicyNet net = zero_policy(dims);
  Rng rng(seed);
  auto fill = [&](MatrixXd& m) {
    const double s = weight_scale / std::sqrt(static_cast<double>(m.cols()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = rng.uniform(-s, s);
  };
  for (auto& layer : net.mlp) fill(layer.w);
  fill(net.w_ih);
  fill(net.w_hh);
  fill(net.w_fc);
  if (!zero_bias) {
    const int n = dims.n_cells;
    net.b_lstm.segment(n, n).setOnes();  // forget gate opens near 0.73
  }
  return net;
}

VectorXd mlp_forward(const PolicyNet& net, const VectorXd& obs) {
  if (obs.size() != net.dims.d_obs)
    throw ConfigError("mlp_forward: observation length " +
                      std::to_string(obs.size()) + " != d_obs " +
                      std::to_string(net.dims.d_obs));
  VectorXd a = obs;
  for (const auto& layer : net.mlp)
    a = (layer.w * a + layer.b).array().tanh().matrix();
  return a;
}

RecurrentState lstm_step(const PolicyNet& net, const VectorXd& x,
                         const RecurrentState& s) {
  const int n = net.dims.n_cells;
  if (x.size() != net.dims.lstm_input())
    throw ConfigError("lstm_step: input length mismatch");
  if (s.h.size() != n || s.c.size() != n)
    throw ConfigError("lstm_step: state length mismatch");
  if (!x.allFinite() || !s.h.allFinite() || !s.c.allFinite())
    throw NumericError("lstm_step: non-finite input");

  const VectorXd z = net.w_ih * x + net.w_hh * s.h + net.b_lstm;
  const VectorXd i = sigmoid_vec(z.segment(0, n));
  const VectorXd f = sigmoid_vec(z.segment(n, n));
  const VectorXd g = z.segment(2 * n, n).array().tanh().matrix();
  const VectorXd o = sigmoid_vec(z.segment(3 * n, n));

  RecurrentState out;
  out.c = (f.array() * s.c.array() + i.array() * g.array()).matrix();
  out.h = (o.array() * out.c.array().tanh()).matrix();
  return out;
}

std::pair<Action, RecurrentState> policy_step(const PolicyNet& net,
                                              const VectorXd& obs,
                                              const RecurrentState& s) {
  const VectorXd x = mlp_forward(net, obs);
  RecurrentState next = lstm_step(net, x, s);
  Action a;
  a.torque = net.w_fc * next.h + net.b_fc;
  return {std::move(a), std::move(next)};
}

MatrixXd recurrent_jacobian(const PolicyNet& net, const RecurrentState& s,
                            const VectorXd& x) {
  const int n = net.dims.n_cells;
  if (x.size() != net.dims.lstm_input() || s.h.size() != n || s.c.size() != n)
    throw ConfigError("recurrent_jacobian: dimension mismatch");

  const VectorXd z = net.w_ih * x + net.w_hh * s.h + net.b_lstm;
  const VectorXd i = sigmoid_vec(z.segment(0, n));
  const VectorXd f = sigmoid_vec(z.segment(n, n));
  const VectorXd g = z.segment(2 * n, n).array().tanh().matrix();
  const VectorXd o = sigmoid_vec(z.segment(3 * n, n));

  const VectorXd c_next = (f.array() * s.c.array() + i.array() * g.array()).matrix();
  const VectorXd tc = c_next.array().tanh().matrix();

  // gate derivatives w.r.t. their pre-activations
  const VectorXd di = (i.array() * (1.0 - i.array())).matrix();
  const VectorXd df = (f.array() * (1.0 - f.array())).matrix();
  const VectorXd dg = (1.0 - g.array().square()).matrix();
  const VectorXd do_ = (o.array() * (1.0 - o.array())).matrix();
  const VectorXd dtc = (1.0 - tc.array().square()).matrix();

  const auto Wi = net.w_hh.middleRows(0, n);
  const auto Wf = net.w_hh.middleRows(n, n);
  const auto Wg = net.w_hh.middleRows(2 * n, n);
  const auto Wo = net.w_hh.middleRows(3 * n, n);

  // dc'/dh = diag(c.*f') Wf + diag(g.*i') Wi + diag(i.*g') Wg
  MatrixXd dc_dh = Wf.array().colwise() * (s.c.array() * df.array());
  dc_dh.array() += Wi.array().colwise() * (g.array() * di.array());
  dc_dh.array() += Wg.array().colwise() * (i.array() * dg.array());

  // dh'/dh = diag(tanh(c').*o') Wo + diag(o.*(1-tanh(c')^2)) dc'/dh
  MatrixXd dh_dh = Wo.array().colwise() * (tc.array() * do_.array());
  dh_dh.array() += dc_dh.array().colwise() * (o.array() * dtc.array());

  MatrixXd J = MatrixXd::Zero(2 * n, 2 * n);
  J.topLeftCorner(n, n) = dh_dh;
  J.topRightCorner(n, n) =
      (o.array() * dtc.array() * f.array()).matrix().asDiagonal();
  J.bottomLeftCorner(n, n) = dc_dh;
  J.bottomRightCorner(n, n) = f.asDiagonal();
  return J;
}

}  // namespace ctd
