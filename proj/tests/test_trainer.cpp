#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ctd/errors.hpp"
#include "ctd/rng.hpp"
#include "ctd/trainer.hpp"
#include "oracles.hpp"

using namespace ctd;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

PolicyDims small_dims() {
  PolicyDims dims;
  dims.d_obs = 5;
  dims.mlp_widths = {6};
  dims.n_cells = 4;
  dims.d_act = 3;
  return dims;
}

TbpttWindow random_window(const PolicyDims& dims, int k, std::uint64_t seed) {
  Rng rng(seed);
  TbpttWindow w;
  w.state0 = RecurrentState(VectorXd(dims.n_cells), VectorXd(dims.n_cells));
  for (int i = 0; i < dims.n_cells; ++i) {
    w.state0.h(i) = rng.uniform(-0.5, 0.5);
    w.state0.c(i) = rng.uniform(-1.0, 1.0);
  }
  w.obs = MatrixXd(k, dims.d_obs);
  w.targets = MatrixXd(k, dims.d_act);
  for (int t = 0; t < k; ++t) {
    for (int j = 0; j < dims.d_obs; ++j) w.obs(t, j) = rng.uniform(-1.0, 1.0);
    for (int j = 0; j < dims.d_act; ++j)
      w.targets(t, j) = rng.uniform(-1.0, 1.0);
  }
  return w;
}

// flatten every gradient tensor into one ordered list of (ptr, rows, cols)
struct TensorRef {
  double* data;
  long n;
};

std::vector<TensorRef> net_tensors(PolicyNet& net) {
  std::vector<TensorRef> out;
  for (auto& layer : net.mlp) {
    out.push_back({layer.w.data(), layer.w.size()});
    out.push_back({layer.b.data(), layer.b.size()});
  }
  out.push_back({net.w_ih.data(), net.w_ih.size()});
  out.push_back({net.w_hh.data(), net.w_hh.size()});
  out.push_back({net.b_lstm.data(), net.b_lstm.size()});
  out.push_back({net.w_fc.data(), net.w_fc.size()});
  out.push_back({net.b_fc.data(), net.b_fc.size()});
  return out;
}

std::vector<TensorRef> grad_tensors(GradientSet& g) {
  std::vector<TensorRef> out;
  for (auto& layer : g.mlp) {
    out.push_back({layer.w.data(), layer.w.size()});
    out.push_back({layer.b.data(), layer.b.size()});
  }
  out.push_back({g.w_ih.data(), g.w_ih.size()});
  out.push_back({g.w_hh.data(), g.w_hh.size()});
  out.push_back({g.b_lstm.data(), g.b_lstm.size()});
  out.push_back({g.w_fc.data(), g.w_fc.size()});
  out.push_back({g.b_fc.data(), g.b_fc.size()});
  return out;
}

}  // namespace

TEST_CASE("window loss matches the scalar oracle") {
  PolicyDims dims = small_dims();
  PolicyNet net = random_policy(dims, 5);
  TbpttWindow w = random_window(dims, 6, 99);
  auto [g, loss] = tbptt_gradients(net, w);
  CHECK(loss ==
        doctest::Approx(ctd_test::oracle_window_loss(net, w))
            .epsilon(1e-13));
}

TEST_CASE("every weight gradient matches central differences") {
  PolicyDims dims = small_dims();
  PolicyNet net = random_policy(dims, 21);
  TbpttWindow w = random_window(dims, 5, 77);
  auto [grads, loss] = tbptt_gradients(net, w);

  PolicyNet probe = net;
  auto nets = net_tensors(probe);
  auto gs = grad_tensors(grads);
  REQUIRE(nets.size() == gs.size());

  const double eps = 1e-6;
  Rng pick(4);
  for (std::size_t ti = 0; ti < nets.size(); ++ti) {
    REQUIRE(nets[ti].n == gs[ti].n);
    // probe a handful of entries per tensor
    for (int rep = 0; rep < 6; ++rep) {
      long idx = static_cast<long>(pick.uniform() * nets[ti].n);
      if (idx >= nets[ti].n) idx = nets[ti].n - 1;
      double saved = nets[ti].data[idx];
      nets[ti].data[idx] = saved + eps;
      double lp = ctd_test::oracle_window_loss(probe, w);
      nets[ti].data[idx] = saved - eps;
      double lm = ctd_test::oracle_window_loss(probe, w);
      nets[ti].data[idx] = saved;
      double fd = (lp - lm) / (2 * eps);
      double an = gs[ti].data[idx];
      double scale = std::max({1.0, std::abs(fd), std::abs(an)});
      CHECK(std::abs(an - fd) / scale < 1e-5);
    }
  }
}

TEST_CASE("gradients are exactly zero beyond the window boundary") {
  // loss of window B must not change when the obs of window A changes,
  // because state0 of B is a recorded constant
  PolicyDims dims = small_dims();
  PolicyNet net = random_policy(dims, 31);
  TbpttWindow a = random_window(dims, 4, 1);
  TbpttWindow b = random_window(dims, 4, 2);

  auto [gb, lb] = tbptt_gradients(net, b);
  a.obs(2, 1) += 123.0;  // huge change upstream
  auto [gb2, lb2] = tbptt_gradients(net, b);
  CHECK(lb == lb2);
  auto t1 = grad_tensors(gb);
  auto t2 = grad_tensors(gb2);
  for (std::size_t i = 0; i < t1.size(); ++i)
    for (long j = 0; j < t1[i].n; ++j)
      CHECK(t1[i].data[j] == t2[i].data[j]);
}

TEST_CASE("doubling the residual doubles the gradient") {
  // targets' = 2*targets - prediction keeps the same prediction but doubles
  // every residual, so gradients scale by exactly 2 in exact arithmetic
  PolicyDims dims = small_dims();
  PolicyNet net = random_policy(dims, 41);
  TbpttWindow w = random_window(dims, 3, 3);

  // compute predictions by zero-target trick: residual = pred - target
  TbpttWindow zero = w;
  zero.targets.setZero();
  auto [gz, lz] = tbptt_gradients(net, zero);

  // predictions: residual with zero targets IS the prediction; rebuild
  // targets so the new residual is twice the old one
  // r = p - t, want r' = 2r => t' = p - 2(p - t) = 2t - p
  // recover p row by row from a forward pass through the oracle
  MatrixXd preds(w.targets.rows(), w.targets.cols());
  {
    // run the model forward using the public pieces
    RecurrentState s = w.state0;
    for (long t = 0; t < w.obs.rows(); ++t) {
      VectorXd x = mlp_forward(net, w.obs.row(t).transpose());
      s = lstm_step(net, x, s);
      preds.row(t) = (net.w_fc * s.h + net.b_fc).transpose();
    }
  }
  TbpttWindow doubled = w;
  doubled.targets = 2.0 * w.targets - preds;

  auto [g1, l1] = tbptt_gradients(net, w);
  auto [g2, l2] = tbptt_gradients(net, doubled);
  CHECK(l2 == doctest::Approx(4.0 * l1).epsilon(1e-10));
  auto t1 = grad_tensors(g1);
  auto t2 = grad_tensors(g2);
  for (std::size_t i = 0; i < t1.size(); ++i)
    for (long j = 0; j < t1[i].n; ++j) {
      double scale = std::max(1.0, std::abs(t1[i].data[j]));
      CHECK(std::abs(t2[i].data[j] - 2.0 * t1[i].data[j]) / scale < 1e-10);
    }
}

TEST_CASE("adam takes a signed lr-sized first step") {
  PolicyDims dims = small_dims();
  PolicyNet net = zero_policy(dims);
  AdamState st{GradientSet::zero_like(net), GradientSet::zero_like(net), 0};
  GradientSet g = GradientSet::zero_like(net);
  g.w_hh(0, 0) = 3.0;   // any positive value: first step is -lr * sign
  g.w_hh(1, 1) = -0.5;
  adam_update(net, st, g, 0.01, 0.9, 0.999, 1e-8);
  // first Adam step is lr * g / (|g| + eps') ~ lr * sign(g)
  CHECK(net.w_hh(0, 0) == doctest::Approx(-0.01).epsilon(1e-6));
  CHECK(net.w_hh(1, 1) == doctest::Approx(0.01).epsilon(1e-6));
  CHECK(net.w_hh(2, 2) == 0.0);  // untouched entries stay put
  CHECK(st.t == 1);
}

TEST_CASE("adam drives a quadratic toward its minimum") {
  // minimize 0.5*(w - 3)^2 in a single scalar slot of the net
  PolicyDims dims = small_dims();
  PolicyNet net = zero_policy(dims);
  AdamState st{GradientSet::zero_like(net), GradientSet::zero_like(net), 0};
  for (int it = 0; it < 2000; ++it) {
    GradientSet g = GradientSet::zero_like(net);
    g.w_fc(0, 0) = net.w_fc(0, 0) - 3.0;
    adam_update(net, st, g, 0.01, 0.9, 0.999, 1e-8);
  }
  CHECK(net.w_fc(0, 0) == doctest::Approx(3.0).epsilon(1e-3));
}

TEST_CASE("train config json round trips and validates") {
  TrainConfig cfg;
  cfg.k_trunc = 4;
  cfg.epochs = 7;
  cfg.perturb_during_training = true;
  cfg.sched.p_start = 0.02;
  TrainConfig back = TrainConfig::from_json(cfg.to_json());
  CHECK(back.k_trunc == 4);
  CHECK(back.epochs == 7);
  CHECK(back.perturb_during_training);
  CHECK(back.sched.p_start == 0.02);

  auto j = cfg.to_json();
  j["k_truncc"] = 1;
  CHECK_THROWS_AS(TrainConfig::from_json(j), ConfigError);
  auto j2 = cfg.to_json();
  j2["k_trunc"] = 0;
  CHECK_THROWS_AS(TrainConfig::from_json(j2), ConfigError);
}

TEST_CASE("short training run is deterministic and reduces the loss") {
  PolicyDims dims;
  dims.d_obs = kEnvObsDim;
  dims.mlp_widths = {16};
  dims.n_cells = 8;
  dims.d_act = kEnvActDim;
  PolicyNet init = random_policy(dims, 77, 0.3);
  EnvConfig env;
  TrainConfig cfg;
  cfg.k_trunc = 8;
  cfg.epochs = 6;
  cfg.rollout_steps = 96;
  cfg.batch_rollouts = 3;
  cfg.lr = 3e-3;
  cfg.seed = 5;

  auto [net_a, rep_a] = train(init, env, cfg, 1);
  auto [net_b, rep_b] = train(init, env, cfg, 1);
  CHECK(!rep_a.diverged);
  REQUIRE(rep_a.losses.size() == 6);
  CHECK(rep_a.losses == rep_b.losses);
  CHECK(net_a.w_hh == net_b.w_hh);
  CHECK(net_a.w_fc == net_b.w_fc);
  CHECK(rep_a.losses.back() < rep_a.losses.front());
  CHECK(rep_a.final_tracking_error == rep_b.final_tracking_error);
}

TEST_CASE("window gradients reject non-finite observations") {
  PolicyDims dims = small_dims();
  PolicyNet net = random_policy(dims, 2);
  TbpttWindow w = random_window(dims, 3, 8);
  w.obs(1, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(tbptt_gradients(net, w), NumericError);
}
