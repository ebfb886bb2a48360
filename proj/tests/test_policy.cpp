#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ctd/errors.hpp"
#include "ctd/policy.hpp"
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

}  // namespace

TEST_CASE("zero-weight lstm halves the cell state") {
  PolicyDims dims = small_dims();
  PolicyNet net = zero_policy(dims);
  RecurrentState s(VectorXd::Zero(4), VectorXd::Zero(4));
  s.c << 1.0, -2.0, 0.5, 3.0;
  RecurrentState out = lstm_step(net, VectorXd::Zero(6), s);
  for (int k = 0; k < 4; ++k) {
    CHECK(out.c(k) == doctest::Approx(0.5 * s.c(k)).epsilon(1e-15));
    CHECK(out.h(k) == doctest::Approx(0.5 * std::tanh(0.5 * s.c(k))).epsilon(1e-15));
  }
}

TEST_CASE("lstm_step matches the scalar oracle on random nets") {
  for (int trial = 0; trial < 10; ++trial) {
    PolicyDims dims = small_dims();
    PolicyNet net = random_policy(dims, 100 + static_cast<std::uint64_t>(trial));
    Rng rng(55 + static_cast<std::uint64_t>(trial));
    VectorXd x(6);
    RecurrentState s(VectorXd(4), VectorXd(4));
    for (int j = 0; j < 6; ++j) x(j) = rng.uniform(-1.0, 1.0);
    for (int j = 0; j < 4; ++j) {
      s.h(j) = rng.uniform(-1.0, 1.0);
      s.c(j) = rng.uniform(-2.0, 2.0);
    }
    RecurrentState out = lstm_step(net, x, s);
    auto ref = ctd_test::oracle_lstm_step(
        net, std::vector<double>(x.data(), x.data() + 6),
        std::vector<double>(s.h.data(), s.h.data() + 4),
        std::vector<double>(s.c.data(), s.c.data() + 4));
    for (int k = 0; k < 4; ++k) {
      CHECK(out.h(k) == doctest::Approx(ref.first[static_cast<std::size_t>(k)]).epsilon(1e-14));
      CHECK(out.c(k) == doctest::Approx(ref.second[static_cast<std::size_t>(k)]).epsilon(1e-14));
    }
  }
}

TEST_CASE("analytic recurrent jacobian matches central differences") {
  for (int trial = 0; trial < 10; ++trial) {
    PolicyDims dims = small_dims();
    PolicyNet net = random_policy(dims, 200 + static_cast<std::uint64_t>(trial));
    Rng rng(77 + static_cast<std::uint64_t>(trial));
    VectorXd x(6);
    for (int j = 0; j < 6; ++j) x(j) = rng.uniform(-1.0, 1.0);
    VectorXd s(8);
    for (int j = 0; j < 8; ++j) s(j) = rng.uniform(-1.5, 1.5);

    MatrixXd analytic =
        recurrent_jacobian(net, RecurrentState::from_concat(s), x);
    MatrixXd fd = ctd_test::fd_recurrent_jacobian(net, s, x);
    CHECK((analytic - fd).cwiseAbs().maxCoeff() < 1e-7);
  }
}

TEST_CASE("planted diagonal cell-gate net has the closed-form spectrum") {
  PolicyNet net = ctd_test::planted_net({2.8, -1.0, 0.4});
  VectorXd s = VectorXd::Zero(6);
  VectorXd x = VectorXd::Zero(3);
  MatrixXd jac = recurrent_jacobian(net, RecurrentState::from_concat(s), x);
  Eigen::EigenSolver<MatrixXd> es(jac);
  std::vector<double> mods;
  for (long k = 0; k < 6; ++k) mods.push_back(std::abs(es.eigenvalues()(k)));
  std::sort(mods.begin(), mods.end());
  // expected moduli: {0, 0, 0, |0.5 - 0.25|, |0.5 + 0.1|, |0.5 + 0.7|}
  const std::vector<double> expect = {0.0, 0.0, 0.0, 0.25, 0.6, 1.2};
  for (int k = 0; k < 6; ++k)
    CHECK(mods[static_cast<std::size_t>(k)] == doctest::Approx(expect[static_cast<std::size_t>(k)]).epsilon(1e-9));
}

TEST_CASE("policy_step is encoder then lstm then affine head") {
  PolicyDims dims = small_dims();
  PolicyNet net = random_policy(dims, 321);
  Rng rng(9);
  VectorXd obs(5);
  for (int j = 0; j < 5; ++j) obs(j) = rng.uniform(-1.0, 1.0);
  RecurrentState s = RecurrentState::Zero(4);
  auto [act, s2] = policy_step(net, obs, s);

  VectorXd x = mlp_forward(net, obs);
  RecurrentState manual = lstm_step(net, x, s);
  CHECK((s2.concat() - manual.concat()).cwiseAbs().maxCoeff() == 0.0);
  CHECK((act.torque - (net.w_fc * manual.h + net.b_fc)).cwiseAbs().maxCoeff() ==
        0.0);
}

TEST_CASE("mlp_forward validates observation length") {
  PolicyNet net = random_policy(small_dims(), 5);
  CHECK_THROWS_AS(mlp_forward(net, VectorXd::Zero(4)), ConfigError);
}

TEST_CASE("lstm_step rejects non-finite inputs") {
  PolicyNet net = random_policy(small_dims(), 6);
  VectorXd x = VectorXd::Zero(6);
  RecurrentState s = RecurrentState::Zero(4);
  x(0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(lstm_step(net, x, s), NumericError);
}

TEST_CASE("random_policy is reproducible and shape-consistent") {
  PolicyDims dims;  // library defaults
  PolicyNet a = random_policy(dims, 42);
  PolicyNet b = random_policy(dims, 42);
  a.check_consistent();
  CHECK(a.w_ih == b.w_ih);
  CHECK(a.w_hh == b.w_hh);
  CHECK(a.mlp[0].w == b.mlp[0].w);
  // forget-gate bias starts open
  CHECK(a.b_lstm.segment(dims.n_cells, dims.n_cells).minCoeff() == 1.0);
  CHECK(a.b_lstm.segment(0, dims.n_cells).cwiseAbs().maxCoeff() == 0.0);
  PolicyNet c = random_policy(dims, 43);
  CHECK(a.w_ih != c.w_ih);
}

TEST_CASE("recurrent state concat round trip keeps the [h; c] order") {
  RecurrentState s(VectorXd(2), VectorXd(2));
  s.h << 1.0, 2.0;
  s.c << 3.0, 4.0;
  VectorXd v = s.concat();
  CHECK(v(0) == 1.0);
  CHECK(v(3) == 4.0);
  RecurrentState back = RecurrentState::from_concat(v);
  CHECK(back.h == s.h);
  CHECK(back.c == s.c);
}
