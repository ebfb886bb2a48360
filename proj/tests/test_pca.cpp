#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "ctd/errors.hpp"
#include "ctd/pca.hpp"
#include "ctd/policy.hpp"
#include "ctd/rng.hpp"

using namespace ctd;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

RolloutDataset dataset_from(const MatrixXd& rows) {
  RolloutDataset ds;
  ds.states = rows;
  ds.rollout_id.assign(static_cast<std::size_t>(rows.rows()), 0);
  ds.speed.assign(static_cast<std::size_t>(rows.rows()), 1.0);
  ds.t.resize(static_cast<std::size_t>(rows.rows()));
  for (long i = 0; i < rows.rows(); ++i)
    ds.t[static_cast<std::size_t>(i)] = i;
  return ds;
}

MatrixXd random_rows(long n, long d, std::uint64_t seed) {
  Rng rng(seed);
  MatrixXd m(n, d);
  for (long i = 0; i < n; ++i)
    for (long j = 0; j < d; ++j) m(i, j) = rng.uniform(-2.0, 2.0);
  return m;
}

std::filesystem::path temp_file(const char* name) {
  auto dir = std::filesystem::temp_directory_path() / "ctd_pca_tests";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("components are orthonormal and variances descend") {
  PCBasis basis = fit_pca(dataset_from(random_rows(400, 6, 1)));
  MatrixXd gram = basis.components.transpose() * basis.components;
  CHECK((gram - MatrixXd::Identity(6, 6)).cwiseAbs().maxCoeff() < 1e-10);
  for (int i = 1; i < 6; ++i)
    CHECK(basis.variances(i - 1) >= basis.variances(i) - 1e-15);
  CHECK(!basis.reduced_rank);
  CHECK(basis.source_hash.size() == 16);
}

TEST_CASE("full-rank projection reconstructs exactly") {
  MatrixXd rows = random_rows(200, 5, 2);
  PCBasis basis = fit_pca(dataset_from(rows));
  for (long i = 0; i < 10; ++i) {
    VectorXd s = rows.row(i * 17).transpose();
    VectorXd back = reconstruct(basis, project(basis, s, 5));
    CHECK((back - s).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("mean truncation residual equals the trailing variance sum") {
  MatrixXd rows = random_rows(300, 6, 3);
  // stretch some directions so the spectrum is not flat
  rows.col(0) *= 4.0;
  rows.col(1) *= 2.0;
  RolloutDataset ds = dataset_from(rows);
  PCBasis basis = fit_pca(ds);
  for (int k = 0; k <= 6; k += 2) {
    double resid = 0.0;
    for (long i = 0; i < rows.rows(); ++i) {
      VectorXd s = rows.row(i).transpose();
      VectorXd back = reconstruct(basis, project(basis, s, k));
      resid += (s - back).squaredNorm();
    }
    resid /= static_cast<double>(rows.rows());
    double trailing = basis.variances.tail(6 - k).sum();
    if (trailing == 0.0)
      CHECK(resid < 1e-16);
    else
      CHECK(resid == doctest::Approx(trailing).epsilon(1e-8));
  }
}

TEST_CASE("sign convention: largest-magnitude entry positive") {
  MatrixXd rows = random_rows(150, 4, 4);
  PCBasis basis = fit_pca(dataset_from(rows));
  for (int c = 0; c < 4; ++c) {
    int idx = 0;
    basis.components.col(c).cwiseAbs().maxCoeff(&idx);
    CHECK(basis.components(idx, c) > 0.0);
  }
}

TEST_CASE("rank-one data keeps one nonzero variance") {
  Rng rng(5);
  VectorXd dir(4);
  dir << 1.0, -2.0, 0.5, 3.0;
  dir.normalize();
  MatrixXd rows(100, 4);
  for (long i = 0; i < 100; ++i)
    rows.row(i) = (rng.uniform(-1.0, 1.0) * dir).transpose();
  PCBasis basis = fit_pca(dataset_from(rows));
  CHECK(basis.reduced_rank);
  CHECK(basis.variances(0) > 0.0);
  for (int i = 1; i < 4; ++i) CHECK(basis.variances(i) == 0.0);
  // leading component is the line direction up to sign
  CHECK(std::abs(std::abs(basis.components.col(0).dot(dir)) - 1.0) < 1e-10);
}

TEST_CASE("few rows force the reduced-rank flag") {
  PCBasis basis = fit_pca(dataset_from(random_rows(3, 6, 9)));
  CHECK(basis.reduced_rank);
}

TEST_CASE("isotropic gaussian data recovers unit variances") {
  Rng rng(11);
  const long n = 100000;
  MatrixXd rows(n, 3);
  for (long i = 0; i < n; ++i)
    for (int j = 0; j < 3; ++j) rows(i, j) = rng.normal();
  PCBasis basis = fit_pca(dataset_from(rows));
  for (int i = 0; i < 3; ++i)
    CHECK(basis.variances(i) == doctest::Approx(1.0).epsilon(0.03));
}

TEST_CASE("known anisotropic covariance is recovered") {
  Rng rng(13);
  const long n = 200000;
  MatrixXd rows(n, 2);
  // x = 3*a, y = a + 2*b with a, b standard normal:
  // cov = [[9, 3], [3, 5]], eigenvalues 7 +- sqrt(13)
  for (long i = 0; i < n; ++i) {
    double a = rng.normal(), b = rng.normal();
    rows(i, 0) = 3.0 * a;
    rows(i, 1) = a + 2.0 * b;
  }
  PCBasis basis = fit_pca(dataset_from(rows));
  const double s13 = std::sqrt(13.0);
  CHECK(basis.variances(0) == doctest::Approx(7.0 + s13).epsilon(0.03));
  CHECK(basis.variances(1) == doctest::Approx(7.0 - s13).epsilon(0.03));
}

TEST_CASE("mean shifts move the mean, not the components") {
  MatrixXd rows = random_rows(250, 4, 21);
  PCBasis a = fit_pca(dataset_from(rows));
  MatrixXd shifted = rows;
  VectorXd shift(4);
  shift << 10.0, -3.0, 0.5, 2.0;
  shifted.rowwise() += shift.transpose();
  PCBasis b = fit_pca(dataset_from(shifted));
  CHECK((b.mean - (a.mean + shift)).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((b.components - a.components).cwiseAbs().maxCoeff() < 1e-8);
  CHECK((b.variances - a.variances).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("explained variance report sums to one") {
  PCBasis basis = fit_pca(dataset_from(random_rows(300, 5, 31)));
  auto report = explained_variance_report(basis);
  REQUIRE(report.size() == 5);
  double total = 0.0;
  for (const auto& r : report) total += r.fraction;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(report.front().pc == 1);
  CHECK(report.back().cumulative == doctest::Approx(1.0).epsilon(1e-12));
  for (std::size_t i = 1; i < report.size(); ++i)
    CHECK(report[i].cumulative >= report[i - 1].cumulative);
}

TEST_CASE("basis json round trips") {
  PCBasis basis = fit_pca(dataset_from(random_rows(120, 4, 41)));
  auto path = temp_file("basis.json");
  save_basis_json(basis, path.string());
  PCBasis back = load_basis_json(path.string());
  CHECK(back.mean == basis.mean);
  CHECK(back.components == basis.components);
  CHECK(back.variances == basis.variances);
  CHECK(back.reduced_rank == basis.reduced_rank);
  CHECK(back.source_hash == basis.source_hash);
  std::filesystem::remove(path);
}

TEST_CASE("loading rejects a perturbed non-orthonormal basis") {
  PCBasis basis = fit_pca(dataset_from(random_rows(120, 4, 43)));
  basis.components(0, 0) += 0.01;
  auto path = temp_file("broken_basis.json");
  save_basis_json(basis, path.string());
  CHECK_THROWS_AS(load_basis_json(path.string()), ConfigError);
  std::filesystem::remove(path);
}

TEST_CASE("dataset csv round trips with metadata intact") {
  RolloutDataset ds = dataset_from(random_rows(40, 4, 51));
  ds.speed.assign(40, 1.4);
  auto path = temp_file("dataset.csv");
  save_dataset_csv(ds, path.string(), "# ctdlab 0.1.0 config=deadbeef seed=1");
  RolloutDataset back = load_dataset_csv(path.string());
  REQUIRE(back.rows() == 40);
  CHECK((back.states - ds.states).cwiseAbs().maxCoeff() == 0.0);
  CHECK(back.speed[7] == 1.4);
  CHECK(back.t[39] == 39);
  std::filesystem::remove(path);
}

TEST_CASE("collect_rollouts pools speeds deterministically") {
  PolicyDims dims;
  dims.d_obs = kEnvObsDim;
  dims.mlp_widths = {8};
  dims.n_cells = 5;
  dims.d_act = kEnvActDim;
  PolicyNet net = random_policy(dims, 303, 0.3);
  EnvConfig env;
  std::vector<double> speeds = {0.8, 1.4, 2.0};

  RolloutDataset a = collect_rollouts(net, env, speeds, 120, 20, 7, 1);
  RolloutDataset b = collect_rollouts(net, env, speeds, 120, 20, 7, 1);
  CHECK(a.rows() == 3 * (120 - 20));
  CHECK(a.states == b.states);
  CHECK(a.speed == b.speed);
  CHECK(a.rollout_id == b.rollout_id);

  // per-row metadata is consistent
  CHECK(a.speed.front() == 0.8);
  CHECK(a.speed.back() == 2.0);
  CHECK(a.t.front() == 20);
  CHECK(a.states.cols() == 10);
}

TEST_CASE("collect_rollouts refuses noisy environments") {
  PolicyDims dims;
  dims.d_obs = kEnvObsDim;
  dims.mlp_widths = {8};
  dims.n_cells = 4;
  dims.d_act = kEnvActDim;
  PolicyNet net = random_policy(dims, 1, 0.3);
  EnvConfig env;
  env.noise_std = VectorXd::Constant(kEnvObsDim, 0.01);
  CHECK_THROWS_AS(collect_rollouts(net, env, {1.0}, 50, 10, 1, 1), ConfigError);

  EnvConfig clean;
  CHECK_THROWS_AS(collect_rollouts(net, clean, {1.0}, 50, 60, 1, 1),
                  ConfigError);  // warmup >= steps
}

TEST_CASE("zero policy gives a frozen recurrent state after warmup") {
  PolicyDims dims;
  dims.d_obs = kEnvObsDim;
  dims.mlp_widths = {6};
  dims.n_cells = 4;
  dims.d_act = kEnvActDim;
  PolicyNet net = zero_policy(dims);
  EnvConfig env;
  RolloutDataset ds = collect_rollouts(net, env, {1.0}, 80, 40, 3, 1);
  // with all-zero weights h and c go to 0 regardless of input
  CHECK(ds.states.cwiseAbs().maxCoeff() < 1e-9);
  PCBasis basis = fit_pca(ds);
  CHECK(basis.reduced_rank);
}
