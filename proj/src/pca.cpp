#include "ctd/pca.hpp"

#include <Eigen/Eigenvalues>
#include <cstring>
#include <fstream>
#include <json.hpp>

#include "ctd/csvio.hpp"
#include "ctd/errors.hpp"
#include "ctd/jsonutil.hpp"
#include "ctd/parallel.hpp"
#include "ctd/rng.hpp"
#include "ctd/rollout.hpp"

namespace ctd {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using nlohmann::json;

namespace {

std::string hash_matrix(const MatrixXd& m) {
  // FNV-1a over the raw little-endian bytes, row-major walk
  std::uint64_t h = 14695981039346656037ull;
  for (long i = 0; i < m.rows(); ++i)
    for (long j = 0; j < m.cols(); ++j) {
      double v = m(i, j);
      unsigned char bytes[8];
      std::memcpy(bytes, &v, 8);
      for (unsigned char b : bytes) {
        h ^= b;
        h *= 1099511628211ull;
      }
    }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace

RolloutDataset collect_rollouts(const PolicyNet& net, const EnvConfig& env,
                                const std::vector<double>& speeds, long steps,
                                long warmup, std::uint64_t seed, int threads) {
  if (speeds.empty()) throw ConfigError("collect_rollouts: no speeds given");
  if (warmup < 0 || warmup >= steps)
    throw ConfigError("collect_rollouts: warmup must lie in [0, steps)");
  if (env.noise_std.size() != 0 && env.noise_std.cwiseAbs().maxCoeff() > 0.0)
    throw ConfigError("collect_rollouts requires a noise-free env");

  const long keep = steps - warmup;
  std::vector<RolloutTrace> traces(speeds.size());
  std::vector<char> failed(speeds.size(), 0);
  parallel_for(speeds.size(), threads, [&](std::size_t i) {
    RolloutOptions opts;
    opts.cmd_u = speeds[i];
    opts.steps = steps;
    try {
      traces[i] = run_rollout(&net, env, opts,
                              derive_seed(seed, 1, static_cast<std::uint64_t>(i)));
    } catch (const NumericError&) {
      failed[i] = 1;  // exceptions must not cross the parallel region
    }
  });
  for (std::size_t i = 0; i < speeds.size(); ++i)
    if (failed[i])
      throw NumericError("collect_rollouts: rollout aborted at speed " +
                         std::to_string(speeds[i]));

  RolloutDataset ds;
  const long n_state = 2 * net.dims.n_cells;
  ds.states.resize(keep * static_cast<long>(speeds.size()), n_state);
  ds.rollout_id.reserve(static_cast<std::size_t>(ds.states.rows()));
  ds.speed.reserve(static_cast<std::size_t>(ds.states.rows()));
  ds.t.reserve(static_cast<std::size_t>(ds.states.rows()));
  long row = 0;
  for (std::size_t i = 0; i < speeds.size(); ++i) {
    if (!traces[i].states.allFinite())
      throw NumericError("collect_rollouts: non-finite recurrent state at speed " +
                         std::to_string(speeds[i]));
    for (long t = warmup; t < steps; ++t, ++row) {
      ds.states.row(row) = traces[i].states.row(t);
      ds.rollout_id.push_back(static_cast<long>(i));
      ds.speed.push_back(speeds[i]);
      ds.t.push_back(t);
    }
  }
  return ds;
}

PCBasis fit_pca(const RolloutDataset& ds) {
  const long n = ds.rows();
  const long d = ds.states.cols();
  if (n < 2) throw ConfigError("fit_pca: need at least 2 rows");
  if (!ds.states.allFinite()) throw NumericError("fit_pca: non-finite data");

  PCBasis basis;
  basis.mean = ds.states.colwise().mean();
  MatrixXd centered = ds.states.rowwise() - basis.mean.transpose();
  MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(n);

  Eigen::SelfAdjointEigenSolver<MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success)
    throw NumericError("fit_pca: eigendecomposition failed");

  // ascending from the solver; flip to descending
  basis.components.resize(d, d);
  basis.variances.resize(d);
  for (long k = 0; k < d; ++k) {
    basis.components.col(k) = solver.eigenvectors().col(d - 1 - k);
    basis.variances(k) = solver.eigenvalues()(d - 1 - k);
  }

  // deterministic sign: largest-magnitude entry of each PC is positive
  for (long k = 0; k < d; ++k) {
    long idx = 0;
    basis.components.col(k).cwiseAbs().maxCoeff(&idx);
    if (basis.components(idx, k) < 0.0) basis.components.col(k) *= -1.0;
  }

  basis.reduced_rank = n < d;
  const double vmax = basis.variances.size() ? basis.variances(0) : 0.0;
  const double floor = 1e-12 * std::max(vmax, 0.0);
  for (long k = 0; k < d; ++k) {
    // non-strict: catches directions with literally zero variance too
    if (basis.variances(k) <= floor) {
      basis.variances(k) = 0.0;
      basis.reduced_rank = true;
    }
  }
  basis.source_hash = hash_matrix(ds.states);
  return basis;
}

VectorXd project(const PCBasis& basis, const VectorXd& s, int k) {
  // k = 0 is legal: the rank-0 reconstruction is the mean
  if (k < 0 || k > basis.dim())
    throw ConfigError("project: k out of range");
  if (s.size() != basis.mean.size())
    throw ConfigError("project: state dim mismatch");
  return basis.components.leftCols(k).transpose() * (s - basis.mean);
}

VectorXd reconstruct(const PCBasis& basis, const VectorXd& coords) {
  const long k = coords.size();
  if (k > basis.dim())
    throw ConfigError("reconstruct: coordinate dim out of range");
  return basis.mean + basis.components.leftCols(k) * coords;
}

std::vector<VarianceRow> explained_variance_report(const PCBasis& basis) {
  const double total = basis.variances.sum();
  if (total <= 0.0) throw NumericError("explained_variance_report: zero total variance");
  std::vector<VarianceRow> rows;
  double cum = 0.0;
  for (long k = 0; k < basis.variances.size(); ++k) {
    double f = basis.variances(k) / total;
    cum += f;
    rows.push_back({static_cast<int>(k) + 1, f, cum});
  }
  return rows;
}

void save_dataset_csv(const RolloutDataset& ds, const std::string& path,
                      const std::string& meta) {
  std::vector<std::string> header = {"rollout_id", "speed", "t"};
  for (long j = 0; j < ds.states.cols(); ++j)
    header.push_back("s" + std::to_string(j));
  CsvWriter w(path, meta, header);
  std::vector<double> row;
  for (long i = 0; i < ds.rows(); ++i) {
    row.clear();
    row.push_back(static_cast<double>(ds.rollout_id[static_cast<std::size_t>(i)]));
    row.push_back(ds.speed[static_cast<std::size_t>(i)]);
    row.push_back(static_cast<double>(ds.t[static_cast<std::size_t>(i)]));
    for (long j = 0; j < ds.states.cols(); ++j) row.push_back(ds.states(i, j));
    w.row(row);
  }
}

RolloutDataset load_dataset_csv(const std::string& path) {
  CsvTable table = read_csv(path);
  if (table.header.size() < 4 || table.header[0] != "rollout_id" ||
      table.header[1] != "speed" || table.header[2] != "t")
    throw ParseError(path + ": not a rollout dataset");
  RolloutDataset ds;
  const long n = table.values.rows();
  const long d = table.values.cols() - 3;
  ds.states.resize(n, d);
  for (long i = 0; i < n; ++i) {
    ds.rollout_id.push_back(static_cast<long>(table.values(i, 0)));
    ds.speed.push_back(table.values(i, 1));
    ds.t.push_back(static_cast<long>(table.values(i, 2)));
    ds.states.row(i) = table.values.row(i).segment(3, d);
  }
  return ds;
}

void save_basis_json(const PCBasis& basis, const std::string& path) {
  json j;
  j["mean"] = std::vector<double>(basis.mean.data(),
                                  basis.mean.data() + basis.mean.size());
  json comps = json::array();
  for (long i = 0; i < basis.components.rows(); ++i) {
    json row = json::array();
    for (long k = 0; k < basis.components.cols(); ++k)
      row.push_back(basis.components(i, k));
    comps.push_back(row);
  }
  j["components"] = comps;
  j["variances"] = std::vector<double>(
      basis.variances.data(), basis.variances.data() + basis.variances.size());
  j["sign_convention"] = "largest-abs-positive";
  j["reduced_rank"] = basis.reduced_rank;
  j["source_hash"] = basis.source_hash;
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open for writing: " + path);
  out << j.dump(1) << "\n";
}

PCBasis load_basis_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  check_keys(j, {"mean", "components", "variances", "sign_convention",
                 "reduced_rank", "source_hash"}, "pc basis");
  PCBasis basis;
  auto mean = j.at("mean").get<std::vector<double>>();
  basis.mean = Eigen::Map<const VectorXd>(mean.data(),
                                          static_cast<long>(mean.size()));
  const long d = basis.mean.size();
  const auto& comps = j.at("components");
  if (!comps.is_array() || static_cast<long>(comps.size()) != d)
    throw ParseError(path + ": components shape mismatch");
  basis.components.resize(d, d);
  for (long i = 0; i < d; ++i) {
    const auto& row = comps[static_cast<std::size_t>(i)];
    if (static_cast<long>(row.size()) != d)
      throw ParseError(path + ": ragged components row");
    for (long k = 0; k < d; ++k)
      basis.components(i, k) = row[static_cast<std::size_t>(k)].get<double>();
  }
  auto vars = j.at("variances").get<std::vector<double>>();
  if (static_cast<long>(vars.size()) != d)
    throw ParseError(path + ": variances length mismatch");
  basis.variances = Eigen::Map<const VectorXd>(vars.data(), d);
  basis.reduced_rank = j.at("reduced_rank").get<bool>();
  basis.source_hash = j.at("source_hash").get<std::string>();

  MatrixXd gram = basis.components.transpose() * basis.components;
  if ((gram - MatrixXd::Identity(d, d)).cwiseAbs().maxCoeff() > 1e-8)
    throw ConfigError(path + ": components not orthonormal");
  for (long k = 1; k < d; ++k)
    if (basis.variances(k) > basis.variances(k - 1) + 1e-12)
      throw ConfigError(path + ": variances not sorted");
  return basis;
}

}  // namespace ctd
