#include "ctd/fixed_points.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <algorithm>
#include <fstream>
#include <json.hpp>
#include <limits>
#include <numeric>

#include "ctd/csvio.hpp"
#include "ctd/errors.hpp"
#include "ctd/parallel.hpp"
#include "ctd/rng.hpp"

namespace ctd {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using nlohmann::json;

std::string to_string(FpClass k) {
  switch (k) {
    case FpClass::Attractor: return "attractor";
    case FpClass::Saddle: return "saddle";
    case FpClass::Marginal: return "marginal";
  }
  return "unknown";
}

VectorXd step_map(const PolicyNet& net, const VectorXd& x, const VectorXd& s) {
  return lstm_step(net, x, RecurrentState::from_concat(s)).concat();
}

double speed_q(const PolicyNet& net, const VectorXd& x, const VectorXd& s) {
  VectorXd r = step_map(net, x, s) - s;
  return 0.5 * r.squaredNorm();
}

VectorXd speed_grad(const PolicyNet& net, const VectorXd& x,
                    const VectorXd& s) {
  VectorXd r = step_map(net, x, s) - s;
  MatrixXd jac = recurrent_jacobian(net, RecurrentState::from_concat(s), x);
  return (jac - MatrixXd::Identity(jac.rows(), jac.cols())).transpose() * r;
}

VectorXd zero_input_vector(const PolicyNet& net) {
  return mlp_forward(net, VectorXd::Zero(net.dims.d_obs));
}

namespace {

// Adam stalls at step-size-limited accuracy once q is tiny; a few damped
// Newton corrections on F(s) - s sharpen the root toward machine precision.
// Steps are accepted only while q strictly decreases, so near-singular
// (J - I) at marginal points degrades gracefully to the Adam answer.
void newton_polish(const PolicyNet& net, const VectorXd& x,
                   FixedPointCandidate& cand) {
  for (int it = 0; it < 3; ++it) {
    const VectorXd r = step_map(net, x, cand.state) - cand.state;
    MatrixXd jac =
        recurrent_jacobian(net, RecurrentState::from_concat(cand.state), x);
    jac.diagonal().array() -= 1.0;
    const VectorXd snew = cand.state - jac.partialPivLu().solve(r);
    if (!snew.allFinite()) break;
    const double qnew = speed_q(net, x, snew);
    if (!(qnew < cand.speed)) break;
    cand.state = snew;
    cand.speed = qnew;
  }
}

}  // namespace

FixedPointCandidate minimize_speed(const PolicyNet& net, const VectorXd& x,
                                   const VectorXd& s0,
                                   const FixedPointOptions& opts) {
  FixedPointCandidate cand;
  cand.state = s0;
  VectorXd s = s0;
  VectorXd m = VectorXd::Zero(s.size());
  VectorXd v = VectorXd::Zero(s.size());
  double b1t = 1.0, b2t = 1.0;

  for (long k = 0; k < opts.max_iters; ++k) {
    if (!s.allFinite()) {
      cand.converged = false;
      cand.iterations = k;
      cand.speed = k == 0 ? std::numeric_limits<double>::infinity()
                          : speed_q(net, x, cand.state);
      return cand;
    }
    double q = speed_q(net, x, s);
    if (!std::isfinite(q)) {
      cand.converged = false;
      cand.iterations = k;
      cand.speed = speed_q(net, x, cand.state);
      return cand;
    }
    cand.state = s;
    cand.speed = q;
    if (q < opts.q_tol) {
      cand.converged = true;
      cand.iterations = k;
      newton_polish(net, x, cand);
      return cand;
    }
    VectorXd g = speed_grad(net, x, s);
    if (!g.allFinite()) {
      cand.converged = false;
      cand.iterations = k;
      return cand;
    }
    b1t *= opts.beta1;
    b2t *= opts.beta2;
    m = opts.beta1 * m + (1.0 - opts.beta1) * g;
    v = opts.beta2 * v + (1.0 - opts.beta2) * g.cwiseProduct(g);
    VectorXd mhat = m / (1.0 - b1t);
    VectorXd vhat = v / (1.0 - b2t);
    s -= opts.lr *
         (mhat.array() / (vhat.array().sqrt() + opts.adam_eps)).matrix();
  }
  cand.state = s;
  cand.speed = speed_q(net, x, s);
  cand.converged = cand.speed < opts.q_tol;
  cand.iterations = opts.max_iters;
  if (cand.converged) newton_polish(net, x, cand);
  return cand;
}

std::vector<FixedPointCandidate> find_fixed_points(
    const PolicyNet& net, const VectorXd& x, int n_inits,
    const MatrixXd& sample_states, const FixedPointOptions& opts,
    std::uint64_t seed, int threads) {
  if (n_inits < 1) throw ConfigError("find_fixed_points: n_inits must be >= 1");
  if (opts.q_tol <= 0.0) throw ConfigError("find_fixed_points: q_tol must be > 0");
  const long dim = 2 * net.dims.n_cells;

  VectorXd lo(dim), hi(dim);
  if (sample_states.rows() > 0) {
    if (sample_states.cols() != dim)
      throw ConfigError("find_fixed_points: sample state dim mismatch");
    lo = sample_states.colwise().minCoeff();
    hi = sample_states.colwise().maxCoeff();
    VectorXd span = hi - lo;
    // degenerate axes still get a little width
    for (long j = 0; j < dim; ++j)
      if (span(j) < 1e-6) span(j) = 1e-6;
    lo -= opts.init_inflate * span;
    hi += opts.init_inflate * span;
  } else {
    lo.setConstant(-opts.default_box);
    hi.setConstant(opts.default_box);
  }

  // draw all starts up front so the candidate list never depends on the
  // number of threads
  std::vector<VectorXd> starts(static_cast<std::size_t>(n_inits));
  for (int i = 0; i < n_inits; ++i) {
    Rng rng(derive_seed(seed, 3, static_cast<std::uint64_t>(i)));
    VectorXd s(dim);
    for (long j = 0; j < dim; ++j) s(j) = rng.uniform(lo(j), hi(j));
    starts[static_cast<std::size_t>(i)] = s;
  }

  std::vector<FixedPointCandidate> cands(static_cast<std::size_t>(n_inits));
  parallel_for(static_cast<std::size_t>(n_inits), threads, [&](std::size_t i) {
    cands[i] = minimize_speed(net, x, starts[i], opts);
  });
  return cands;
}

namespace {

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(int n) : parent(static_cast<std::size_t>(n)) {
    std::iota(parent.begin(), parent.end(), 0);
  }
  int find(int a) {
    while (parent[static_cast<std::size_t>(a)] != a) {
      parent[static_cast<std::size_t>(a)] =
          parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(a)])];
      a = parent[static_cast<std::size_t>(a)];
    }
    return a;
  }
  void unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[static_cast<std::size_t>(std::max(a, b))] = std::min(a, b);
  }
};

bool state_less(const VectorXd& a, const VectorXd& b) {
  for (long j = 0; j < a.size(); ++j) {
    if (a(j) < b(j)) return true;
    if (a(j) > b(j)) return false;
  }
  return false;
}

}  // namespace

std::vector<Cluster> cluster_candidates(
    const std::vector<FixedPointCandidate>& cands, double merge_radius) {
  if (merge_radius <= 0.0)
    throw ConfigError("cluster_candidates: merge_radius must be > 0");

  std::vector<FixedPointCandidate> kept;
  for (const auto& c : cands)
    if (c.converged) kept.push_back(c);
  if (kept.empty()) return {};

  std::sort(kept.begin(), kept.end(),
            [](const FixedPointCandidate& a, const FixedPointCandidate& b) {
              if (a.speed != b.speed) return a.speed < b.speed;
              return state_less(a.state, b.state);
            });

  const int m = static_cast<int>(kept.size());
  UnionFind uf(m);
  for (int i = 0; i < m; ++i)
    for (int j = i + 1; j < m; ++j)
      if ((kept[static_cast<std::size_t>(i)].state -
           kept[static_cast<std::size_t>(j)].state)
              .norm() <= merge_radius)
        uf.unite(i, j);

  // root index is the smallest member index, which after the sort is the
  // lowest-speed member of its component
  std::vector<Cluster> clusters;
  std::vector<int> root_slot(static_cast<std::size_t>(m), -1);
  for (int i = 0; i < m; ++i) {
    int r = uf.find(i);
    if (root_slot[static_cast<std::size_t>(r)] < 0) {
      root_slot[static_cast<std::size_t>(r)] = static_cast<int>(clusters.size());
      Cluster cl;
      cl.rep = kept[static_cast<std::size_t>(r)];
      cl.size = 0;
      clusters.push_back(cl);
    }
    clusters[static_cast<std::size_t>(root_slot[static_cast<std::size_t>(r)])]
        .size++;
  }
  return clusters;
}

FixedPointReport classify(const PolicyNet& net, const VectorXd& x,
                          const VectorXd& fp_state, double tol_marginal) {
  FixedPointReport rep;
  rep.state = fp_state;
  rep.speed = speed_q(net, x, fp_state);

  MatrixXd jac = recurrent_jacobian(net, RecurrentState::from_concat(fp_state), x);
  Eigen::EigenSolver<MatrixXd> solver(jac);
  if (solver.info() != Eigen::Success)
    throw NumericError("classify: eigensolver failed");

  const long d = jac.rows();
  std::vector<long> order(static_cast<std::size_t>(d));
  std::iota(order.begin(), order.end(), 0);
  const auto& vals = solver.eigenvalues();
  std::sort(order.begin(), order.end(), [&](long a, long b) {
    double ma = std::abs(vals(a)), mb = std::abs(vals(b));
    if (ma != mb) return ma > mb;
    if (vals(a).real() != vals(b).real()) return vals(a).real() > vals(b).real();
    return vals(a).imag() > vals(b).imag();
  });

  rep.eigenvalues.resize(d);
  rep.eigenvectors.resize(d, d);
  for (long k = 0; k < d; ++k) {
    rep.eigenvalues(k) = vals(order[static_cast<std::size_t>(k)]);
    rep.eigenvectors.col(k) =
        solver.eigenvectors().col(order[static_cast<std::size_t>(k)]);
  }

  const double max_mod = std::abs(rep.eigenvalues(0));
  int k_unstable = 0;
  for (long k = 0; k < d; ++k)
    if (std::abs(rep.eigenvalues(k)) > 1.0 + tol_marginal) ++k_unstable;
  rep.k_unstable = k_unstable;
  if (k_unstable >= 1)
    rep.klass = FpClass::Saddle;
  else if (max_mod >= 1.0 - tol_marginal)
    rep.klass = FpClass::Marginal;
  else
    rep.klass = FpClass::Attractor;

  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(rep.eigenvectors);
  double smin = svd.singularValues()(d - 1);
  rep.eigvec_cond = smin > 0.0 ? svd.singularValues()(0) / smin
                               : std::numeric_limits<double>::infinity();
  rep.ill_conditioned = !(rep.eigvec_cond < 1e8);
  return rep;
}

MatrixXd unforced_rollout(const PolicyNet& net, const VectorXd& x,
                          const VectorXd& s0, long T) {
  if (T < 1) throw ConfigError("unforced_rollout: T must be >= 1");
  MatrixXd orbit(T + 1, s0.size());
  VectorXd s = s0;
  orbit.row(0) = s.transpose();
  for (long t = 1; t <= T; ++t) {
    s = step_map(net, x, s);
    orbit.row(t) = s.transpose();
  }
  return orbit;
}

MatrixXd local_gradient_field(const PolicyNet& net, const VectorXd& x,
                              const VectorXd& fp_state, const PCBasis& basis,
                              double extent, int resolution) {
  if (resolution < 1) throw ConfigError("local_gradient_field: resolution >= 1");
  if (fp_state.size() != basis.mean.size())
    throw ConfigError("local_gradient_field: state dim mismatch");

  const VectorXd pc1 = basis.components.col(0);
  const VectorXd pc2 = basis.components.col(1);
  MatrixXd out(static_cast<long>(resolution) * resolution, 4);
  long row = 0;
  for (int i = 0; i < resolution; ++i) {
    double a = resolution == 1
                   ? 0.0
                   : -extent + 2.0 * extent * i / (resolution - 1);
    for (int j = 0; j < resolution; ++j, ++row) {
      double b = resolution == 1
                     ? 0.0
                     : -extent + 2.0 * extent * j / (resolution - 1);
      VectorXd s = fp_state + a * pc1 + b * pc2;
      VectorXd ds = step_map(net, x, s) - s;
      out(row, 0) = a;
      out(row, 1) = b;
      out(row, 2) = pc1.dot(ds);
      out(row, 3) = pc2.dot(ds);
    }
  }
  return out;
}

void save_fixed_point_report(const std::vector<FixedPointReport>& reports,
                             const std::vector<int>& cluster_sizes,
                             const VectorXd& x, const FinderSummary& summary,
                             const std::string& path) {
  json j;
  j["input_vector"] = std::vector<double>(x.data(), x.data() + x.size());
  j["candidates_summary"] = {{"n_inits", summary.n_inits},
                             {"n_converged", summary.n_converged},
                             {"n_clusters", summary.n_clusters}};
  json fps = json::array();
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const auto& r = reports[i];
    json f;
    f["state"] = std::vector<double>(r.state.data(),
                                     r.state.data() + r.state.size());
    f["speed"] = r.speed;
    json evs = json::array();
    for (long k = 0; k < r.eigenvalues.size(); ++k)
      evs.push_back({{"re", r.eigenvalues(k).real()},
                     {"im", r.eigenvalues(k).imag()}});
    f["eigenvalues"] = evs;
    f["class"] = to_string(r.klass);
    f["k_unstable"] = r.k_unstable;
    f["eigvec_cond"] = r.eigvec_cond;
    if (i < cluster_sizes.size()) f["cluster_size"] = cluster_sizes[i];
    fps.push_back(f);
  }
  j["fixed_points"] = fps;
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open for writing: " + path);
  out << j.dump(1) << "\n";
}

void write_gradient_field_csv(const MatrixXd& field, const std::string& path,
                              const std::string& meta) {
  CsvWriter w(path, meta, {"pc1", "pc2", "dpc1", "dpc2"});
  for (long i = 0; i < field.rows(); ++i)
    w.row({field(i, 0), field(i, 1), field(i, 2), field(i, 3)});
}

void write_decay_csv(const MatrixXd& orbit, const PCBasis& basis,
                     const VectorXd& fp_state, const std::string& path,
                     const std::string& meta) {
  const int k = std::min<long>(4, basis.dim());
  std::vector<std::string> header = {"t"};
  for (int i = 1; i <= k; ++i) header.push_back("pc" + std::to_string(i));
  header.push_back("dist_to_fp");
  CsvWriter w(path, meta, header);
  for (long t = 0; t < orbit.rows(); ++t) {
    VectorXd s = orbit.row(t).transpose();
    VectorXd p = project(basis, s, k);
    std::vector<double> row = {static_cast<double>(t)};
    for (int i = 0; i < k; ++i) row.push_back(p(i));
    row.push_back((s - fp_state).norm());
    w.row(row);
  }
}

}  // namespace ctd
