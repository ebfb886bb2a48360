#include "ctd/perturb.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ctd/csvio.hpp"
#include "ctd/errors.hpp"
#include "ctd/mathutil.hpp"
#include "ctd/parallel.hpp"
#include "ctd/rng.hpp"

namespace ctd {

using Eigen::VectorXd;

VectorXd apply_neural_perturbation(const VectorXd& s, const PCBasis& basis,
                                   const NeuralPerturbationSpec& spec) {
  if (spec.pc_index < 1 || spec.pc_index > basis.dim())
    throw ConfigError("apply_neural_perturbation: pc_index out of range");
  if (spec.sign != 1 && spec.sign != -1)
    throw ConfigError("apply_neural_perturbation: sign must be +-1");
  const long k = spec.pc_index - 1;
  const double sigma = std::sqrt(basis.variances(k));
  return s + spec.sign * spec.magnitude * sigma * basis.components.col(k);
}

double tangentiality(const RolloutTrace& trace, long t,
                     const VectorXd& direction) {
  if (t < 0 || t >= trace.length() - 1)
    throw ConfigError("tangentiality: t out of range");
  VectorXd vel = (trace.states.row(t + 1) - trace.states.row(t)).transpose();
  const double nv = vel.norm();
  const double nd = direction.norm();
  if (nv == 0.0 || nd == 0.0) return 0.0;
  return std::abs(vel.dot(direction)) / (nv * nd);
}

double phase_shift(const PCBasis& basis, const RolloutTrace& nominal,
                   const RolloutTrace& perturbed, long t_start) {
  const long T = std::min(nominal.length(), perturbed.length());
  if (t_start < 0 || t_start >= T)
    throw ConfigError("phase_shift: window start out of range");

  // common center: nominal-trace mean over the window, so identical traces
  // give exactly zero shift
  Eigen::Vector2d center = Eigen::Vector2d::Zero();
  for (long t = t_start; t < T; ++t) {
    VectorXd p = project(basis, nominal.states.row(t).transpose(), 2);
    center += p;
  }
  center /= static_cast<double>(T - t_start);

  std::vector<double> deltas;
  deltas.reserve(static_cast<std::size_t>(T - t_start));
  for (long t = t_start; t < T; ++t) {
    VectorXd pn = project(basis, nominal.states.row(t).transpose(), 2);
    VectorXd pp = project(basis, perturbed.states.row(t).transpose(), 2);
    const double rn = std::hypot(pn(0) - center(0), pn(1) - center(1));
    const double rp = std::hypot(pp(0) - center(0), pp(1) - center(1));
    if (rn < 1e-8 || rp < 1e-8)
      throw NumericError("phase_shift: degenerate PC1-PC2 radius");
    const double an = std::atan2(pn(1) - center(1), pn(0) - center(0));
    const double ap = std::atan2(pp(1) - center(1), pp(0) - center(0));
    deltas.push_back(wrap_angle(ap - an));
  }
  return circular_mean(deltas);
}

namespace {

// smallest lag such that from t_apply + lag onward the perturbed states
// stay within tol of the nominal orbit (as a point set); -1 if never
long settle_lag(const RolloutTrace& nominal, const RolloutTrace& perturbed,
                long t_apply, double tol) {
  const long T = std::min(nominal.length(), perturbed.length());
  std::vector<double> dist(static_cast<std::size_t>(T - t_apply));
  for (long t = t_apply; t < T; ++t) {
    double best = std::numeric_limits<double>::infinity();
    for (long u = t_apply; u < T; ++u) {
      double d = (perturbed.states.row(t) - nominal.states.row(u)).norm();
      if (d < best) best = d;
    }
    dist[static_cast<std::size_t>(t - t_apply)] = best;
  }
  // first index of the trailing all-within-tol suffix
  long lag = -1;
  for (long k = static_cast<long>(dist.size()); k-- > 0;) {
    if (dist[static_cast<std::size_t>(k)] > tol) break;
    lag = k;
  }
  return lag;
}

}  // namespace

TracePair neural_perturbation_experiment(const PolicyNet& net,
                                         const EnvConfig& env,
                                         const PCBasis& basis,
                                         const NeuralPerturbationSpec& spec,
                                         const NeuralExperimentOptions& opts,
                                         std::uint64_t seed) {
  if (env.noise_std.size() != 0 && env.noise_std.cwiseAbs().maxCoeff() > 0.0)
    throw ConfigError("neural_perturbation_experiment requires a noise-free env");
  if (spec.t_apply < 1 || spec.t_apply >= opts.steps)
    throw ConfigError("neural_perturbation_experiment: t_apply out of range");

  RolloutOptions ro;
  ro.cmd_u = opts.cmd_u;
  ro.steps = opts.steps;
  ro.randomize_phase = opts.randomize_phase;

  TracePair pair;
  pair.spec = spec;
  pair.nominal = run_rollout(&net, env, ro, seed);

  ro.state_jump_t = spec.t_apply;
  ro.state_jump = [&](const RecurrentState& s) {
    return RecurrentState::from_concat(
        apply_neural_perturbation(s.concat(), basis, spec));
  };
  pair.perturbed = run_rollout(&net, env, ro, seed);

  PairMetrics& m = pair.metrics;
  m.fell_nominal = pair.nominal.ever_fallen;
  m.fell_perturbed = pair.perturbed.ever_fallen;

  const long k = spec.pc_index - 1;
  VectorXd jump = spec.sign * spec.magnitude *
                  std::sqrt(basis.variances(k)) * basis.components.col(k);
  m.tangentiality_at_apply = tangentiality(pair.nominal, spec.t_apply - 1, jump);

  m.max_deviation = 0.0;
  for (long t = spec.t_apply; t < opts.steps; ++t) {
    double d = (pair.perturbed.states.row(t) - pair.nominal.states.row(t)).norm();
    m.max_deviation = std::max(m.max_deviation, d);
  }

  // orbit band: 10% of the nominal post-apply RMS radius about its mean
  Eigen::RowVectorXd mean =
      pair.nominal.states.bottomRows(opts.steps - spec.t_apply).colwise().mean();
  double rms = std::sqrt((pair.nominal.states.bottomRows(opts.steps - spec.t_apply)
                              .rowwise() - mean)
                             .rowwise()
                             .squaredNorm()
                             .mean());
  m.settle_steps = settle_lag(pair.nominal, pair.perturbed, spec.t_apply,
                              0.1 * rms);

  // settle window for the phase comparison: one gait period of nominal PC1
  // unless the caller pinned an explicit lag / width
  long settle = opts.phase_settle_steps;
  if (settle < 0) {
    std::vector<double> pc1;
    for (long t = spec.t_apply; t < opts.steps; ++t)
      pc1.push_back(project(basis, pair.nominal.states.row(t).transpose(), 1)(0));
    int period = estimate_period(pc1);
    settle = period > 0 ? period : (opts.steps - spec.t_apply) / 4;
  }
  const long t0 = spec.t_apply + settle;
  long t1 = opts.steps;
  if (opts.phase_window_steps > 0) t1 = std::min(t1, t0 + opts.phase_window_steps);
  try {
    if (t1 < opts.steps) {
      RolloutTrace a = pair.nominal;
      RolloutTrace b = pair.perturbed;
      a.obs.conservativeResize(t1, Eigen::NoChange);
      a.states.conservativeResize(t1, Eigen::NoChange);
      b.obs.conservativeResize(t1, Eigen::NoChange);
      b.states.conservativeResize(t1, Eigen::NoChange);
      m.phase_shift_rad = phase_shift(basis, a, b, t0);
    } else {
      m.phase_shift_rad = phase_shift(basis, pair.nominal, pair.perturbed, t0);
    }
    m.phase_valid = true;
  } catch (const NumericError&) {
    m.phase_shift_rad = 0.0;
    m.phase_valid = false;
  }
  return pair;
}

PhysicalTrialResult physical_perturbation_trial(const PolicyNet* net,
                                                const EnvConfig& env,
                                                const PhysicalPerturbationSpec& spec,
                                                const RecoveryParams& rec,
                                                double cmd_u,
                                                std::uint64_t seed) {
  if (!std::isfinite(spec.magnitude))
    throw ConfigError("physical_perturbation_trial: magnitude must be finite");
  const long dur_steps =
      std::max<long>(1, std::lround(spec.duration_ms / 1000.0 / env.dt));

  RolloutOptions ro;
  ro.cmd_u = cmd_u;
  ro.steps = spec.t_apply + dur_steps + rec.horizon_steps;
  ForceWindow fw;
  fw.t_start = spec.t_apply;
  fw.n_steps = dur_steps;
  fw.fx = 0.0;
  fw.fy = spec.magnitude * env.body_weight;
  ro.force = fw;

  PhysicalTrialResult res;
  res.trace = run_rollout(net, env, ro, seed);

  if (res.trace.ever_fallen) {
    res.recovered = false;
    return res;
  }
  const long t_end = spec.t_apply + dur_steps;
  const double band = rec.band_frac * std::abs(cmd_u);
  long run = 0;
  for (long t = t_end; t < res.trace.length(); ++t) {
    if (std::abs(res.trace.env(t, 0) - cmd_u) < band) {
      if (++run >= rec.sustain_steps) {
        res.recovered = true;
        return res;
      }
    } else {
      run = 0;
    }
  }
  res.recovered = false;
  return res;
}

std::vector<double> default_grid_magnitudes() {
  std::vector<double> mags;
  for (int i = 0; i < 17; ++i) mags.push_back(-4.0 + 0.5 * i);
  return mags;
}

std::vector<double> default_grid_durations() { return {100.0, 200.0}; }

std::vector<GridCell> robustness_grid(const PolicyNet* net, const EnvConfig& env,
                                      const std::vector<double>& magnitudes,
                                      const std::vector<double>& durations_ms,
                                      int n_agents, const GridOptions& opts,
                                      std::uint64_t master_seed, int threads) {
  if (n_agents < 1) throw ConfigError("robustness_grid: n_agents must be >= 1");
  const std::size_t n_mag = magnitudes.size();
  const std::size_t n_dur = durations_ms.size();
  const std::size_t n_trials = n_mag * n_dur * static_cast<std::size_t>(n_agents);

  std::vector<char> recovered(n_trials, 0);
  std::vector<char> failed(n_trials, 0);
  parallel_for(n_trials, threads, [&](std::size_t idx) {
    const std::size_t agent = idx % static_cast<std::size_t>(n_agents);
    const std::size_t rest = idx / static_cast<std::size_t>(n_agents);
    const std::size_t d = rest % n_dur;
    const std::size_t m = rest / n_dur;
    PhysicalPerturbationSpec spec;
    spec.magnitude = magnitudes[m];
    spec.duration_ms = durations_ms[d];
    spec.t_apply = opts.t_apply;
    try {
      auto res = physical_perturbation_trial(
          net, env, spec, opts.recovery, opts.cmd_u,
          derive_seed(master_seed, m, d, agent));
      recovered[idx] = res.recovered ? 1 : 0;
    } catch (const NumericError&) {
      failed[idx] = 1;  // exceptions must not cross the parallel region
    }
  });
  for (std::size_t idx = 0; idx < n_trials; ++idx)
    if (failed[idx])
      throw NumericError("robustness_grid: trial " + std::to_string(idx) +
                         " produced non-finite dynamics");

  std::vector<GridCell> grid;
  grid.reserve(n_mag * n_dur);
  for (std::size_t m = 0; m < n_mag; ++m)
    for (std::size_t d = 0; d < n_dur; ++d) {
      GridCell cell;
      cell.magnitude = magnitudes[m];
      cell.duration_ms = durations_ms[d];
      cell.n_agents = n_agents;
      for (int a = 0; a < n_agents; ++a) {
        std::size_t idx = (m * n_dur + d) * static_cast<std::size_t>(n_agents) +
                          static_cast<std::size_t>(a);
        cell.n_recovered += recovered[idx];
      }
      grid.push_back(cell);
    }
  return grid;
}

Eigen::Vector2d scheduler_step(TrainingPerturbSchedule& sched,
                               double body_weight, Rng& rng) {
  if (!sched.active) {
    if (rng.uniform() < sched.p_start) {
      sched.active = true;
      sched.fx = rng.uniform(sched.mag_lo, sched.mag_hi) * body_weight;
      sched.fy = rng.uniform(sched.mag_lo, sched.mag_hi) * body_weight;
      return {sched.fx, sched.fy};
    }
    return {0.0, 0.0};
  }
  if (rng.uniform() < sched.p_stop) {
    sched.active = false;
    sched.fx = 0.0;
    sched.fy = 0.0;
    return {0.0, 0.0};
  }
  return {sched.fx, sched.fy};
}

void write_grid_csv(const std::vector<GridCell>& grid, const std::string& path,
                    const std::string& meta) {
  CsvWriter w(path, meta,
              {"magnitude_bw", "duration_ms", "n_agents", "n_recovered",
               "fraction"});
  for (const auto& c : grid)
    w.row({c.magnitude, c.duration_ms, static_cast<double>(c.n_agents),
           static_cast<double>(c.n_recovered),
           static_cast<double>(c.n_recovered) / c.n_agents});
}

void write_trace_pair_csv(const TracePair& pair, const PCBasis& basis,
                          const std::string& path, const std::string& meta) {
  const int k = std::min<long>(4, basis.dim());
  std::vector<std::string> header = {"t"};
  for (int i = 1; i <= k; ++i) header.push_back("nom_pc" + std::to_string(i));
  for (int i = 1; i <= k; ++i) header.push_back("pert_pc" + std::to_string(i));
  header.push_back("applied_force");
  CsvWriter w(path, meta, header);
  const long T = std::min(pair.nominal.length(), pair.perturbed.length());
  for (long t = 0; t < T; ++t) {
    std::vector<double> row = {static_cast<double>(t)};
    VectorXd pn = project(basis, pair.nominal.states.row(t).transpose(), k);
    VectorXd pp = project(basis, pair.perturbed.states.row(t).transpose(), k);
    for (int i = 0; i < k; ++i) row.push_back(pn(i));
    for (int i = 0; i < k; ++i) row.push_back(pp(i));
    row.push_back(std::hypot(pair.perturbed.force(t, 0),
                             pair.perturbed.force(t, 1)));
    w.row(row);
  }
}

}  // namespace ctd
