#include "ctd/trainer.hpp"

#include <cmath>
#include <fstream>

#include "ctd/csvio.hpp"
#include "ctd/errors.hpp"
#include "ctd/jsonutil.hpp"
#include "ctd/mathutil.hpp"
#include "ctd/parallel.hpp"
#include "ctd/rng.hpp"
#include "ctd/rollout.hpp"

namespace ctd {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using nlohmann::json;

GradientSet GradientSet::zero_like(const PolicyNet& net) {
  GradientSet g;
  for (const auto& layer : net.mlp)
    g.mlp.push_back({MatrixXd::Zero(layer.w.rows(), layer.w.cols()),
                     VectorXd::Zero(layer.b.size())});
  g.w_ih = MatrixXd::Zero(net.w_ih.rows(), net.w_ih.cols());
  g.w_hh = MatrixXd::Zero(net.w_hh.rows(), net.w_hh.cols());
  g.b_lstm = VectorXd::Zero(net.b_lstm.size());
  g.w_fc = MatrixXd::Zero(net.w_fc.rows(), net.w_fc.cols());
  g.b_fc = VectorXd::Zero(net.b_fc.size());
  return g;
}

void GradientSet::add(const GradientSet& other) {
  for (std::size_t i = 0; i < mlp.size(); ++i) {
    mlp[i].w += other.mlp[i].w;
    mlp[i].b += other.mlp[i].b;
  }
  w_ih += other.w_ih;
  w_hh += other.w_hh;
  b_lstm += other.b_lstm;
  w_fc += other.w_fc;
  b_fc += other.b_fc;
}

void GradientSet::scale(double a) {
  for (auto& layer : mlp) {
    layer.w *= a;
    layer.b *= a;
  }
  w_ih *= a;
  w_hh *= a;
  b_lstm *= a;
  w_fc *= a;
  b_fc *= a;
}

std::pair<GradientSet, double> tbptt_gradients(const PolicyNet& net,
                                               const TbpttWindow& window) {
  const int n = net.dims.n_cells;
  const long k = window.obs.rows();
  if (k < 1) throw ConfigError("tbptt_gradients: empty window");
  if (window.obs.cols() != net.dims.d_obs ||
      window.targets.rows() != k || window.targets.cols() != net.dims.d_act)
    throw ConfigError("tbptt_gradients: window shape mismatch");
  if (window.state0.h.size() != n || window.state0.c.size() != n)
    throw ConfigError("tbptt_gradients: state0 shape mismatch");

  const std::size_t n_layers = net.mlp.size();
  const double inv = 1.0 / static_cast<double>(k * net.dims.d_act);

  // forward, caching everything the backward pass needs
  std::vector<std::vector<VectorXd>> acts(static_cast<std::size_t>(k));
  std::vector<VectorXd> gi(static_cast<std::size_t>(k)),
      gf(static_cast<std::size_t>(k)), gg(static_cast<std::size_t>(k)),
      go(static_cast<std::size_t>(k)), cs(static_cast<std::size_t>(k)),
      hs(static_cast<std::size_t>(k)), tc(static_cast<std::size_t>(k)),
      resid(static_cast<std::size_t>(k));
  VectorXd h = window.state0.h;
  VectorXd c = window.state0.c;
  double loss = 0.0;
  for (long t = 0; t < k; ++t) {
    auto& a = acts[static_cast<std::size_t>(t)];
    a.resize(n_layers + 1);
    a[0] = window.obs.row(t).transpose();
    for (std::size_t l = 0; l < n_layers; ++l)
      a[l + 1] = (net.mlp[l].w * a[l] + net.mlp[l].b).array().tanh().matrix();
    const VectorXd& x = a[n_layers];

    VectorXd z = net.w_ih * x + net.w_hh * h + net.b_lstm;
    VectorXd i = z.segment(0, n).unaryExpr([](double v) { return sigmoid(v); });
    VectorXd f = z.segment(n, n).unaryExpr([](double v) { return sigmoid(v); });
    VectorXd g = z.segment(2 * n, n).array().tanh().matrix();
    VectorXd o = z.segment(3 * n, n).unaryExpr([](double v) { return sigmoid(v); });
    VectorXd c_new = (f.array() * c.array() + i.array() * g.array()).matrix();
    VectorXd tc_new = c_new.array().tanh().matrix();
    VectorXd h_new = (o.array() * tc_new.array()).matrix();

    VectorXd action = net.w_fc * h_new + net.b_fc;
    VectorXd r = action - window.targets.row(t).transpose();
    loss += inv * r.squaredNorm();
    if (!std::isfinite(loss)) throw NumericError("tbptt_gradients: non-finite loss");

    gi[static_cast<std::size_t>(t)] = std::move(i);
    gf[static_cast<std::size_t>(t)] = std::move(f);
    gg[static_cast<std::size_t>(t)] = std::move(g);
    go[static_cast<std::size_t>(t)] = std::move(o);
    cs[static_cast<std::size_t>(t)] = c_new;
    hs[static_cast<std::size_t>(t)] = h_new;
    tc[static_cast<std::size_t>(t)] = std::move(tc_new);
    resid[static_cast<std::size_t>(t)] = std::move(r);
    c = std::move(c_new);
    h = std::move(h_new);
  }

  GradientSet grad = GradientSet::zero_like(net);
  VectorXd dh = VectorXd::Zero(n);
  VectorXd dc = VectorXd::Zero(n);
  for (long t = k - 1; t >= 0; --t) {
    const auto ti = static_cast<std::size_t>(t);
    const VectorXd& i = gi[ti];
    const VectorXd& f = gf[ti];
    const VectorXd& g = gg[ti];
    const VectorXd& o = go[ti];
    const VectorXd& hc = tc[ti];
    const VectorXd& h_prev = t > 0 ? hs[ti - 1] : window.state0.h;
    const VectorXd& c_prev = t > 0 ? cs[ti - 1] : window.state0.c;

    VectorXd da = 2.0 * inv * resid[ti];
    grad.w_fc += da * hs[ti].transpose();
    grad.b_fc += da;
    dh += net.w_fc.transpose() * da;

    VectorXd d_o = (dh.array() * hc.array()).matrix();
    dc += (dh.array() * o.array() * (1.0 - hc.array().square())).matrix();

    VectorXd dz(4 * n);
    dz.segment(0, n) =
        (dc.array() * g.array() * i.array() * (1.0 - i.array())).matrix();
    dz.segment(n, n) =
        (dc.array() * c_prev.array() * f.array() * (1.0 - f.array())).matrix();
    dz.segment(2 * n, n) =
        (dc.array() * i.array() * (1.0 - g.array().square())).matrix();
    dz.segment(3 * n, n) =
        (d_o.array() * o.array() * (1.0 - o.array())).matrix();

    const VectorXd& x = acts[ti][n_layers];
    grad.w_ih += dz * x.transpose();
    grad.w_hh += dz * h_prev.transpose();
    grad.b_lstm += dz;

    // through the encoder at this step
    VectorXd dx = net.w_ih.transpose() * dz;
    for (std::size_t l = n_layers; l-- > 0;) {
      VectorXd dpre =
          (dx.array() * (1.0 - acts[ti][l + 1].array().square())).matrix();
      grad.mlp[l].w += dpre * acts[ti][l].transpose();
      grad.mlp[l].b += dpre;
      dx = net.mlp[l].w.transpose() * dpre;
    }

    dh = net.w_hh.transpose() * dz;
    dc = (dc.array() * f.array()).matrix();
  }
  // dh, dc at the boundary are dropped: state0 is a constant
  return {std::move(grad), loss};
}

void adam_update(PolicyNet& net, AdamState& st, const GradientSet& g,
                 double lr, double beta1, double beta2, double eps) {
  st.t += 1;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(st.t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(st.t));
  auto update = [&](MatrixXd& w, MatrixXd& m, MatrixXd& v, const MatrixXd& gr) {
    m = beta1 * m + (1.0 - beta1) * gr;
    v = beta2 * v + (1.0 - beta2) * gr.cwiseProduct(gr).eval();
    w.array() -=
        lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + eps);
  };
  auto update_v = [&](VectorXd& w, VectorXd& m, VectorXd& v, const VectorXd& gr) {
    m = beta1 * m + (1.0 - beta1) * gr;
    v = beta2 * v + (1.0 - beta2) * gr.cwiseProduct(gr).eval();
    w.array() -=
        lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + eps);
  };
  for (std::size_t l = 0; l < net.mlp.size(); ++l) {
    update(net.mlp[l].w, st.m.mlp[l].w, st.v.mlp[l].w, g.mlp[l].w);
    update_v(net.mlp[l].b, st.m.mlp[l].b, st.v.mlp[l].b, g.mlp[l].b);
  }
  update(net.w_ih, st.m.w_ih, st.v.w_ih, g.w_ih);
  update(net.w_hh, st.m.w_hh, st.v.w_hh, g.w_hh);
  update_v(net.b_lstm, st.m.b_lstm, st.v.b_lstm, g.b_lstm);
  update(net.w_fc, st.m.w_fc, st.v.w_fc, g.w_fc);
  update_v(net.b_fc, st.m.b_fc, st.v.b_fc, g.b_fc);
}

json TrainConfig::to_json() const {
  json j;
  j["k_trunc"] = k_trunc;
  j["epochs"] = epochs;
  j["rollout_steps"] = rollout_steps;
  j["batch_rollouts"] = batch_rollouts;
  j["lr"] = lr;
  j["beta1"] = beta1;
  j["beta2"] = beta2;
  j["adam_eps"] = adam_eps;
  j["seed"] = seed;
  j["speed_lo"] = speed_lo;
  j["speed_hi"] = speed_hi;
  j["perturb_during_training"] = perturb_during_training;
  j["perturb"] = {{"p_start", sched.p_start},
                  {"p_stop", sched.p_stop},
                  {"mag_lo", sched.mag_lo},
                  {"mag_hi", sched.mag_hi}};
  return j;
}

TrainConfig TrainConfig::from_json(const json& j) {
  check_keys(j, {"k_trunc", "epochs", "rollout_steps", "batch_rollouts", "lr",
                 "beta1", "beta2", "adam_eps", "seed", "speed_lo", "speed_hi",
                 "perturb_during_training", "perturb"},
             "train config");
  TrainConfig cfg;
  cfg.k_trunc = get_or(j, "k_trunc", cfg.k_trunc);
  cfg.epochs = get_or(j, "epochs", cfg.epochs);
  cfg.rollout_steps = get_or(j, "rollout_steps", cfg.rollout_steps);
  cfg.batch_rollouts = get_or(j, "batch_rollouts", cfg.batch_rollouts);
  cfg.lr = get_or(j, "lr", cfg.lr);
  cfg.beta1 = get_or(j, "beta1", cfg.beta1);
  cfg.beta2 = get_or(j, "beta2", cfg.beta2);
  cfg.adam_eps = get_or(j, "adam_eps", cfg.adam_eps);
  cfg.seed = get_or(j, "seed", cfg.seed);
  cfg.speed_lo = get_or(j, "speed_lo", cfg.speed_lo);
  cfg.speed_hi = get_or(j, "speed_hi", cfg.speed_hi);
  cfg.perturb_during_training =
      get_or(j, "perturb_during_training", cfg.perturb_during_training);
  if (j.contains("perturb")) {
    const auto& p = j.at("perturb");
    check_keys(p, {"p_start", "p_stop", "mag_lo", "mag_hi"}, "train perturb");
    cfg.sched.p_start = get_or(p, "p_start", cfg.sched.p_start);
    cfg.sched.p_stop = get_or(p, "p_stop", cfg.sched.p_stop);
    cfg.sched.mag_lo = get_or(p, "mag_lo", cfg.sched.mag_lo);
    cfg.sched.mag_hi = get_or(p, "mag_hi", cfg.sched.mag_hi);
  }
  if (cfg.k_trunc < 1) throw ConfigError("train config: k_trunc must be >= 1");
  if (cfg.lr <= 0.0) throw ConfigError("train config: lr must be > 0");
  return cfg;
}

namespace {

struct TrainRollout {
  MatrixXd obs;       // steps x d_obs, what the student saw
  MatrixXd targets;   // steps x d_act, teacher labels
  MatrixXd pre_h;     // steps x n, recurrent state entering each step
  MatrixXd pre_c;
};

TrainRollout collect_train_rollout(const PolicyNet& net, const EnvConfig& env,
                                   const TrainConfig& cfg, std::uint64_t seed) {
  Rng init_rng(derive_seed(seed, 1));
  Rng noise_rng(derive_seed(seed, 2));
  Rng sched_rng(derive_seed(seed, 3));

  EnvConfig clean = env;
  clean.noise_std.resize(0);
  Rng unused(0);

  const double cmd_u = init_rng.uniform(cfg.speed_lo, cfg.speed_hi);
  const double phase0 = init_rng.uniform(0.0, kTwoPi);
  EnvState st = make_initial_state(env, cmd_u, 0.0, 0.0, phase0);
  RecurrentState s = RecurrentState::Zero(net.dims.n_cells);
  TrainingPerturbSchedule sched = cfg.sched;

  TrainRollout out;
  out.obs.resize(cfg.rollout_steps, net.dims.d_obs);
  out.targets.resize(cfg.rollout_steps, net.dims.d_act);
  out.pre_h.resize(cfg.rollout_steps, net.dims.n_cells);
  out.pre_c.resize(cfg.rollout_steps, net.dims.n_cells);

  VectorXd obs = observe(st, env, noise_rng);
  for (long t = 0; t < cfg.rollout_steps; ++t) {
    out.obs.row(t) = obs.transpose();
    out.pre_h.row(t) = s.h.transpose();
    out.pre_c.row(t) = s.c.transpose();
    out.targets.row(t) =
        teacher_action(clean, observe(st, clean, unused), st.gait_phase)
            .torque.transpose();

    auto res = policy_step(net, obs, s);
    s = res.second;

    double fx = 0.0, fy = 0.0;
    if (cfg.perturb_during_training) {
      Eigen::Vector2d force = scheduler_step(sched, env.body_weight, sched_rng);
      fx = force(0);
      fy = force(1);
    }
    auto stepped = env_step(st, res.first.torque, fx, fy, env, noise_rng);
    st = stepped.first;
    obs = stepped.second;
  }
  return out;
}

double eval_tracking_error(const PolicyNet& net, const EnvConfig& env,
                           std::uint64_t seed) {
  EnvConfig clean = env;
  clean.noise_std.resize(0);
  const std::vector<double> speeds = {0.8, 1.4, 2.0};
  double err = 0.0;
  for (std::size_t i = 0; i < speeds.size(); ++i) {
    RolloutOptions ro;
    ro.cmd_u = speeds[i];
    ro.steps = 600;
    RolloutTrace tr = run_rollout(&net, clean, ro, derive_seed(seed, 7, i));
    double e = 0.0;
    for (long t = 300; t < ro.steps; ++t)
      e += std::abs(tr.env(t, 0) - speeds[i]);
    err += e / 300.0;
  }
  return err / static_cast<double>(speeds.size());
}

}  // namespace

std::pair<PolicyNet, TrainReport> train(const PolicyNet& init,
                                        const EnvConfig& env,
                                        const TrainConfig& cfg, int threads) {
  init.check_consistent();
  if (cfg.rollout_steps < cfg.k_trunc)
    throw ConfigError("train: rollout_steps shorter than k_trunc");

  PolicyNet net = init;
  AdamState adam;
  adam.m = GradientSet::zero_like(net);
  adam.v = GradientSet::zero_like(net);

  TrainReport report;
  report.k_trunc = cfg.k_trunc;
  const long windows_per_rollout = cfg.rollout_steps / cfg.k_trunc;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<TrainRollout> rollouts(static_cast<std::size_t>(cfg.batch_rollouts));
    // exceptions must not cross the parallel region; divergence is a flag
    std::vector<char> failed(rollouts.size(), 0);
    parallel_for(rollouts.size(), threads, [&](std::size_t b) {
      try {
        rollouts[b] = collect_train_rollout(
            net, env, cfg,
            derive_seed(cfg.seed, static_cast<std::uint64_t>(epoch) + 1, b));
      } catch (const NumericError&) {
        failed[b] = 1;
      }
    });
    bool bad = false;
    for (char f : failed) bad = bad || f != 0;
    if (bad) {
      report.diverged = true;
      break;
    }

    // windows applied in a fixed (rollout, window) order: deterministic
    // regardless of how the collection above was scheduled
    double epoch_loss = 0.0;
    long n_windows = 0;
    for (const auto& ro : rollouts) {
      for (long w = 0; w < windows_per_rollout; ++w) {
        TbpttWindow window;
        const long t0 = w * cfg.k_trunc;
        window.state0 = RecurrentState(ro.pre_h.row(t0).transpose(),
                                       ro.pre_c.row(t0).transpose());
        window.obs = ro.obs.middleRows(t0, cfg.k_trunc);
        window.targets = ro.targets.middleRows(t0, cfg.k_trunc);
        std::pair<GradientSet, double> res;
        try {
          res = tbptt_gradients(net, window);
        } catch (const NumericError&) {
          report.diverged = true;
          break;
        }
        epoch_loss += res.second;
        ++n_windows;
        adam_update(net, adam, res.first, cfg.lr, cfg.beta1, cfg.beta2,
                    cfg.adam_eps);
      }
      if (report.diverged) break;
    }
    if (report.diverged) break;

    report.losses.push_back(epoch_loss / static_cast<double>(n_windows));
    report.epochs_run = epoch + 1;
  }

  if (!report.diverged)
    report.final_tracking_error = eval_tracking_error(net, env, cfg.seed);
  return {std::move(net), std::move(report)};
}

void save_train_report(const TrainReport& report, const std::string& path) {
  json j;
  j["k_trunc"] = report.k_trunc;
  j["epochs_run"] = report.epochs_run;
  j["losses"] = report.losses;
  j["final_tracking_error"] = report.final_tracking_error;
  j["diverged"] = report.diverged;
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open for writing: " + path);
  out << j.dump(1) << "\n";
}

void write_loss_csv(const TrainReport& report, const std::string& path,
                    const std::string& meta) {
  CsvWriter w(path, meta, {"epoch", "loss"});
  for (std::size_t e = 0; e < report.losses.size(); ++e)
    w.row({static_cast<double>(e), report.losses[e]});
}

}  // namespace ctd
