// Times the trial-parallel kernels against their serial reference path and
// checks the outputs stay bit-identical.

#include <chrono>
#include <cstdio>

#include "ctd/fixed_points.hpp"
#include "ctd/parallel.hpp"
#include "ctd/perturb.hpp"
#include "ctd/policy.hpp"

using namespace ctd;

namespace {

double ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now() - t0)
      .count();
}

bool grids_equal(const std::vector<GridCell>& a, const std::vector<GridCell>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].n_recovered != b[i].n_recovered) return false;
  return true;
}

bool cands_equal(const std::vector<FixedPointCandidate>& a,
                 const std::vector<FixedPointCandidate>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].state != b[i].state || a[i].speed != b[i].speed) return false;
  return true;
}

}  // namespace

int main() {
  const int hw = resolve_threads(0);
  std::printf("hardware threads: %d\n\n", hw);
  std::printf("%-28s %10s %10s %8s %6s\n", "kernel", "serial ms", "par ms",
              "speedup", "equal");

  PolicyDims dims;
  PolicyNet net = random_policy(dims, 7, 0.8);
  EnvConfig env;

  {
    std::vector<double> mags = {-2.0, -1.0, 0.0, 1.0, 2.0};
    std::vector<double> durs = {100.0};
    GridOptions opts;
    opts.t_apply = 100;
    opts.recovery.horizon_steps = 400;
    auto t0 = std::chrono::steady_clock::now();
    auto serial = robustness_grid(&net, env, mags, durs, 20, opts, 11, 1);
    double t_serial = ms_since(t0);
    t0 = std::chrono::steady_clock::now();
    auto par = robustness_grid(&net, env, mags, durs, 20, opts, 11, hw);
    double t_par = ms_since(t0);
    std::printf("%-28s %10.1f %10.1f %8.2f %6s\n", "robustness_grid 5x1x20",
                t_serial, t_par, t_serial / t_par,
                grids_equal(serial, par) ? "yes" : "NO");
  }

  {
    Eigen::VectorXd x = zero_input_vector(net);
    FixedPointOptions opts;
    opts.max_iters = 4000;
    Eigen::MatrixXd no_samples(0, 2 * dims.n_cells);
    auto t0 = std::chrono::steady_clock::now();
    auto serial = find_fixed_points(net, x, 24, no_samples, opts, 3, 1);
    double t_serial = ms_since(t0);
    t0 = std::chrono::steady_clock::now();
    auto par = find_fixed_points(net, x, 24, no_samples, opts, 3, hw);
    double t_par = ms_since(t0);
    std::printf("%-28s %10.1f %10.1f %8.2f %6s\n", "find_fixed_points 24 inits",
                t_serial, t_par, t_serial / t_par,
                cands_equal(serial, par) ? "yes" : "NO");
  }
  return 0;
}
