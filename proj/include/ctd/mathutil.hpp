#ifndef CTD_MATHUTIL_HPP
#define CTD_MATHUTIL_HPP

#include <Eigen/Dense>
#include <cmath>
#include <vector>

namespace ctd {

constexpr double kPi = 3.14159265358979323846;
constexpr double kTwoPi = 6.28318530717958647692;

inline double wrap_angle(double a) {
  // wrap to (-pi, pi]
  const double two_pi = kTwoPi;
  a = std::fmod(a, two_pi);
  if (a <= -3.14159265358979323846) a += two_pi;
  if (a > 3.14159265358979323846) a -= two_pi;
  return a;
}

inline double wrap_phase_2pi(double a) {
  // wrap to [0, 2*pi)
  const double two_pi = 6.28318530717958647692;
  a = std::fmod(a, two_pi);
  if (a < 0) a += two_pi;
  return a;
}

inline bool all_finite(const Eigen::VectorXd& v) { return v.allFinite(); }

// Circular mean of angles, result in (-pi, pi]. Returns 0 for empty input.
inline double circular_mean(const std::vector<double>& angles) {
  if (angles.empty()) return 0.0;
  double s = 0.0, c = 0.0;
  bool all_zero = true;
  for (double a : angles) {
    if (a != 0.0) all_zero = false;
    s += std::sin(a);
    c += std::cos(a);
  }
  if (all_zero) return 0.0;  // exact for identical traces
  return std::atan2(s, c);
}

// Dominant period of a scalar series by biased autocorrelation: the first
// local maximum of r(lag) above a noise floor. Returns 0 when no periodic
// structure is detected.
inline int estimate_period(const std::vector<double>& x) {
  const int n = static_cast<int>(x.size());
  if (n < 8) return 0;
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= n;
  const int max_lag = n / 2;
  std::vector<double> r(max_lag + 1, 0.0);
  for (int lag = 0; lag <= max_lag; ++lag) {
    double acc = 0.0;
    for (int t = 0; t + lag < n; ++t)
      acc += (x[t] - mean) * (x[t + lag] - mean);
    r[lag] = acc / n;  // biased: decays with lag, so the first peak wins
  }
  if (r[0] <= 0.0) return 0;
  for (int lag = 2; lag < max_lag; ++lag) {
    if (r[lag] > r[lag - 1] && r[lag] >= r[lag + 1] && r[lag] > 0.2 * r[0])
      return lag;
  }
  return 0;
}

// Normalized autocorrelation value at the given lag (biased estimator).
inline double autocorr_at(const std::vector<double>& x, int lag) {
  const int n = static_cast<int>(x.size());
  if (lag <= 0 || lag >= n) return 0.0;
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= n;
  double r0 = 0.0, rl = 0.0;
  for (int t = 0; t < n; ++t) r0 += (x[t] - mean) * (x[t] - mean);
  for (int t = 0; t + lag < n; ++t) rl += (x[t] - mean) * (x[t + lag] - mean);
  if (r0 <= 0.0) return 0.0;
  return rl / r0;
}

}  // namespace ctd

#endif
