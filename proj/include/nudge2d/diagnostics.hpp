#pragma once

/// Measured quantities: the V-norm error series and its crossing statistics,
/// the time-averaged energy spectrum with the eddy-turnover time, and a fit of
/// the interpolation constants.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "nudge2d/observables.hpp"
#include "nudge2d/spectral.hpp"

namespace nudge2d {

/// ||u(t) - v(t)||_V sampled at strictly increasing times.
class ErrorSeries {
 public:
  void push(double t, double value) {
    if (!times_.empty() && !(t > times_.back()))
      throw std::invalid_argument("error series times must be strictly increasing");
    if (!(value >= 0.0)) throw std::invalid_argument("error series values must be nonnegative");
    times_.push_back(t);
    values_.push_back(value);
  }

  std::size_t size() const { return times_.size(); }
  bool empty() const { return times_.empty(); }
  const std::vector<double>& times() const { return times_; }
  const std::vector<double>& values() const { return values_; }

 private:
  std::vector<double> times_, values_;
};

inline double error_V(const StreamField& psi, const StreamField& phi) {
  require_same_grid(psi.grid_ptr(), phi.grid_ptr());
  return std::sqrt(v_alpha_norm_sq(velocity_from_stream(psi - phi), 1.0));
}

struct CrossingStats {
  double T_min = 0.0;
  double T_max = 0.0;
  double eps_avg = 0.0;
};

/// Crossing times of the piecewise-linear interpolant of the samples on [0, T]:
/// T_min = inf{t : e(t) <= eps} (inf if none), T_max = sup{t : e(t) >= eps}
/// (0 if none, inf if the last sample is still >= eps). A crossing that falls
/// on a sample is reported at that sample time. Samples after T are ignored.
/// eps_avg is the trapezoid mean over [T0, T], with linear interpolation where
/// T0 or T fall between samples.
inline CrossingStats crossing_stats(const ErrorSeries& series, double eps, double T, double T0) {
  if (series.empty()) throw std::invalid_argument("crossing_stats needs a nonempty series");
  if (!(eps > 0.0)) throw std::invalid_argument("crossing_stats needs eps > 0");
  if (!(T0 >= 0.0 && T0 < T)) throw std::invalid_argument("crossing_stats needs 0 <= T0 < T");
  const auto& t = series.times();
  const auto& v = series.values();
  if (T0 < t.front() || T > t.back())
    throw std::invalid_argument("series does not cover the averaging window [T0, T]");

  constexpr double inf = std::numeric_limits<double>::infinity();
  // where the segment from sample i (above eps) to sample i + 1 (below) meets eps
  auto cross = [&](std::size_t i) { return t[i] + (v[i] - eps) / (v[i] - v[i + 1]) * (t[i + 1] - t[i]); };
  std::size_t last = 0;
  while (last + 1 < t.size() && t[last + 1] <= T) ++last;
  CrossingStats out{inf, 0.0, 0.0};
  for (std::size_t i = 0; i <= last; ++i)
    if (v[i] <= eps) {
      out.T_min = (i == 0 || v[i] == eps) ? t[i] : cross(i - 1);
      break;
    }
  if (v[last] >= eps) {
    out.T_max = inf;
  } else {
    for (std::size_t i = last; i-- > 0;)
      if (v[i] >= eps) {
        out.T_max = v[i] == eps ? t[i] : cross(i);
        break;
      }
  }

  auto value_at = [&](double s) {
    const auto it = std::lower_bound(t.begin(), t.end(), s);
    const std::size_t j = static_cast<std::size_t>(it - t.begin());
    if (t[j] == s) return v[j];
    const double w = (s - t[j - 1]) / (t[j] - t[j - 1]);
    return v[j - 1] + w * (v[j] - v[j - 1]);
  };
  double integral = 0.0;
  double prev_t = T0, prev_v = value_at(T0);
  for (std::size_t i = 0; i < t.size() && t[i] < T; ++i) {
    if (t[i] <= T0) continue;
    integral += 0.5 * (t[i] - prev_t) * (v[i] + prev_v);
    prev_t = t[i];
    prev_v = v[i];
  }
  integral += 0.5 * (T - prev_t) * (value_at(T) + prev_v);
  out.eps_avg = integral / (T - T0);
  return out;
}

/// Time-integrated shell energies sum_{k in J_r} |u_k|^2, J_r = {r - 1/2 < |k| <= r + 1/2},
/// by the trapezoid rule over the accumulated samples. Shells run up to the
/// corner of the retained square, r = round(sqrt(2) kmax).
class SpectrumAccumulator {
 public:
  explicit SpectrumAccumulator(int kmax)
      : kmax_(kmax), top_(kmax >= 1 ? shell_of(2 * kmax * kmax) : 0), integral_(top_ + 1, 0.0) {
    if (kmax < 1) throw std::invalid_argument("spectrum needs kmax >= 1");
  }

  int kmax() const { return kmax_; }
  long long samples() const { return samples_; }
  double duration() const { return duration_; }

  int top_shell() const { return top_; }

  /// Shell r with r - 1/2 < |k| <= r + 1/2.
  static int shell_of(int k_sq) {
    // r - 1/2 < |k| <= r + 1/2  <=>  (2r - 1)^2 < 4|k|^2 <= (2r + 1)^2
    int r = static_cast<int>(std::lround(std::sqrt(static_cast<double>(k_sq))));
    while (r > 0 && 4LL * k_sq <= (2LL * r - 1) * (2LL * r - 1)) --r;
    while (4LL * k_sq > (2LL * r + 1) * (2LL * r + 1)) ++r;
    return r;
  }

  static std::vector<double> shell_sums(const VectorFieldHat& u) {
    const auto& g = u.grid();
    std::vector<double> out(shell_of(2 * g.kmax() * g.kmax()) + 1, 0.0);
    const auto u1 = u.component(0);
    const auto u2 = u.component(1);
    for (const Mode& m : g.modes()) {
      const int r = shell_of(m.k1 * m.k1 + m.k2 * m.k2);
      out[r] += m.weight * (std::norm(u1[m.index]) + std::norm(u2[m.index]));
    }
    return out;
  }

  void accumulate(double t, const VectorFieldHat& u) {
    if (u.grid().kmax() != kmax_) throw std::invalid_argument("spectrum grid mismatch");
    std::vector<double> cur = shell_sums(u);
    if (samples_ > 0) {
      if (!(t > last_t_)) throw std::invalid_argument("spectrum sample times must increase");
      const double w = 0.5 * (t - last_t_);
      for (int r = 1; r <= top_; ++r) integral_[r] += w * (last_[r] + cur[r]);
      duration_ += t - last_t_;
    } else {
      first_ = cur;
    }
    last_ = std::move(cur);
    last_t_ = t;
    ++samples_;
  }

  /// Pools another accumulator's integral and duration into this one.
  void merge(const SpectrumAccumulator& other) {
    if (other.kmax_ != kmax_) throw std::invalid_argument("spectrum merge: kmax mismatch");
    if (other.samples_ == 0) return;
    if (samples_ == 0) {
      *this = other;
      return;
    }
    for (int r = 1; r <= top_; ++r) integral_[r] += other.integral_[r];
    duration_ += other.duration_;
    samples_ += other.samples_;
  }

  /// E(r) = (4 pi^2 / T) int sum_{J_r} |u_k|^2 dt for r = 0..top_shell() (E(0) = 0).
  /// A single sample gives the instantaneous spectrum.
  std::vector<double> finalize() const {
    if (samples_ == 0) throw std::logic_error("spectrum has no samples");
    const double c = 4.0 * std::numbers::pi * std::numbers::pi;
    std::vector<double> E(top_ + 1, 0.0);
    for (int r = 1; r <= top_; ++r)
      E[r] = duration_ > 0.0 ? c * integral_[r] / duration_ : c * first_[r];
    return E;
  }

 private:
  int kmax_;
  int top_;
  std::vector<double> integral_;
  std::vector<double> first_, last_;
  double last_t_ = 0.0;
  double duration_ = 0.0;
  long long samples_ = 0;
};

/// tau = 4 pi^2 sum_r E(r)/r / (sum_r E(r))^{3/2} over r = 1..r_max, E indexed from r = 0.
inline double eddy_turnover(const std::vector<double>& E, int r_max) {
  if (r_max < 1) throw std::invalid_argument("eddy turnover needs r_max >= 1");
  double total = 0.0, weighted = 0.0;
  const std::size_t end = std::min(E.size(), static_cast<std::size_t>(r_max) + 1);
  for (std::size_t r = 1; r < end; ++r) {
    total += E[r];
    weighted += E[r] / static_cast<double>(r);
  }
  if (!(total > 0.0)) throw std::invalid_argument("eddy turnover needs a nonzero spectrum");
  return 4.0 * std::numbers::pi * std::numbers::pi * weighted / std::pow(total, 1.5);
}

struct GammaFit {
  double gamma1 = 0.0;
  double gamma2 = 0.0;
  double worst_ratio = 0.0;  ///< max over samples of lhs / fitted rhs
  int samples = 0;
};

/// One point of the approximation inequality: ||u - I_h u||^2 together with
/// h^2 ||u||_{H^1}^2 and h^4 ||u||_{H^2}^2 (V^1 and V^2 norms of the velocity).
struct GammaSample {
  double lhs = 0.0;
  double a = 0.0;
  double b = 0.0;
};

inline GammaSample gamma_sample(const StreamField& psi, int K) {
  const GridPtr& grid = psi.grid_ptr();
  const VectorFieldHat u = velocity_from_stream(psi);
  const VectorFieldHat iu = interp_nodal(sample_velocity(psi, K), grid);
  const double h = grid->length() / K;
  return {v_alpha_norm_sq(u - iu, 0.0), h * h * v_alpha_norm_sq(u, 1.0),
          h * h * h * h * v_alpha_norm_sq(u, 2.0)};
}

/// Nonnegative least squares of lhs ~ gamma1 * a + gamma2 * b over the
/// samples, each row scaled by 1/lhs so that every sample counts relatively.
inline GammaFit fit_gamma(const std::vector<GammaSample>& samples) {
  std::vector<GammaSample> rows;
  for (const auto& s : samples)
    if (s.lhs > 0.0) rows.push_back({1.0, s.a / s.lhs, s.b / s.lhs});
  if (rows.empty()) throw std::invalid_argument("degenerate gamma fit: all interpolation errors vanish");

  double saa = 0, sab = 0, sbb = 0, sa = 0, sb = 0;
  for (const auto& r : rows) {
    saa += r.a * r.a;
    sab += r.a * r.b;
    sbb += r.b * r.b;
    sa += r.a;
    sb += r.b;
  }
  auto residual = [&](double g1, double g2) {
    double acc = 0.0;
    for (const auto& r : rows) {
      const double e = 1.0 - g1 * r.a - g2 * r.b;
      acc += e * e;
    }
    return acc;
  };
  // Candidates: the unconstrained solution if feasible, and both one-sided fits.
  std::vector<std::array<double, 2>> cand;
  const double det = saa * sbb - sab * sab;
  if (det > 0.0) {
    const double g1 = (sa * sbb - sb * sab) / det;
    const double g2 = (sb * saa - sa * sab) / det;
    if (g1 >= 0.0 && g2 >= 0.0) cand.push_back({g1, g2});
  }
  if (saa > 0.0) cand.push_back({std::max(0.0, sa / saa), 0.0});
  if (sbb > 0.0) cand.push_back({0.0, std::max(0.0, sb / sbb)});
  if (cand.empty()) throw std::invalid_argument("degenerate gamma fit: zero fields");
  auto best = *std::min_element(cand.begin(), cand.end(), [&](const auto& x, const auto& y) {
    return residual(x[0], x[1]) < residual(y[0], y[1]);
  });

  GammaFit out{best[0], best[1], 0.0, static_cast<int>(rows.size())};
  for (const auto& s : samples) {
    if (!(s.lhs > 0.0)) continue;
    const double rhs = out.gamma1 * s.a + out.gamma2 * s.b;
    out.worst_ratio = std::max(out.worst_ratio, rhs > 0.0 ? s.lhs / rhs : std::numeric_limits<double>::infinity());
  }
  return out;
}

inline GammaFit measure_gamma(const std::vector<StreamField>& fields, const std::vector<int>& K_list) {
  if (fields.empty() || K_list.empty()) throw std::invalid_argument("measure_gamma needs fields and K values");
  std::vector<GammaSample> samples;
  for (const auto& psi : fields)
    for (int K : K_list) samples.push_back(gamma_sample(psi, K));
  return fit_gamma(samples);
}

}  // namespace nudge2d
