#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "interfere_ci/bound.hpp"
#include "interfere_ci/error.hpp"
#include "interfere_ci/rng.hpp"
#include "interfere_ci/special_functions.hpp"

namespace interfere {

// Conservative t-intervals for count outcomes. The untreated units are a
// simple random sample of size n = N - L; for a candidate theta the interval
//   mean + t * sqrt((L/N) * s^2 / n)
// bounds the per-unit counterfactual mean, and the bound is maximized (or,
// reversed, minimized) over every theta compatible with the observed data.

struct TIntervalInputs {
  double alpha = 0.05;
  std::vector<std::int64_t> untreated_outcomes;
  std::int64_t n_units = 0;
  std::int64_t treated_count = 0;
  std::optional<std::vector<std::int64_t>> upper_caps;  // S_i, reversed problem only
  std::optional<std::int64_t> observed_total;  // sum of Y over all N units, if known
};

struct LevelSetSolution {
  std::vector<std::int64_t> theta;
  std::int64_t level = 0;
  double objective = 0.0;
};

struct TIntervalResult {
  CounterfactualBound bound;
  double theta_mean_bound = 0.0;
  double t_critical = 0.0;
  LevelSetSolution argmax;  // theta attaining the bound
};

// Largest sum(theta) the reversed dynamic program will tabulate.
inline constexpr std::int64_t kMaxReversedCapTotal = 1'000'000;

namespace detail {

inline void check_design(std::size_t n_values, double alpha, std::int64_t n_units, std::int64_t treated) {
  require(alpha > 0.0 && alpha < 1.0, "alpha must lie in (0,1)");
  require(treated > 0 && treated < n_units, "need 0 < L < N");
  require(static_cast<std::int64_t>(n_values) == n_units - treated,
          "expected N - L = " + std::to_string(n_units - treated) + " untreated values, got " +
              std::to_string(n_values));
  require(n_values >= 2, "t-interval needs at least 2 untreated units");
}

// Interval endpoint from sufficient statistics (count, sum, sum of squares).
// The sums are exact integers, so the variance numerator is formed exactly.
inline double t_endpoint(std::int64_t count, std::int64_t sum, std::int64_t sum_sq, double t_crit,
                         double n_units, double treated, double sign) {
  const auto n = static_cast<long double>(count);
  const __int128 numer = static_cast<__int128>(count) * sum_sq - static_cast<__int128>(sum) * sum;
  const long double var = static_cast<long double>(numer) / (n * (n - 1));
  const long double mean = static_cast<long double>(sum) / n;
  const long double se = std::sqrt((treated / n_units) * var / n);
  return static_cast<double>(mean + sign * t_crit * se);
}

}  // namespace detail

inline double t_critical(double alpha, std::int64_t df) {
  return special::student_t_quantile(1.0 - alpha, static_cast<double>(df));
}

// Upper (1 - alpha) bound on the counterfactual mean, taking theta as given.
inline double ideal_ci(std::span<const std::int64_t> theta, double alpha, std::int64_t n_units,
                       std::int64_t treated) {
  detail::check_design(theta.size(), alpha, n_units, treated);
  const auto n = static_cast<std::int64_t>(theta.size());
  std::int64_t sum = 0, sum_sq = 0;
  for (auto v : theta) {
    sum += v;
    sum_sq += v * v;
  }
  return detail::t_endpoint(n, sum, sum_sq, t_critical(alpha, n - 1), static_cast<double>(n_units),
                            static_cast<double>(treated), +1.0);
}

// Maximizes sum(theta^2) subject to sum(theta) = c, 0 <= theta <= y by filling
// entries in decreasing order of y (ties in index order).
inline LevelSetSolution greedy_fill(std::span<const std::int64_t> y, std::int64_t c) {
  const std::int64_t total = std::accumulate(y.begin(), y.end(), std::int64_t{0});
  require(c >= 0 && c <= total, "fill level out of range [0, sum(Y)]");
  std::vector<std::size_t> order(y.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return y[a] > y[b]; });
  LevelSetSolution s;
  s.theta.assign(y.size(), 0);
  s.level = c;
  std::int64_t remaining = c;
  for (std::size_t idx : order) {
    const std::int64_t take = std::min(remaining, y[idx]);
    s.theta[idx] = take;
    remaining -= take;
    s.objective += static_cast<double>(take) * static_cast<double>(take);
  }
  return s;
}

namespace detail {

inline void finish_bound(TIntervalResult& r, const TIntervalInputs& in, Direction dir) {
  const double n = static_cast<double>(in.n_units);
  const double raw_total = n * r.theta_mean_bound;
  r.bound.direction = dir;
  r.bound.alpha = in.alpha;
  r.bound.diagnostics["theta_mean_bound"] = r.theta_mean_bound;
  r.bound.diagnostics["unclamped_theta_sum_bound"] = raw_total;
  r.bound.diagnostics["argmax_level_c"] = static_cast<double>(r.argmax.level);
  r.bound.diagnostics["t_critical"] = r.t_critical;
  r.bound.theta_sum_bound = raw_total;
  if (in.observed_total) {
    const double observed = static_cast<double>(*in.observed_total);
    // Monotonicity already implies sum(theta) <= sum(Y) (resp. >= for the
    // reversed problem), so clamping keeps the bound valid.
    if (dir == Direction::kUpperOnTheta) {
      r.bound.theta_sum_bound = std::min(raw_total, observed);
      r.bound.attributable_lower = observed - r.bound.theta_sum_bound;
    } else {
      r.bound.theta_sum_bound = std::max(raw_total, observed);
      r.bound.attributable_lower = r.bound.theta_sum_bound - observed;
    }
  } else {
    r.bound.attributable_lower = std::numeric_limits<double>::quiet_NaN();
  }
}

}  // namespace detail

// Exact maximum of the t upper bound over integer 0 <= theta <= Y. For each
// level c the variance is maximized by greedy_fill; successive levels differ
// by one unit in one entry, so the scan updates the sums incrementally.
inline TIntervalResult conservative_upper(const TIntervalInputs& in) {
  const auto& y = in.untreated_outcomes;
  detail::check_design(y.size(), in.alpha, in.n_units, in.treated_count);
  for (auto v : y) require(v >= 0, "outcomes must be nonnegative");
  const auto n = static_cast<std::int64_t>(y.size());
  const double t_crit = t_critical(in.alpha, n - 1);
  const double n_units = static_cast<double>(in.n_units);
  const double treated = static_cast<double>(in.treated_count);

  std::vector<std::size_t> order(y.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return y[a] > y[b]; });
  const std::int64_t total = std::accumulate(y.begin(), y.end(), std::int64_t{0});

  double best = detail::t_endpoint(n, 0, 0, t_crit, n_units, treated, +1.0);
  std::int64_t best_c = 0;
  std::int64_t sum_sq = 0;
  std::size_t pos = 0;
  std::int64_t filled = 0;  // value currently held by entry order[pos]
  for (std::int64_t c = 1; c <= total; ++c) {
    while (filled == y[order[pos]]) {
      ++pos;
      filled = 0;
    }
    sum_sq += 2 * filled + 1;  // (v+1)^2 - v^2
    ++filled;
    const double value = detail::t_endpoint(n, c, sum_sq, t_crit, n_units, treated, +1.0);
    if (value > best) {
      best = value;
      best_c = c;
    }
  }

  TIntervalResult r;
  r.t_critical = t_crit;
  r.theta_mean_bound = best;
  r.argmax = greedy_fill(y, best_c);
  r.argmax.objective = best;
  r.bound.method = Method::kTInterval;
  detail::finish_bound(r, in, Direction::kUpperOnTheta);
  return r;
}

// Exact minimum of the t lower bound over integer Y <= theta <= S. For every
// level c the variance is maximized by value iteration over the running sum,
// one stage per unit; a single forward pass yields all levels at once.
inline TIntervalResult conservative_lower_reversed(const TIntervalInputs& in) {
  const auto& y = in.untreated_outcomes;
  detail::check_design(y.size(), in.alpha, in.n_units, in.treated_count);
  require(in.upper_caps.has_value(), "reversed interval requires per-unit caps S");
  const auto& caps = *in.upper_caps;
  require(caps.size() == y.size(), "caps and outcomes differ in length");
  std::int64_t cap_total = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    require(y[i] >= 0, "outcomes must be nonnegative");
    require(caps[i] >= y[i], "cap below observed outcome at untreated index " + std::to_string(i));
    cap_total += caps[i];
  }
  require(cap_total <= kMaxReversedCapTotal,
          "sum of caps " + std::to_string(cap_total) + " exceeds the supported maximum " +
              std::to_string(kMaxReversedCapTotal));

  const auto n = static_cast<std::int64_t>(y.size());
  const std::int64_t base = std::accumulate(y.begin(), y.end(), std::int64_t{0});
  const std::int64_t range = cap_total - base;  // total slack R
  const auto width = static_cast<std::size_t>(range + 1);
  require(static_cast<double>(y.size()) * static_cast<double>(width) <= 6e7,
          "reversed interval table too large (units x slack)");

  constexpr std::int64_t kNone = std::numeric_limits<std::int64_t>::min();
  std::vector<std::int64_t> best(width, kNone), next(width);
  best[0] = 0;
  std::vector<std::uint32_t> choice(y.size() * width, 0);
  std::int64_t reach = 0;  // largest offset reachable so far
  for (std::size_t t = 0; t < y.size(); ++t) {
    const std::int64_t slack = caps[t] - y[t];
    std::fill(next.begin(), next.end(), kNone);
    for (std::int64_t r = 0; r <= reach + slack; ++r) {
      std::int64_t top = kNone;
      std::uint32_t arg = 0;
      const std::int64_t v_max = std::min(slack, r);
      for (std::int64_t v = std::max<std::int64_t>(0, r - reach); v <= v_max; ++v) {
        const std::int64_t prev = best[static_cast<std::size_t>(r - v)];
        if (prev == kNone) continue;
        const std::int64_t val = y[t] + v;
        const std::int64_t cand = prev + val * val;
        if (cand > top) {
          top = cand;
          arg = static_cast<std::uint32_t>(v);
        }
      }
      next[static_cast<std::size_t>(r)] = top;
      choice[t * width + static_cast<std::size_t>(r)] = arg;
    }
    reach += slack;
    best.swap(next);
  }

  const double t_crit = t_critical(in.alpha, n - 1);
  const double n_units = static_cast<double>(in.n_units);
  const double treated = static_cast<double>(in.treated_count);
  double lowest = std::numeric_limits<double>::infinity();
  std::int64_t best_r = 0;
  for (std::int64_t r = 0; r <= range; ++r) {
    const double value =
        detail::t_endpoint(n, base + r, best[static_cast<std::size_t>(r)], t_crit, n_units, treated, -1.0);
    if (value < lowest) {
      lowest = value;
      best_r = r;
    }
  }

  TIntervalResult res;
  res.t_critical = t_crit;
  res.theta_mean_bound = lowest;
  res.argmax.level = base + best_r;
  res.argmax.objective = lowest;
  res.argmax.theta.assign(y.size(), 0);
  std::int64_t r = best_r;
  for (std::size_t t = y.size(); t-- > 0;) {
    const std::int64_t v = choice[t * width + static_cast<std::size_t>(r)];
    res.argmax.theta[t] = y[t] + v;
    r -= v;
  }
  res.bound.method = Method::kTIntervalReversed;
  detail::finish_bound(res, in, Direction::kLowerOnTheta);
  return res;
}

// (mean |theta|^3) * (mean squared deviation)^(-3/2). Large values flag heavy
// tails, under which the t approximation is doubtful.
inline double heavy_tail_diagnostic(std::span<const std::int64_t> theta) {
  require(theta.size() >= 2, "diagnostic undefined: need at least 2 values");
  const double n = static_cast<double>(theta.size());
  double mean = 0.0;
  for (auto v : theta) mean += static_cast<double>(v);
  mean /= n;
  double m2 = 0.0, m3 = 0.0;
  for (auto v : theta) {
    const double x = static_cast<double>(v);
    m2 += (x - mean) * (x - mean);
    m3 += std::fabs(x * x * x);
  }
  m2 /= n;
  m3 /= n;
  require(m2 > 0.0, "diagnostic undefined: zero variance");
  return m3 / std::pow(m2, 1.5);
}

struct BootstrapCheck {
  bool conclusive = false;
  std::string status;
  std::int64_t reps = 0;
  double t_critical = 0.0;
  double exceedance_rate = 0.0;     // fraction of resamples with T* < -t
  double empirical_quantile = 0.0;  // alpha-quantile of T*

  std::map<std::string, double> as_map() const {
    return {{"reps", static_cast<double>(reps)},
            {"t_critical", t_critical},
            {"exceedance_rate", exceedance_rate},
            {"empirical_quantile", empirical_quantile},
            {"conclusive", conclusive ? 1.0 : 0.0}};
  }
};

// Distributional check of the t approximation at the point hypothesis
// theta = Y: resample the untreated outcomes with replacement, studentize the
// resampled mean around the observed one, and compare the lower alpha tail
// with -t. Resampling is i.i.d., so the studentization omits the
// finite-population factor (it cancels in the studentized ratio).
inline BootstrapCheck bootstrap_check(std::span<const std::int64_t> y, double alpha, std::int64_t n_units,
                                      std::int64_t treated, std::int64_t reps, std::uint64_t seed) {
  detail::check_design(y.size(), alpha, n_units, treated);
  require(reps >= 100, "bootstrap needs at least 100 replicates");
  const auto n = static_cast<std::int64_t>(y.size());
  BootstrapCheck out;
  out.reps = reps;
  out.t_critical = t_critical(alpha, n - 1);
  const bool constant = std::all_of(y.begin(), y.end(), [&](std::int64_t v) { return v == y[0]; });
  if (constant) {
    out.status = "zero variance, check inconclusive";
    return out;
  }
  const double observed_mean =
      static_cast<double>(std::accumulate(y.begin(), y.end(), std::int64_t{0})) / static_cast<double>(n);
  CounterRng rng(seed, 0);
  std::vector<double> stats;
  stats.reserve(static_cast<std::size_t>(reps));
  std::int64_t degenerate = 0;
  for (std::int64_t rep = 0; rep < reps; ++rep) {
    std::int64_t sum = 0, sum_sq = 0;
    for (std::int64_t k = 0; k < n; ++k) {
      const std::int64_t v = y[rng.uniform_index(static_cast<std::uint64_t>(n))];
      sum += v;
      sum_sq += v * v;
    }
    const double mean = static_cast<double>(sum) / static_cast<double>(n);
    const double var = (static_cast<double>(sum_sq) - static_cast<double>(sum) * mean) / static_cast<double>(n - 1);
    const double diff = mean - observed_mean;
    if (var <= 0.0) {
      // A constant resample: studentized value is +/- infinity or 0.
      ++degenerate;
      stats.push_back(diff < 0 ? -INFINITY : (diff > 0 ? INFINITY : 0.0));
      continue;
    }
    stats.push_back(diff / std::sqrt(var / static_cast<double>(n)));
  }
  std::int64_t below = 0;
  for (double s : stats) below += s < -out.t_critical;
  out.exceedance_rate = static_cast<double>(below) / static_cast<double>(reps);
  std::sort(stats.begin(), stats.end());
  const auto k = static_cast<std::size_t>(std::floor(alpha * static_cast<double>(reps)));
  out.empirical_quantile = stats[std::min(k, stats.size() - 1)];
  out.conclusive = true;
  out.status = degenerate > 0 ? "ok (" + std::to_string(degenerate) + " constant resamples)" : "ok";
  return out;
}

}  // namespace interfere
