#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>

#include "interfere_ci/error.hpp"
#include "interfere_ci/special_functions.hpp"

namespace interfere {

// Number of successes among `draws` items sampled without replacement from a
// population of `successes + failures`.
struct HypergeometricSpec {
  std::int64_t successes = 0;
  std::int64_t failures = 0;
  std::int64_t draws = 0;

  std::int64_t population() const { return successes + failures; }
  std::int64_t support_min() const { return std::max<std::int64_t>(0, draws - failures); }
  std::int64_t support_max() const { return std::min(draws, successes); }
  double mean() const {
    return static_cast<double>(draws) * static_cast<double>(successes) / static_cast<double>(population());
  }
};

inline void check(const HypergeometricSpec& h) {
  require(h.successes >= 0 && h.failures >= 0, "hypergeometric counts must be nonnegative");
  require(h.population() > 0, "hypergeometric population must be positive");
  require(h.draws >= 0 && h.draws <= h.population(), "hypergeometric draws must lie in [0, N]");
}

inline double hypergeom_log_pmf(const HypergeometricSpec& h, std::int64_t k) {
  if (k < h.support_min() || k > h.support_max()) return -INFINITY;
  using special::log_choose;
  return log_choose(static_cast<double>(h.successes), static_cast<double>(k)) +
         log_choose(static_cast<double>(h.failures), static_cast<double>(h.draws - k)) -
         log_choose(static_cast<double>(h.population()), static_cast<double>(h.draws));
}

namespace detail {

// log(pmf(k-1) / pmf(k))
inline double hypergeom_log_step_down(const HypergeometricSpec& h, std::int64_t k) {
  const double kk = static_cast<double>(k);
  return std::log(kk * static_cast<double>(h.failures - h.draws + k)) -
         std::log(static_cast<double>(h.successes - k + 1) * static_cast<double>(h.draws - k + 1));
}

// log(pmf(k+1) / pmf(k))
inline double hypergeom_log_step_up(const HypergeometricSpec& h, std::int64_t k) {
  return std::log(static_cast<double>(h.successes - k) * static_cast<double>(h.draws - k)) -
         std::log(static_cast<double>(k + 1) * static_cast<double>(h.failures - h.draws + k + 1));
}

// Hoeffding's inequality holds for sampling without replacement:
// P(W - EW >= t) <= exp(-2 t^2 / n). Mass beyond this many draws-scaled
// deviations is below kNegligibleTail.
inline constexpr double kNegligibleTail = 1e-280;
inline constexpr double kLevelTolerance = 1e-10;

inline double hoeffding_radius(std::int64_t draws) {
  return std::sqrt(0.5 * static_cast<double>(draws) * -std::log(kNegligibleTail));
}

}  // namespace detail

// P(W <= w), summed in log space over the shorter side of the support.
inline double hypergeom_cdf(const HypergeometricSpec& h, std::int64_t w) {
  check(h);
  const std::int64_t lo = h.support_min(), hi = h.support_max();
  if (w < lo) return 0.0;
  if (w >= hi) return 1.0;
  const bool lower = (w - lo) <= (hi - w);
  double total = 0.0;
  if (lower) {
    double lp = hypergeom_log_pmf(h, lo);
    for (std::int64_t k = lo; k <= w; ++k) {
      total += std::exp(lp);
      if (k < w) lp += detail::hypergeom_log_step_up(h, k);
    }
    return std::min(1.0, total);
  }
  double lp = hypergeom_log_pmf(h, hi);
  for (std::int64_t k = hi; k > w; --k) {
    total += std::exp(lp);
    lp += detail::hypergeom_log_step_down(h, k);
  }
  return std::max(0.0, 1.0 - total);
}

// Smallest w with P(W <= w) >= confidence, compared with a relative
// tolerance of 1e-10 so exact ties are not lost to rounding. The walk starts
// a Hoeffding radius beyond the mean so its cost is O(sqrt(draws)) regardless
// of population size; the skipped mass is charged to the tail, which can only
// move w up.
inline std::int64_t hypergeom_quantile(const HypergeometricSpec& h, double confidence) {
  require(confidence > 0.0 && confidence < 1.0, "confidence must lie in (0,1)");
  check(h);
  const std::int64_t lo = h.support_min(), hi = h.support_max();
  if (lo == hi) return lo;
  const double radius = detail::hoeffding_radius(h.draws);
  if (confidence >= 0.5) {
    const double budget = (1.0 - confidence) * (1.0 + detail::kLevelTolerance);
    std::int64_t w = std::min<std::int64_t>(hi, static_cast<std::int64_t>(std::ceil(h.mean() + radius)));
    double tail = w < hi ? detail::kNegligibleTail : 0.0;  // P(W > w)
    double lp = hypergeom_log_pmf(h, w);
    while (w > lo) {
      const double next = tail + std::exp(lp);
      if (next > budget) break;
      tail = next;
      lp += detail::hypergeom_log_step_down(h, w);
      --w;
    }
    return w;
  }
  std::int64_t w = std::max<std::int64_t>(lo, static_cast<std::int64_t>(std::floor(h.mean() - radius)));
  double lp = hypergeom_log_pmf(h, w);
  double cdf = std::exp(lp);  // mass below the start is ignored, which can only move w up
  while (cdf < confidence * (1.0 - detail::kLevelTolerance) && w < hi) {
    lp += detail::hypergeom_log_step_up(h, w);
    ++w;
    cdf += std::exp(lp);
  }
  return w;
}

}  // namespace interfere
