#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <string>

#include "interfere_ci/bound.hpp"
#include "interfere_ci/error.hpp"
#include "interfere_ci/experiment.hpp"
#include "interfere_ci/hypergeometric.hpp"

namespace interfere {

// Treatment x outcome cell counts of a binary experiment. The W_basic
// inversion depends on the data only through these four numbers.
struct BasicCounts {
  std::int64_t treated_one = 0;    // n11: X=1, Y=1
  std::int64_t treated_zero = 0;   // n10: X=1, Y=0
  std::int64_t control_one = 0;    // n01: X=0, Y=1
  std::int64_t control_zero = 0;   // n00: X=0, Y=0

  std::int64_t n_units() const { return treated_one + treated_zero + control_one + control_zero; }
  std::int64_t treated() const { return treated_one + treated_zero; }
  std::int64_t outcome_total() const { return treated_one + control_one; }

  // X -> 1 - X, Y -> 1 - Y.
  BasicCounts complemented() const { return {control_zero, control_one, treated_zero, treated_one}; }
};

inline void validate(const BasicCounts& c) {
  require(c.treated_one >= 0 && c.treated_zero >= 0 && c.control_one >= 0 && c.control_zero >= 0,
          "cell counts must be nonnegative");
  require(c.treated() > 0, "no treated units");
  require(c.treated() < c.n_units(), "no untreated units");
}

inline BasicCounts count_cells(const ExperimentData& data) {
  validate(data, /*require_binary=*/true);
  BasicCounts c;
  for (std::size_t i = 0; i < data.n_units(); ++i) {
    const bool y = data.outcomes[i] == 1;
    if (data.treatment[i]) (y ? c.treated_one : c.treated_zero)++;
    else (y ? c.control_one : c.control_zero)++;
  }
  return c;
}

inline std::int64_t w_basic(std::span<const std::uint8_t> x, std::span<const std::uint8_t> theta) {
  require(x.size() == theta.size(), "w_basic: length mismatch");
  std::int64_t w = 0;
  for (std::size_t i = 0; i < x.size(); ++i) w += static_cast<std::int64_t>(x[i] & theta[i]);
  return w;
}

enum class Assumption { kMonotone, kAggregate };

// (a, b) = (sum of theta over treated, sum over untreated) at the optimum.
struct InversionSearchState {
  std::int64_t a = 0;
  std::int64_t b = 0;
};

struct BasicInversionResult {
  CounterfactualBound bound;
  InversionSearchState optimum;
  std::int64_t critical_value = 0;  // w at sum(theta) = a* + b*
};

// Largest s = a + b such that some a with max(0, s - B) <= a <= min(cap, s)
// also satisfies a <= w(s), where w(s) is the (1 - alpha) quantile of
// Hypergeometric(s, N - s, L). For s <= B the choice a = 0 is always feasible.
// Above B the slack min(cap, w(s)) - (s - B) is nonincreasing in s, because
// w(s + 1) <= w(s) + 1 (adding one success moves W by at most one), so the
// largest feasible s is found by bisection.
inline BasicInversionResult invert_counts(const BasicCounts& counts, double alpha, Assumption assumption) {
  validate(counts);
  require(alpha > 0.0 && alpha < 1.0, "alpha must lie in (0,1)");
  const std::int64_t n = counts.n_units();
  const std::int64_t l = counts.treated();
  const std::int64_t control_cap = counts.control_one;
  const std::int64_t treated_cap = assumption == Assumption::kMonotone ? counts.treated_one : l;
  const double confidence = 1.0 - alpha;

  auto quantile = [&](std::int64_t s) {
    return hypergeom_quantile({s, n - s, l}, confidence);
  };
  auto slack = [&](std::int64_t s) {
    return std::min({treated_cap, s, quantile(s)}) - std::max<std::int64_t>(0, s - control_cap);
  };

  const std::int64_t s_max = std::min(n, treated_cap + control_cap);
  std::int64_t lo = std::min(control_cap, s_max);  // always feasible
  std::int64_t hi = s_max;
  if (slack(hi) >= 0) {
    lo = hi;
  } else {
    // invariant: slack(lo) >= 0, slack(hi) < 0
    while (hi - lo > 1) {
      const std::int64_t mid = lo + (hi - lo) / 2;
      if (slack(mid) >= 0) lo = mid; else hi = mid;
    }
  }
  const std::int64_t s_star = lo;

  BasicInversionResult r;
  r.optimum.a = std::max<std::int64_t>(0, s_star - control_cap);
  r.optimum.b = s_star - r.optimum.a;
  r.critical_value = quantile(s_star);
  r.bound.theta_sum_bound = static_cast<double>(s_star);
  r.bound.attributable_lower = static_cast<double>(counts.outcome_total() - s_star);
  r.bound.direction = Direction::kUpperOnTheta;
  r.bound.alpha = alpha;
  r.bound.method = assumption == Assumption::kMonotone ? Method::kBasicMonotone : Method::kBasicAggregate;
  r.bound.diagnostics["a_star"] = static_cast<double>(r.optimum.a);
  r.bound.diagnostics["b_star"] = static_cast<double>(r.optimum.b);
  r.bound.diagnostics["critical_value"] = static_cast<double>(r.critical_value);
  return r;
}

inline BasicInversionResult invert_monotone(const BasicCounts& counts, double alpha) {
  return invert_counts(counts, alpha, Assumption::kMonotone);
}

inline BasicInversionResult invert_aggregate(const BasicCounts& counts, double alpha) {
  return invert_counts(counts, alpha, Assumption::kAggregate);
}

inline BasicInversionResult invert_monotone(const ExperimentData& data, double alpha) {
  return invert_monotone(count_cells(data), alpha);
}

inline BasicInversionResult invert_aggregate(const ExperimentData& data, double alpha) {
  return invert_aggregate(count_cells(data), alpha);
}

// Lower bound on the full-treatment counterfactual total: invert the
// complemented experiment (X -> 1-X, Y -> 1-Y), whose counterfactual is
// 1 - theta_ft, then map the upper bound U on sum(1 - theta_ft) to
// sum(theta_ft) >= N - U.
inline BasicInversionResult full_treatment_bound(const BasicCounts& counts, double alpha) {
  validate(counts);
  BasicInversionResult r = invert_monotone(counts.complemented(), alpha);
  const double upper_complement = r.bound.theta_sum_bound;
  r.bound.diagnostics["complement_upper_bound"] = upper_complement;
  r.bound.theta_sum_bound = static_cast<double>(counts.n_units()) - upper_complement;
  // attributable_lower is already sum(1 - Y) - U = sum(theta_ft) lower - sum(Y).
  r.bound.direction = Direction::kLowerOnTheta;
  r.bound.method = Method::kBasicFullTreatment;
  return r;
}

inline BasicInversionResult full_treatment_bound(const ExperimentData& data, double alpha) {
  return full_treatment_bound(count_cells(data), alpha);
}

}  // namespace interfere
