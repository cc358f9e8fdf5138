#pragma once

#include <map>
#include <string>
#include <string_view>

namespace interfere {

enum class Direction { kUpperOnTheta, kLowerOnTheta };

enum class Method {
  kTInterval,            // conservative t-interval, upper on theta
  kTIntervalReversed,    // capped reversed t-interval, lower on theta
  kBasicMonotone,        // W_basic inversion under unit-level monotonicity
  kBasicAggregate,       // W_basic inversion under aggregate monotonicity
  kBasicFullTreatment,   // W_basic inversion of the complemented experiment
  kSpillChebyshev,
  kSpillNormal,
};

inline std::string_view to_string(Direction d) {
  return d == Direction::kUpperOnTheta ? "upper-on-theta" : "lower-on-theta";
}

inline std::string_view to_string(Method m) {
  switch (m) {
    case Method::kTInterval: return "t-interval";
    case Method::kTIntervalReversed: return "t-interval-reversed";
    case Method::kBasicMonotone: return "basic-monotone";
    case Method::kBasicAggregate: return "basic-aggregate";
    case Method::kBasicFullTreatment: return "full-treatment";
    case Method::kSpillChebyshev: return "spill-chebyshev";
    case Method::kSpillNormal: return "spill-normal";
  }
  return "unknown";
}

// One-sided confidence bound on the counterfactual total sum(theta), and the
// implied lower bound on the attributable effect A = sum(Y) - sum(theta).
struct CounterfactualBound {
  double theta_sum_bound = 0.0;
  double attributable_lower = 0.0;
  Direction direction = Direction::kUpperOnTheta;
  double alpha = 0.05;
  Method method = Method::kTInterval;
  std::map<std::string, double> diagnostics;
};

}  // namespace interfere
