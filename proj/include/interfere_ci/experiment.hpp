#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "interfere_ci/error.hpp"

namespace interfere {

// The observed experiment: L of N units treated by sampling without
// replacement, outcomes recorded for every unit.
struct ExperimentData {
  std::vector<std::string> unit_ids;  // external ids; index = dense unit index
  std::vector<std::uint8_t> treatment;  // X_i in {0,1}
  std::vector<std::int64_t> outcomes;   // Y_i >= 0

  std::size_t n_units() const { return treatment.size(); }

  std::size_t treated_count() const {
    return static_cast<std::size_t>(std::count(treatment.begin(), treatment.end(), 1));
  }

  bool is_binary() const {
    return std::all_of(outcomes.begin(), outcomes.end(),
                       [](std::int64_t y) { return y == 0 || y == 1; });
  }

  std::int64_t outcome_total() const {
    return std::accumulate(outcomes.begin(), outcomes.end(), std::int64_t{0});
  }

  // Sum of outcomes over units with treatment == arm.
  std::int64_t outcome_total(std::uint8_t arm) const {
    std::int64_t total = 0;
    for (std::size_t i = 0; i < outcomes.size(); ++i)
      if (treatment[i] == arm) total += outcomes[i];
    return total;
  }

  std::vector<std::int64_t> outcomes_of(std::uint8_t arm) const {
    std::vector<std::int64_t> out;
    for (std::size_t i = 0; i < outcomes.size(); ++i)
      if (treatment[i] == arm) out.push_back(outcomes[i]);
    return out;
  }
};

// Builds an ExperimentData with generated ids "0".."N-1".
inline ExperimentData make_experiment(std::vector<std::uint8_t> treatment,
                                      std::vector<std::int64_t> outcomes) {
  ExperimentData data;
  data.unit_ids.reserve(treatment.size());
  for (std::size_t i = 0; i < treatment.size(); ++i) data.unit_ids.push_back(std::to_string(i));
  data.treatment = std::move(treatment);
  data.outcomes = std::move(outcomes);
  return data;
}

inline void validate(const ExperimentData& data, bool require_binary) {
  const std::size_t n = data.n_units();
  require(n > 0, "experiment has no units");
  require(data.outcomes.size() == n,
          "length mismatch: " + std::to_string(n) + " treatment entries but " +
              std::to_string(data.outcomes.size()) + " outcomes");
  require(data.unit_ids.empty() || data.unit_ids.size() == n,
          "length mismatch between unit ids and treatment");
  for (std::size_t i = 0; i < n; ++i) {
    require(data.treatment[i] <= 1, "treatment must be 0 or 1");
    require(data.outcomes[i] >= 0, "negative outcome at unit index " + std::to_string(i));
  }
  const std::size_t treated = data.treated_count();
  require(treated > 0, "no treated units");
  require(treated < n, "no untreated units");
  if (require_binary) require(data.is_binary(), "method requires binary outcomes (0/1)");
}

}  // namespace interfere
