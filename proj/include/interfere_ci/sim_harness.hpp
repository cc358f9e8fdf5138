#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "interfere_ci/basic_inversion.hpp"
#include "interfere_ci/distance.hpp"
#include "interfere_ci/error.hpp"
#include "interfere_ci/experiment.hpp"
#include "interfere_ci/kernel.hpp"
#include "interfere_ci/parallel.hpp"
#include "interfere_ci/rng.hpp"
#include "interfere_ci/spill_inversion.hpp"
#include "interfere_ci/ttest_bound.hpp"

namespace interfere {

// Spatial grid experiments: units on a side x side lattice, L treatment
// locations drawn with replacement, each active (Z = 1) with probability 1/2,
//   P_i = 1 - prod_l (1 - h(i, j_l))^{Z_l},
//   h(i, j) = min(1, C exp(-d^2 / sigma_h^2)) for d <= d_max_h, else 0,
// and Y_i = 1 if theta_i = 1, else Bernoulli(P_i).

enum class Estimator { kBasic, kSpill, kTTest };

inline std::string_view to_string(Estimator e) {
  switch (e) {
    case Estimator::kBasic: return "basic";
    case Estimator::kSpill: return "spill";
    case Estimator::kTTest: return "ttest";
  }
  return "?";
}

inline Estimator parse_estimator(const std::string& s) {
  if (s == "basic") return Estimator::kBasic;
  if (s == "spill") return Estimator::kSpill;
  if (s == "ttest") return Estimator::kTTest;
  throw ValidationError("unknown estimator '" + s + "'");
}

struct SimScenario {
  std::string name;
  std::size_t grid_side = 50;
  std::size_t n_treat = 8;
  double p0 = 1.0 / 150.0;
  double sigma_h = 1.0;
  double C = 1.0;
  double d_max_h = 0.0;
  std::uint64_t seed = 1;
  std::size_t reps = 100;
  Estimator estimator = Estimator::kBasic;
  double kernel_sigma_multiplier = 1.0;  // sigma_K / sigma_h
  double d_max_K = 0.0;
  double alpha = 0.05;
  TailBound tail = TailBound::kChebyshev;
  std::size_t n_lambda = 500;
  std::size_t grid_steps = 200;
  std::size_t refine_rounds = 2;
  bool scale_directions = true;

  std::size_t n_units() const { return grid_side * grid_side; }
  double sigma_k() const { return kernel_sigma_multiplier * sigma_h; }
};

inline void validate(const SimScenario& s) {
  require(s.grid_side >= 2, "grid_side must be at least 2");
  require(s.n_treat >= 1, "n_treat must be at least 1");
  require(s.p0 >= 0.0 && s.p0 <= 1.0, "p0 must lie in [0,1]");
  require(std::isfinite(s.sigma_h) && s.sigma_h > 0.0, "sigma_h must be positive");
  require(std::isfinite(s.C) && s.C > 0.0, "C must be positive");
  require(!std::isnan(s.d_max_h) && s.d_max_h >= 0.0, "d_max_h must be nonnegative");
  require(s.reps >= 1, "reps must be positive");
  require(s.alpha > 0.0 && s.alpha < 1.0, "alpha must lie in (0,1)");
  if (s.estimator == Estimator::kSpill) {
    require(std::isfinite(s.kernel_sigma_multiplier) && s.kernel_sigma_multiplier > 0.0,
            "spill estimator needs a positive kernel_sigma_multiplier");
    require(!std::isnan(s.d_max_K) && s.d_max_K >= 0.0, "spill estimator needs d_max_K >= 0");
  }
}

inline double spillover_probability(const SimScenario& s, double distance) {
  if (distance > s.d_max_h) return 0.0;
  return std::min(1.0, s.C * std::exp(-distance * distance / (s.sigma_h * s.sigma_h)));
}

struct GeneratedExperiment {
  ExperimentData data;
  std::vector<std::uint8_t> theta;
  std::vector<std::array<double, 2>> coordinates;
  std::vector<std::size_t> locations;  // j_1..j_L, duplicates kept
  std::vector<std::uint8_t> active;    // Z_1..Z_L

  std::int64_t true_attributable() const {
    std::int64_t a = 0;
    for (std::size_t i = 0; i < theta.size(); ++i) a += data.outcomes[i] - theta[i];
    return a;
  }
};

// Draw order from the (seed, rep) stream: L locations, L activity flags,
// N counterfactuals, then one uniform per unit (row-major) for the outcome.
inline GeneratedExperiment generate(const SimScenario& s, std::uint64_t rep_index) {
  validate(s);
  const std::size_t side = s.grid_side, n = s.n_units();
  CounterRng rng(s.seed, rep_index);
  GeneratedExperiment g;
  g.coordinates = grid_coordinates(side);
  g.locations.resize(s.n_treat);
  g.active.resize(s.n_treat);
  for (auto& j : g.locations) j = static_cast<std::size_t>(rng.uniform_index(n));
  for (auto& z : g.active) z = rng.bernoulli(0.5) ? 1 : 0;
  g.theta.resize(n);
  for (auto& t : g.theta) t = rng.bernoulli(s.p0) ? 1 : 0;

  std::vector<double> untouched(n, 1.0);  // prod_l (1 - h(i, j_l))^{Z_l}
  const auto reach = static_cast<std::ptrdiff_t>(std::min(std::floor(s.d_max_h), static_cast<double>(side)));
  for (std::size_t l = 0; l < s.n_treat; ++l) {
    if (!g.active[l]) continue;
    const auto jr = static_cast<std::ptrdiff_t>(g.locations[l] / side);
    const auto jc = static_cast<std::ptrdiff_t>(g.locations[l] % side);
    for (std::ptrdiff_t r = std::max<std::ptrdiff_t>(0, jr - reach);
         r <= std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(side) - 1, jr + reach); ++r) {
      for (std::ptrdiff_t c = std::max<std::ptrdiff_t>(0, jc - reach);
           c <= std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(side) - 1, jc + reach); ++c) {
        const double d = std::hypot(static_cast<double>(r - jr), static_cast<double>(c - jc));
        untouched[static_cast<std::size_t>(r) * side + static_cast<std::size_t>(c)] *=
            1.0 - spillover_probability(s, d);
      }
    }
  }

  std::vector<std::uint8_t> treatment(n, 0);
  for (auto j : g.locations) treatment[j] = 1;
  std::vector<std::int64_t> outcomes(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = rng.uniform();
    outcomes[i] = (g.theta[i] || u < 1.0 - untouched[i]) ? 1 : 0;
  }
  g.data = make_experiment(std::move(treatment), std::move(outcomes));
  return g;
}

// Sum of h over the infinite integer lattice around one treatment, i.e. the
// expected number of units it reaches when active, ignoring grid edges.
inline double lattice_effect(double C, double sigma_h, double d_max_h) {
  const auto reach = static_cast<std::int64_t>(std::floor(d_max_h));
  double total = 0.0;
  for (std::int64_t r = -reach; r <= reach; ++r)
    for (std::int64_t c = -reach; c <= reach; ++c) {
      const double d2 = static_cast<double>(r * r + c * c);
      if (std::sqrt(d2) <= d_max_h) total += std::min(1.0, C * std::exp(-d2 / (sigma_h * sigma_h)));
    }
  return total;
}

// C such that lattice_effect(C) = target, by bisection to 1e-6 relative.
inline double solve_effect_scale(double target, double sigma_h, double d_max_h) {
  require(target > 0.0, "effect target must be positive");
  require(std::isfinite(d_max_h), "d_max_h must be finite to solve for C");
  const double ceiling = lattice_effect(std::numeric_limits<double>::max(), sigma_h, d_max_h);
  require(target < ceiling, "effect target unreachable: only " + std::to_string(ceiling) +
                                " lattice points lie within d_max_h");
  double lo = 0.0, hi = 1.0;
  while (lattice_effect(hi, sigma_h, d_max_h) < target) hi *= 2.0;
  while ((hi - lo) > 1e-6 * hi) {
    const double mid = 0.5 * (lo + hi);
    (lattice_effect(mid, sigma_h, d_max_h) < target ? lo : hi) = mid;
  }
  return hi;
}

struct SimResult {
  std::size_t rep = 0;
  std::int64_t true_A = 0;
  double bound_A = 0.0;
  double accuracy = std::numeric_limits<double>::quiet_NaN();  // bound_A / true_A when true_A > 0
  bool covered = true;
  double runtime = 0.0;  // seconds
};

inline CounterfactualBound estimate(const SimScenario& s, const GeneratedExperiment& g) {
  switch (s.estimator) {
    case Estimator::kBasic:
      return invert_monotone(g.data, s.alpha).bound;
    case Estimator::kTTest: {
      TIntervalInputs in;
      in.alpha = s.alpha;
      in.untreated_outcomes = g.data.outcomes_of(0);
      in.n_units = static_cast<std::int64_t>(g.data.n_units());
      in.treated_count = static_cast<std::int64_t>(g.data.treated_count());
      in.observed_total = g.data.outcome_total();
      TIntervalResult r = conservative_upper(in);
      r.bound.attributable_lower = std::max(0.0, r.bound.attributable_lower);
      return r.bound;
    }
    case Estimator::kSpill: {
      const auto distances = DistanceProvider::from_coordinates(g.coordinates);
      std::vector<std::size_t> free;
      for (std::size_t i = 0; i < g.data.n_units(); ++i)
        if (g.data.outcomes[i]) free.push_back(i);
      const SmoothingKernel k = build_kernel_columns(distances, s.sigma_k(), s.d_max_K, free);
      SpillConfig c;
      c.alpha = s.alpha;
      c.tail = s.tail;
      c.n_lambda = s.n_lambda;
      c.grid_steps = s.grid_steps;
      c.refine_rounds = s.refine_rounds;
      c.scale_directions = s.scale_directions;
      c.threads = 1;  // replications are the parallel axis
      return solve_relaxation(g.data, k, c).bound;
    }
  }
  throw std::logic_error("unhandled estimator");
}

inline SimResult run_replication(const SimScenario& s, std::size_t rep) {
  const auto start = std::chrono::steady_clock::now();
  const GeneratedExperiment g = generate(s, rep);
  SimResult r;
  r.rep = rep;
  r.true_A = g.true_attributable();
  const std::size_t l = g.data.treated_count();
  if (l == g.data.n_units()) {
    r.bound_A = 0.0;  // every unit treated: nothing to compare against
  } else {
    r.bound_A = estimate(s, g).attributable_lower;
  }
  if (r.true_A > 0) r.accuracy = r.bound_A / static_cast<double>(r.true_A);
  r.covered = r.bound_A <= static_cast<double>(r.true_A);
  r.runtime = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

struct SimSummary {
  std::size_t reps = 0;
  std::size_t accuracy_reps = 0;  // reps with true_A > 0
  double mean_accuracy = std::numeric_limits<double>::quiet_NaN();
  double std_error = std::numeric_limits<double>::quiet_NaN();
  std::size_t covered = 0;
  double coverage = 0.0;
  double mean_true_A = 0.0;
  double mean_bound_A = 0.0;
};

inline SimSummary summarize(const std::vector<SimResult>& results) {
  SimSummary s;
  s.reps = results.size();
  double sum = 0.0, sum_sq = 0.0;
  for (const auto& r : results) {
    s.covered += r.covered ? 1 : 0;
    s.mean_true_A += static_cast<double>(r.true_A);
    s.mean_bound_A += r.bound_A;
    if (r.true_A > 0) {
      ++s.accuracy_reps;
      sum += r.accuracy;
      sum_sq += r.accuracy * r.accuracy;
    }
  }
  if (s.reps > 0) {
    s.coverage = static_cast<double>(s.covered) / static_cast<double>(s.reps);
    s.mean_true_A /= static_cast<double>(s.reps);
    s.mean_bound_A /= static_cast<double>(s.reps);
  }
  if (s.accuracy_reps > 0) {
    const double k = static_cast<double>(s.accuracy_reps);
    s.mean_accuracy = sum / k;
    s.std_error = s.accuracy_reps > 1
                      ? std::sqrt(std::max(0.0, (sum_sq - k * s.mean_accuracy * s.mean_accuracy) / (k - 1.0)) / k)
                      : 0.0;
  }
  return s;
}

struct SimRun {
  SimScenario scenario;
  std::vector<SimResult> results;
  SimSummary summary;
};

inline SimRun run(const SimScenario& s, std::size_t threads = 0) {
  validate(s);
  SimRun out;
  out.scenario = s;
  out.results.resize(s.reps);
  parallel_for(s.reps, threads, [&](std::size_t rep) { out.results[rep] = run_replication(s, rep); });
  out.summary = summarize(out.results);
  return out;
}

// Scenario grids. Full scale uses 300 x 300 grids with L = 50; a desk
// factor f > 1 divides grid side, L, sigma_h and the effect per treatment by
// f, which keeps the expected ratio sum(theta) : A fixed.
struct PresetOptions {
  double desk_scale = 1.0;
  std::size_t reps = 100;
  std::uint64_t seed = 1;
  double alpha = 0.05;
  TailBound tail = TailBound::kChebyshev;
};

namespace detail {

inline std::size_t shrink(double value, double factor) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(value / factor)));
}

}  // namespace detail

inline std::vector<SimScenario> preset(const std::string& name, const PresetOptions& opt = {}) {
  require(opt.desk_scale >= 1.0, "desk scale factor must be at least 1");
  const double f = opt.desk_scale;
  SimScenario base;
  base.seed = opt.seed;
  base.reps = opt.reps;
  base.alpha = opt.alpha;
  base.tail = opt.tail;
  std::vector<SimScenario> out;

  if (name == "fig1") {
    // 600 counterfactual and 625 caused outcomes expected at full scale:
    // p0 = 1/150, 12.5 outcomes per treatment (25 per active one).
    base.grid_side = detail::shrink(300.0, f);
    base.n_treat = detail::shrink(50.0, f);
    base.p0 = 1.0 / 150.0;
    base.estimator = Estimator::kSpill;
    const double caused_per_active = 2.0 * 12.5 / f / (1.0 - base.p0);
    for (double sh : {3.0, 4.5, 6.0, 8.0, 10.0, 15.0, 20.0}) {
      for (double mult : {1.0 / 3.0, 0.5, 1.0, 2.0, 3.0, 4.0, 6.0}) {
        SimScenario s = base;
        s.sigma_h = sh / f;
        s.d_max_h = 3.0 * s.sigma_h;
        s.C = solve_effect_scale(caused_per_active, s.sigma_h, s.d_max_h);
        s.kernel_sigma_multiplier = mult;
        s.d_max_K = 3.0 * s.sigma_k();
        s.name = "fig1 sigma_h=" + std::to_string(sh) + " sigma_K/sigma_h=" + std::to_string(mult);
        out.push_back(s);
      }
    }
  } else if (name == "fig3") {
    // Matched kernel, 1.5 caused outcomes per treatment, fixed p0 chosen so
    // that sum(theta) / sum(Y) = 0.7 at density 0.04. The grid side follows
    // the nominal density L / N.
    base.p0 = 0.14;
    base.sigma_h = 1.5;
    base.d_max_h = 3.0;
    base.C = solve_effect_scale(2.0 * 1.5 / (1.0 - base.p0), base.sigma_h, base.d_max_h);
    base.estimator = Estimator::kSpill;
    base.kernel_sigma_multiplier = 1.0;
    base.d_max_K = base.d_max_h;
    const std::vector<double> ls = f > 1.0 ? std::vector<double>{10, 20, 40} : std::vector<double>{10, 30, 100, 300};
    for (double l : ls) {
      for (double density : {0.04, 0.09, 0.16, 0.36}) {
        SimScenario s = base;
        s.n_treat = static_cast<std::size_t>(l);
        s.grid_side = std::max<std::size_t>(2, static_cast<std::size_t>(std::llround(std::sqrt(l / density))));
        s.name = "fig3 L=" + std::to_string(s.n_treat) + " density=" + std::to_string(density);
        out.push_back(s);
      }
    }
  } else if (name == "fig4") {
    // Direct effects only: an active treatment always turns its own unit on.
    base.grid_side = detail::shrink(300.0, f);
    base.n_treat = detail::shrink(50.0, f);
    base.p0 = 1.0 / 150.0;
    base.sigma_h = 1.0;
    base.C = 1.0;
    base.d_max_h = 0.0;
    SimScenario basic = base;
    basic.estimator = Estimator::kBasic;
    basic.name = "fig4 basic";
    out.push_back(basic);
    for (double dk : {0.0, 1.0, 2.0}) {
      SimScenario s = base;
      s.estimator = Estimator::kSpill;
      s.kernel_sigma_multiplier = 1.0;
      s.d_max_K = dk;
      s.name = "fig4 spill d_max_K=" + std::to_string(static_cast<int>(dk));
      out.push_back(s);
    }
  } else {
    throw ValidationError("unknown preset '" + name + "' (expected fig1, fig3 or fig4)");
  }
  return out;
}

}  // namespace interfere
