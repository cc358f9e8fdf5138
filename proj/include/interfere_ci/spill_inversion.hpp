#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <queue>
#include <span>
#include <string>
#include <vector>

#include "interfere_ci/bound.hpp"
#include "interfere_ci/error.hpp"
#include "interfere_ci/experiment.hpp"
#include "interfere_ci/kernel.hpp"
#include "interfere_ci/mincut_qpb.hpp"
#include "interfere_ci/parallel.hpp"
#include "interfere_ci/special_functions.hpp"

namespace interfere {

// Inversion of the kernel-smoothed statistic
//   W_spill(X; theta) = X^T K theta / L
// for binary outcomes. The test depends on theta only through the moment
// vector m(theta) = (1^T K theta / N, X^T K theta / L, theta^T K^T K theta / N);
// the set of achievable moment vectors is outer-approximated by supporting
// half-spaces, each computed exactly by a min cut, and the relaxed
// three-variable problem is solved by a certified grid search.

namespace detail {

inline std::size_t treated_total(std::span<const std::uint8_t> x) {
  std::size_t l = 0;
  for (auto v : x) l += v;
  return l;
}

inline void check_spill_dims(std::span<const std::uint8_t> x, const SmoothingKernel& k,
                             std::span<const std::uint8_t> theta) {
  require(x.size() == k.n_units() && theta.size() == k.n_units(), "spill: dimension mismatch");
  require(treated_total(x) > 0, "spill: no treated units");
}

}  // namespace detail

inline double w_spill(std::span<const std::uint8_t> x, const SmoothingKernel& k,
                      std::span<const std::uint8_t> theta) {
  detail::check_spill_dims(x, k, theta);
  double total = 0.0;
  for (std::size_t j = 0; j < theta.size(); ++j)
    if (theta[j]) total += k.weighted_column_sum(x, j);
  return total / static_cast<double>(detail::treated_total(x));
}

struct MomentVector {
  double m1 = 0.0;  // mean of K theta, = sum(theta) / N
  double m2 = 0.0;  // W_spill(X; theta)
  double m3 = 0.0;  // mean of (K theta)^2

  // Mean and variance of W_spill over random assignments of L treatments.
  double mean() const { return m1; }
  double variance(std::size_t n_units, std::size_t treated) const {
    const double n = static_cast<double>(n_units), l = static_cast<double>(treated);
    return (n - l) / (l * (n - 1.0)) * (m3 - m1 * m1);
  }
};

inline MomentVector moment_vector(std::span<const std::uint8_t> x, const SmoothingKernel& k,
                                  std::span<const std::uint8_t> theta) {
  detail::check_spill_dims(x, k, theta);
  const std::size_t n = k.n_units();
  std::vector<double> smoothed(n, 0.0);  // K theta
  for (std::size_t j = 0; j < n; ++j)
    if (theta[j])
      for (const auto& e : k.column(j)) smoothed[e.row] += e.value;
  MomentVector m;
  for (std::size_t i = 0; i < n; ++i) {
    m.m1 += smoothed[i];
    if (x[i]) m.m2 += smoothed[i];
    m.m3 += smoothed[i] * smoothed[i];
  }
  m.m1 /= static_cast<double>(n);
  m.m2 /= static_cast<double>(detail::treated_total(x));
  m.m3 /= static_cast<double>(n);
  return m;
}

// Quasi-uniform directions on {|lambda| = 1, lambda_3 >= 0}: the axes
// +-e1, +-e2, +e3, then an equal-area map of the R2 low-discrepancy sequence
// (golden-ratio generalization). The sequence is a prefix family, so the
// directions for n are a subset of those for any n' > n.
inline std::vector<std::array<double, 3>> lambda_directions(std::size_t n_lambda) {
  require(n_lambda >= 10, "need at least 10 directions");
  std::vector<std::array<double, 3>> dirs = {
      {1.0, 0.0, 0.0}, {-1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}, {0.0, -1.0, 0.0}, {0.0, 0.0, 1.0}};
  constexpr double kPlastic = 1.32471795724474602596;  // root of x^3 = x + 1
  constexpr double a1 = 1.0 / kPlastic;
  constexpr double a2 = 1.0 / (kPlastic * kPlastic);
  for (std::size_t k = 1; dirs.size() < n_lambda; ++k) {
    const double u = std::fmod(0.5 + a1 * static_cast<double>(k), 1.0);
    const double v = std::fmod(0.5 + a2 * static_cast<double>(k), 1.0);
    const double z = u;  // uniform height is uniform area on the hemisphere
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = 2.0 * std::numbers::pi * v;
    dirs.push_back({r * std::cos(phi), r * std::sin(phi), z});
  }
  return dirs;
}

// Maps a direction d in box-relative coordinates m_k / box_k to the raw
// direction (d_k / box_k), renormalized. Zero box extents are left unscaled.
inline std::vector<std::array<double, 3>> scaled_directions(const std::vector<std::array<double, 3>>& dirs,
                                                           const MomentVector& box) {
  const std::array<double, 3> extent = {box.m1, box.m2, box.m3};
  std::vector<std::array<double, 3>> out;
  out.reserve(dirs.size());
  for (const auto& d : dirs) {
    std::array<double, 3> v{};
    double norm = 0.0;
    for (int k = 0; k < 3; ++k) {
      v[k] = extent[k] > 0.0 ? d[k] / extent[k] : d[k];
      norm += v[k] * v[k];
    }
    norm = std::sqrt(norm);
    for (auto& x : v) x /= norm;
    out.push_back(v);
  }
  return out;
}

struct HalfSpace {
  std::array<double, 3> lambda{};
  double support = 0.0;  // certified upper bound on max lambda^T m(theta), theta <= Y
  double slack = 0.0;    // couplings dropped before the min cut

  double bound() const { return support + slack; }
};

// Everything f*(lambda) needs, restricted to the free units {i : Y_i = 1}:
// the smoothed treatment X^T K and the Gram matrix K^T K on those columns.
class SupportOracle {
 public:
  SupportOracle(std::span<const std::uint8_t> x, const SmoothingKernel& k, std::span<const std::int64_t> y)
      : n_units_(k.n_units()) {
    require(x.size() == n_units_ && y.size() == n_units_, "spill: dimension mismatch");
    for (std::size_t i = 0; i < n_units_; ++i) {
      require(y[i] == 0 || y[i] == 1, "spill inversion requires binary outcomes");
      treated_ += x[i];
      if (y[i]) free_.push_back(i);
    }
    require(treated_ > 0, "spill: no treated units");
    const std::size_t d = free_.size();
    smoothed_treatment_.resize(d);
    gram_.assign(d * d, 0.0);
    std::vector<std::vector<std::pair<std::size_t, double>>> rows(n_units_);
    for (std::size_t p = 0; p < d; ++p) {
      smoothed_treatment_[p] = k.weighted_column_sum(x, free_[p]);
      for (const auto& e : k.column(free_[p])) rows[e.row].push_back({p, e.value});
    }
    for (const auto& row : rows)
      for (const auto& [p, vp] : row)
        for (const auto& [q, vq] : row) gram_[p * d + q] += vp * vq;
  }

  std::size_t dim() const { return free_.size(); }
  std::size_t n_units() const { return n_units_; }
  std::size_t treated() const { return treated_; }
  const std::vector<std::size_t>& free_units() const { return free_; }

  // m(theta) for theta = indicator of the selected free units.
  MomentVector moments(std::span<const std::uint8_t> selected) const {
    const std::size_t d = dim();
    MomentVector m;
    for (std::size_t p = 0; p < d; ++p) {
      if (!selected[p]) continue;
      m.m1 += 1.0;
      m.m2 += smoothed_treatment_[p];
      for (std::size_t q = 0; q < d; ++q)
        if (selected[q]) m.m3 += gram_[p * d + q];
    }
    m.m1 /= static_cast<double>(n_units_);
    m.m2 /= static_cast<double>(treated_);
    m.m3 /= static_cast<double>(n_units_);
    return m;
  }

  MomentVector moments_at_outcomes() const { return moments(std::vector<std::uint8_t>(dim(), 1)); }

  QPBProblem problem(const std::array<double, 3>& lambda) const {
    require(lambda[2] >= 0.0, "f*: lambda_3 must be nonnegative for the min-cut transformation");
    const std::size_t d = dim();
    const double n = static_cast<double>(n_units_), l = static_cast<double>(treated_);
    QPBProblem p;
    p.dim = d;
    p.quad.resize(d * d);
    p.linear.resize(d);
    for (std::size_t i = 0; i < d * d; ++i) p.quad[i] = lambda[2] / n * gram_[i];
    for (std::size_t i = 0; i < d; ++i) p.linear[i] = lambda[0] / n + lambda[1] / l * smoothed_treatment_[i];
    return p;
  }

  HalfSpace support(const std::array<double, 3>& lambda) const {
    HalfSpace h;
    h.lambda = lambda;
    const QPBSolution s = qpb_maximize(problem(lambda));
    h.support = std::max(s.value, s.constant - s.flow_value);
    h.slack = s.dropped;
    return h;
  }

 private:
  std::size_t n_units_ = 0;
  std::size_t treated_ = 0;
  std::vector<std::size_t> free_;
  std::vector<double> smoothed_treatment_;
  std::vector<double> gram_;  // K^T K on free columns, row-major d x d
};

inline HalfSpace f_star(const std::array<double, 3>& lambda, std::span<const std::uint8_t> x,
                        const SmoothingKernel& k, std::span<const std::int64_t> y) {
  require(lambda[2] >= 0.0, "f*: lambda_3 must be nonnegative for the min-cut transformation");
  return SupportOracle(x, k, y).support(lambda);
}

enum class TailBound { kChebyshev, kNormal };

inline std::string_view to_string(TailBound t) { return t == TailBound::kChebyshev ? "chebyshev" : "normal"; }

struct SpillConfig {
  double alpha = 0.05;
  TailBound tail = TailBound::kChebyshev;
  std::size_t n_lambda = 500;
  std::size_t grid_steps = 200;
  std::size_t refine_rounds = 2;
  std::size_t threads = 0;  // 0: resolve_threads()
  // Rescale each direction by the box corner m(Y) before use, so that the
  // directions are spread evenly in box-relative units rather than raw ones.
  bool scale_directions = true;
};

inline void validate(const SpillConfig& c) {
  require(c.alpha > 0.0 && c.alpha < 1.0, "alpha must lie in (0,1)");
  require(c.n_lambda >= 10, "n_lambda must be at least 10");
  require(c.grid_steps >= 10, "grid_steps must be at least 10");
  require(c.refine_rounds <= 8, "refine_rounds must be at most 8");
}

// Largest admissible standardized statistic (m2 - m1) / sqrt(m3 - m1^2).
inline double tail_threshold(TailBound tail, double alpha, std::size_t n_units, std::size_t treated) {
  const double n = static_cast<double>(n_units), l = static_cast<double>(treated);
  if (tail == TailBound::kChebyshev) return 1.0 / std::sqrt(alpha * l * (n - 1.0) / (n - l));
  return special::normal_quantile(1.0 - alpha) / std::sqrt(l);
}

struct SpillResult {
  CounterfactualBound bound;
  std::vector<HalfSpace> halfspaces;
  double m1_star = 0.0;  // certified upper bound on m1 over the relaxed region
  double grid_resolution = 0.0;  // final cell width in m1
  MomentVector box;  // m(Y), the upper corner of the search box
  double threshold = 0.0;
};

namespace detail {

struct Cell {
  double m1_lo, m1_hi, m2_lo, m2_hi;
  std::size_t depth;
};

// True unless the cell provably contains no point of the relaxed region.
// m3 is eliminated exactly: the tail constraint gives a lower bound on it,
// the half-spaces (lambda_3 > 0) upper bounds; every bound is taken at the
// cell corner that is most permissive, so a feasible point never fails.
class CellTest {
 public:
  CellTest(const std::vector<HalfSpace>& hs, double threshold, double m3_max)
      : threshold_(threshold), m3_max_(m3_max) {
    for (const auto& h : hs) {
      // Relative padding absorbs rounding in the support computation.
      const double rhs = h.bound() + 1e-12 * (1.0 + std::fabs(h.bound()));
      planes_.push_back({h.lambda[0], h.lambda[1], h.lambda[2], rhs});
    }
  }

  bool operator()(const Cell& c) const {
    const double gap = std::max(0.0, c.m2_lo - c.m1_hi);
    const double m3_lo = c.m1_lo * c.m1_lo + (gap / threshold_) * (gap / threshold_);
    double m3_hi = m3_max_;
    for (const auto& p : planes_) {
      const double lin = p[0] * (p[0] >= 0.0 ? c.m1_lo : c.m1_hi) + p[1] * (p[1] >= 0.0 ? c.m2_lo : c.m2_hi);
      if (p[2] > 0.0) {
        m3_hi = std::min(m3_hi, (p[3] - lin) / p[2]);
      } else if (lin > p[3]) {
        return false;
      }
      if (m3_hi < m3_lo) break;
    }
    return m3_lo <= m3_hi + 1e-12 * (1.0 + m3_max_);
  }

 private:
  double threshold_;
  double m3_max_;
  std::vector<std::array<double, 4>> planes_;
};

}  // namespace detail

// Maximizes m1 over the box [0, m(Y)] intersected with every half-space and
// the tail constraint. A grid_steps x grid_steps grid over (m1, m2) is
// searched best-first from the top m1 row; passing cells are refined
// refine_rounds times, each a 10 x 10 subdivision. The reported m1 is the
// upper edge of the best finest-level cell, an upper bound on the relaxed
// optimum, and the count bound is floor(N * m1) since sum(theta) is integral.
inline SpillResult solve_relaxation(std::span<const std::uint8_t> x, std::span<const std::int64_t> y,
                                    const SmoothingKernel& k, const SpillConfig& config) {
  validate(config);
  const SupportOracle oracle(x, k, y);
  const std::size_t n = oracle.n_units(), l = oracle.treated();
  require(l < n, "spill: no untreated units");
  const auto outcome_total = static_cast<std::int64_t>(oracle.dim());

  SpillResult r;
  r.bound.alpha = config.alpha;
  r.bound.direction = Direction::kUpperOnTheta;
  r.bound.method = config.tail == TailBound::kChebyshev ? Method::kSpillChebyshev : Method::kSpillNormal;
  r.threshold = tail_threshold(config.tail, config.alpha, n, l);
  r.bound.diagnostics["tail_threshold"] = r.threshold;
  if (config.tail == TailBound::kNormal)
    r.bound.diagnostics["normal_fpc_warning"] = static_cast<double>(l) / static_cast<double>(n) > 0.1 ? 1.0 : 0.0;
  if (outcome_total == 0) {
    r.bound.theta_sum_bound = 0.0;
    r.bound.attributable_lower = 0.0;
    r.bound.diagnostics["n_halfspaces"] = 0.0;
    r.bound.diagnostics["grid_resolution_achieved"] = 0.0;
    return r;
  }

  r.box = oracle.moments_at_outcomes();
  auto dirs = lambda_directions(config.n_lambda);
  if (config.scale_directions) dirs = scaled_directions(dirs, r.box);
  r.halfspaces.resize(dirs.size());
  parallel_for(dirs.size(), config.threads, [&](std::size_t i) { r.halfspaces[i] = oracle.support(dirs[i]); });

  const detail::CellTest passes(r.halfspaces, r.threshold, r.box.m3);
  const std::size_t g = config.grid_steps;
  auto edge = [](double hi, std::size_t steps, std::size_t i) {
    return i >= steps ? hi : hi * static_cast<double>(i) / static_cast<double>(steps);
  };
  auto row_cells = [&](std::size_t row) {
    std::vector<detail::Cell> out;
    const double lo1 = edge(r.box.m1, g, row), hi1 = edge(r.box.m1, g, row + 1);
    for (std::size_t c = 0; c < g; ++c) {
      detail::Cell cell{lo1, hi1, edge(r.box.m2, g, c), edge(r.box.m2, g, c + 1), 0};
      if (passes(cell)) out.push_back(cell);
    }
    return out;
  };
  auto worse = [](const detail::Cell& a, const detail::Cell& b) {
    if (a.m1_hi != b.m1_hi) return a.m1_hi < b.m1_hi;
    return a.depth < b.depth;
  };
  std::priority_queue<detail::Cell, std::vector<detail::Cell>, decltype(worse)> open(worse);
  std::size_t next_row = g;  // coarse rows are opened lazily from the top
  constexpr std::size_t kSplit = 10;
  bool found = false;
  double m1_star = r.box.m1;
  std::size_t cells_tested = 0;
  while (true) {
    const double row_top = next_row > 0 ? edge(r.box.m1, g, next_row) : -1.0;
    if (open.empty() || open.top().m1_hi < row_top) {
      if (next_row == 0) break;
      --next_row;
      for (const auto& c : row_cells(next_row)) open.push(c);
      cells_tested += g;
      continue;
    }
    const detail::Cell cell = open.top();
    open.pop();
    if (cell.depth == config.refine_rounds) {
      found = true;
      m1_star = cell.m1_hi;
      break;
    }
    const double w1 = (cell.m1_hi - cell.m1_lo) / kSplit, w2 = (cell.m2_hi - cell.m2_lo) / kSplit;
    for (std::size_t a = 0; a < kSplit; ++a) {
      for (std::size_t b = 0; b < kSplit; ++b) {
        detail::Cell child{cell.m1_lo + w1 * static_cast<double>(a),
                           a + 1 == kSplit ? cell.m1_hi : cell.m1_lo + w1 * static_cast<double>(a + 1),
                           cell.m2_lo + w2 * static_cast<double>(b),
                           b + 1 == kSplit ? cell.m2_hi : cell.m2_lo + w2 * static_cast<double>(b + 1),
                           cell.depth + 1};
        if (passes(child)) open.push(child);
      }
    }
    cells_tested += kSplit * kSplit;
  }

  r.grid_resolution = r.box.m1 / (static_cast<double>(g) * std::pow(10.0, static_cast<double>(config.refine_rounds)));
  std::int64_t theta_bound = outcome_total;  // vacuous fallback
  if (found) {
    r.m1_star = m1_star;
    const double scaled = static_cast<double>(n) * m1_star;
    theta_bound = std::min(outcome_total, static_cast<std::int64_t>(std::floor(scaled + 1e-9)));
  } else {
    r.m1_star = r.box.m1;
  }
  r.bound.theta_sum_bound = static_cast<double>(theta_bound);
  r.bound.attributable_lower = static_cast<double>(outcome_total - theta_bound);
  r.bound.diagnostics["n_halfspaces"] = static_cast<double>(r.halfspaces.size());
  r.bound.diagnostics["grid_resolution_achieved"] = r.grid_resolution;
  r.bound.diagnostics["m1_star"] = r.m1_star;
  r.bound.diagnostics["cells_tested"] = static_cast<double>(cells_tested);
  r.bound.diagnostics["grid_feasible"] = found ? 1.0 : 0.0;
  return r;
}

inline SpillResult solve_relaxation(const ExperimentData& data, const SmoothingKernel& k,
                                    const SpillConfig& config) {
  validate(data, /*require_binary=*/true);
  require(k.n_units() == data.n_units(), "kernel and experiment differ in size");
  return solve_relaxation(data.treatment, data.outcomes, k, config);
}

}  // namespace interfere
