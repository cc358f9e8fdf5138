#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <queue>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "interfere_ci/error.hpp"

namespace interfere {

// max_x x^T M x + b^T x + c over x in {0,1}^d, M >= 0 entrywise, row-major.
struct QPBProblem {
  std::size_t dim = 0;
  std::vector<double> quad;
  std::vector<double> linear;
  double offset = 0.0;

  double coupling(std::size_t i, std::size_t j) const { return quad[i * dim + j]; }
};

inline void validate(const QPBProblem& p) {
  require(p.quad.size() == p.dim * p.dim, "QPB quad must be d x d");
  require(p.linear.size() == p.dim, "QPB linear term must have length d");
  require(std::isfinite(p.offset), "QPB offset must be finite");
  for (double m : p.quad) require(std::isfinite(m) && m >= 0.0, "QPB couplings must be finite and nonnegative");
  for (double b : p.linear) require(std::isfinite(b), "QPB linear terms must be finite");
}

inline double evaluate(const QPBProblem& p, std::span<const std::uint8_t> x) {
  double v = p.offset;
  for (std::size_t i = 0; i < p.dim; ++i) {
    if (!x[i]) continue;
    v += p.linear[i];
    for (std::size_t j = 0; j < p.dim; ++j)
      if (x[j]) v += p.quad[i * p.dim + j];
  }
  return v;
}

// Symmetric M with zero diagonal: x_i^2 = x_i folds the diagonal into b and
// (M + M^T)/2 leaves x^T M x unchanged.
inline QPBProblem normalized(QPBProblem p) {
  validate(p);
  const std::size_t d = p.dim;
  for (std::size_t i = 0; i < d; ++i) {
    p.linear[i] += p.quad[i * d + i];
    p.quad[i * d + i] = 0.0;
    for (std::size_t j = i + 1; j < d; ++j) {
      const double m = 0.5 * (p.quad[i * d + j] + p.quad[j * d + i]);
      p.quad[i * d + j] = m;
      p.quad[j * d + i] = m;
    }
  }
  return p;
}

struct CutArc {
  std::size_t from = 0;
  std::size_t to = 0;
  double capacity = 0.0;
};

// s-t network on d + 2 nodes; the source is node d, the sink node d + 1.
struct CutGraph {
  std::size_t n_nodes = 2;
  std::size_t source = 0;
  std::size_t sink = 1;
  std::vector<CutArc> arcs;  // nonnegative capacities, no self-arcs

  // Total capacity of arcs leaving the side marked 1; side[source] must be 1
  // and side[sink] 0.
  double cut_value(std::span<const std::uint8_t> side) const {
    double v = 0.0;
    for (const auto& a : arcs)
      if (side[a.from] && !side[a.to]) v += a.capacity;
    return v;
  }
};

struct CutTransform {
  CutGraph graph;
  double constant = 0.0;  // max objective = constant - mincut
  double dropped = 0.0;   // total coupling removed below the drop threshold
};

inline constexpr double kDropThreshold = 1e-12;

// x^T M x + b^T x = -sum_{i!=j} M_ij x_i (1 - x_j) + sum_i gamma_i x_i with
// gamma_i = b_i + sum_j M_ij. A nonnegative gamma_i becomes an arc s -> i
// (paid when x_i = 0, after adding gamma_i to the constant); a negative one
// an arc i -> t (paid when x_i = 1). Couplings below drop_threshold are
// removed from the problem; the optimum falls by at most their sum.
inline CutTransform qpb_to_mincut(const QPBProblem& problem, double drop_threshold = kDropThreshold) {
  const QPBProblem p = normalized(problem);
  const std::size_t d = p.dim;
  CutTransform out;
  out.graph.n_nodes = d + 2;
  out.graph.source = d;
  out.graph.sink = d + 1;
  out.constant = p.offset;
  std::vector<double> gamma(p.linear);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      if (i == j) continue;
      const double m = p.quad[i * d + j];
      if (m == 0.0) continue;
      if (m < drop_threshold) {
        out.dropped += m;
        continue;
      }
      gamma[i] += m;
      out.graph.arcs.push_back({i, j, m});
    }
  }
  for (std::size_t i = 0; i < d; ++i) {
    if (gamma[i] >= 0.0) {
      out.constant += gamma[i];
      if (gamma[i] > 0.0) out.graph.arcs.push_back({out.graph.source, i, gamma[i]});
    } else {
      out.graph.arcs.push_back({i, out.graph.sink, -gamma[i]});
    }
  }
  return out;
}

struct MinCutResult {
  double value = 0.0;       // capacity of the returned cut
  double flow_value = 0.0;  // maximum flow; equals value by duality
  std::vector<std::uint8_t> side;  // 1 = source side
};

namespace detail {

// Dinic's blocking-flow max-flow (shortest augmenting paths in phases).
class Dinic {
 public:
  static constexpr double kEps = 1e-12;

  explicit Dinic(std::size_t n) : head_(n, npos), level_(n), iter_(n) {}

  void reserve(std::size_t pairs) { edges_.reserve(2 * pairs); }

  // Adds the pair u -> v (cap) and v -> u (reverse_cap) as one residual pair.
  void add_edge(std::size_t u, std::size_t v, double cap, double reverse_cap) {
    edges_.push_back({static_cast<std::uint32_t>(v), head_[u], cap});
    head_[u] = static_cast<std::uint32_t>(edges_.size() - 1);
    edges_.push_back({static_cast<std::uint32_t>(u), head_[v], reverse_cap});
    head_[v] = static_cast<std::uint32_t>(edges_.size() - 1);
  }

  double max_flow(std::size_t s, std::size_t t) {
    double flow = 0.0;
    while (build_levels(s, t)) {
      for (std::size_t u = 0; u < head_.size(); ++u) iter_[u] = head_[u];
      while (true) {
        const double pushed = augment(s, t, std::numeric_limits<double>::infinity());
        if (pushed <= kEps) break;
        flow += pushed;
      }
    }
    return flow;
  }

  std::vector<std::uint8_t> source_side(std::size_t s) const {
    std::vector<std::uint8_t> seen(head_.size(), 0);
    std::vector<std::size_t> stack{s};
    seen[s] = 1;
    while (!stack.empty()) {
      const std::size_t u = stack.back();
      stack.pop_back();
      for (std::uint32_t e = head_[u]; e != npos; e = edges_[e].next) {
        if (edges_[e].residual > kEps && !seen[edges_[e].to]) {
          seen[edges_[e].to] = 1;
          stack.push_back(edges_[e].to);
        }
      }
    }
    return seen;
  }

 private:
  static constexpr std::uint32_t npos = std::numeric_limits<std::uint32_t>::max();
  struct ResidualEdge {
    std::uint32_t to;
    std::uint32_t next;
    double residual;
  };

  bool build_levels(std::size_t s, std::size_t t) {
    std::fill(level_.begin(), level_.end(), -1);
    std::queue<std::size_t> q;
    level_[s] = 0;
    q.push(s);
    while (!q.empty()) {
      const std::size_t u = q.front();
      q.pop();
      for (std::uint32_t e = head_[u]; e != npos; e = edges_[e].next) {
        const auto& edge = edges_[e];
        if (edge.residual > kEps && level_[edge.to] < 0) {
          level_[edge.to] = level_[u] + 1;
          q.push(edge.to);
        }
      }
    }
    return level_[t] >= 0;
  }

  double augment(std::size_t u, std::size_t t, double limit) {
    if (u == t) return limit;
    for (std::uint32_t& e = iter_[u]; e != npos; e = edges_[e].next) {
      auto& edge = edges_[e];
      if (edge.residual <= kEps || level_[edge.to] != level_[u] + 1) continue;
      const double pushed = augment(edge.to, t, std::min(limit, edge.residual));
      if (pushed > kEps) {
        edge.residual -= pushed;
        edges_[e ^ 1].residual += pushed;
        return pushed;
      }
    }
    return 0.0;
  }

  std::vector<std::uint32_t> head_;
  std::vector<ResidualEdge> edges_;
  std::vector<int> level_;
  std::vector<std::uint32_t> iter_;
};

}  // namespace detail

inline MinCutResult min_cut(const CutGraph& g) {
  require(g.source < g.n_nodes && g.sink < g.n_nodes && g.source != g.sink, "invalid source/sink");
  require(g.n_nodes < std::numeric_limits<std::uint32_t>::max() / 2, "graph too large");
  for (const auto& a : g.arcs) {
    require(a.from < g.n_nodes && a.to < g.n_nodes && a.from != a.to, "invalid arc endpoints");
    require(std::isfinite(a.capacity) && a.capacity >= 0.0, "arc capacities must be nonnegative");
  }
  // Antiparallel arcs share one residual pair.
  std::vector<std::size_t> order(g.arcs.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
  auto key = [&](std::size_t k) {
    const auto& a = g.arcs[k];
    return std::pair{std::min(a.from, a.to), std::max(a.from, a.to)};
  };
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return key(x) < key(y); });
  detail::Dinic flow(g.n_nodes);
  flow.reserve(g.arcs.size());
  for (std::size_t k = 0; k < order.size();) {
    const auto [lo, hi] = key(order[k]);
    double forward = 0.0, backward = 0.0;  // lo -> hi, hi -> lo
    for (; k < order.size() && key(order[k]) == std::pair{lo, hi}; ++k) {
      const auto& a = g.arcs[order[k]];
      (a.from == lo ? forward : backward) += a.capacity;
    }
    flow.add_edge(lo, hi, forward, backward);
  }
  MinCutResult r;
  r.flow_value = flow.max_flow(g.source, g.sink);
  r.side = flow.source_side(g.source);
  r.value = g.cut_value(r.side);
  return r;
}

struct QPBSolution {
  double value = 0.0;        // objective at argmax
  std::vector<std::uint8_t> argmax;
  double flow_value = 0.0;
  double cut_value = 0.0;
  double constant = 0.0;
  double dropped = 0.0;

  // Certified upper bound on the optimum: weak duality (flow <= any cut)
  // plus the couplings removed before the cut was built.
  double upper_bound() const { return constant - flow_value + dropped; }
};

inline QPBSolution qpb_maximize(const QPBProblem& p, double drop_threshold = kDropThreshold) {
  validate(p);
  QPBSolution s;
  if (p.dim == 0) {
    s.value = p.offset;
    s.constant = p.offset;
    return s;
  }
  const CutTransform t = qpb_to_mincut(p, drop_threshold);
  const MinCutResult cut = min_cut(t.graph);
  s.argmax.assign(cut.side.begin(), cut.side.begin() + static_cast<std::ptrdiff_t>(p.dim));
  s.value = evaluate(p, s.argmax);
  s.flow_value = cut.flow_value;
  s.cut_value = cut.value;
  s.constant = t.constant;
  s.dropped = t.dropped;
  return s;
}

}  // namespace interfere
