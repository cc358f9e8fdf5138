#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <queue>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "interfere_ci/error.hpp"

namespace interfere {

inline constexpr double kUnreachable = std::numeric_limits<double>::infinity();

struct Edge {
  std::size_t src = 0;
  std::size_t dst = 0;
  std::optional<double> weight;  // unweighted edges count one hop
};

struct Neighbor {
  std::size_t unit = 0;
  double distance = 0.0;
};

// Pairwise unit distances d_ij: Euclidean from coordinates, shortest paths over
// an undirected edge list, or an explicit symmetric matrix. Unreachable pairs
// are +infinity. Immutable after construction.
class DistanceProvider {
 public:
  enum class Mode { kEuclidean, kEdges, kMatrix };

  static DistanceProvider from_coordinates(std::vector<std::array<double, 2>> coords) {
    for (const auto& c : coords)
      require(std::isfinite(c[0]) && std::isfinite(c[1]), "coordinates must be finite");
    DistanceProvider p;
    p.n_ = coords.size();
    p.payload_ = Coordinates{std::move(coords)};
    return p;
  }

  static DistanceProvider from_matrix(std::vector<double> dense, std::size_t n) {
    require(dense.size() == n * n, "distance matrix must be N x N");
    for (std::size_t i = 0; i < n; ++i) {
      require(dense[i * n + i] == 0.0, "distance matrix diagonal must be zero");
      for (std::size_t j = 0; j < n; ++j) {
        const double d = dense[i * n + j];
        require(!std::isnan(d) && d >= 0.0, "distance matrix entries must be nonnegative");
        require(d == dense[j * n + i], "distance matrix must be symmetric");
      }
    }
    DistanceProvider p;
    p.n_ = n;
    p.payload_ = Dense{std::move(dense)};
    return p;
  }

  static DistanceProvider from_edges(const std::vector<Edge>& edges, std::size_t n);

  Mode mode() const {
    if (std::holds_alternative<Coordinates>(payload_)) return Mode::kEuclidean;
    if (std::holds_alternative<Graph>(payload_)) return Mode::kEdges;
    return Mode::kMatrix;
  }

  std::size_t size() const { return n_; }

  double distance(std::size_t i, std::size_t j) const {
    if (i == j) return 0.0;
    if (const auto* c = std::get_if<Coordinates>(&payload_)) {
      const double dx = c->points[i][0] - c->points[j][0];
      const double dy = c->points[i][1] - c->points[j][1];
      return std::hypot(dx, dy);
    }
    if (const auto* d = std::get_if<Dense>(&payload_)) return d->values[i * n_ + j];
    const auto& g = std::get<Graph>(payload_);
    if (!g.all_pairs.empty()) return g.all_pairs[i * n_ + j];
    return shortest_paths(g, i, kUnreachable)[j];
  }

  // Units within max_distance of unit j (inclusive), j itself included.
  std::vector<Neighbor> within(std::size_t j, double max_distance) const {
    std::vector<Neighbor> out;
    if (const auto* g = std::get_if<Graph>(&payload_); g && g->all_pairs.empty()) {
      const auto row = shortest_paths(*g, j, max_distance);
      for (std::size_t i = 0; i < n_; ++i)
        if (row[i] <= max_distance) out.push_back({i, row[i]});
      return out;
    }
    for (std::size_t i = 0; i < n_; ++i) {
      const double d = distance(i, j);
      if (d <= max_distance) out.push_back({i, d});
    }
    return out;
  }

  // Above this size edge-list distances are searched per query instead of
  // being tabulated.
  static constexpr std::size_t kAllPairsLimit = 4096;

 private:
  struct Coordinates {
    std::vector<std::array<double, 2>> points;
  };
  struct Dense {
    std::vector<double> values;
  };
  struct Arc {
    std::size_t to;
    double weight;
  };
  struct Graph {
    std::vector<std::vector<Arc>> adjacency;
    bool weighted = false;
    std::vector<double> all_pairs;  // empty when n > kAllPairsLimit
  };

  // Single-source distances, searched no further than limit (entries beyond
  // limit stay +infinity). BFS for hop counts, Dijkstra for weights.
  static std::vector<double> shortest_paths(const Graph& g, std::size_t source, double limit) {
    const std::size_t n = g.adjacency.size();
    std::vector<double> dist(n, kUnreachable);
    dist[source] = 0.0;
    if (!g.weighted) {
      std::queue<std::size_t> frontier;
      frontier.push(source);
      while (!frontier.empty()) {
        const std::size_t u = frontier.front();
        frontier.pop();
        if (dist[u] + 1.0 > limit) continue;
        for (const Arc& a : g.adjacency[u]) {
          if (dist[a.to] == kUnreachable) {
            dist[a.to] = dist[u] + 1.0;
            frontier.push(a.to);
          }
        }
      }
      return dist;
    }
    using Item = std::pair<double, std::size_t>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
    heap.push({0.0, source});
    while (!heap.empty()) {
      const auto [d, u] = heap.top();
      heap.pop();
      if (d > dist[u]) continue;
      for (const Arc& a : g.adjacency[u]) {
        const double nd = d + a.weight;
        if (nd < dist[a.to] && nd <= limit) {
          dist[a.to] = nd;
          heap.push({nd, a.to});
        }
      }
    }
    return dist;
  }

  std::size_t n_ = 0;
  std::variant<Coordinates, Graph, Dense> payload_;
};

inline DistanceProvider DistanceProvider::from_edges(const std::vector<Edge>& edges, std::size_t n) {
  Graph g;
  g.adjacency.resize(n);
  for (const Edge& e : edges) {
    require(e.src < n && e.dst < n, "edge refers to unknown unit index");
    if (e.weight) {
      require(std::isfinite(*e.weight) && *e.weight >= 0.0, "edge weights must be nonnegative");
      g.weighted = true;
    }
  }
  for (const Edge& e : edges) {
    if (e.src == e.dst) continue;
    const double w = e.weight.value_or(1.0);
    // Parallel edges collapse to the lightest one.
    auto upsert = [&](std::size_t from, std::size_t to) {
      for (Arc& a : g.adjacency[from]) {
        if (a.to == to) {
          a.weight = std::min(a.weight, w);
          return;
        }
      }
      g.adjacency[from].push_back({to, w});
    };
    upsert(e.src, e.dst);
    upsert(e.dst, e.src);
  }
  if (n <= kAllPairsLimit) {
    g.all_pairs.assign(n * n, kUnreachable);
    for (std::size_t s = 0; s < n; ++s) {
      const auto row = shortest_paths(g, s, kUnreachable);
      std::copy(row.begin(), row.end(), g.all_pairs.begin() + static_cast<std::ptrdiff_t>(s * n));
    }
  }
  DistanceProvider p;
  p.n_ = n;
  p.payload_ = std::move(g);
  return p;
}

inline DistanceProvider distances_from_edges(const std::vector<Edge>& edges, std::size_t n) {
  return DistanceProvider::from_edges(edges, n);
}

// Coordinates of a side x side lattice with unit spacing, row-major.
inline std::vector<std::array<double, 2>> grid_coordinates(std::size_t side) {
  std::vector<std::array<double, 2>> coords;
  coords.reserve(side * side);
  for (std::size_t r = 0; r < side; ++r)
    for (std::size_t c = 0; c < side; ++c)
      coords.push_back({static_cast<double>(c), static_cast<double>(r)});
  return coords;
}

}  // namespace interfere
