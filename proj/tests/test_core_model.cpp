#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "interfere_ci/distance.hpp"
#include "interfere_ci/experiment.hpp"
#include "interfere_ci/kernel.hpp"

using namespace interfere;

TEST(Experiment, AcceptsMinimalDesign) {
  EXPECT_NO_THROW(validate(make_experiment({1, 0}, {0, 1}), true));
}

TEST(Experiment, RejectsAllTreated) {
  try {
    validate(make_experiment({1, 1}, {0, 1}), false);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_STREQ(e.what(), "no untreated units");
  }
}

TEST(Experiment, RejectsNoneTreated) {
  EXPECT_THROW(validate(make_experiment({0, 0}, {0, 1}), false), ValidationError);
}

TEST(Experiment, BinaryCheck) {
  const auto d = make_experiment({1, 0, 0}, {2, 0, 1});
  EXPECT_NO_THROW(validate(d, false));
  EXPECT_THROW(validate(d, true), ValidationError);
  EXPECT_FALSE(d.is_binary());
}

TEST(Experiment, LengthMismatchAndNegative) {
  ExperimentData d = make_experiment({1, 0}, {0, 1});
  d.outcomes.push_back(1);
  EXPECT_THROW(validate(d, false), ValidationError);
  EXPECT_THROW(validate(make_experiment({1, 0}, {-1, 1}), false), ValidationError);
}

TEST(Experiment, Totals) {
  const auto d = make_experiment({1, 0, 1, 0}, {3, 1, 2, 5});
  EXPECT_EQ(d.treated_count(), 2u);
  EXPECT_EQ(d.outcome_total(), 11);
  EXPECT_EQ(d.outcome_total(1), 5);
  EXPECT_EQ(d.outcome_total(0), 6);
  EXPECT_EQ(d.outcomes_of(0), (std::vector<std::int64_t>{1, 5}));
  EXPECT_EQ(d.unit_ids[3], "3");
}

TEST(Distances, EmptyEdgeList) {
  const auto p = distances_from_edges({}, 3);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      EXPECT_EQ(p.distance(i, j), i == j ? 0.0 : kUnreachable);
}

TEST(Distances, PathHops) {
  const auto p = distances_from_edges({{0, 1, {}}, {1, 2, {}}}, 3);
  EXPECT_EQ(p.distance(0, 2), 2.0);
  EXPECT_EQ(p.distance(2, 0), 2.0);
}

TEST(Distances, WeightedTriangle) {
  const auto p = distances_from_edges({{0, 1, 1.0}, {1, 2, 1.0}, {0, 2, 5.0}}, 3);
  EXPECT_EQ(p.distance(0, 2), 2.0);
}

TEST(Distances, SelfLoopsAndDuplicatesTolerated) {
  const auto p = distances_from_edges({{0, 0, 3.0}, {0, 1, 4.0}, {1, 0, 2.0}, {0, 1, 7.0}}, 2);
  EXPECT_EQ(p.distance(0, 1), 2.0);
  EXPECT_EQ(p.distance(0, 0), 0.0);
}

TEST(Distances, NegativeWeightRejected) {
  EXPECT_THROW(distances_from_edges({{0, 1, -1.0}}, 2), ValidationError);
}

TEST(Distances, MatrixValidation) {
  EXPECT_NO_THROW(DistanceProvider::from_matrix({0, 1, 1, 0}, 2));
  EXPECT_THROW(DistanceProvider::from_matrix({0, 1, 2, 0}, 2), ValidationError);
  EXPECT_THROW(DistanceProvider::from_matrix({1, 1, 1, 0}, 2), ValidationError);
  EXPECT_THROW(DistanceProvider::from_matrix({0, -1, -1, 0}, 2), ValidationError);
  const auto inf = DistanceProvider::from_matrix({0, kUnreachable, kUnreachable, 0}, 2);
  EXPECT_EQ(inf.distance(0, 1), kUnreachable);
}

TEST(Distances, SymmetryOnRandomGraphs) {
  std::mt19937_64 gen(11);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 2 + gen() % 10;
    std::vector<Edge> edges;
    for (int e = 0; e < 15; ++e)
      edges.push_back({gen() % n, gen() % n, trial % 2 ? std::optional<double>(1.0 + gen() % 5) : std::nullopt});
    const auto p = distances_from_edges(edges, n);
    for (std::size_t i = 0; i < n; ++i) {
      EXPECT_EQ(p.distance(i, i), 0.0);
      for (std::size_t j = 0; j < n; ++j) {
        EXPECT_EQ(p.distance(i, j), p.distance(j, i));
        EXPECT_GE(p.distance(i, j), 0.0);
      }
    }
  }
}

TEST(Distances, GridCoordinatesRowMajor) {
  const auto c = grid_coordinates(3);
  ASSERT_EQ(c.size(), 9u);
  EXPECT_EQ(c[5][0], 2.0);  // column
  EXPECT_EQ(c[5][1], 1.0);  // row
}

TEST(Kernel, ZeroCutoffIsIdentity) {
  const auto p = DistanceProvider::from_coordinates(grid_coordinates(4));
  const auto k = build_kernel(p, 2.5, 0.0);
  const auto dense = k.dense();
  for (std::size_t i = 0; i < 16; ++i)
    for (std::size_t j = 0; j < 16; ++j) EXPECT_EQ(dense[i * 16 + j], i == j ? 1.0 : 0.0);
}

TEST(Kernel, TwoUnitColumn) {
  const auto p = DistanceProvider::from_matrix({0, 1, 1, 0}, 2);
  const auto k = build_kernel(p, 1.0, 2.0);
  const auto d = k.dense();
  EXPECT_NEAR(d[0 * 2 + 0], 0.7310585786300049, 1e-15);
  EXPECT_NEAR(d[1 * 2 + 0], 0.2689414213699951, 1e-15);
  EXPECT_NEAR(d[0 * 2 + 1], 0.2689414213699951, 1e-15);
}

TEST(Kernel, PathColumnsSumToOne) {
  const auto p = distances_from_edges({{0, 1, {}}, {1, 2, {}}}, 3);
  const auto k = build_kernel(p, 10.0, std::numeric_limits<double>::infinity());
  for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(k.column_sum(j), 1.0, 1e-12);
}

TEST(Kernel, StochasticLocalAndBounded) {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<std::array<double, 2>> pts(30);
    for (auto& q : pts) q = {u(gen), u(gen)};
    const auto p = DistanceProvider::from_coordinates(pts);
    const double dmax = 0.5 + trial * 0.4;
    const auto k = build_kernel(p, 1.0 + trial * 0.3, dmax);
    for (std::size_t j = 0; j < 30; ++j) {
      EXPECT_NEAR(k.column_sum(j), 1.0, 1e-12);
      for (const auto& e : k.column(j)) {
        EXPECT_LE(p.distance(e.row, j), dmax);
        EXPECT_GT(e.value, 0.0);
        EXPECT_LE(e.value, 1.0);
      }
    }
  }
}

TEST(Kernel, MomentIdentity) {
  std::mt19937_64 gen(5);
  const auto p = DistanceProvider::from_coordinates(grid_coordinates(6));
  const auto k = build_kernel(p, 1.5, 3.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<int> theta(36);
    double total = 0;
    for (auto& t : theta) total += t = static_cast<int>(gen() % 2);
    std::vector<double> smoothed(36, 0.0);
    for (std::size_t j = 0; j < 36; ++j)
      if (theta[j])
        for (const auto& e : k.column(j)) smoothed[e.row] += e.value;
    double mean = 0;
    for (double v : smoothed) mean += v / 36.0;
    EXPECT_NEAR(mean, total / 36.0, 1e-10);
  }
}

TEST(Kernel, BadParameters) {
  const auto p = DistanceProvider::from_coordinates(grid_coordinates(2));
  EXPECT_THROW(build_kernel(p, 0.0, 1.0), ValidationError);
  EXPECT_THROW(build_kernel(p, -1.0, 1.0), ValidationError);
  EXPECT_THROW(build_kernel(p, 1.0, -0.5), ValidationError);
}

TEST(Kernel, PartialColumns) {
  const auto p = DistanceProvider::from_coordinates(grid_coordinates(3));
  const std::vector<std::size_t> which{4};
  const auto k = build_kernel_columns(p, 1.0, 1.0, which);
  EXPECT_TRUE(k.has_column(4));
  EXPECT_FALSE(k.has_column(0));
  EXPECT_EQ(k.column(4).size(), 5u);
  EXPECT_THROW(k.column(0), ValidationError);
}
