#include <gtest/gtest.h>

#include <chrono>
#include <random>

#include "interfere_ci/mincut_qpb.hpp"
#include "oracles.hpp"

using namespace interfere;

namespace {

QPBProblem random_problem(std::mt19937_64& gen, std::size_t d, bool integral) {
  QPBProblem p;
  p.dim = d;
  p.quad.assign(d * d, 0.0);
  p.linear.assign(d, 0.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double density = u(gen);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j)
      if (u(gen) < density) p.quad[i * d + j] = integral ? static_cast<double>(gen() % 5) : 2.0 * u(gen);
  for (auto& b : p.linear) b = integral ? static_cast<double>(gen() % 21) - 14.0 : 6.0 * u(gen) - 4.5;
  p.offset = integral ? static_cast<double>(gen() % 7) - 3.0 : u(gen) - 0.5;
  return p;
}

// Brute-force min cut over all partitions of the non-terminal nodes.
double brute_min_cut(const CutGraph& g) {
  const std::size_t inner = g.n_nodes - 2;
  double best = std::numeric_limits<double>::infinity();
  std::vector<std::uint8_t> side(g.n_nodes, 0);
  for (std::uint32_t mask = 0; mask < (1u << inner); ++mask) {
    for (std::size_t i = 0; i < inner; ++i) side[i] = (mask >> i) & 1;
    side[g.source] = 1;
    side[g.sink] = 0;
    best = std::min(best, g.cut_value(side));
  }
  return best;
}

}  // namespace

TEST(MinCut, SingleArc) {
  CutGraph g;
  g.arcs = {{0, 1, 5.0}};
  const auto r = min_cut(g);
  EXPECT_DOUBLE_EQ(r.value, 5.0);
  EXPECT_DOUBLE_EQ(r.flow_value, 5.0);
}

TEST(MinCut, TwoDisjointPaths) {
  CutGraph g;
  g.n_nodes = 4;
  g.source = 2;
  g.sink = 3;
  g.arcs = {{2, 0, 1.0}, {0, 3, 1.0}, {2, 1, 1.0}, {1, 3, 1.0}};
  const auto r = min_cut(g);
  EXPECT_DOUBLE_EQ(r.value, 2.0);
  EXPECT_EQ(r.side[2], 1);
  EXPECT_EQ(r.side[3], 0);
}

TEST(MinCut, MatchesBruteForce) {
  std::mt19937_64 gen(21);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t inner = gen() % 11;
    CutGraph g;
    g.n_nodes = inner + 2;
    g.source = inner;
    g.sink = inner + 1;
    for (std::size_t a = 0; a < g.n_nodes; ++a)
      for (std::size_t b = 0; b < g.n_nodes; ++b)
        if (a != b && b != g.source && a != g.sink && u(gen) < 0.4) g.arcs.push_back({a, b, 3.0 * u(gen)});
    const auto r = min_cut(g);
    ASSERT_NEAR(r.value, brute_min_cut(g), 1e-9) << trial;
    ASSERT_NEAR(r.value, r.flow_value, 1e-9);
    ASSERT_NEAR(g.cut_value(r.side), r.value, 1e-9);
  }
}

TEST(QpbToMincut, SeparableNegative) {
  QPBProblem p{2, {0, 0, 0, 0}, {-1, -2}, 0.5};
  const auto t = qpb_to_mincut(p);
  for (const auto& a : t.graph.arcs) EXPECT_EQ(a.to, t.graph.sink);
  EXPECT_DOUBLE_EQ(min_cut(t.graph).value, 0.0);
  const auto s = qpb_maximize(p);
  EXPECT_DOUBLE_EQ(s.value, 0.5);
  EXPECT_EQ(s.argmax, (std::vector<std::uint8_t>{0, 0}));
}

TEST(QpbToMincut, SeparableMixed) {
  QPBProblem p{2, {0, 0, 0, 0}, {3, -1}, 1.0};
  const auto t = qpb_to_mincut(p);
  EXPECT_DOUBLE_EQ(t.constant, 4.0);
  EXPECT_DOUBLE_EQ(min_cut(t.graph).value, 0.0);
  const auto s = qpb_maximize(p);
  EXPECT_DOUBLE_EQ(s.value, 4.0);
  EXPECT_EQ(s.argmax, (std::vector<std::uint8_t>{1, 0}));
}

TEST(QpbToMincut, RejectsNegativeCoupling) {
  QPBProblem p{2, {0, -1, 0, 0}, {0, 0}, 0.0};
  EXPECT_THROW(qpb_to_mincut(p), ValidationError);
  EXPECT_THROW(qpb_maximize(p), ValidationError);
}

TEST(QpbMaximize, EmptyProblem) {
  QPBProblem p;
  p.offset = 2.5;
  const auto s = qpb_maximize(p);
  EXPECT_EQ(s.value, 2.5);
  EXPECT_TRUE(s.argmax.empty());
}

TEST(QpbMaximize, SingleCoupling) {
  QPBProblem p{2, {0, 1, 1, 0}, {-0.5, -0.5}, 0.25};
  const auto s = qpb_maximize(p);
  EXPECT_DOUBLE_EQ(s.value, 1.25);
  EXPECT_EQ(s.argmax, (std::vector<std::uint8_t>{1, 1}));
}

TEST(QpbMaximize, DiagonalFoldsIntoLinear) {
  QPBProblem p{2, {2, 0, 0, 0}, {-1.5, 0}, 0.0};
  EXPECT_DOUBLE_EQ(qpb_maximize(p).value, 0.5);
}

TEST(QpbMaximize, MatchesBruteForce) {
  std::mt19937_64 gen(22);
  int cases = 0;
  for (int trial = 0; trial < 1200; ++trial) {
    const std::size_t d = 1 + gen() % 15;
    const bool integral = trial % 2 == 0;
    const QPBProblem p = random_problem(gen, d, integral);
    const auto s = qpb_maximize(p);
    const double want = oracle::qpb_max(p.quad, p.linear, p.offset);
    if (integral) ASSERT_EQ(s.value, want) << trial;
    else ASSERT_NEAR(s.value, want, 1e-9) << trial;
    ASSERT_NEAR(s.flow_value, s.cut_value, 1e-9);
    ASSERT_NEAR(s.constant - s.cut_value, s.value, 1e-9);
    ASSERT_NEAR(evaluate(p, s.argmax), s.value, 1e-12);
    ++cases;
  }
  EXPECT_GE(cases, 1000);
}

TEST(QpbMaximize, ScaleEquivariance) {
  std::mt19937_64 gen(23);
  for (int trial = 0; trial < 200; ++trial) {
    QPBProblem p = random_problem(gen, 1 + gen() % 12, false);
    const double base = qpb_maximize(p).value;
    const double t = 0.1 + 9.9 * std::uniform_real_distribution<double>(0.0, 1.0)(gen);
    for (auto& m : p.quad) m *= t;
    for (auto& b : p.linear) b *= t;
    p.offset *= t;
    const auto s = qpb_maximize(p);
    ASSERT_NEAR(s.value, t * base, 1e-9 * (1 + std::abs(t * base)));
  }
}

TEST(QpbMaximize, DroppedCouplingsBoundTheSlack) {
  std::mt19937_64 gen(24);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    QPBProblem p = random_problem(gen, 2 + gen() % 10, false);
    for (auto& m : p.quad)
      if (m > 0 && u(gen) < 0.5) m = 1e-3 * u(gen);
    const double exact = oracle::qpb_max(p.quad, p.linear, p.offset);
    const auto s = qpb_maximize(p, 1e-3);
    ASSERT_LE(s.value, exact + 1e-9);
    ASSERT_GE(s.upper_bound(), exact - 1e-9);
    ASSERT_LE(exact - s.value, s.dropped + 1e-9);
  }
}

TEST(QpbMaximize, DenseLargeInstanceUnderOneMinute) {
  std::mt19937_64 gen(25);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const std::size_t d = 2000;
  QPBProblem p;
  p.dim = d;
  p.quad.resize(d * d);
  p.linear.resize(d);
  for (auto& m : p.quad) m = 0.01 * u(gen);
  for (auto& b : p.linear) b = -20.0 * u(gen);
  const auto start = std::chrono::steady_clock::now();
  const auto s = qpb_maximize(p);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  EXPECT_LT(secs, 60.0);
  EXPECT_NEAR(s.flow_value, s.cut_value, 1e-9 * (1 + s.cut_value));
  std::vector<std::uint8_t> none(d, 0), all(d, 1);
  EXPECT_GE(s.value, evaluate(p, none) - 1e-6);
  EXPECT_GE(s.value, evaluate(p, all) - 1e-6);
}
