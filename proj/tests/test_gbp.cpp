#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "renn/classic.hpp"
#include "renn/exact.hpp"
#include "renn/gbp.hpp"
#include "renn/metrics.hpp"
#include "test_util.hpp"

using namespace renn;
using renn::testing::max_abs_diff;
using renn::testing::random_topology;

namespace {

int id_of(const RegionGraph& rg, const Scope& vars) {
  for (const auto& r : rg.regions())
    if (r.vars == vars) return r.id;
  return -1;
}

std::set<std::pair<Scope, Scope>> named(const RegionGraph& rg, const GbpMessages& s, const std::vector<std::size_t>& es) {
  std::set<std::pair<Scope, Scope>> out;
  for (std::size_t f : es) out.insert({rg.region(s.edges()[f].first).vars, rg.region(s.edges()[f].second).vars});
  return out;
}

}  // namespace

TEST(MessageSets, TwoLevelFigureIsEmpty) {
  const auto fg = to_factor_graph(random_ising(Topology::grid(2, 3), 1.0, 0));
  const auto rg = build_region_graph(fg, Topology::grid(2, 3), false);
  GbpMessages s(rg);
  ASSERT_EQ(s.edges().size(), 2u);
  for (std::size_t e = 0; e < 2; ++e) {
    EXPECT_TRUE(s.N(e).empty());
    EXPECT_TRUE(s.H(e).empty());
  }
}

TEST(MessageSets, ThreeLevelFigureByHand) {
  const auto fg = to_factor_graph(random_ising(Topology::grid(2, 3), 1.0, 0));
  const auto rg = build_region_graph(fg, Topology::grid(2, 3), true);
  GbpMessages s(rg);
  const Scope left{0, 1, 3, 4}, right{1, 2, 4, 5}, outer{0, 1, 2, 3, 4, 5};
  const int e = s.edge_index(id_of(rg, left), id_of(rg, {1, 4}));
  ASSERT_GE(e, 0);
  // the perimeter feeds the other edges of the left face
  EXPECT_EQ(named(rg, s, s.N(std::size_t(e))),
            (std::set<std::pair<Scope, Scope>>{{outer, {0, 1}}, {outer, {0, 3}}, {outer, {3, 4}}}));
  // edges from inside the left face into the singletons of {1, 4}
  EXPECT_EQ(named(rg, s, s.H(std::size_t(e))), (std::set<std::pair<Scope, Scope>>{{{0, 1}, {1}}, {{3, 4}, {4}}}));

  // edge {0,1} -> {0}: N covers messages into {0,1} and into {1}
  const int a0 = s.edge_index(id_of(rg, {0, 1}), id_of(rg, {0}));
  ASSERT_GE(a0, 0);
  EXPECT_EQ(named(rg, s, s.N(std::size_t(a0))),
            (std::set<std::pair<Scope, Scope>>{{outer, {0, 1}}, {left, {0, 1}}, {{1, 2}, {1}}, {{1, 4}, {1}}}));
  EXPECT_TRUE(s.H(std::size_t(a0)).empty());
}

TEST(MessageSets, SelfEdgeNeverInH) {
  const auto fg = to_factor_graph(random_ising(Topology::grid(3, 3), 1.0, 0));
  const auto rg = build_region_graph(fg, Topology::grid(3, 3), true);
  GbpMessages s(rg);
  for (std::size_t e = 0; e < s.edges().size(); ++e)
    for (std::size_t f : s.H(e)) EXPECT_NE(f, e);
}

TEST(Gbp, SingleRootIsExact) {
  const auto fg = to_factor_graph(random_ising(Topology::grid(2, 3), 1.0, 4));
  Scope all{0, 1, 2, 3, 4, 5};
  const auto rg = cluster_variation(fg, {covering_region(fg, all)});
  GbpMessages s(rg);
  EXPECT_TRUE(s.edges().empty());
  const auto ex = exact_inference(fg, {all});
  const auto r = gbp_run(rg, fg);
  EXPECT_TRUE(r.converged);
  for (std::size_t k = 0; k < ex.extra[0].table.size(); ++k)
    EXPECT_NEAR(r.region_beliefs[0].table[k], ex.extra[0].table[k], 1e-12);
  EXPECT_NEAR(r.free_energy, -ex.log_Z, 1e-8);
  EXPECT_LT(max_abs_diff(r.unary, ex.unary), 1e-12);
}

TEST(Gbp, BetheGraphMatchesBPOnTrees) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto fg = to_factor_graph(random_ising(random_topology(3 + int(seed % 10), 0, seed), 1.0, seed));
    const auto rg = bethe_region_graph(fg);
    const auto g = gbp_run(rg, fg, 2000, 1e-10);
    const auto b = loopy_bp(fg);
    EXPECT_TRUE(g.converged);
    EXPECT_LT(max_abs_diff(g.unary, b.unary), 1e-5) << "seed " << seed;
    EXPECT_NEAR(g.free_energy, b.free_energy, 1e-5);
  }
}

TEST(Gbp, BetheGraphMatchesBPOnLoopyGrid) {
  const auto fg = to_factor_graph(random_ising(Topology::grid(3, 3), 0.5, 1));
  const auto g = gbp_run(bethe_region_graph(fg), fg, 5000, 1e-12);
  const auto b = loopy_bp(fg, 5000, 1e-12);
  ASSERT_TRUE(g.converged && b.converged);
  EXPECT_LT(max_abs_diff(g.unary, b.unary), 1e-6);
  EXPECT_NEAR(g.free_energy, b.free_energy, 1e-6);
}

TEST(Gbp, BeatsLoopyBPOnGrid) {
  double l1_gbp = 0.0, l1_bp = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto fg = to_factor_graph(random_ising(Topology::grid(3, 3), 0.1, seed));
    const auto ex = exact_inference(fg);
    const auto rg = build_region_graph(fg, Topology::grid(3, 3), false);
    l1_gbp += compute_metrics(fg, gbp_run(rg, fg), ex).l1_error;
    l1_bp += compute_metrics(fg, loopy_bp(fg), ex).l1_error;
  }
  EXPECT_LT(l1_gbp, l1_bp);
}

TEST(Gbp, ConvergedMeansConsistentAndStationary) {
  for (bool inf : {false, true}) {
    auto m = random_ising(Topology::grid(3, 3), 0.5, 2);
    // with the perimeter root plain GBP only settles under weak coupling
    if (inf)
      for (auto& e : m.edges) e.J *= 0.1;
    const auto fg = to_factor_graph(m);
    const auto rg = build_region_graph(fg, Topology::grid(3, 3), inf);
    Gbp g(rg, fg);
    bool conv = false;
    for (int it = 0; it < 3000 && !conv; ++it) conv = g.sweep(0.2) < 1e-10;
    ASSERT_TRUE(conv);
    auto b = g.beliefs();
    EXPECT_LT(Gbp::consistency_error(rg, b, fg.cards()), 1e-6);
    for (const auto& t : b) EXPECT_NEAR(t.total(), 1.0, 1e-12);
    const double F0 = region_free_energy(rg, b, fg);
    EXPECT_TRUE(std::isfinite(F0));
    g.sweep(0.2);
    EXPECT_NEAR(region_free_energy(rg, g.beliefs(), fg), F0, 1e-8);
  }
}

TEST(Gbp, CompleteGraphRuns) {
  const auto t = Topology::complete(6);
  const auto fg = to_factor_graph(random_ising(t, 0.1, 3));
  const auto rg = build_region_graph(fg, t);
  const auto r = gbp_run(rg, fg);
  EXPECT_TRUE(std::isfinite(r.free_energy));
  for (const auto& u : r.unary) EXPECT_NEAR(u[0] + u[1], 1.0, 1e-12);
  EXPECT_TRUE(r.converged);
  const auto ex = exact_inference(fg);
  EXPECT_LT(compute_metrics(fg, r, ex).l1_error, compute_metrics(fg, loopy_bp(fg), ex).l1_error);
}

TEST(Gbp, RejectsBadDamping) {
  const auto fg = to_factor_graph(random_ising(Topology::grid(2, 3), 1.0, 0));
  const auto rg = build_region_graph(fg, Topology::grid(2, 3), false);
  EXPECT_THROW(gbp_run(rg, fg, 10, 1e-8, 1.0), ContractViolation);
}
