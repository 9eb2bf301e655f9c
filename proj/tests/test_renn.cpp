#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "renn/classic.hpp"
#include "renn/exact.hpp"
#include "renn/metrics.hpp"
#include "renn/renn.hpp"
#include "test_util.hpp"

using namespace renn;
using renn::testing::max_abs_diff;

namespace {

FactorGraph zero_model(const Topology& t) {
  auto m = random_ising(t, 1.0, 1);
  for (auto& e : m.edges) e.J = 0.0;
  for (auto& h : m.h) h = 0.0;
  return to_factor_graph(m);
}

std::vector<double> random_table(std::size_t size, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.1, 1.0);
  std::vector<double> t(size);
  for (auto& v : t) v = u(rng);
  double z = 0.0;
  for (double v : t) z += v;
  for (auto& v : t) v /= z;
  return t;
}

// Central differences over every leaf entry of the tape.
double max_fd_rel_error(ad::Tape& tape, ad::Var loss, double step = 1e-5) {
  const auto grads = tape.forward_backward(loss).grads;
  const auto leaves = tape.leaves();
  double worst = 0.0;
  for (std::size_t l = 0; l < leaves.size(); ++l) {
    for (std::size_t k = 0; k < tape.value(leaves[l]).size(); ++k) {
      const double orig = tape.value(leaves[l])[k];
      tape.mutable_value(leaves[l])[k] = orig + step;
      tape.replay();
      const double fp = tape.value(loss).item();
      tape.mutable_value(leaves[l])[k] = orig - step;
      tape.replay();
      const double fm = tape.value(loss).item();
      tape.mutable_value(leaves[l])[k] = orig;
      const double fd = (fp - fm) / (2 * step);
      const double an = grads[l][k];
      worst = std::max(worst, std::abs(fd - an) / std::max(1e-5, std::max(std::abs(fd), std::abs(an))));
    }
  }
  tape.replay();
  return worst;
}

RennConfig small_config(std::uint64_t seed = 0) {
  RennConfig c;
  c.d_e = 4;
  c.d_h = 5;
  c.seed = seed;
  return c;
}

}  // namespace

TEST(RootBeliefs, UniformAtInitAndNormalized) {
  const auto fg = to_factor_graph(random_ising(Topology::grid(3, 3), 1.0, 2));
  const auto rg = build_region_graph(fg, Topology::grid(3, 3));
  Renn net(rg, fg);
  for (const auto& b : net.root_beliefs()) {
    EXPECT_EQ(b.table.size(), 16u);
    for (double v : b.table) EXPECT_DOUBLE_EQ(v, 1.0 / 16.0);
  }
  // after some steps the tables move but stay normalized
  for (int i = 0; i < 10; ++i) net.step();
  net.tape().replay();
  for (const auto& b : net.root_beliefs()) EXPECT_NEAR(b.total(), 1.0, 1e-12);
}

TEST(RootBeliefs, TotalMassHasZeroGradient) {
  const auto fg = to_factor_graph(random_ising(Topology::grid(2, 3), 1.0, 2));
  const auto rg = build_region_graph(fg, Topology::grid(2, 3));
  Renn net(rg, fg, small_config());
  auto& t = net.tape();
  // move away from the zero head first so all gradients are live
  std::mt19937_64 rng(4);
  std::normal_distribution<double> nd(0.0, 0.3);
  for (auto v : t.leaves())
    for (auto& x : t.mutable_value(v).data()) x += nd(rng);
  std::vector<ad::Var> roots;
  for (int id : rg.level(0)) roots.push_back(ad::sum(t, net.belief_vars()[std::size_t(id)]));
  const auto loss = ad::add_n(t, roots);
  const auto ev = t.forward_backward(loss);
  EXPECT_NEAR(ev.loss, double(roots.size()), 1e-12);
  for (const auto& g : ev.grads)
    for (double v : g.data()) EXPECT_NEAR(v, 0.0, 1e-12);
}

TEST(Descend, FigureTwoLevelAverages) {
  const auto fg = to_factor_graph(random_ising(Topology::grid(2, 3), 1.0, 0));
  const auto rg = build_region_graph(fg, Topology::grid(2, 3));
  std::mt19937_64 rng(3);
  ad::Tape t;
  std::vector<ad::Var> b(std::size_t(rg.size()));
  std::vector<std::vector<double>> raw(std::size_t(rg.size()));
  for (int id : rg.level(0)) {
    raw[std::size_t(id)] = random_table(16, rng);
    b[std::size_t(id)] = t.leaf(ad::Tensor::vector(raw[std::size_t(id)]));
  }
  b = descend_beliefs(t, rg, fg.cards(), b);
  const int child = rg.level(1)[0];
  std::vector<double> expect(4, 0.0);
  for (int p : rg.level(0)) {
    const auto m = marginalize(raw[std::size_t(p)], rg.region(p).vars, rg.region(child).vars, fg.cards());
    for (std::size_t k = 0; k < 4; ++k) expect[k] += 0.5 * m[k];
  }
  for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(t.value(b[std::size_t(child)])[k], expect[k], 1e-15);
}

TEST(Descend, SingleParentAndConsistentParents) {
  const auto fg = to_factor_graph(random_ising(Topology::grid(2, 3), 1.0, 0));
  const auto rg = build_region_graph(fg, Topology::grid(2, 3));
  // exact marginals are consistent: every descended table equals the oracle
  const auto ex = exact_inference(fg, region_scopes(rg));
  ad::Tape t;
  std::vector<ad::Var> b(std::size_t(rg.size()));
  for (int id : rg.level(0)) b[std::size_t(id)] = t.leaf(ad::Tensor::vector(ex.extra[std::size_t(id)].table));
  b = descend_beliefs(t, rg, fg.cards(), b);
  for (const auto& r : rg.regions())
    for (std::size_t k = 0; k < ex.extra[std::size_t(r.id)].table.size(); ++k)
      EXPECT_NEAR(t.value(b[std::size_t(r.id)])[k], ex.extra[std::size_t(r.id)].table[k], 1e-14);
}

TEST(Descend, SingleParentIsMarginalization) {
  const auto fg = to_factor_graph(random_ising(Topology::custom(3, {{0, 1}, {1, 2}}), 1.0, 0));
  const auto rg = RegionGraph::from_regions(fg, {covering_region(fg, {0, 1, 2}), covering_region(fg, {0, 1})});
  ASSERT_EQ(rg.num_levels(), 2);
  std::mt19937_64 rng(5);
  const auto raw = random_table(8, rng);
  ad::Tape t;
  std::vector<ad::Var> b(2);
  const int root = rg.level(0)[0], child = rg.level(1)[0];
  b[std::size_t(root)] = t.leaf(ad::Tensor::vector(raw));
  b = descend_beliefs(t, rg, fg.cards(), b);
  const auto m = marginalize(raw, {0, 1, 2}, {0, 1}, fg.cards());
  for (std::size_t k = 0; k < 4; ++k) EXPECT_DOUBLE_EQ(t.value(b[std::size_t(child)])[k], m[k]);
}

TEST(Descend, OrphanBelowRootsRejected) {
  const auto fg = to_factor_graph(random_ising(Topology::grid(2, 3), 1.0, 0));
  const auto rg = build_region_graph(fg, Topology::grid(2, 3));
  ad::Tape t;
  std::vector<ad::Var> b(1);
  EXPECT_THROW(descend_beliefs(t, rg, fg.cards(), b), ContractViolation);
}

TEST(Objective, LambdaZeroIsRegionFreeEnergy) {
  const auto fg = to_factor_graph(random_ising(Topology::grid(3, 3), 1.0, 4));
  const auto rg = build_region_graph(fg, Topology::grid(3, 3));
  auto cfg = small_config(1);
  cfg.lambda = 0.0;
  Renn net(rg, fg, cfg);
  for (int i = 0; i < 20; ++i) net.step();
  net.tape().replay();
  EXPECT_EQ(net.objective(), net.free_energy());
  EXPECT_NEAR(net.free_energy(), region_free_energy(rg, net.beliefs(), fg), 1e-10);
}

TEST(Objective, ExactMarginalsGiveZeroPenalty) {
  const auto fg = to_factor_graph(random_ising(Topology::grid(2, 3), 1.0, 5));
  const auto rg = build_region_graph(fg, Topology::grid(2, 3));
  const auto ex = exact_inference(fg, region_scopes(rg));
  ad::Tape t;
  std::vector<ad::Var> b(std::size_t(rg.size()));
  for (int id : rg.level(0)) b[std::size_t(id)] = t.leaf(ad::Tensor::vector(ex.extra[std::size_t(id)].table));
  b = descend_beliefs(t, rg, fg.cards(), b);
  const auto o = renn_objective(t, rg, fg, b, 5.0);
  EXPECT_NEAR(t.value(o.penalty).item(), 0.0, 1e-28);
  EXPECT_NEAR(t.value(o.total).item(), -ex.log_Z, 1e-10);
}

TEST(Objective, UniformZeroModel) {
  const auto fg = zero_model(Topology::grid(3, 3));
  const auto rg = build_region_graph(fg, Topology::grid(3, 3));
  Renn net(rg, fg);
  EXPECT_NEAR(net.objective(), -9.0 * std::log(2.0), 1e-12);
  EXPECT_EQ(net.penalty(), 0.0);
}

TEST(Objective, GradientMatchesFiniteDifferences) {
  const auto fg = to_factor_graph(random_ising(Topology::grid(2, 3), 1.0, 8));
  for (bool inf : {false, true}) {
    const auto rg = build_region_graph(fg, Topology::grid(2, 3), inf);
    Renn net(rg, fg, small_config(2));
    auto& t = net.tape();
    std::mt19937_64 rng(9);
    std::normal_distribution<double> nd(0.0, 0.3);
    for (auto v : t.leaves())
      for (auto& x : t.mutable_value(v).data()) x += nd(rng);
    EXPECT_LT(max_fd_rel_error(t, net.objective_vars().total), 1e-4) << "infinite face " << inf;
  }
}

TEST(Infer, SingleRootRecoversJoint) {
  const auto fg = to_factor_graph(random_ising(Topology::grid(2, 3), 1.0, 6));
  Scope all{0, 1, 2, 3, 4, 5};
  const auto rg = cluster_variation(fg, {covering_region(fg, all)});
  const auto ex = exact_inference(fg);
  const auto r = renn_infer(fg, rg);
  EXPECT_LT(std::abs(r.free_energy + ex.log_Z), 1e-3);
  EXPECT_LT(max_abs_diff(r.unary, ex.unary), 1e-2);
}

TEST(Infer, ZeroModelStaysUniform) {
  const auto fg = zero_model(Topology::grid(3, 3));
  const auto rg = build_region_graph(fg, Topology::grid(3, 3));
  const auto r = renn_infer(fg, rg);
  EXPECT_NEAR(r.free_energy, -9.0 * std::log(2.0), 1e-4);
  for (const auto& u : r.unary) EXPECT_NEAR(u[0], 0.5, 1e-6);
  EXPECT_TRUE(r.converged);
}

TEST(Infer, BestSoFarNeverIncreases) {
  const auto fg = to_factor_graph(random_ising(Topology::grid(3, 3), 1.0, 7));
  const auto rg = build_region_graph(fg, Topology::grid(3, 3));
  auto cfg = small_config(3);
  cfg.max_epochs = 300;
  Renn net(rg, fg, cfg);
  const auto tr = net.optimize();
  ASSERT_FALSE(tr.best.empty());
  for (std::size_t k = 1; k < tr.best.size(); ++k) EXPECT_LE(tr.best[k], tr.best[k - 1]);
  EXPECT_DOUBLE_EQ(net.objective(), tr.best.back());
}

TEST(Infer, BeatsMeanFieldOnSmallGrid) {
  double l1_renn = 0.0, l1_mf = 0.0;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto fg = to_factor_graph(random_ising(Topology::grid(3, 3), 0.1, seed));
    const auto rg = build_region_graph(fg, Topology::grid(3, 3));
    const auto ex = exact_inference(fg);
    l1_renn += compute_metrics(fg, renn_infer(fg, rg, RennConfig{}), ex).l1_error;
    l1_mf += compute_metrics(fg, mean_field(fg), ex).l1_error;
  }
  EXPECT_LT(l1_renn, l1_mf);
}

TEST(Infer, PenaltyBoundsParentChildDisagreement) {
  const auto fg = to_factor_graph(random_ising(Topology::grid(2, 3), 0.5, 3));
  const auto rg = build_region_graph(fg, Topology::grid(2, 3));
  RennConfig cfg;
  cfg.lambda = 10.0;
  Renn net(rg, fg, cfg);
  net.optimize();
  const auto b = net.beliefs();
  const double bound = std::sqrt(net.penalty()) + 1e-12;
  double worst = 0.0;
  for (const auto& r : rg.regions())
    for (int p : r.parents) {
      const auto m = marginalize(b[std::size_t(p)].table, rg.region(p).vars, r.vars, fg.cards());
      for (std::size_t i = 0; i < m.size(); ++i)
        worst = std::max(worst, std::abs(m[i] - b[std::size_t(r.id)].table[i]));
    }
  EXPECT_LE(worst, bound);
  EXPECT_LT(net.penalty(), 1e-3);
}
