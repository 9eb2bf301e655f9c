#include <gtest/gtest.h>

#include <cmath>

#include "renn/learn.hpp"
#include "test_util.hpp"

using namespace renn;

namespace {

PairwiseMRF single_edge(double J, double h) {
  PairwiseMRF m;
  m.n = 2;
  m.h = {h, h};
  m.edges = {Edge{0, 1, J}};
  m.topology = Topology::custom(2, {{0, 1}});
  return m;
}

LearnConfig exact_config(int epochs) {
  LearnConfig c;
  c.backend = "exact";
  c.epochs = epochs;
  return c;
}

}  // namespace

TEST(Learn, TwoVariableMatchesClosedFormMLE) {
  const auto truth = single_edge(1.0, 0.0);
  const auto data = exact_sample(to_factor_graph(truth), 2000, 11);
  auto cfg = exact_config(1500);
  const auto r = learn_mrf(truth, data, data, cfg);
  // the two-variable model is saturated, so the MLE reproduces the empirical joint
  double cnt[2][2] = {{0, 0}, {0, 0}};
  for (const auto& x : data) cnt[x[0]][x[1]] += 1.0;
  const double J_mle = 0.25 * std::log(cnt[1][1] * cnt[0][0] / (cnt[0][1] * cnt[1][0]));
  EXPECT_NEAR(r.model.edges[0].J, J_mle, 2e-3);
  EXPECT_NEAR(r.model.edges[0].J, 1.0, 0.05);
}

TEST(Learn, ZeroVarianceDataConcentrates) {
  PairwiseMRF m = random_ising(Topology::custom(3, {{0, 1}, {1, 2}}), 1.0, 0);
  std::vector<Assignment> data(50, Assignment{1, 1, 0});
  const auto r = learn_mrf(m, data, data, exact_config(30));
  for (std::size_t k = 1; k < r.trace.size(); ++k) EXPECT_LT(r.trace[k].train_nll, r.trace[k - 1].train_nll);
  EXPECT_LT(r.trace.back().train_nll, 0.5 * r.trace.front().train_nll);
}

TEST(Learn, GradientVanishesAtTruth) {
  const auto truth = random_ising(Topology::grid(3, 3), 0.5, 4);
  const auto data = exact_sample(to_factor_graph(truth), 100000, 5);
  LearnBackend b(truth, exact_config(1));
  const auto g = outer_gradient(data_moments(truth, data), b.estimate(truth));
  double norm = 0.0;
  for (double v : g) norm += v * v;
  EXPECT_LT(std::sqrt(norm), 0.05);
}

TEST(Learn, RegionMomentsMatchFiniteDifferences) {
  const auto t = Topology::grid(3, 3);
  const auto m = random_ising(t, 1.0, 2);
  for (bool inf : {false, true}) {
    const auto fg = to_factor_graph(m);
    const auto rg = build_region_graph(fg, t, inf);
    // any fixed beliefs will do; the energy term is linear in theta
    const auto beliefs = exact_inference(fg, region_scopes(rg)).extra;
    const auto an = region_moments(rg, fg, beliefs);
    const auto th = theta_of(m);
    const double eps = 1e-5;
    for (std::size_t k = 0; k < th.size(); ++k) {
      auto p = th, q = th;
      p[k] += eps;
      q[k] -= eps;
      const double fp = region_free_energy(rg, beliefs, to_factor_graph(with_theta(m, p)));
      const double fq = region_free_energy(rg, beliefs, to_factor_graph(with_theta(m, q)));
      EXPECT_NEAR(-(fp - fq) / (2 * eps), an[k], 1e-4) << "param " << k;
    }
  }
}

TEST(Learn, FactorMomentsMatchBetheFiniteDifferences) {
  const auto m = random_ising(Topology::grid(3, 3), 1.0, 8);
  const auto fg = to_factor_graph(m);
  const auto bp = loopy_bp(fg);
  const auto an = factor_moments(fg, bp.factor_beliefs);
  const auto th = theta_of(m);
  for (std::size_t k = 0; k < th.size(); ++k) {
    auto p = th, q = th;
    p[k] += 1e-5;
    q[k] -= 1e-5;
    const double fp = bethe_free_energy(to_factor_graph(with_theta(m, p)), bp.factor_beliefs, bp.unary).value;
    const double fq = bethe_free_energy(to_factor_graph(with_theta(m, q)), bp.factor_beliefs, bp.unary).value;
    EXPECT_NEAR(-(fp - fq) / 2e-5, an[k], 1e-4);
  }
}

TEST(NllEval, UniformModel) {
  auto m = random_ising(Topology::grid(2, 3), 1.0, 0);
  for (auto& e : m.edges) e.J = 0.0;
  for (auto& h : m.h) h = 0.0;
  const auto fg = to_factor_graph(m);
  const std::vector<Assignment> data{{0, 1, 0, 1, 1, 0}, {1, 1, 1, 1, 1, 1}};
  EXPECT_NEAR(nll_eval(fg, data, exact_log_z(fg)), 6.0 * std::log(2.0), 1e-12);
}

TEST(NllEval, ExactLogZIsBitIdenticalToOracle) {
  const auto fg = to_factor_graph(random_ising(Topology::complete(6), 1.0, 3));
  const auto data = exact_sample(fg, 200, 1);
  EXPECT_EQ(nll_eval(fg, data, exact_log_z(fg)), nll_exact(fg, data));
  // a shifted estimate moves the NLL by exactly the log Z error
  EXPECT_NEAR(nll_eval(fg, data, exact_log_z(fg) + 0.3) - nll_exact(fg, data), 0.3, 1e-12);
}

TEST(Learn, EveryBackendRuns) {
  const auto t = Topology::grid(2, 3);
  const auto truth = random_ising(t, 0.5, 1);
  const auto data = exact_sample(to_factor_graph(truth), 300, 2);
  for (const std::string b : {"exact", "mf", "lbp", "dbp", "gbp", "renn"}) {
    LearnConfig c;
    c.backend = b;
    c.epochs = 5;
    c.renn.d_e = 4;
    c.renn.d_h = 8;
    const auto r = learn_mrf(truth, data, data, c);
    ASSERT_EQ(r.trace.size(), 6u) << b;
    for (const auto& e : r.trace) {
      EXPECT_TRUE(std::isfinite(e.test_nll)) << b;
      EXPECT_TRUE(std::isfinite(e.test_nll_exact)) << b;
    }
    EXPECT_LT(r.trace.back().test_nll_exact, r.trace.front().test_nll_exact) << b;
  }
}

TEST(Learn, MinibatchesCoverTheData) {
  const auto truth = single_edge(0.5, 0.2);
  const auto data = exact_sample(to_factor_graph(truth), 400, 3);
  auto c = exact_config(200);
  c.batch_size = 100;
  const auto r = learn_mrf(truth, data, data, c);
  EXPECT_NEAR(r.model.edges[0].J, learn_mrf(truth, data, data, exact_config(800)).model.edges[0].J, 0.05);
}

TEST(Learn, RennBackendTracksExactBackend) {
  const auto t = Topology::grid(3, 3);
  const auto truth = random_ising(t, 0.5, 6);
  const auto fg = to_factor_graph(truth);
  const auto train = exact_sample(fg, 1000, 1), test = exact_sample(fg, 500, 2);
  auto c = exact_config(150);
  const double ex = learn_mrf(truth, train, test, c).trace.back().test_nll_exact;
  c.backend = "renn";
  c.renn.d_e = 8;
  c.renn.d_h = 16;
  const auto r = learn_mrf(truth, train, test, c);
  EXPECT_LT(std::abs(r.trace.back().test_nll_exact - ex) / ex, 0.03);
}

TEST(Learn, CheckpointRoundTrips) {
  const auto truth = random_ising(Topology::grid(2, 2), 1.0, 0);
  const auto data = exact_sample(to_factor_graph(truth), 100, 1);
  const auto r = learn_mrf(truth, data, data, exact_config(3));
  const auto text = serialize_checkpoint(r);
  EXPECT_EQ(std::get<PairwiseMRF>(parse_model(text)), r.model);
  EXPECT_NE(text.find("# epoch 3 nll "), std::string::npos);
}

TEST(Learn, RejectsBadInput) {
  const auto truth = single_edge(1.0, 0.0);
  EXPECT_THROW(learn_mrf(truth, {{0, 1, 1}}, {}, exact_config(1)), ContractViolation);
  EXPECT_THROW(learn_mrf(truth, {}, {}, exact_config(1)), ContractViolation);
  auto c = exact_config(1);
  c.backend = "bogus";
  EXPECT_THROW(learn_mrf(truth, {{0, 1}}, {}, c), ContractViolation);
  c.backend = "renn";
  c.inner_steps = 0;
  EXPECT_THROW(learn_mrf(truth, {{0, 1}}, {}, c), ContractViolation);
}

TEST(Learn, BackendFailureCarriesEpoch) {
  std::vector<std::pair<int, int>> chain;
  for (int i = 0; i + 1 < 26; ++i) chain.push_back({i, i + 1});
  const auto m = random_ising(Topology::custom(26, chain), 1.0, 0);
  try {
    learn_mrf(m, {Assignment(26, 0)}, {}, exact_config(1));
    FAIL() << "expected a capacity error";
  } catch (const CapacityError& e) {
    EXPECT_NE(std::string(e.what()).find("epoch 0"), std::string::npos);
  }
}
