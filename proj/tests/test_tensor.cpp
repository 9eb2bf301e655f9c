#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>

#include "renn/tensor.hpp"

using namespace renn;
using namespace renn::ad;

namespace {

Tensor random_tensor(Shape s, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Tensor t(std::move(s));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = n(rng);
  return t;
}

// Central differences over every entry of every leaf; the tape is replayed
// after each perturbation.
double max_fd_rel_error(Tape& tape, Var loss, double step = 1e-5) {
  const auto grads = tape.forward_backward(loss).grads;
  const auto leaves = tape.leaves();
  double worst = 0.0;
  for (std::size_t l = 0; l < leaves.size(); ++l) {
    for (std::size_t k = 0; k < tape.value(leaves[l]).size(); ++k) {
      Tensor& v = tape.mutable_value(leaves[l]);
      const double orig = v[k];
      v[k] = orig + step;
      tape.replay();
      const double fp = tape.value(loss).item();
      tape.mutable_value(leaves[l])[k] = orig - step;
      tape.replay();
      const double fm = tape.value(loss).item();
      tape.mutable_value(leaves[l])[k] = orig;
      const double fd = (fp - fm) / (2 * step);
      const double an = grads[l][k];
      const double rel = std::abs(fd - an) / std::max(1e-6, std::max(std::abs(fd), std::abs(an)));
      worst = std::max(worst, rel);
    }
  }
  tape.replay();
  return worst;
}

}  // namespace

TEST(Tensor, RejectsBadShapes) {
  EXPECT_THROW(Tensor({2, 0}), ContractViolation);
  EXPECT_THROW(Tensor({2}, std::vector<double>{1, 2, 3}), ContractViolation);
  Tensor s = Tensor::scalar(3.0);
  EXPECT_EQ(s.size(), 1u);
  EXPECT_DOUBLE_EQ(s.item(), 3.0);
}

TEST(Tape, QuadraticGradient) {
  Tape t;
  Var p = t.leaf(Tensor::vector({1, 2}));
  Var loss = sum(t, mul(t, p, p));
  auto ev = t.forward_backward(loss);
  EXPECT_DOUBLE_EQ(ev.loss, 5.0);
  ASSERT_EQ(ev.grads.size(), 1u);
  EXPECT_DOUBLE_EQ(ev.grads[0][0], 2.0);
  EXPECT_DOUBLE_EQ(ev.grads[0][1], 4.0);
}

TEST(Tape, SoftmaxLogFirstEntry) {
  Tape t;
  Var z = t.leaf(Tensor::vector({0, 0}));
  Var loss = sum(t, slice(t, log(t, softmax(t, z)), 0, 1));
  auto ev = t.forward_backward(loss);
  EXPECT_NEAR(ev.grads[0][0], 0.5, 1e-15);
  EXPECT_NEAR(ev.grads[0][1], -0.5, 1e-15);
}

TEST(Tape, NonScalarLossRejected) {
  Tape t;
  Var p = t.leaf(Tensor::vector({1, 2}));
  Var y = mul(t, p, p);
  EXPECT_THROW(t.backward(y), ContractViolation);
}

TEST(Tape, NaNRaisesNamedFault) {
  Tape t;
  Var p = t.leaf(Tensor::vector({-1.0}));
  try {
    log(t, p);
    FAIL() << "expected NumericFault";
  } catch (const NumericFault& e) {
    EXPECT_EQ(e.where(), "log");
  }
}

TEST(Tape, ThreeLayerNetworkMatchesFiniteDifferences) {
  std::mt19937_64 rng(7);
  Tape t;
  Var x = t.constant(random_tensor({4, 3}, rng));
  Var W1 = t.leaf(random_tensor({3, 5}, rng, 0.5));
  Var b1 = t.leaf(random_tensor({5}, rng, 0.1));
  Var W2 = t.leaf(random_tensor({5, 6}, rng, 0.5));
  Var b2 = t.leaf(random_tensor({6}, rng, 0.1));
  Var W3 = t.leaf(random_tensor({6, 4}, rng, 0.5));
  Var h1 = tanh(t, add_bias(t, matmul(t, x, W1), b1));
  Var h2 = tanh(t, add_bias(t, matmul(t, h1, W2), b2));
  Var p = softmax(t, matmul(t, h2, W3));
  Var target = t.constant(random_tensor({4, 4}, rng));
  Var loss = add(t, mean(t, sq_diff(t, p, target)), scale(t, sum(t, mul(t, p, log(t, add_scalar(t, p, 1e-12)))), 0.3));
  EXPECT_LT(max_fd_rel_error(t, loss), 1e-4);
}

TEST(Tape, EveryPrimitiveMatchesFiniteDifferences) {
  std::mt19937_64 rng(11);
  using Build = std::function<Var(Tape&, Var, Var)>;
  const std::vector<std::pair<const char*, Build>> cases = {
      {"add", [](Tape& t, Var a, Var b) { return add(t, a, b); }},
      {"add_n", [](Tape& t, Var a, Var b) { return add_n(t, {a, b, a}); }},
      {"mul", [](Tape& t, Var a, Var b) { return mul(t, a, b); }},
      {"sq_diff", [](Tape& t, Var a, Var b) { return sq_diff(t, a, b); }},
      {"scale", [](Tape& t, Var a, Var) { return scale(t, a, -1.7); }},
      {"add_scalar", [](Tape& t, Var a, Var) { return add_scalar(t, a, 0.4); }},
      {"tanh", [](Tape& t, Var a, Var) { return tanh(t, a); }},
      {"exp", [](Tape& t, Var a, Var) { return exp(t, a); }},
      {"log", [](Tape& t, Var a, Var) { return log(t, exp(t, a)); }},
      {"softmax", [](Tape& t, Var a, Var) { return softmax(t, reshape(t, a, {2, 3})); }},
      {"mean", [](Tape& t, Var a, Var) { return mean(t, a); }},
      {"dot", [](Tape& t, Var a, Var b) { return dot(t, a, b); }},
      {"sum_xlogx", [](Tape& t, Var a, Var) { return sum_xlogx(t, exp(t, a)); }},
      {"gather", [](Tape& t, Var a, Var) { return gather(t, a, {5, 0, 0, 3}); }},
      {"segment_sum", [](Tape& t, Var a, Var) { return segment_sum(t, a, {0, 1, 0, 1, 2, 2}, 3); }},
      {"slice", [](Tape& t, Var a, Var) { return slice(t, a, 2, 3); }},
      {"matmul", [](Tape& t, Var a, Var b) { return matmul(t, reshape(t, a, {2, 3}), reshape(t, b, {3, 2})); }},
      {"add_bias", [](Tape& t, Var a, Var b) { return add_bias(t, reshape(t, a, {2, 3}), slice(t, b, 0, 3)); }},
  };
  for (const auto& [name, build] : cases) {
    Tape t;
    Var a = t.leaf(random_tensor({6}, rng));
    Var b = t.leaf(random_tensor({6}, rng));
    Var y = build(t, a, b);
    // weighted sum so every output entry gets a distinct cotangent
    Var w = t.constant(random_tensor(t.value(y).shape(), rng));
    Var loss = sum(t, mul(t, y, w));
    EXPECT_LT(max_fd_rel_error(t, loss), 1e-4) << name;
  }
}

TEST(Tape, XLogXAtZero) {
  Tape t;
  Var a = t.leaf(Tensor::vector({0.0, 0.5}));
  Var y = sum_xlogx(t, a);
  EXPECT_DOUBLE_EQ(t.value(y).item(), 0.5 * std::log(0.5));
  const auto g = t.backward(y);
  EXPECT_TRUE(g[0].all_finite());
}

TEST(Tape, SoftmaxRowsSumToOne) {
  std::mt19937_64 rng(3);
  Tape t;
  Var z = t.constant(random_tensor({5, 7}, rng, 10.0));
  const Tensor& p = t.value(softmax(t, z));
  for (std::size_t r = 0; r < 5; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < 7; ++c) {
      EXPECT_GT(p[r * 7 + c], 0.0);
      s += p[r * 7 + c];
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Tape, ReplayIsBitIdentical) {
  std::mt19937_64 rng(5);
  Tape t;
  Var a = t.leaf(random_tensor({3, 4}, rng));
  Var b = t.leaf(random_tensor({4, 2}, rng));
  Var loss = sum(t, tanh(t, matmul(t, a, b)));
  const double first = t.value(loss).item();
  t.replay();
  EXPECT_EQ(t.value(loss).item(), first);
}

TEST(Tape, BackwardVisitsReverseCreationOrder) {
  Tape t;
  Var a = t.leaf(Tensor::vector({1, 2}));
  Var b = exp(t, a);
  Var c = mul(t, a, b);
  Var loss = sum(t, c);
  t.backward(loss);
  const auto& order = t.last_visit_order();
  ASSERT_FALSE(order.empty());
  for (std::size_t i = 1; i < order.size(); ++i) EXPECT_GT(order[i - 1], order[i]);
  EXPECT_EQ(order.front(), loss.id);
}

TEST(Adam, ZeroGradientLeavesParams) {
  Tensor p = Tensor::vector({1.0, -2.0});
  Adam opt;
  std::vector<Tensor*> ps{&p};
  opt.step(ps, {Tensor::vector({0.0, 0.0})});
  EXPECT_DOUBLE_EQ(p[0], 1.0);
  EXPECT_DOUBLE_EQ(p[1], -2.0);
  EXPECT_EQ(opt.steps(), 1);
}

TEST(Adam, ConstantGradientDescends) {
  Tensor p = Tensor::vector({0.0, 0.0});
  Adam opt;
  std::vector<Tensor*> ps{&p};
  for (int i = 0; i < 50; ++i) opt.step(ps, {Tensor::vector({2.0, -3.0})});
  EXPECT_LT(p[0], 0.0);
  EXPECT_GT(p[1], 0.0);
}

TEST(Adam, MinimizesQuadratic) {
  Tape t;
  Var x = t.leaf(Tensor::vector({0.0}));
  Var loss = sum(t, sq_diff(t, x, t.constant(Tensor::vector({3.0}))));
  Adam opt(AdamConfig{0.1, 0.9, 0.999, 1e-8});
  for (int i = 0; i < 500; ++i) {
    auto ev = t.forward_backward(loss);
    std::vector<Tensor*> ps{&t.mutable_value(x)};
    opt.step(ps, ev.grads);
  }
  EXPECT_LT(std::abs(t.value(x)[0] - 3.0), 1e-3);
}

TEST(Adam, ShapeMismatchRejected) {
  Tensor p = Tensor::vector({0.0, 0.0});
  Adam opt;
  std::vector<Tensor*> ps{&p};
  EXPECT_THROW(opt.step(ps, {Tensor::vector({1.0})}), ContractViolation);
  opt.step(ps, {Tensor::vector({1.0, 1.0})});
  ASSERT_EQ(opt.first_moments().size(), 1u);
  EXPECT_EQ(opt.first_moments()[0].shape(), p.shape());
  EXPECT_EQ(opt.second_moments()[0].shape(), p.shape());
}
