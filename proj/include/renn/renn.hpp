#pragma once

// Region-based free energy minimized directly over the output of a small
// network that emits root-region beliefs.

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "renn/error.hpp"
#include "renn/model.hpp"
#include "renn/region_graph.hpp"
#include "renn/result.hpp"
#include "renn/tensor.hpp"

namespace renn {

struct RennConfig {
  double lambda = 5.0;
  double lr = 1e-3;
  int lr_halvings = 10;  // plateaus tolerated before stopping; each halves lr
  int max_epochs = 5000;
  double tol = 1e-7;  // relative improvement of the best objective over `window` epochs
  int window = 20;
  int d_e = 32;
  int d_h = 64;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(lambda >= 0.0)) throw ContractViolation("lambda must be >= 0");
    if (!(lr > 0.0)) throw ContractViolation("learning rate must be > 0");
    if (max_epochs < 1 || window < 1 || d_e < 1 || d_h < 1 || lr_halvings < 0) throw ContractViolation("renn sizes must be positive");
  }
};

/// b_R for every non-root region: mean over parents of the parent belief
/// marginalized onto S(R). `b` holds the roots on entry; other entries are
/// filled level by level.
inline std::vector<ad::Var> descend_beliefs(ad::Tape& t, const RegionGraph& rg, const std::vector<int>& cards,
                                            std::vector<ad::Var> b) {
  if (int(b.size()) != rg.size()) throw ContractViolation("descend_beliefs: one handle per region required");
  for (int l = 1; l < rg.num_levels(); ++l) {
    for (int id : rg.level(l)) {
      const auto& r = rg.region(id);
      if (r.parents.empty()) throw ContractViolation("region " + std::to_string(id) + " below the roots has no parent");
      const std::size_t size = table_size(r.vars, cards);
      std::vector<ad::Var> parts;
      for (int p : r.parents)
        parts.push_back(ad::segment_sum(t, b[std::size_t(p)], projection_index(rg.region(p).vars, r.vars, cards), size));
      ad::Var s = parts.size() == 1 ? parts[0] : ad::add_n(t, parts);
      b[std::size_t(id)] = parts.size() == 1 ? s : ad::scale(t, s, 1.0 / double(parts.size()));
    }
  }
  return b;
}

struct RennObjective {
  ad::Var total;
  ad::Var free_energy;
  ad::Var penalty;                    // unweighted Σ ||b_R - marg_P||², valid only if has_penalty
  bool has_penalty = false;
  std::vector<ad::Var> neg_log_psi;   // per region, constant; unset for c_R = 0
};

/// Constant -log ψ_R laid out over S(R).
inline ad::Tensor region_neg_log_potential(const Region& r, const FactorGraph& fg) {
  auto lp = region_log_potential(r, fg);
  for (auto& v : lp) v = -v;
  return ad::Tensor::vector(std::move(lp));
}

/// F_R(B) + λ Σ_{R not root} Σ_{P ∈ parents(R)} ||b_R - Σ_{S(P)\S(R)} b_P||².
inline RennObjective renn_objective(ad::Tape& t, const RegionGraph& rg, const FactorGraph& fg,
                                    const std::vector<ad::Var>& b, double lambda) {
  if (!(lambda >= 0.0)) throw ContractViolation("lambda must be >= 0");
  RennObjective o;
  o.neg_log_psi.resize(std::size_t(rg.size()));
  std::vector<ad::Var> terms;
  for (const auto& r : rg.regions()) {
    if (r.c == 0) continue;
    const auto id = std::size_t(r.id);
    o.neg_log_psi[id] = t.constant(region_neg_log_potential(r, fg), "neg_log_psi");
    ad::Var f = ad::add(t, ad::dot(t, b[id], o.neg_log_psi[id]), ad::sum_xlogx(t, b[id]));
    terms.push_back(r.c == 1 ? f : ad::scale(t, f, double(r.c)));
  }
  o.free_energy = terms.empty() ? t.constant(ad::Tensor::scalar(0.0)) : ad::add_n(t, terms);
  std::vector<ad::Var> pen;
  for (const auto& r : rg.regions()) {
    if (r.parents.empty()) continue;
    const std::size_t size = table_size(r.vars, fg.cards());
    for (int p : r.parents) {
      ad::Var m = ad::segment_sum(t, b[std::size_t(p)], projection_index(rg.region(p).vars, r.vars, fg.cards()), size);
      pen.push_back(ad::sum(t, ad::sq_diff(t, b[std::size_t(r.id)], m)));
    }
  }
  o.total = o.free_energy;
  if (!pen.empty()) {
    o.has_penalty = true;
    o.penalty = ad::add_n(t, pen);
    if (lambda > 0.0) o.total = ad::add(t, o.free_energy, ad::scale(t, o.penalty, lambda));
  }
  return o;
}

/// Embeddings -> shared tanh layer -> one affine head over [h_1..h_N] whose
/// output is cut into one joint logit block per root region.
class Renn {
 public:
  Renn(const RegionGraph& rg, const FactorGraph& fg, RennConfig cfg = {})
      : rg_(rg), cards_(fg.cards()), cfg_(cfg), adam_(ad::AdamConfig{cfg.lr, 0.9, 0.999, 1e-8}) {
    cfg_.validate();
    const std::size_t n = std::size_t(fg.num_vars()), de = std::size_t(cfg_.d_e), dh = std::size_t(cfg_.d_h);
    std::mt19937_64 rng(cfg_.seed);
    auto normal = [&](ad::Shape s, double sd) {
      std::normal_distribution<double> d(0.0, sd);
      ad::Tensor x(std::move(s));
      for (auto& v : x.data()) v = d(rng);
      return x;
    };
    const auto roots = rg.level(0);
    std::size_t total = 0;
    for (int id : roots) {
      offset_.push_back(total);
      total += table_size(rg.region(id).vars, cards_);
    }
    emb_ = tape_.leaf(normal({n, de}, 1.0), "embedding");
    w1_ = tape_.leaf(normal({de, dh}, 1.0 / std::sqrt(double(de))), "w1");
    b1_ = tape_.leaf(ad::Tensor({dh}, 0.0), "b1");
    w2_ = tape_.leaf(ad::Tensor({n * dh, total}, 0.0), "w2");
    b2_ = tape_.leaf(ad::Tensor({total}, 0.0), "b2");

    ad::Var h = ad::tanh(tape_, ad::add_bias(tape_, ad::matmul(tape_, emb_, w1_), b1_));
    ad::Var flat = ad::reshape(tape_, h, {1, n * dh});
    ad::Var logits = ad::add_bias(tape_, ad::matmul(tape_, flat, w2_), b2_);
    std::vector<ad::Var> b(std::size_t(rg.size()));
    for (std::size_t k = 0; k < roots.size(); ++k) {
      const std::size_t len = table_size(rg.region(roots[k]).vars, cards_);
      b[std::size_t(roots[k])] = ad::softmax(tape_, ad::slice(tape_, logits, offset_[k], len));
    }
    beliefs_ = descend_beliefs(tape_, rg, cards_, std::move(b));
    obj_ = renn_objective(tape_, rg, fg, beliefs_, cfg_.lambda);
  }

  Renn(const Renn&) = delete;
  Renn& operator=(const Renn&) = delete;

  ad::Tape& tape() noexcept { return tape_; }
  const RennObjective& objective_vars() const noexcept { return obj_; }
  const std::vector<ad::Var>& belief_vars() const noexcept { return beliefs_; }
  const RennConfig& config() const noexcept { return cfg_; }

  double objective() const { return tape_.value(obj_.total).item(); }
  double free_energy() const { return tape_.value(obj_.free_energy).item(); }
  double penalty() const { return obj_.has_penalty ? tape_.value(obj_.penalty).item() : 0.0; }

  std::vector<BeliefTable> beliefs() const {
    std::vector<BeliefTable> out;
    for (const auto& r : rg_.regions()) out.push_back({r.vars, tape_.value(beliefs_[std::size_t(r.id)]).data()});
    return out;
  }
  std::vector<BeliefTable> root_beliefs() const {
    std::vector<BeliefTable> out;
    for (int id : rg_.level(0)) out.push_back({rg_.region(id).vars, tape_.value(beliefs_[std::size_t(id)]).data()});
    return out;
  }

  /// Swap in the potentials of `fg` (same structure) and re-evaluate.
  void set_potentials(const FactorGraph& fg) {
    if (fg.cards() != cards_) throw ContractViolation("set_potentials: structure differs");
    for (const auto& r : rg_.regions())
      if (r.c != 0) tape_.set_value(obj_.neg_log_psi[std::size_t(r.id)], region_neg_log_potential(r, fg));
    tape_.replay();
  }

  /// One optimizer step; returns the objective before the step.
  double step() {
    auto ev = evaluate();
    apply(ev.grads);
    return ev.loss;
  }

  struct Trace {
    std::vector<double> objective;  // value before each step
    std::vector<double> best;       // running minimum
    int epochs = 0;
    bool converged = false;
  };

  /// Runs until the best objective improves by less than tol (relative)
  /// over `window` epochs. Each such plateau rolls back to the best
  /// parameters and halves the learning rate; the run stops at the plateau
  /// after `lr_halvings` halvings, again on the best parameters.
  Trace optimize() {
    Trace tr;
    double best = std::numeric_limits<double>::infinity();
    std::vector<ad::Tensor> best_params;
    const auto leaves = tape_.leaves();
    const std::size_t w = std::size_t(cfg_.window);
    int halvings = 0, since = 0;
    for (int e = 0; e < cfg_.max_epochs; ++e) {
      auto ev = evaluate();
      if (ev.loss < best) {
        best = ev.loss;
        best_params.clear();
        for (auto v : leaves) best_params.push_back(tape_.value(v));
      }
      tr.objective.push_back(ev.loss);
      tr.best.push_back(best);
      tr.epochs = e + 1;
      // compare running minima so Adam's oscillation cannot fake a plateau
      if (e - since >= int(w)) {
        const double old = tr.best[tr.best.size() - 1 - w];
        if (old - best <= cfg_.tol * std::max(1.0, std::abs(best))) {
          if (halvings == cfg_.lr_halvings) {
            tr.converged = true;
            break;
          }
          ++halvings;
          for (std::size_t k = 0; k < leaves.size(); ++k) tape_.set_value(leaves[k], best_params[k]);
          adam_.set_lr(adam_.config().lr * 0.5);
          since = e;
          continue;
        }
      }
      apply(ev.grads);
    }
    for (std::size_t k = 0; k < leaves.size(); ++k) tape_.set_value(leaves[k], best_params[k]);
    tape_.replay();
    return tr;
  }

 private:
  const RegionGraph& rg_;
  std::vector<int> cards_;
  RennConfig cfg_;
  ad::Tape tape_;
  ad::Adam adam_;
  ad::Var emb_, w1_, b1_, w2_, b2_;
  std::vector<std::size_t> offset_;
  std::vector<ad::Var> beliefs_;
  RennObjective obj_;
  int epoch_ = 0;

  ad::Tape::Evaluation evaluate() {
    try {
      auto ev = tape_.forward_backward(obj_.total);
      if (!std::isfinite(ev.loss)) throw NumericFault("renn", "non-finite objective");
      return ev;
    } catch (const NumericFault& err) {
      throw NumericFault("renn", std::string(err.what()) + " at epoch " + std::to_string(epoch_));
    }
  }

  void apply(const std::vector<ad::Tensor>& grads) {
    std::vector<ad::Tensor*> params;
    for (auto v : tape_.leaves()) params.push_back(&tape_.mutable_value(v));
    adam_.step(params, grads);
    ++epoch_;
  }
};

inline InferenceResult renn_infer(const FactorGraph& fg, const RegionGraph& rg, const RennConfig& cfg = {},
                                  std::string method = "renn") {
  Stopwatch sw;
  Renn net(rg, fg, cfg);
  const auto tr = net.optimize();
  InferenceResult r;
  r.method = std::move(method);
  r.iterations = tr.epochs;
  r.converged = tr.converged;
  const auto b = net.beliefs();
  fill_marginals_from_regions(rg, fg, b, r);
  r.free_energy = net.free_energy();
  r.note = "penalty " + std::to_string(net.penalty());
  r.runtime_ms = sw.ms();
  return r;
}

}  // namespace renn
