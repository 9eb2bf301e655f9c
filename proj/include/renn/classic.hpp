#pragma once

// Mean field, loopy / damped belief propagation, and the Bethe free energy.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "renn/error.hpp"
#include "renn/model.hpp"
#include "renn/result.hpp"
#include "renn/table.hpp"

namespace renn {

struct BetheValue {
  double value = 0.0;
  bool consistent = true;  // every b_a marginalizes to its b_i within 1e-6
};

/// Σ_a Σ b_a ln(b_a / ψ_a) - Σ_i (d_i - 1) Σ b_i ln b_i, d_i = |ne_i|.
inline BetheValue bethe_free_energy(const FactorGraph& fg, const std::vector<BeliefTable>& factor_beliefs,
                                    const std::vector<std::vector<double>>& unary) {
  if (int(factor_beliefs.size()) != fg.num_factors() || int(unary.size()) != fg.num_vars())
    throw ContractViolation("bethe_free_energy: one belief per factor and per variable required");
  BetheValue out;
  auto xlogx = [](double b) { return b > 0.0 ? b * std::log(b) : 0.0; };
  for (int a = 0; a < fg.num_factors(); ++a) {
    const auto& f = fg.factor(a);
    const auto& b = factor_beliefs[std::size_t(a)];
    if (b.scope != f.scope || b.table.size() != f.log_table.size())
      throw ContractViolation("factor belief " + std::to_string(a) + " does not match its factor");
    for (std::size_t k = 0; k < b.table.size(); ++k) out.value += xlogx(b.table[k]) - b.table[k] * f.log_table[k];
    for (int v : f.scope) {
      const auto m = marginalize(b.table, f.scope, {v}, fg.cards());
      for (std::size_t k = 0; k < m.size(); ++k)
        if (std::abs(m[k] - unary[std::size_t(v)][k]) > 1e-6) out.consistent = false;
    }
  }
  for (int i = 0; i < fg.num_vars(); ++i) {
    const double d = double(fg.var_factors(i).size());
    double s = 0.0;
    for (double b : unary[std::size_t(i)]) s += xlogx(b);
    out.value -= (d - 1.0) * s;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Mean field

inline double mean_field_energy(const FactorGraph& fg, const std::vector<std::vector<double>>& b) {
  // Σ_a E_{Π b_j}[-ln ψ_a] + Σ_i Σ b_i ln b_i
  double F = 0.0;
  for (const auto& f : fg.factors()) {
    for (std::size_t k = 0; k < f.log_table.size(); ++k) {
      const auto x = decode_index(k, f.scope, fg.cards());
      double p = 1.0;
      for (std::size_t q = 0; q < f.scope.size(); ++q) p *= b[std::size_t(f.scope[q])][std::size_t(x[q])];
      F -= p * f.log_table[k];
    }
  }
  for (const auto& bi : b)
    for (double v : bi)
      if (v > 0.0) F += v * std::log(v);
  return F;
}

/// Naive mean field with ascending-order coordinate sweeps.
inline InferenceResult mean_field(const FactorGraph& fg, int max_iters = 1000, double tol = 1e-8) {
  Stopwatch sw;
  const int n = fg.num_vars();
  InferenceResult r;
  r.method = "mf";
  r.unary.resize(std::size_t(n));
  for (int i = 0; i < n; ++i) r.unary[std::size_t(i)].assign(std::size_t(fg.card(i)), 1.0 / fg.card(i));
  std::vector<double> w;
  for (r.iterations = 0; r.iterations < max_iters;) {
    ++r.iterations;
    double change = 0.0;
    for (int i = 0; i < n; ++i) {
      w.assign(std::size_t(fg.card(i)), 0.0);
      for (int a : fg.var_factors(i)) {
        const auto& f = fg.factor(a);
        std::size_t pos = 0;
        while (f.scope[pos] != i) ++pos;
        for (std::size_t k = 0; k < f.log_table.size(); ++k) {
          const auto x = decode_index(k, f.scope, fg.cards());
          double p = 1.0;
          for (std::size_t q = 0; q < f.scope.size(); ++q)
            if (q != pos) p *= r.unary[std::size_t(f.scope[q])][std::size_t(x[q])];
          w[std::size_t(x[pos])] += p * f.log_table[k];
        }
      }
      softmax_inplace(w);
      for (std::size_t k = 0; k < w.size(); ++k) {
        if (!std::isfinite(w[k])) throw NumericFault("mean_field", "non-finite belief");
        change = std::max(change, std::abs(w[k] - r.unary[std::size_t(i)][k]));
      }
      r.unary[std::size_t(i)] = w;
    }
    if (change < tol) {
      r.converged = true;
      break;
    }
  }
  for (const auto& f : fg.factors()) {
    BeliefTable b{f.scope, std::vector<double>(f.log_table.size(), 1.0)};
    for (std::size_t k = 0; k < b.table.size(); ++k) {
      const auto x = decode_index(k, f.scope, fg.cards());
      for (std::size_t q = 0; q < f.scope.size(); ++q) b.table[k] *= r.unary[std::size_t(f.scope[q])][std::size_t(x[q])];
    }
    r.factor_beliefs.push_back(std::move(b));
  }
  r.free_energy = mean_field_energy(fg, r.unary);
  r.runtime_ms = sw.ms();
  return r;
}

// ---------------------------------------------------------------------------
// Loopy belief propagation

/// Factor-to-variable messages m_{a->i}, normalized, with a synchronous
/// update and probability-domain damping.
class LoopyBP {
 public:
  explicit LoopyBP(const FactorGraph& fg) : fg_(fg) {
    for (int a = 0; a < fg.num_factors(); ++a) {
      for (int v : fg.factor(a).scope) {
        slot_.push_back({a, v});
        msg_.emplace_back(std::size_t(fg.card(v)), 1.0 / fg.card(v));
      }
    }
    first_.assign(std::size_t(fg.num_factors()) + 1, 0);
    for (int a = 0; a < fg.num_factors(); ++a) first_[std::size_t(a) + 1] = first_[std::size_t(a)] + fg.factor(a).scope.size();
    proj_.resize(slot_.size());
    for (std::size_t s = 0; s < slot_.size(); ++s) {
      const auto& f = fg.factor(slot_[s].factor);
      proj_[s] = projection_index(f.scope, {slot_[s].var}, fg.cards());
    }
  }

  /// Messages in (factor, scope position) order.
  const std::vector<std::vector<double>>& messages() const noexcept { return msg_; }
  void set_messages(std::vector<std::vector<double>> m) {
    if (m.size() != msg_.size()) throw ContractViolation("message count mismatch");
    msg_ = std::move(m);
  }
  std::size_t slot(int a, int pos) const { return first_[std::size_t(a)] + std::size_t(pos); }

  /// One synchronous update of all messages; returns the max |change|.
  double sweep(double damping) {
    if (!(damping >= 0.0 && damping < 1.0)) throw ContractViolation("damping must lie in [0, 1)");
    const auto log_in = incoming_logs();
    std::vector<std::vector<double>> next(msg_.size());
    for (int a = 0; a < fg_.num_factors(); ++a) {
      const auto& f = fg_.factor(a);
      for (std::size_t p = 0; p < f.scope.size(); ++p) {
        const std::size_t s = slot(a, int(p));
        // log of ψ_a times the cavity messages of the other scope variables
        std::vector<double> t = f.log_table;
        for (std::size_t q = 0; q < f.scope.size(); ++q) {
          if (q == p) continue;
          const std::size_t sq = slot(a, int(q));
          for (std::size_t k = 0; k < t.size(); ++k) t[k] += log_in[sq][proj_[sq][k]];
        }
        std::vector<double> m(std::size_t(fg_.card(f.scope[p])), 0.0);
        // log-sum-exp marginalization onto the receiving variable
        double mx = -std::numeric_limits<double>::infinity();
        for (double v : t) mx = std::max(mx, v);
        std::vector<double> acc(m.size(), 0.0);
        for (std::size_t k = 0; k < t.size(); ++k) acc[proj_[s][k]] += std::exp(t[k] - mx);
        double z = 0.0;
        for (double v : acc) z += v;
        for (std::size_t k = 0; k < m.size(); ++k) m[k] = acc[k] / z;
        next[s] = std::move(m);
      }
    }
    double change = 0.0;
    for (std::size_t s = 0; s < msg_.size(); ++s) {
      for (std::size_t k = 0; k < msg_[s].size(); ++k) {
        const double v = (1.0 - damping) * next[s][k] + damping * msg_[s][k];
        if (!std::isfinite(v)) throw NumericFault("loopy_bp", "non-finite message");
        change = std::max(change, std::abs(v - msg_[s][k]));
        next[s][k] = v;
      }
    }
    msg_ = std::move(next);
    return change;
  }

  void fill_beliefs(InferenceResult& r) const {
    const int n = fg_.num_vars();
    r.unary.assign(std::size_t(n), {});
    for (int i = 0; i < n; ++i) {
      std::vector<double> lb(std::size_t(fg_.card(i)), 0.0);
      for (int a : fg_.var_factors(i)) {
        const auto& m = msg_[slot_of(a, i)];
        for (std::size_t k = 0; k < lb.size(); ++k) lb[k] += safe_log(m[k]);
      }
      softmax_inplace(lb);
      r.unary[std::size_t(i)] = lb;
    }
    const auto log_in = incoming_logs();
    r.factor_beliefs.clear();
    for (int a = 0; a < fg_.num_factors(); ++a) {
      const auto& f = fg_.factor(a);
      std::vector<double> t = f.log_table;
      for (std::size_t q = 0; q < f.scope.size(); ++q) {
        const std::size_t sq = slot(a, int(q));
        for (std::size_t k = 0; k < t.size(); ++k) t[k] += log_in[sq][proj_[sq][k]];
      }
      softmax_inplace(t);
      r.factor_beliefs.push_back(BeliefTable{f.scope, std::move(t)});
    }
  }

 private:
  struct Slot {
    int factor;
    int var;
  };

  static double safe_log(double v) { return std::log(std::max(v, std::numeric_limits<double>::min())); }

  std::size_t slot_of(int a, int v) const {
    const auto& s = fg_.factor(a).scope;
    return slot(a, int(std::find(s.begin(), s.end(), v) - s.begin()));
  }

  /// log q_{j->a}(x_j) = Σ_{b ∈ ne_j \ a} log m_{b->j}(x_j), per slot (a, j).
  std::vector<std::vector<double>> incoming_logs() const {
    const int n = fg_.num_vars();
    std::vector<std::vector<double>> total(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j) {
      total[std::size_t(j)].assign(std::size_t(fg_.card(j)), 0.0);
      for (int b : fg_.var_factors(j)) {
        const auto& m = msg_[slot_of(b, j)];
        for (std::size_t k = 0; k < m.size(); ++k) total[std::size_t(j)][k] += safe_log(m[k]);
      }
    }
    std::vector<std::vector<double>> out(msg_.size());
    for (std::size_t s = 0; s < slot_.size(); ++s) {
      const int j = slot_[s].var;
      out[s] = total[std::size_t(j)];
      for (std::size_t k = 0; k < out[s].size(); ++k) out[s][k] -= safe_log(msg_[s][k]);
    }
    return out;
  }

  const FactorGraph& fg_;
  std::vector<Slot> slot_;
  std::vector<std::size_t> first_;
  std::vector<std::vector<double>> msg_;
  std::vector<std::vector<std::size_t>> proj_;
};

/// Loopy BP; damping 0 is plain BP, 0.5 the usual damped variant.
inline InferenceResult loopy_bp(const FactorGraph& fg, int max_iters = 1000, double tol = 1e-8, double damping = 0.0) {
  Stopwatch sw;
  LoopyBP bp(fg);
  InferenceResult r;
  r.method = damping > 0.0 ? "dbp" : "lbp";
  for (r.iterations = 0; r.iterations < max_iters;) {
    ++r.iterations;
    if (bp.sweep(damping) < tol) {
      r.converged = true;
      break;
    }
  }
  bp.fill_beliefs(r);
  const auto F = bethe_free_energy(fg, r.factor_beliefs, r.unary);
  r.free_energy = F.value;
  r.warning = !F.consistent;
  if (r.warning) r.note = "beliefs not locally consistent";
  r.runtime_ms = sw.ms();
  return r;
}

}  // namespace renn
