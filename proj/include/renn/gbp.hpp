#pragma once

// Parent-to-child generalized belief propagation on a region graph.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "renn/error.hpp"
#include "renn/model.hpp"
#include "renn/region_graph.hpp"
#include "renn/result.hpp"
#include "renn/table.hpp"

namespace renn {

inline constexpr double kGbpClamp = 1e-12;

/// Messages m_{P->R} (log domain, normalized) plus, per edge, the sets
/// N(P,R) and H(P,R). H excludes the edge (P,R) itself.
class GbpMessages {
 public:
  explicit GbpMessages(const RegionGraph& rg) : rg_(rg), edges_(rg.edges()) {
    const std::size_t R = std::size_t(rg.size());
    dhat_.assign(R, std::vector<char>(R, 0));
    for (const auto& r : rg.regions()) {
      dhat_[std::size_t(r.id)][std::size_t(r.id)] = 1;
      for (int d : r.descendants) dhat_[std::size_t(r.id)][std::size_t(d)] = 1;
    }
    N_.resize(edges_.size());
    H_.resize(edges_.size());
    for (std::size_t e = 0; e < edges_.size(); ++e) {
      const auto [P, Rr] = edges_[e];
      const auto& dP = dhat_[std::size_t(P)];
      const auto& dR = dhat_[std::size_t(Rr)];
      for (std::size_t f = 0; f < edges_.size(); ++f) {
        const auto [I, J] = edges_[f];
        if (dP[std::size_t(J)] && !dR[std::size_t(J)] && !dP[std::size_t(I)]) N_[e].push_back(f);
        if (f != e && dR[std::size_t(J)] && dP[std::size_t(I)] && !dR[std::size_t(I)]) H_[e].push_back(f);
      }
    }
  }

  const std::vector<std::pair<int, int>>& edges() const noexcept { return edges_; }
  const std::vector<std::size_t>& N(std::size_t e) const { return N_.at(e); }
  const std::vector<std::size_t>& H(std::size_t e) const { return H_.at(e); }
  /// Edge index of (p, c), or -1.
  int edge_index(int p, int c) const {
    auto it = std::lower_bound(edges_.begin(), edges_.end(), std::pair{p, c});
    return it != edges_.end() && *it == std::pair{p, c} ? int(it - edges_.begin()) : -1;
  }
  bool in_dhat(int of, int r) const { return dhat_[std::size_t(of)][std::size_t(r)] != 0; }

 private:
  const RegionGraph& rg_;
  std::vector<std::pair<int, int>> edges_;
  std::vector<std::vector<char>> dhat_;
  std::vector<std::vector<std::size_t>> N_, H_;
};

class Gbp {
 public:
  Gbp(const RegionGraph& rg, const FactorGraph& fg) : rg_(rg), fg_(fg), sets_(rg) {
    const auto& E = sets_.edges();
    logm_.resize(E.size());
    plan_.resize(E.size());
    for (std::size_t e = 0; e < E.size(); ++e) {
      const auto& P = rg.region(E[e].first);
      const auto& R = rg.region(E[e].second);
      const std::size_t nr = table_size(R.vars, fg.cards());
      logm_[e].assign(nr, -std::log(double(nr)));
      auto& pl = plan_[e];
      // Σ log ψ_a over A_P \ A_R, laid out over S(P)
      pl.pot.assign(table_size(P.vars, fg.cards()), 0.0);
      for (int a : P.factors) {
        if (std::binary_search(R.factors.begin(), R.factors.end(), a)) continue;
        const auto idx = projection_index(P.vars, fg.factor(a).scope, fg.cards());
        for (std::size_t k = 0; k < idx.size(); ++k) pl.pot[k] += fg.factor(a).log_table[idx[k]];
      }
      pl.to_child = projection_index(P.vars, R.vars, fg.cards());
      for (std::size_t f : sets_.N(e))
        pl.num.push_back({f, projection_index(P.vars, rg.region(E[f].second).vars, fg.cards())});
      for (std::size_t f : sets_.H(e))
        pl.den.push_back({f, projection_index(R.vars, rg.region(E[f].second).vars, fg.cards())});
    }
    // parents-before-children: sort by parent level, parent id, child id
    order_.resize(E.size());
    for (std::size_t e = 0; e < E.size(); ++e) order_[e] = e;
    std::stable_sort(order_.begin(), order_.end(), [&](std::size_t a, std::size_t b) {
      const auto la = rg.region(E[a].first).level, lb = rg.region(E[b].first).level;
      if (la != lb) return la < lb;
      return E[a] < E[b];
    });
    // belief plan: edges (I,J) with J in D̂(R) and I outside D̂(R)
    bplan_.resize(std::size_t(rg.size()));
    for (const auto& r : rg.regions()) {
      auto& bp = bplan_[std::size_t(r.id)];
      bp.pot = region_log_potential(r, fg);
      for (std::size_t f = 0; f < E.size(); ++f) {
        const auto [I, J] = E[f];
        if (sets_.in_dhat(r.id, J) && !sets_.in_dhat(r.id, I))
          bp.msgs.push_back({f, projection_index(r.vars, rg.region(J).vars, fg.cards())});
      }
    }
  }

  const GbpMessages& sets() const noexcept { return sets_; }
  const std::vector<std::vector<double>>& log_messages() const noexcept { return logm_; }
  bool clamped() const noexcept { return clamped_; }

  /// One sequential pass over all edges; returns the max |change| of any
  /// message entry (probability domain).
  double sweep(double damping) {
    if (!(damping >= 0.0 && damping < 1.0)) throw ContractViolation("damping must lie in [0, 1)");
    const double floor_log = std::log(kGbpClamp);
    double change = 0.0;
    for (std::size_t e : order_) {
      const auto& pl = plan_[e];
      std::vector<double> t = pl.pot;
      for (const auto& [f, idx] : pl.num)
        for (std::size_t k = 0; k < t.size(); ++k) t[k] += logm_[f][idx[k]];
      const std::size_t nr = logm_[e].size();
      double mx = -std::numeric_limits<double>::infinity();
      for (double v : t) mx = std::max(mx, v);
      std::vector<double> acc(nr, 0.0);
      for (std::size_t k = 0; k < t.size(); ++k) acc[pl.to_child[k]] += std::exp(t[k] - mx);
      std::vector<double> u(nr);
      for (std::size_t k = 0; k < nr; ++k) u[k] = std::log(acc[k]) + mx;
      for (const auto& [f, idx] : pl.den)
        for (std::size_t k = 0; k < nr; ++k) {
          double lm = logm_[f][idx[k]];
          if (lm < floor_log) {
            lm = floor_log;
            clamped_ = true;
          }
          u[k] -= lm;
        }
      softmax_inplace(u);
      for (std::size_t k = 0; k < nr; ++k) {
        const double old = std::exp(logm_[e][k]);
        const double v = (1.0 - damping) * u[k] + damping * old;
        if (!std::isfinite(v)) throw NumericFault("gbp", "non-finite message on edge " + std::to_string(e));
        change = std::max(change, std::abs(v - old));
        logm_[e][k] = std::log(std::max(v, std::numeric_limits<double>::min()));
      }
    }
    return change;
  }

  std::vector<BeliefTable> beliefs() const {
    std::vector<BeliefTable> out;
    for (const auto& r : rg_.regions()) {
      const auto& bp = bplan_[std::size_t(r.id)];
      std::vector<double> t = bp.pot;
      for (const auto& [f, idx] : bp.msgs)
        for (std::size_t k = 0; k < t.size(); ++k) t[k] += logm_[f][idx[k]];
      softmax_inplace(t);
      for (double v : t)
        if (!std::isfinite(v)) throw NumericFault("gbp", "non-finite belief in region " + std::to_string(r.id));
      out.push_back(BeliefTable{r.vars, std::move(t)});
    }
    return out;
  }

  /// Σ over edges of |Σ_{S(P)\S(R)} b_P - b_R|_1.
  static double consistency_error(const RegionGraph& rg, const std::vector<BeliefTable>& b, const std::vector<int>& cards) {
    double err = 0.0;
    for (auto [p, c] : rg.edges()) {
      const auto m = marginalize(b[std::size_t(p)].table, rg.region(p).vars, rg.region(c).vars, cards);
      for (std::size_t k = 0; k < m.size(); ++k) err += std::abs(m[k] - b[std::size_t(c)].table[k]);
    }
    return err;
  }

 private:
  struct Use {
    std::size_t edge;
    std::vector<std::size_t> idx;
  };
  struct Plan {
    std::vector<double> pot;
    std::vector<std::size_t> to_child;
    std::vector<Use> num, den;
  };
  struct BeliefPlan {
    std::vector<double> pot;
    std::vector<Use> msgs;
  };

  const RegionGraph& rg_;
  const FactorGraph& fg_;
  GbpMessages sets_;
  std::vector<std::vector<double>> logm_;
  std::vector<Plan> plan_;
  std::vector<BeliefPlan> bplan_;
  std::vector<std::size_t> order_;
  bool clamped_ = false;
};

inline InferenceResult gbp_run(const RegionGraph& rg, const FactorGraph& fg, int max_iters = 1000, double tol = 1e-8,
                               double damping = 0.2) {
  Stopwatch sw;
  Gbp g(rg, fg);
  InferenceResult r;
  r.method = "gbp";
  if (g.sets().edges().empty()) {
    r.converged = true;
  } else {
    for (r.iterations = 0; r.iterations < max_iters;) {
      ++r.iterations;
      if (g.sweep(damping) < tol) {
        r.converged = true;
        break;
      }
    }
  }
  const auto b = g.beliefs();
  fill_marginals_from_regions(rg, fg, b, r);
  r.free_energy = region_free_energy(rg, b, fg);
  r.warning = g.clamped();
  if (r.warning) r.note = "message divisor clamped";
  r.runtime_ms = sw.ms();
  return r;
}

}  // namespace renn
