#pragma once

// Accuracy metrics of an approximate result against the exact oracle.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "renn/error.hpp"
#include "renn/exact.hpp"
#include "renn/model.hpp"
#include "renn/result.hpp"

namespace renn {

struct Metrics {
  double l1_error = 0.0;     // mean |est - exact| over all unary and edge-pair entries
  double pearson_rho = 0.0;
  bool degenerate = false;   // zero variance on either side, rho reported as 0
  double logz_error = 0.0;   // |-F - log Z|
  double runtime_ms = 0.0;
  bool converged = false;
};

inline double pearson(const std::vector<double>& a, const std::vector<double>& b, bool* degenerate = nullptr) {
  if (a.size() != b.size() || a.empty()) throw ContractViolation("pearson: vectors must be nonempty and equal length");
  const double n = double(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    ma += a[k];
    mb += b[k];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    sab += (a[k] - ma) * (b[k] - mb);
    saa += (a[k] - ma) * (a[k] - ma);
    sbb += (b[k] - mb) * (b[k] - mb);
  }
  if (saa <= 1e-300 || sbb <= 1e-300) {
    if (degenerate) *degenerate = true;
    return 0.0;
  }
  if (degenerate) *degenerate = false;
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

/// Unary entries (variable order) followed by each edge pair (fg.pair_edges
/// order), taken from the factor beliefs of the estimate.
inline std::vector<double> marginal_vector(const FactorGraph& fg, const InferenceResult& r) {
  if (int(r.unary.size()) != fg.num_vars()) throw ContractViolation("estimate lacks unary marginals");
  std::vector<double> out;
  for (int i = 0; i < fg.num_vars(); ++i) {
    if (int(r.unary[std::size_t(i)].size()) != fg.card(i)) throw ContractViolation("unary marginal size mismatch");
    out.insert(out.end(), r.unary[std::size_t(i)].begin(), r.unary[std::size_t(i)].end());
  }
  for (auto [i, j] : fg.pair_edges()) {
    const BeliefTable* hit = nullptr;
    for (const auto& b : r.factor_beliefs)
      if (b.scope == Scope{i, j}) {
        hit = &b;
        break;
      }
    if (!hit) throw ContractViolation("estimate lacks pairwise marginal " + scope_str({i, j}));
    out.insert(out.end(), hit->table.begin(), hit->table.end());
  }
  return out;
}

inline std::vector<double> marginal_vector(const FactorGraph&, const ExactResult& ex) {
  std::vector<double> out;
  for (const auto& u : ex.unary) out.insert(out.end(), u.begin(), u.end());
  for (const auto& p : ex.pairwise) out.insert(out.end(), p.table.begin(), p.table.end());
  return out;
}

inline Metrics compute_metrics(const FactorGraph& fg, const InferenceResult& est, const ExactResult& oracle) {
  const auto e = marginal_vector(fg, est);
  const auto o = marginal_vector(fg, oracle);
  if (e.size() != o.size()) throw ContractViolation("estimate and oracle marginal sets differ in size");
  Metrics m;
  for (std::size_t k = 0; k < e.size(); ++k) m.l1_error += std::abs(e[k] - o[k]);
  m.l1_error /= double(e.size());
  m.pearson_rho = pearson(e, o, &m.degenerate);
  m.logz_error = std::abs(-est.free_energy - oracle.log_Z);
  m.runtime_ms = est.runtime_ms;
  m.converged = est.converged;
  return m;
}

}  // namespace renn
