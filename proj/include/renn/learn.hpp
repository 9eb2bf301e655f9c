#pragma once

// Maximum-likelihood learning of Ising parameters. The partition function
// (and its gradient) comes from a pluggable inference backend.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "renn/classic.hpp"
#include "renn/error.hpp"
#include "renn/exact.hpp"
#include "renn/gbp.hpp"
#include "renn/model.hpp"
#include "renn/region_graph.hpp"
#include "renn/renn.hpp"
#include "renn/tensor.hpp"

namespace renn {

struct LearnConfig {
  double lr = 0.05;       // Adam step on theta
  int inner_steps = 20;   // renn backend: network steps per theta step
  int epochs = 200;
  int batch_size = 0;     // 0 = full batch
  std::string backend = "exact";  // exact | mf | lbp | dbp | gbp | renn
  std::uint64_t seed = 0;
  double init_scale = 0.01;
  double damping = 0.5;   // dbp only
  bool infinite_face = false;
  bool oracle_nll = true;  // also score with the exact log Z when enumerable
  RennConfig renn;

  void validate() const {
    static const std::vector<std::string> names{"exact", "mf", "lbp", "dbp", "gbp", "renn"};
    if (std::find(names.begin(), names.end(), backend) == names.end())
      throw ContractViolation("unknown learning backend '" + backend + "'");
    if (!(lr > 0.0)) throw ContractViolation("learning rate must be > 0");
    if (epochs < 0) throw ContractViolation("epochs must be >= 0");
    if (batch_size < 0) throw ContractViolation("batch size must be >= 0");
    if (backend == "renn" && inner_steps < 1) throw ContractViolation("renn backend needs inner steps >= 1");
    if (!(init_scale >= 0.0)) throw ContractViolation("init scale must be >= 0");
    renn.validate();
  }
};

/// theta layout follows the factor order of to_factor_graph: one coupling
/// per edge, then one field per variable.
inline std::vector<double> theta_of(const PairwiseMRF& m) {
  std::vector<double> t;
  for (const auto& e : m.edges) t.push_back(e.J);
  t.insert(t.end(), m.h.begin(), m.h.end());
  return t;
}

inline PairwiseMRF with_theta(PairwiseMRF m, const std::vector<double>& theta) {
  if (theta.size() != m.edges.size() + std::size_t(m.n)) throw ContractViolation("theta size mismatch");
  std::size_t k = 0;
  for (auto& e : m.edges) e.J = theta[k++];
  for (auto& h : m.h) h = theta[k++];
  return m;
}

/// Product of the spins of `scope` under the assignment `x` of that scope.
inline double spin_feature(const std::vector<int>& x) {
  double f = 1.0;
  for (int s : x) f *= spin_of(s);
  return f;
}

inline double expected_feature(const std::vector<double>& table, const Scope& scope, const std::vector<int>& cards) {
  double s = 0.0;
  for (std::size_t k = 0; k < table.size(); ++k) s += table[k] * spin_feature(decode_index(k, scope, cards));
  return s;
}

/// Mean sufficient statistics of the data, in theta layout.
inline std::vector<double> data_moments(const PairwiseMRF& m, const std::vector<Assignment>& data) {
  if (data.empty()) throw ContractViolation("empty dataset");
  std::vector<double> t(m.edges.size() + std::size_t(m.n), 0.0);
  for (const auto& x : data) {
    if (int(x.size()) != m.n) throw ContractViolation("sample has " + std::to_string(x.size()) + " values, model has " + std::to_string(m.n));
    for (int s : x)
      if (s < 0 || s > 1) throw ContractViolation("samples must be binary");
    std::size_t k = 0;
    for (const auto& e : m.edges) t[k++] += spin_of(x[std::size_t(e.i)]) * spin_of(x[std::size_t(e.j)]);
    for (int i = 0; i < m.n; ++i) t[k++] += spin_of(x[std::size_t(i)]);
  }
  for (double& v : t) v /= double(data.size());
  return t;
}

/// d(-F)/d theta for a free energy whose energy term reads each factor off
/// one belief (mean field, Bethe, exact).
inline std::vector<double> factor_moments(const FactorGraph& fg, const std::vector<BeliefTable>& factor_beliefs) {
  if (int(factor_beliefs.size()) != fg.num_factors()) throw ContractViolation("one belief per factor expected");
  std::vector<double> t;
  for (int a = 0; a < fg.num_factors(); ++a)
    t.push_back(expected_feature(factor_beliefs[std::size_t(a)].table, fg.factor(a).scope, fg.cards()));
  return t;
}

/// d(-F_R)/d theta at fixed beliefs: sum over regions of c_R times the
/// expected features of the factors the region holds.
inline std::vector<double> region_moments(const RegionGraph& rg, const FactorGraph& fg, const std::vector<BeliefTable>& beliefs) {
  if (int(beliefs.size()) != rg.size()) throw ContractViolation("one belief per region expected");
  std::vector<double> t(std::size_t(fg.num_factors()), 0.0);
  for (const auto& r : rg.regions()) {
    if (r.c == 0) continue;
    const auto& b = beliefs[std::size_t(r.id)];
    for (int a : r.factors) {
      const auto& sc = fg.factor(a).scope;
      t[std::size_t(a)] += r.c * expected_feature(marginalize(b.table, r.vars, sc, fg.cards()), sc, fg.cards());
    }
  }
  return t;
}

inline double nll_eval(const FactorGraph& fg, const std::vector<Assignment>& data, double log_z) {
  return nll_with_log_z(fg, data, log_z);
}

/// Partition-function estimate and model moments at one theta.
struct BackendEstimate {
  double log_z = 0.0;
  std::vector<double> moments;
};

/// Stateful so the renn backend can keep its network across theta steps.
class LearnBackend {
 public:
  LearnBackend(const PairwiseMRF& skeleton, const LearnConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    if (cfg_.backend == "gbp" || cfg_.backend == "renn") {
      structure_ = std::make_unique<FactorGraph>(to_factor_graph(skeleton));
      rg_ = std::make_unique<RegionGraph>(build_region_graph(*structure_, skeleton.topology, cfg_.infinite_face));
    }
  }

  BackendEstimate estimate(const PairwiseMRF& m) {
    const auto fg = to_factor_graph(m);
    const auto& b = cfg_.backend;
    if (b == "exact") {
      const auto ex = exact_inference(fg);
      return {ex.log_Z, factor_moments(fg, ex.factor_marginals)};
    }
    if (b == "mf" || b == "lbp" || b == "dbp") {
      const auto r = b == "mf" ? mean_field(fg) : loopy_bp(fg, 1000, 1e-8, b == "dbp" ? cfg_.damping : 0.0);
      return {-r.free_energy, factor_moments(fg, r.factor_beliefs)};
    }
    if (b == "gbp") {
      const auto r = gbp_run(*rg_, fg);
      return {-r.free_energy, region_moments(*rg_, fg, r.region_beliefs)};
    }
    if (!net_) net_ = std::make_unique<Renn>(*rg_, fg, cfg_.renn);
    net_->set_potentials(fg);
    for (int s = 0; s < cfg_.inner_steps; ++s) net_->step();
    // the last step moved the parameters; re-evaluate before reading beliefs
    net_->tape().replay();
    return {-net_->free_energy(), region_moments(*rg_, fg, net_->beliefs())};
  }

 private:
  LearnConfig cfg_;
  std::unique_ptr<FactorGraph> structure_;
  std::unique_ptr<RegionGraph> rg_;
  std::unique_ptr<Renn> net_;
};

/// Gradient of log Z_est - mean log p~(x) in theta layout.
inline std::vector<double> outer_gradient(const std::vector<double>& data_mom, const BackendEstimate& est) {
  if (data_mom.size() != est.moments.size()) throw ContractViolation("moment size mismatch");
  std::vector<double> g(data_mom.size());
  for (std::size_t k = 0; k < g.size(); ++k) g[k] = est.moments[k] - data_mom[k];
  return g;
}

struct LearnEpoch {
  int epoch = 0;
  double train_nll = 0.0;       // backend log Z
  double test_nll = 0.0;        // backend log Z
  double test_nll_exact = std::numeric_limits<double>::quiet_NaN();
  double log_z = 0.0;           // backend estimate
};

struct LearnResult {
  PairwiseMRF model;
  std::vector<LearnEpoch> trace;  // entry 0 is the initial theta
};

namespace detail {

template <class F>
auto with_epoch(int epoch, F&& f) -> decltype(f()) {
  const std::string at = "epoch " + std::to_string(epoch) + ": ";
  try {
    return f();
  } catch (const NumericFault& e) {
    throw NumericFault(e.where(), at + e.what());
  } catch (const CapacityError& e) {
    throw CapacityError(at + e.what());
  } catch (const ContractViolation& e) {
    throw ContractViolation(at + e.what());
  }
}

}  // namespace detail

inline LearnResult learn_mrf(const PairwiseMRF& structure, const std::vector<Assignment>& train,
                             const std::vector<Assignment>& test, const LearnConfig& cfg) {
  cfg.validate();
  structure.validate();
  if (train.empty()) throw ContractViolation("empty training set");
  data_moments(structure, train);
  if (!test.empty()) data_moments(structure, test);

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, cfg.init_scale > 0.0 ? cfg.init_scale : 1.0);
  ad::Tensor theta({structure.edges.size() + std::size_t(structure.n)}, 0.0);
  if (cfg.init_scale > 0.0)
    for (auto& v : theta.data()) v = normal(rng);
  ad::Adam adam(ad::AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});
  LearnBackend backend(structure, cfg);

  const bool oracle = cfg.oracle_nll && structure.n < 63 && (std::uint64_t(1) << structure.n) <= kMaxExactStates;
  auto record = [&](int epoch, const BackendEstimate& est) {
    const auto fg = to_factor_graph(with_theta(structure, theta.data()));
    LearnEpoch r;
    r.epoch = epoch;
    r.log_z = est.log_z;
    r.train_nll = nll_eval(fg, train, est.log_z);
    if (!test.empty()) {
      r.test_nll = nll_eval(fg, test, est.log_z);
      if (oracle) r.test_nll_exact = nll_exact(fg, test);
    }
    return r;
  };

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t(0));
  const std::size_t bs = cfg.batch_size == 0 ? train.size() : std::min(train.size(), std::size_t(cfg.batch_size));
  const auto full_mom = data_moments(structure, train);

  LearnResult out;
  auto est = detail::with_epoch(0, [&] { return backend.estimate(with_theta(structure, theta.data())); });
  out.trace.push_back(record(0, est));
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    if (bs < train.size()) std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t lo = 0; lo < train.size(); lo += bs) {
      std::vector<double> mom;
      if (bs == train.size()) {
        mom = full_mom;
      } else {
        std::vector<Assignment> batch;
        for (std::size_t k = lo; k < std::min(train.size(), lo + bs); ++k) batch.push_back(train[order[k]]);
        mom = data_moments(structure, batch);
      }
      const auto g = outer_gradient(mom, est);
      adam.step({&theta}, {ad::Tensor({g.size()}, g)});
      est = detail::with_epoch(epoch, [&] { return backend.estimate(with_theta(structure, theta.data())); });
    }
    for (double v : theta.data())
      if (!std::isfinite(v)) throw NumericFault("learn", "epoch " + std::to_string(epoch) + ": non-finite parameter");
    out.trace.push_back(record(epoch, est));
  }
  out.model = with_theta(structure, theta.data());
  return out;
}

/// Native model text followed by one `# epoch k nll v` line per trace entry.
inline std::string serialize_checkpoint(const LearnResult& r) {
  std::string s = serialize_model(r.model);
  for (const auto& e : r.trace)
    s += "# epoch " + std::to_string(e.epoch) + " nll " + detail::fmt_double(e.test_nll) + '\n';
  return s;
}

}  // namespace renn
