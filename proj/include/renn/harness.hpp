#pragma once

// Benchmark sweeps: random Ising instances x inference methods, scored
// against the exact oracle, emitted as CSV.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "renn/classic.hpp"
#include "renn/error.hpp"
#include "renn/exact.hpp"
#include "renn/gbp.hpp"
#include "renn/metrics.hpp"
#include "renn/model.hpp"
#include "renn/region_graph.hpp"
#include "renn/renn.hpp"

namespace renn {

/// `grid:R,C` or `complete:N`.
inline Topology parse_topology(const std::string& s) {
  auto num = [&](const std::string& t) {
    std::size_t pos = 0;
    int v = 0;
    try {
      v = std::stoi(t, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos == 0 || pos != t.size() || v < 1) throw ContractViolation("bad topology '" + s + "'");
    return v;
  };
  if (s.rfind("grid:", 0) == 0) {
    const auto rest = s.substr(5);
    const auto c = rest.find(',');
    if (c == std::string::npos) throw ContractViolation("bad topology '" + s + "', expected grid:R,C");
    return Topology::grid(num(rest.substr(0, c)), num(rest.substr(c + 1)));
  }
  if (s.rfind("complete:", 0) == 0) return Topology::complete(num(s.substr(9)));
  throw ContractViolation("unknown topology '" + s + "', expected grid:R,C or complete:N");
}

struct MethodOptions {
  double damping = 0.5;  // dbp
  int max_iters = 1000;
  double tol = 1e-8;
  bool infinite_face = false;
  RennConfig renn;
};

inline const std::vector<std::string>& method_names() {
  static const std::vector<std::string> names{"mf", "lbp", "dbp", "gbp", "renn", "renn-bethe", "exact"};
  return names;
}

inline InferenceResult run_method(const std::string& method, const FactorGraph& fg, const Topology& t,
                                  const MethodOptions& o) {
  if (method == "mf") return mean_field(fg, o.max_iters, o.tol);
  if (method == "lbp") return loopy_bp(fg, o.max_iters, o.tol, 0.0);
  if (method == "dbp") return loopy_bp(fg, o.max_iters, o.tol, o.damping);
  if (method == "gbp") return gbp_run(build_region_graph(fg, t, o.infinite_face), fg, o.max_iters, o.tol);
  if (method == "renn") return renn_infer(fg, build_region_graph(fg, t, o.infinite_face), o.renn, "renn");
  if (method == "renn-bethe") return renn_infer(fg, bethe_region_graph(fg), o.renn, "renn-bethe");
  if (method == "exact") {
    Stopwatch sw;
    const auto ex = exact_inference(fg);
    InferenceResult r;
    r.method = "exact";
    r.unary = ex.unary;
    r.factor_beliefs = ex.factor_marginals;
    r.free_energy = -ex.log_Z;
    r.converged = true;
    r.runtime_ms = sw.ms();
    return r;
  }
  throw ContractViolation("unknown method '" + method + "'");
}

struct SweepConfig {
  std::vector<std::string> topologies{"grid:5,5"};
  std::vector<double> gammas{0.1, 1.0};
  std::vector<std::uint64_t> seeds{0};
  std::vector<std::string> methods{"mf", "lbp", "dbp", "gbp", "renn"};
  MethodOptions options;
};

/// Line-oriented `key = value`; list values are whitespace separated.
/// `seeds` takes either a list or a range `A..B` (inclusive).
inline SweepConfig parse_sweep_config(const std::string& text) {
  SweepConfig c;
  std::istringstream in(text);
  std::string line;
  int ln = 0;
  auto words = [](const std::string& v) {
    std::vector<std::string> out;
    std::istringstream s(v);
    for (std::string w; s >> w;) out.push_back(w);
    return out;
  };
  while (std::getline(in, line)) {
    ++ln;
    if (auto p = line.find('#'); p != std::string::npos) line.erase(p);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(ln, "expected 'key = value'");
    const auto kw = words(line.substr(0, eq));
    if (kw.size() != 1) throw ParseError(ln, "expected a single key before '='");
    const std::string& key = kw[0];
    const auto vals = words(line.substr(eq + 1));
    if (vals.empty()) throw ParseError(ln, "missing value for '" + key + "'");
    auto one = [&]() -> const std::string& {
      if (vals.size() != 1) throw ParseError(ln, "'" + key + "' takes one value");
      return vals[0];
    };
    auto real = [&](const std::string& v) { return detail::parse_double(v, ln); };
    auto integer = [&](const std::string& v) { return detail::parse_int(v, ln); };
    try {
      if (key == "topologies") {
        c.topologies = vals;
        for (const auto& t : vals) parse_topology(t);
      } else if (key == "gammas") {
        c.gammas.clear();
        for (const auto& v : vals) c.gammas.push_back(real(v));
        for (double g : c.gammas)
          if (!(g >= 0.0)) throw ParseError(ln, "gammas must be non-negative");
      } else if (key == "seeds") {
        c.seeds.clear();
        if (vals.size() == 1 && vals[0].find("..") != std::string::npos) {
          const auto p = vals[0].find("..");
          const long a = integer(vals[0].substr(0, p)), b = integer(vals[0].substr(p + 2));
          if (a < 0 || b < a) throw ParseError(ln, "bad seed range '" + vals[0] + "'");
          for (long s = a; s <= b; ++s) c.seeds.push_back(std::uint64_t(s));
        } else {
          for (const auto& v : vals) {
            const long s = integer(v);
            if (s < 0) throw ParseError(ln, "seeds must be non-negative");
            c.seeds.push_back(std::uint64_t(s));
          }
        }
      } else if (key == "methods") {
        for (const auto& m : vals)
          if (std::find(method_names().begin(), method_names().end(), m) == method_names().end())
            throw ParseError(ln, "unknown method '" + m + "'");
        c.methods = vals;
      } else if (key == "infinite_face") {
        const auto& v = one();
        if (v != "true" && v != "false") throw ParseError(ln, "infinite_face must be true or false");
        c.options.infinite_face = v == "true";
      } else if (key == "damping") {
        c.options.damping = real(one());
      } else if (key == "max_iters") {
        c.options.max_iters = int(integer(one()));
      } else if (key == "tol") {
        c.options.tol = real(one());
      } else if (key == "lambda") {
        c.options.renn.lambda = real(one());
      } else if (key == "lr") {
        c.options.renn.lr = real(one());
      } else if (key == "max_epochs") {
        c.options.renn.max_epochs = int(integer(one()));
      } else {
        throw ParseError(ln, "unknown key '" + key + "'");
      }
      c.options.renn.validate();
    } catch (const ContractViolation& e) {
      throw ParseError(ln, e.what());
    }
  }
  return c;
}

struct BenchRow {
  std::string method;
  std::string topology;
  int n = 0;
  double gamma = 0.0;
  std::string seed;  // seed number, or "mean" / "std" on aggregate rows
  Metrics metrics;
  double free_energy = 0.0;
  std::string status = "ok";
};

namespace detail {

inline BenchRow aggregate(const std::vector<BenchRow>& cell, bool std_row) {
  BenchRow a = cell.front();
  a.seed = std_row ? "std" : "mean";
  std::vector<const BenchRow*> ok;
  for (const auto& r : cell)
    if (r.status == "ok") ok.push_back(&r);
  a.status = "ok " + std::to_string(ok.size()) + "/" + std::to_string(cell.size());
  auto stat = [&](auto get) {
    if (ok.empty()) return std::nan("");
    double m = 0.0;
    for (auto* r : ok) m += get(*r);
    m /= double(ok.size());
    if (!std_row) return m;
    if (ok.size() < 2) return 0.0;
    double v = 0.0;
    for (auto* r : ok) v += (get(*r) - m) * (get(*r) - m);
    return std::sqrt(v / double(ok.size() - 1));
  };
  a.metrics.l1_error = stat([](const BenchRow& r) { return r.metrics.l1_error; });
  a.metrics.pearson_rho = stat([](const BenchRow& r) { return r.metrics.pearson_rho; });
  a.metrics.logz_error = stat([](const BenchRow& r) { return r.metrics.logz_error; });
  a.metrics.runtime_ms = stat([](const BenchRow& r) { return r.metrics.runtime_ms; });
  a.metrics.converged = !ok.empty();
  for (auto* r : ok) a.metrics.converged = a.metrics.converged && r->metrics.converged;
  a.free_energy = stat([](const BenchRow& r) { return r.free_energy; });
  return a;
}

inline std::string csv_field(std::string s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char ch : s) {
    if (ch == '"') q += '"';
    q += ch == '\n' ? ' ' : ch;
  }
  return q + "\"";
}

}  // namespace detail

/// Per (topology, gamma, seed) cell: one model, one oracle, every method.
/// Result rows come in cell order; each (topology, gamma, method) group is
/// followed by its mean and std rows.
inline std::vector<BenchRow> run_benchmark(const SweepConfig& cfg) {
  std::vector<BenchRow> out;
  for (const auto& ts : cfg.topologies) {
    const Topology t = parse_topology(ts);
    for (double gamma : cfg.gammas) {
      std::vector<std::vector<BenchRow>> by_method(cfg.methods.size());
      for (std::uint64_t seed : cfg.seeds) {
        const auto fg = to_factor_graph(random_ising(t, gamma, seed));
        ExactResult oracle;
        std::string cell_error;
        try {
          oracle = exact_inference(fg);
        } catch (const std::exception& e) {
          cell_error = std::string("error: oracle: ") + e.what();
        }
        for (std::size_t k = 0; k < cfg.methods.size(); ++k) {
          BenchRow row;
          row.method = cfg.methods[k];
          row.topology = ts;
          row.n = t.n;
          row.gamma = gamma;
          row.seed = std::to_string(seed);
          if (!cell_error.empty()) {
            row.status = cell_error;
          } else {
            try {
              MethodOptions o = cfg.options;
              o.renn.seed = seed;
              const auto r = run_method(row.method, fg, t, o);
              row.metrics = compute_metrics(fg, r, oracle);
              row.free_energy = r.free_energy;
              if (!std::isfinite(r.free_energy)) row.status = "error: non-finite free energy";
            } catch (const std::exception& e) {
              row.status = std::string("error: ") + e.what();
            }
          }
          out.push_back(row);
          by_method[k].push_back(row);
        }
      }
      for (const auto& cell : by_method) {
        if (cell.empty()) continue;
        out.push_back(detail::aggregate(cell, false));
        out.push_back(detail::aggregate(cell, true));
      }
    }
  }
  return out;
}

inline std::string bench_csv_header() {
  return "method,topology,n,gamma,seed,l1_error,pearson_rho,logz_error,free_energy,runtime_ms,converged,status\n";
}

/// `with_runtime = false` blanks the timing column so reruns compare
/// byte for byte.
inline std::string to_csv(const std::vector<BenchRow>& rows, bool with_runtime = true) {
  std::string s = bench_csv_header();
  for (const auto& r : rows) {
    const bool err = r.status.rfind("error", 0) == 0;
    auto num = [&](double v) { return err ? std::string() : detail::fmt_double(v); };
    s += detail::csv_field(r.method) + ',' + detail::csv_field(r.topology) + ',' + std::to_string(r.n) + ',' +
         detail::fmt_double(r.gamma) + ',' + r.seed + ',' + num(r.metrics.l1_error) + ',' + num(r.metrics.pearson_rho) +
         ',' + num(r.metrics.logz_error) + ',' + num(r.free_energy) + ',' +
         (with_runtime ? num(r.metrics.runtime_ms) : std::string()) + ',' + (err ? "" : r.metrics.converged ? "1" : "0") +
         ',' + detail::csv_field(r.status) + '\n';
  }
  return s;
}

}  // namespace renn
