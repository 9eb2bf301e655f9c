#pragma once

// Pairwise Ising models, their factor graphs, and the two text formats:
// the native line format and UAI MARKOV (read, plus write for round trips).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "renn/error.hpp"
#include "renn/table.hpp"

namespace renn {

struct Topology {
  enum class Kind { Grid, Complete, Custom };
  Kind kind = Kind::Custom;
  int rows = 0;
  int cols = 0;
  int n = 0;
  std::vector<std::pair<int, int>> custom_edges;

  static Topology grid(int rows, int cols) {
    if (rows < 1 || cols < 1) throw ContractViolation("grid topology needs positive dimensions");
    return Topology{Kind::Grid, rows, cols, rows * cols, {}};
  }
  static Topology complete(int n) {
    if (n < 1) throw ContractViolation("complete topology needs n >= 1");
    return Topology{Kind::Complete, 0, 0, n, {}};
  }
  static Topology custom(int n, std::vector<std::pair<int, int>> edges) {
    if (n < 1) throw ContractViolation("custom topology needs n >= 1");
    return Topology{Kind::Custom, 0, 0, n, std::move(edges)};
  }

  int num_nodes() const noexcept { return n; }

  std::string str() const {
    switch (kind) {
      case Kind::Grid: return "grid:" + std::to_string(rows) + "," + std::to_string(cols);
      case Kind::Complete: return "complete:" + std::to_string(n);
      default: return "custom:" + std::to_string(n);
    }
  }

  /// Edge list with i < j. Grid order: each row's horizontal edges, then the
  /// vertical edges down to the next row (matches the A..G lettering of the
  /// 2x3 example).
  std::vector<std::pair<int, int>> edges() const {
    std::vector<std::pair<int, int>> out;
    switch (kind) {
      case Kind::Grid:
        for (int r = 0; r < rows; ++r) {
          for (int c = 0; c + 1 < cols; ++c) out.emplace_back(r * cols + c, r * cols + c + 1);
          if (r + 1 < rows)
            for (int c = 0; c < cols; ++c) out.emplace_back(r * cols + c, (r + 1) * cols + c);
        }
        break;
      case Kind::Complete:
        for (int i = 0; i < n; ++i)
          for (int j = i + 1; j < n; ++j) out.emplace_back(i, j);
        break;
      case Kind::Custom:
        for (auto [i, j] : custom_edges) out.emplace_back(std::min(i, j), std::max(i, j));
        break;
    }
    return out;
  }
};

struct Edge {
  int i = 0;
  int j = 0;
  double J = 0.0;
  bool operator==(const Edge&) const = default;
};

/// Binary pairwise MRF p(x) ∝ exp(Σ J_ij s_i s_j + Σ h_i s_i), s ∈ {-1,+1}.
struct PairwiseMRF {
  int n = 0;
  int K = 2;
  std::vector<double> h;
  std::vector<Edge> edges;
  Topology topology;

  void validate() const {
    if (n < 1) throw ContractViolation("model needs at least one variable");
    if (K != 2) throw ContractViolation("pairwise Ising models are binary (K = 2)");
    if (int(h.size()) != n) throw ContractViolation("node potential count != n");
    for (double v : h)
      if (!std::isfinite(v)) throw ContractViolation("non-finite node potential");
    std::vector<std::pair<int, int>> seen;
    for (const auto& e : edges) {
      if (e.i < 0 || e.j < 0 || e.i >= n || e.j >= n)
        throw ContractViolation("edge index out of range: " + std::to_string(e.i) + "-" + std::to_string(e.j));
      if (e.i >= e.j) throw ContractViolation("edges must satisfy i < j (no self edges)");
      if (!std::isfinite(e.J)) throw ContractViolation("non-finite edge potential");
      seen.emplace_back(e.i, e.j);
    }
    std::sort(seen.begin(), seen.end());
    if (std::adjacent_find(seen.begin(), seen.end()) != seen.end()) throw ContractViolation("duplicate edge");
  }

  bool operator==(const PairwiseMRF& o) const {
    return n == o.n && K == o.K && h == o.h && edges == o.edges && topology.kind == o.topology.kind &&
           topology.rows == o.topology.rows && topology.cols == o.topology.cols;
  }
};

/// State index 0 is spin -1, index 1 is spin +1.
inline constexpr int spin_of(int state) noexcept { return state == 0 ? -1 : 1; }
inline constexpr int state_of(int spin) noexcept { return spin < 0 ? 0 : 1; }

using Assignment = std::vector<int>;

struct Factor {
  Scope scope;                    // sorted ascending
  std::vector<double> log_table;  // log ψ_a, row-major over scope
  bool unary = false;
};

class FactorGraph {
 public:
  FactorGraph() = default;
  FactorGraph(std::vector<int> cards, std::vector<Factor> factors)
      : cards_(std::move(cards)), factors_(std::move(factors)) {
    for (int c : cards_)
      if (c < 1) throw ContractViolation("variable cardinality must be positive");
    var_factors_.assign(cards_.size(), {});
    for (std::size_t a = 0; a < factors_.size(); ++a) {
      const auto& f = factors_[a];
      if (f.scope.empty()) throw ContractViolation("factor with empty scope");
      if (!std::is_sorted(f.scope.begin(), f.scope.end()) ||
          std::adjacent_find(f.scope.begin(), f.scope.end()) != f.scope.end())
        throw ContractViolation("factor scope must be sorted without repeats");
      for (int v : f.scope)
        if (v < 0 || v >= num_vars()) throw ContractViolation("factor scope variable out of range");
      if (f.log_table.size() != table_size(f.scope, cards_))
        throw ContractViolation("factor table size does not match its scope");
      for (int v : f.scope) var_factors_[std::size_t(v)].push_back(int(a));
    }
  }

  int num_vars() const noexcept { return int(cards_.size()); }
  int num_factors() const noexcept { return int(factors_.size()); }
  int card(int v) const { return cards_.at(std::size_t(v)); }
  const std::vector<int>& cards() const noexcept { return cards_; }
  const Factor& factor(int a) const { return factors_.at(std::size_t(a)); }
  const std::vector<Factor>& factors() const noexcept { return factors_; }
  /// ne_i: factors touching variable i, ascending.
  const std::vector<int>& var_factors(int v) const { return var_factors_.at(std::size_t(v)); }

  /// Number of joint states, saturating at UINT64_MAX.
  std::uint64_t state_count() const {
    std::uint64_t n = 1;
    for (int c : cards_) {
      if (n > UINT64_MAX / std::uint64_t(c)) return UINT64_MAX;
      n *= std::uint64_t(c);
    }
    return n;
  }

  std::size_t entry_index(int a, const Assignment& x) const {
    const auto& f = factors_.at(std::size_t(a));
    std::size_t idx = 0;
    for (int v : f.scope) idx = idx * std::size_t(cards_[std::size_t(v)]) + std::size_t(x[std::size_t(v)]);
    return idx;
  }

  /// True when every factor has one or two variables.
  bool is_pairwise() const {
    return std::all_of(factors_.begin(), factors_.end(), [](const Factor& f) { return f.scope.size() <= 2; });
  }

  /// Distinct variable pairs carrying a two-variable factor, ascending.
  std::vector<std::pair<int, int>> pair_edges() const {
    std::vector<std::pair<int, int>> out;
    for (const auto& f : factors_)
      if (f.scope.size() == 2) out.emplace_back(f.scope[0], f.scope[1]);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

 private:
  std::vector<int> cards_;
  std::vector<Factor> factors_;
  std::vector<std::vector<int>> var_factors_;
};

// ---------------------------------------------------------------------------

/// J_ij ~ N(0,1) per edge (in topology edge order), then h_i ~ N(0, gamma^2).
inline PairwiseMRF random_ising(const Topology& topology, double gamma, std::uint64_t seed) {
  if (!(gamma >= 0.0)) throw ContractViolation("gamma must be non-negative");
  if (topology.kind == Topology::Kind::Grid && (topology.rows < 1 || topology.cols < 1))
    throw ContractViolation("invalid grid dimensions");
  if (topology.n < 1) throw ContractViolation("topology has no nodes");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  PairwiseMRF m;
  m.n = topology.n;
  m.topology = topology;
  for (auto [i, j] : topology.edges()) m.edges.push_back(Edge{i, j, normal(rng)});
  m.h.assign(std::size_t(m.n), 0.0);
  for (auto& v : m.h) v = gamma * normal(rng);
  m.validate();
  return m;
}

/// One pairwise factor per edge (same order as mrf.edges), then one unary
/// factor per variable.
inline FactorGraph to_factor_graph(const PairwiseMRF& mrf) {
  mrf.validate();
  std::vector<Factor> fs;
  fs.reserve(mrf.edges.size() + std::size_t(mrf.n));
  for (const auto& e : mrf.edges) {
    Factor f;
    f.scope = {e.i, e.j};
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b) f.log_table.push_back(e.J * spin_of(a) * spin_of(b));
    fs.push_back(std::move(f));
  }
  for (int i = 0; i < mrf.n; ++i) {
    Factor f;
    f.scope = {i};
    f.log_table = {-mrf.h[std::size_t(i)], mrf.h[std::size_t(i)]};
    f.unary = true;
    fs.push_back(std::move(f));
  }
  return FactorGraph(std::vector<int>(std::size_t(mrf.n), 2), std::move(fs));
}

inline void check_assignment(const FactorGraph& fg, const Assignment& x) {
  if (int(x.size()) != fg.num_vars()) throw ContractViolation("assignment length != variable count");
  for (int v = 0; v < fg.num_vars(); ++v)
    if (x[std::size_t(v)] < 0 || x[std::size_t(v)] >= fg.card(v))
      throw ContractViolation("assignment state out of range at variable " + std::to_string(v));
}

/// Σ_a log ψ_a(x_a)
inline double log_score(const FactorGraph& fg, const Assignment& x) {
  check_assignment(fg, x);
  double s = 0.0;
  for (int a = 0; a < fg.num_factors(); ++a) s += fg.factor(a).log_table[fg.entry_index(a, x)];
  return s;
}

/// Σ J_ij s_i s_j + Σ h_i s_i computed straight from the Ising parameters.
inline double log_score(const PairwiseMRF& mrf, const Assignment& x) {
  if (int(x.size()) != mrf.n) throw ContractViolation("assignment length != variable count");
  double s = 0.0;
  for (const auto& e : mrf.edges) s += e.J * spin_of(x[std::size_t(e.i)]) * spin_of(x[std::size_t(e.j)]);
  for (int i = 0; i < mrf.n; ++i) s += mrf.h[std::size_t(i)] * spin_of(x[std::size_t(i)]);
  return s;
}

// ---------------------------------------------------------------------------
// Text formats

namespace detail {

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline double parse_double(const std::string& tok, int line) {
  try {
    std::size_t pos = 0;
    double v = std::stod(tok, &pos);
    if (pos != tok.size()) throw ParseError(line, "bad number '" + tok + "'");
    return v;
  } catch (const std::invalid_argument&) {
    throw ParseError(line, "bad number '" + tok + "'");
  } catch (const std::out_of_range&) {
    throw ParseError(line, "number out of range '" + tok + "'");
  }
}

inline long parse_int(const std::string& tok, int line) {
  try {
    std::size_t pos = 0;
    long v = std::stol(tok, &pos);
    if (pos != tok.size()) throw ParseError(line, "bad integer '" + tok + "'");
    return v;
  } catch (const std::invalid_argument&) {
    throw ParseError(line, "bad integer '" + tok + "'");
  } catch (const std::out_of_range&) {
    throw ParseError(line, "integer out of range '" + tok + "'");
  }
}

struct Token {
  std::string text;
  int line;
};

/// Whitespace tokens with line numbers; '#' starts a comment.
inline std::vector<Token> tokenize(const std::string& text) {
  std::vector<Token> out;
  std::istringstream in(text);
  std::string line;
  int ln = 0;
  while (std::getline(in, line)) {
    ++ln;
    if (auto p = line.find('#'); p != std::string::npos) line.erase(p);
    std::istringstream ls(line);
    std::string tok;
    while (ls >> tok) out.push_back({tok, ln});
  }
  return out;
}

inline PairwiseMRF parse_native(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int ln = 0;
  PairwiseMRF m;
  bool have_header = false;
  bool have_topology = false;
  while (std::getline(in, line)) {
    ++ln;
    if (auto p = line.find('#'); p != std::string::npos) line.erase(p);
    std::istringstream ls(line);
    std::vector<std::string> t;
    for (std::string tok; ls >> tok;) t.push_back(tok);
    if (t.empty()) continue;
    if (!have_header) {
      if (t[0] != "ising" || t.size() != 2) throw ParseError(ln, "expected header 'ising <n>'");
      const long n = parse_int(t[1], ln);
      if (n < 1) throw ParseError(ln, "variable count must be positive");
      m.n = int(n);
      m.h.assign(std::size_t(n), 0.0);
      m.topology = Topology::custom(m.n, {});
      have_header = true;
      continue;
    }
    auto index = [&](const std::string& tok) {
      const long v = parse_int(tok, ln);
      if (v < 0 || v >= m.n) throw ParseError(ln, "variable index out of range: " + tok);
      return int(v);
    };
    if (t[0] == "node") {
      if (t.size() != 3) throw ParseError(ln, "expected 'node <i> <h>'");
      m.h[std::size_t(index(t[1]))] = parse_double(t[2], ln);
    } else if (t[0] == "edge") {
      if (t.size() != 4) throw ParseError(ln, "expected 'edge <i> <j> <J>'");
      int i = index(t[1]), j = index(t[2]);
      if (i == j) throw ParseError(ln, "self edge");
      if (i > j) std::swap(i, j);
      m.edges.push_back(Edge{i, j, parse_double(t[3], ln)});
    } else if (t[0] == "topology") {
      if (t.size() == 4 && t[1] == "grid") {
        const int r = int(parse_int(t[2], ln)), c = int(parse_int(t[3], ln));
        if (r * c != m.n) throw ParseError(ln, "grid dimensions do not match n");
        m.topology = Topology::grid(r, c);
      } else if (t.size() == 2 && t[1] == "complete") {
        m.topology = Topology::complete(m.n);
      } else if (t.size() == 2 && t[1] == "custom") {
        m.topology = Topology::custom(m.n, {});
      } else {
        throw ParseError(ln, "expected 'topology grid <rows> <cols>' or 'topology complete'");
      }
      have_topology = true;
    } else {
      throw ParseError(ln, "unknown directive '" + t[0] + "'");
    }
  }
  if (!have_header) throw ParseError(ln, "missing 'ising <n>' header");
  if (!have_topology || m.topology.kind == Topology::Kind::Custom) {
    std::vector<std::pair<int, int>> es;
    for (const auto& e : m.edges) es.emplace_back(e.i, e.j);
    m.topology = Topology::custom(m.n, std::move(es));
  }
  try {
    m.validate();
  } catch (const ContractViolation& e) {
    throw ParseError(ln, e.what());
  }
  return m;
}

inline FactorGraph parse_uai(const std::string& text) {
  const auto toks = tokenize(text);
  std::size_t p = 0;
  auto next = [&](const char* what) -> const Token& {
    if (p >= toks.size()) throw ParseError(toks.empty() ? 1 : toks.back().line, std::string("unexpected end of input, expected ") + what);
    return toks[p++];
  };
  auto next_int = [&](const char* what) {
    const auto& t = next(what);
    return std::pair{parse_int(t.text, t.line), t.line};
  };
  const auto& head = next("MARKOV");
  if (head.text != "MARKOV") throw ParseError(head.line, "expected 'MARKOV' preamble, got '" + head.text + "'");
  auto [n, ln_n] = next_int("variable count");
  if (n < 1) throw ParseError(ln_n, "variable count must be positive");
  std::vector<int> cards;
  for (long i = 0; i < n; ++i) {
    auto [c, ln] = next_int("cardinality");
    if (c < 1) throw ParseError(ln, "cardinality must be positive");
    cards.push_back(int(c));
  }
  auto [nf, ln_f] = next_int("factor count");
  if (nf < 0) throw ParseError(ln_f, "negative factor count");
  std::vector<std::vector<int>> scopes;
  for (long a = 0; a < nf; ++a) {
    auto [k, ln] = next_int("scope size");
    if (k < 1) throw ParseError(ln, "scope size must be positive");
    std::vector<int> s;
    for (long q = 0; q < k; ++q) {
      auto [v, lv] = next_int("scope variable");
      if (v < 0 || v >= n) throw ParseError(lv, "scope variable out of range");
      s.push_back(int(v));
    }
    auto sorted = s;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) throw ParseError(ln, "repeated variable in scope");
    scopes.push_back(std::move(s));
  }
  std::vector<Factor> fs;
  for (long a = 0; a < nf; ++a) {
    const auto& raw = scopes[std::size_t(a)];
    auto [cnt, ln] = next_int("table entry count");
    const std::size_t expect = table_size(raw, cards);
    if (cnt < 0 || std::size_t(cnt) != expect)
      throw ParseError(ln, "factor " + std::to_string(a) + " expects " + std::to_string(expect) + " entries");
    std::vector<double> vals;
    for (std::size_t q = 0; q < expect; ++q) {
      const auto& t = next("table entry");
      const double v = parse_double(t.text, t.line);
      if (!(v > 0.0))
        throw DomainError("line " + std::to_string(t.line) + ": non-positive table entry " + t.text +
                          " (log undefined)");
      vals.push_back(std::log(v));
    }
    // Re-express the table over the sorted scope.
    Factor f;
    f.scope = raw;
    std::sort(f.scope.begin(), f.scope.end());
    f.unary = f.scope.size() == 1;
    f.log_table.assign(expect, 0.0);
    const auto raw_strides = table_strides(raw, cards);
    for (std::size_t q = 0; q < expect; ++q) {
      const auto x = decode_index(q, f.scope, cards);
      std::size_t r = 0;
      for (std::size_t k = 0; k < f.scope.size(); ++k) {
        const auto pos = std::size_t(std::find(raw.begin(), raw.end(), f.scope[k]) - raw.begin());
        r += std::size_t(x[k]) * raw_strides[pos];
      }
      f.log_table[q] = vals[r];
    }
    fs.push_back(std::move(f));
  }
  if (p != toks.size()) throw ParseError(toks[p].line, "trailing tokens after last table");
  return FactorGraph(std::move(cards), std::move(fs));
}

}  // namespace detail

using Model = std::variant<PairwiseMRF, FactorGraph>;

/// Dispatches on the first token: `ising` (native) or `MARKOV` (UAI).
inline Model parse_model(const std::string& text) {
  const auto toks = detail::tokenize(text);
  if (toks.empty()) throw ParseError(1, "empty model text");
  if (toks[0].text == "ising") return detail::parse_native(text);
  if (toks[0].text == "MARKOV") return detail::parse_uai(text);
  throw ParseError(toks[0].line, "unknown model format '" + toks[0].text + "'");
}

inline std::string serialize_model(const PairwiseMRF& m) {
  std::ostringstream os;
  os << "ising " << m.n << '\n';
  if (m.topology.kind == Topology::Kind::Grid)
    os << "topology grid " << m.topology.rows << ' ' << m.topology.cols << '\n';
  else if (m.topology.kind == Topology::Kind::Complete)
    os << "topology complete\n";
  for (int i = 0; i < m.n; ++i) os << "node " << i << ' ' << detail::fmt_double(m.h[std::size_t(i)]) << '\n';
  for (const auto& e : m.edges) os << "edge " << e.i << ' ' << e.j << ' ' << detail::fmt_double(e.J) << '\n';
  return os.str();
}

inline std::string serialize_model(const FactorGraph& fg) {
  std::ostringstream os;
  os << "MARKOV\n" << fg.num_vars() << '\n';
  for (int v = 0; v < fg.num_vars(); ++v) os << (v ? " " : "") << fg.card(v);
  os << '\n' << fg.num_factors() << '\n';
  for (const auto& f : fg.factors()) {
    os << f.scope.size();
    for (int v : f.scope) os << ' ' << v;
    os << '\n';
  }
  for (const auto& f : fg.factors()) {
    os << '\n' << f.log_table.size() << '\n';
    for (std::size_t q = 0; q < f.log_table.size(); ++q)
      os << (q ? " " : "") << detail::fmt_double(std::exp(f.log_table[q]));
    os << '\n';
  }
  return os.str();
}

inline FactorGraph as_factor_graph(const Model& m) {
  if (const auto* mrf = std::get_if<PairwiseMRF>(&m)) return to_factor_graph(*mrf);
  return std::get<FactorGraph>(m);
}

}  // namespace renn
