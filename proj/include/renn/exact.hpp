#pragma once

// Brute-force reference computations by enumerating every joint state.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "renn/error.hpp"
#include "renn/model.hpp"
#include "renn/table.hpp"

namespace renn {

/// Largest joint state space the enumerator accepts (2^25, enough for a 5x5
/// binary grid).
inline constexpr std::uint64_t kMaxExactStates = std::uint64_t(1) << 25;

struct ExactResult {
  double log_Z = 0.0;
  double expected_log_score = 0.0;              // E_p[log p~(x)]
  std::vector<std::vector<double>> unary;       // [n][K]
  std::vector<BeliefTable> factor_marginals;    // one per factor, factor order
  std::vector<BeliefTable> pairwise;            // one per fg.pair_edges() entry
  std::vector<BeliefTable> extra;               // requested scopes, in order

  double entropy() const { return log_Z - expected_log_score; }

  /// p(x_i, x_j) laid out over (x_i, x_j) in the given argument order.
  std::vector<double> pair(int i, int j, const std::vector<int>& cards) const {
    const Scope want{std::min(i, j), std::max(i, j)};
    for (const auto& b : pairwise) {
      if (b.scope != want) continue;
      if (i < j) return b.table;
      const int ki = cards[std::size_t(i)], kj = cards[std::size_t(j)];
      std::vector<double> t(std::size_t(ki * kj));
      for (int a = 0; a < ki; ++a)
        for (int c = 0; c < kj; ++c) t[std::size_t(a * kj + c)] = b.table[std::size_t(c * ki + a)];
      return t;
    }
    throw QueryError("no pairwise marginal for " + std::to_string(i) + "," + std::to_string(j));
  }
};

namespace detail {

inline void check_capacity(const FactorGraph& fg, std::uint64_t limit) {
  const auto states = fg.state_count();
  if (states > limit)
    throw CapacityError("exhaustive enumeration of " + std::to_string(fg.num_vars()) + " variables (" +
                        (states == UINT64_MAX ? std::string("overflow") : std::to_string(states)) +
                        " states) exceeds the limit of " + std::to_string(limit));
}

/// Walks all joint states in lexicographic order (last variable fastest),
/// split into fixed chunks over a prefix of the variables so work can be
/// spread across threads while every chunk's result stays the same.
class Enumerator {
 public:
  Enumerator(const FactorGraph& fg, std::vector<Scope> tracked) : fg_(fg), tracked_(std::move(tracked)) {
    const int n = fg.num_vars();
    for (const auto& f : fg.factors()) scopes_.push_back(f.scope);
    // tracked scopes equal to an earlier scope share its slot
    for (const auto& s : tracked_) {
      const auto it = std::find(scopes_.begin(), scopes_.end(), s);
      slot_.push_back(std::size_t(it - scopes_.begin()));
      if (it == scopes_.end()) scopes_.push_back(s);
    }
    touch_.assign(std::size_t(n), {});
    offset_.assign(scopes_.size() + 1, 0);
    for (std::size_t s = 0; s < scopes_.size(); ++s) {
      offset_[s + 1] = offset_[s] + table_size(scopes_[s], fg.cards());
      const auto st = table_strides(scopes_[s], fg.cards());
      for (std::size_t k = 0; k < scopes_[s].size(); ++k)
        touch_[std::size_t(scopes_[s][k])].push_back({s, st[k]});
    }
    flat_log_.assign(offset_[std::size_t(fg.num_factors())], 0.0);
    for (int a = 0; a < fg.num_factors(); ++a)
      std::copy(fg.factor(a).log_table.begin(), fg.factor(a).log_table.end(), flat_log_.begin() + long(offset_[std::size_t(a)]));
    by_last_.assign(std::size_t(n), {});
    for (int a = 0; a < fg.num_factors(); ++a) by_last_[std::size_t(fg.factor(a).scope.back())].push_back(std::size_t(a));
    // Chunk over the leading variables until there are at least 64 chunks.
    prefix_ = 0;
    chunks_ = 1;
    while (prefix_ < n - 1 && chunks_ < 64) chunks_ *= std::size_t(fg.card(prefix_++));
  }

  std::size_t num_chunks() const noexcept { return chunks_; }
  std::size_t num_scopes() const noexcept { return scopes_.size(); }
  const std::vector<Scope>& scopes() const noexcept { return scopes_; }
  /// Start of scope s in a flat buffer holding every scope's table.
  std::size_t offset(std::size_t s) const { return offset_.at(s); }
  std::size_t width() const noexcept { return offset_.back(); }
  /// Index into scopes() of tracked scope t.
  std::size_t slot(std::size_t t) const { return slot_.at(t); }

  /// visit(x, pos, log_score) for every state of chunk c. pos[s] is the
  /// position of the current entry of scope s in the flat buffer (factors
  /// first, then tracked scopes).
  template <class Visit>
  void run_chunk(std::size_t c, Visit&& visit) const {
    const int n = fg_.num_vars();
    const int* card = fg_.cards().data();
    Assignment x(std::size_t(n), 0);
    // decode chunk id over the prefix variables (last prefix var fastest)
    std::size_t rem = c;
    for (int v = prefix_ - 1; v >= 0; --v) {
      x[std::size_t(v)] = int(rem % std::size_t(card[v]));
      rem /= std::size_t(card[v]);
    }
    std::vector<std::size_t> pos(offset_.begin(), offset_.end() - 1);
    for (int v = 0; v < n; ++v)
      for (auto [s, stride] : touch_[std::size_t(v)]) pos[s] += stride * std::size_t(x[std::size_t(v)]);
    const double* logt = flat_log_.data();
    std::size_t* pp = pos.data();
    // partial[v + 1] sums the factors whose highest variable is <= v, so a
    // step that changes variables v..n-1 only refreshes those suffix sums.
    std::vector<double> partial(std::size_t(n) + 1, 0.0);
    auto refresh = [&](int from) {
      for (int u = from; u < n; ++u) {
        double acc = partial[std::size_t(u)];
        for (std::size_t a : by_last_[std::size_t(u)]) acc += logt[pp[a]];
        partial[std::size_t(u) + 1] = acc;
      }
    };
    refresh(0);
    while (true) {
      visit(x, pos, partial[std::size_t(n)]);
      int v = n - 1;
      for (; v >= prefix_; --v) {
        const int cv = card[v];
        const auto& tv = touch_[std::size_t(v)];
        if (++x[std::size_t(v)] < cv) {
          for (auto [s, stride] : tv) pp[s] += stride;
          break;
        }
        for (auto [s, stride] : tv) pp[s] -= stride * std::size_t(cv - 1);
        x[std::size_t(v)] = 0;
      }
      if (v < prefix_) return;
      refresh(v);
    }
  }

  /// Runs fn(chunk) for every chunk; chunks are split into contiguous
  /// blocks, one per worker.
  template <class Fn>
  void parallel_chunks(Fn&& fn) const {
    const std::size_t workers =
        std::max<std::size_t>(1, std::min<std::size_t>(chunks_, std::thread::hardware_concurrency()));
    if (workers == 1) {
      for (std::size_t c = 0; c < chunks_; ++c) fn(c);
      return;
    }
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t c = w; c < chunks_; c += workers) fn(c);
      });
    }
    for (auto& t : pool) t.join();
  }

 private:
  struct Touch {
    std::size_t scope;
    std::size_t stride;
  };
  const FactorGraph& fg_;
  std::vector<Scope> tracked_;
  std::vector<Scope> scopes_;
  std::vector<std::size_t> slot_;
  std::vector<std::size_t> offset_;
  std::vector<double> flat_log_;
  std::vector<std::vector<std::size_t>> by_last_;
  std::vector<std::vector<Touch>> touch_;
  int prefix_ = 0;
  std::size_t chunks_ = 1;
};

inline double max_log_score(const Enumerator& en) {
  std::vector<double> mx(en.num_chunks(), -std::numeric_limits<double>::infinity());
  en.parallel_chunks([&](std::size_t c) {
    double m = -std::numeric_limits<double>::infinity();
    en.run_chunk(c, [&](const Assignment&, const std::vector<std::size_t>&, double s) { m = std::max(m, s); });
    mx[c] = m;
  });
  return *std::max_element(mx.begin(), mx.end());
}

}  // namespace detail

/// log Z, all factor and variable marginals, plus marginals over any extra
/// scopes (each must be sorted).
inline ExactResult exact_inference(const FactorGraph& fg, const std::vector<Scope>& extra_scopes = {},
                                   std::uint64_t max_states = kMaxExactStates) {
  detail::check_capacity(fg, max_states);
  const int n = fg.num_vars();
  for (const auto& s : extra_scopes) {
    if (s.empty() || !std::is_sorted(s.begin(), s.end()) || std::adjacent_find(s.begin(), s.end()) != s.end())
      throw ContractViolation("extra marginal scopes must be sorted, non-empty, without repeats");
    for (int v : s)
      if (v < 0 || v >= n) throw ContractViolation("extra marginal scope variable out of range");
  }
  std::vector<Scope> tracked;
  for (int v = 0; v < n; ++v) tracked.push_back({v});
  const auto pairs = fg.pair_edges();
  for (auto [i, j] : pairs) tracked.push_back({i, j});
  for (const auto& s : extra_scopes) tracked.push_back(s);
  detail::Enumerator en(fg, tracked);
  const double mx = detail::max_log_score(en);

  const auto& scopes = en.scopes();
  const std::size_t width = en.width();

  struct Partial {
    double z = 0.0;
    double zs = 0.0;
    std::vector<double> acc;
  };
  std::vector<Partial> parts(en.num_chunks());
  en.parallel_chunks([&](std::size_t c) {
    Partial p;
    p.acc.assign(width, 0.0);
    en.run_chunk(c, [&](const Assignment&, const std::vector<std::size_t>& pos, double s) {
      const double w = std::exp(s - mx);
      p.z += w;
      p.zs += w * s;
      double* acc = p.acc.data();
      for (std::size_t q : pos) acc[q] += w;
    });
    parts[c] = std::move(p);
  });
  // fixed-order reduction
  double z = 0.0, zs = 0.0;
  std::vector<double> acc(width, 0.0);
  for (const auto& p : parts) {
    z += p.z;
    zs += p.zs;
    for (std::size_t k = 0; k < width; ++k) acc[k] += p.acc[k];
  }

  ExactResult r;
  r.log_Z = mx + std::log(z);
  r.expected_log_score = zs / z;
  auto table_of = [&](std::size_t s) {
    BeliefTable b{scopes[s], std::vector<double>(acc.begin() + long(en.offset(s)), acc.begin() + long(en.offset(s + 1)))};
    for (double& v : b.table) v /= z;
    return b;
  };
  for (int a = 0; a < fg.num_factors(); ++a) r.factor_marginals.push_back(table_of(std::size_t(a)));
  std::size_t t = 0;
  for (int v = 0; v < n; ++v) r.unary.push_back(table_of(en.slot(t++)).table);
  for (std::size_t e = 0; e < pairs.size(); ++e) r.pairwise.push_back(table_of(en.slot(t++)));
  for (std::size_t e = 0; e < extra_scopes.size(); ++e) r.extra.push_back(table_of(en.slot(t++)));
  return r;
}

/// log Z only (cheaper: no marginal bookkeeping).
inline double exact_log_z(const FactorGraph& fg, std::uint64_t max_states = kMaxExactStates) {
  detail::check_capacity(fg, max_states);
  detail::Enumerator en(fg, {});
  const double mx = detail::max_log_score(en);
  std::vector<double> zs(en.num_chunks(), 0.0);
  en.parallel_chunks([&](std::size_t c) {
    double z = 0.0;
    en.run_chunk(c, [&](const Assignment&, const std::vector<std::size_t>&, double s) { z += std::exp(s - mx); });
    zs[c] = z;
  });
  double z = 0.0;
  for (double v : zs) z += v;
  return mx + std::log(z);
}

/// i.i.d. draws from the exact distribution. The uniforms are sorted once and
/// matched against the running CDF during a single enumeration, so no
/// per-state storage is needed.
inline std::vector<Assignment> exact_sample(const FactorGraph& fg, std::size_t count, std::uint64_t seed,
                                            std::uint64_t max_states = kMaxExactStates) {
  detail::check_capacity(fg, max_states);
  std::vector<Assignment> out(count);
  if (count == 0) return out;
  const double log_z = exact_log_z(fg, max_states);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<double> u(count);
  for (double& v : u) v = unif(rng);
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return u[a] < u[b]; });

  detail::Enumerator en(fg, {});
  double cdf = 0.0;
  std::size_t next = 0;
  Assignment last_positive;
  for (std::size_t c = 0; c < en.num_chunks() && next < count; ++c) {
    en.run_chunk(c, [&](const Assignment& x, const std::vector<std::size_t>&, double s) {
      const double p = std::exp(s - log_z);
      if (p <= 0.0) return;
      last_positive = x;
      cdf += p;
      while (next < count && u[order[next]] < cdf) out[order[next++]] = x;
    });
  }
  // rounding can leave the final CDF a hair below 1
  while (next < count) out[order[next++]] = last_positive;
  return out;
}

/// Single-site Gibbs sampler with a systematic ascending sweep.
inline std::vector<Assignment> gibbs_sample(const FactorGraph& fg, std::size_t count, std::size_t burn_in,
                                            std::size_t thin, std::uint64_t seed) {
  const int n = fg.num_vars();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Assignment x(std::size_t(n), 0);
  for (int v = 0; v < n; ++v) x[std::size_t(v)] = int(unif(rng) * fg.card(v)) % fg.card(v);
  std::vector<double> w;
  auto sweep = [&] {
    for (int v = 0; v < n; ++v) {
      const int K = fg.card(v);
      w.assign(std::size_t(K), 0.0);
      for (int k = 0; k < K; ++k) {
        x[std::size_t(v)] = k;
        for (int a : fg.var_factors(v)) w[std::size_t(k)] += fg.factor(a).log_table[fg.entry_index(a, x)];
      }
      softmax_inplace(w);
      double r = unif(rng);
      int k = 0;
      for (; k < K - 1; ++k) {
        r -= w[std::size_t(k)];
        if (r < 0.0) break;
      }
      x[std::size_t(v)] = k;
    }
  };
  for (std::size_t b = 0; b < burn_in; ++b) sweep();
  std::vector<Assignment> out;
  out.reserve(count);
  const std::size_t step = std::max<std::size_t>(1, thin);
  for (std::size_t s = 0; s < count; ++s) {
    for (std::size_t t = 0; t < step; ++t) sweep();
    out.push_back(x);
  }
  return out;
}

/// Mean of (log Z - log p~(x)) over the dataset.
inline double nll_with_log_z(const FactorGraph& fg, const std::vector<Assignment>& data, double log_z) {
  if (data.empty()) throw ContractViolation("negative log-likelihood of an empty dataset");
  double s = 0.0;
  for (const auto& x : data) s += log_z - log_score(fg, x);
  return s / double(data.size());
}

inline double nll_exact(const FactorGraph& fg, const std::vector<Assignment>& data) {
  if (data.empty()) throw ContractViolation("negative log-likelihood of an empty dataset");
  return nll_with_log_z(fg, data, exact_log_z(fg));
}

// ---------------------------------------------------------------------------
// Dataset files: one assignment per line as spins -1/1.

inline std::vector<Assignment> parse_dataset(const std::string& text, int expected_n = -1) {
  std::vector<Assignment> out;
  std::istringstream in(text);
  std::string line;
  int ln = 0;
  while (std::getline(in, line)) {
    ++ln;
    if (auto p = line.find('#'); p != std::string::npos) line.erase(p);
    std::istringstream ls(line);
    Assignment x;
    for (std::string tok; ls >> tok;) {
      if (tok == "1" || tok == "+1")
        x.push_back(1);
      else if (tok == "-1")
        x.push_back(0);
      else
        throw ParseError(ln, "spin values must be -1 or 1, got '" + tok + "'");
    }
    if (x.empty()) continue;
    if (expected_n < 0) expected_n = int(x.size());
    if (int(x.size()) != expected_n)
      throw ParseError(ln, "expected " + std::to_string(expected_n) + " spins, got " + std::to_string(x.size()));
    out.push_back(std::move(x));
  }
  return out;
}

inline std::string serialize_dataset(const std::vector<Assignment>& data) {
  std::string out;
  for (const auto& x : data) {
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (x[i] < 0 || x[i] > 1) throw ContractViolation("dataset files hold binary spins only");
      out += (i ? " " : "");
      out += std::to_string(spin_of(x[i]));
    }
    out += '\n';
  }
  return out;
}

}  // namespace renn
