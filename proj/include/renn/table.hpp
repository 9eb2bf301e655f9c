#pragma once

// Dense tables over ordered variable scopes. Layout is row-major with the
// last scope variable varying fastest; scopes are kept sorted ascending.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "renn/error.hpp"

namespace renn {

using Scope = std::vector<int>;

inline std::size_t table_size(const Scope& scope, const std::vector<int>& cards) {
  std::size_t n = 1;
  for (int v : scope) n *= std::size_t(cards.at(std::size_t(v)));
  return n;
}

inline std::vector<std::size_t> table_strides(const Scope& scope, const std::vector<int>& cards) {
  std::vector<std::size_t> st(scope.size(), 1);
  for (std::size_t k = scope.size(); k-- > 1;) st[k - 1] = st[k] * std::size_t(cards.at(std::size_t(scope[k])));
  return st;
}

/// States of the scope variables at flat table position `index`.
inline std::vector<int> decode_index(std::size_t index, const Scope& scope, const std::vector<int>& cards) {
  std::vector<int> x(scope.size());
  for (std::size_t k = scope.size(); k-- > 0;) {
    const auto c = std::size_t(cards[std::size_t(scope[k])]);
    x[k] = int(index % c);
    index /= c;
  }
  return x;
}

inline bool is_subset(const Scope& sub, const Scope& super) {
  return std::includes(super.begin(), super.end(), sub.begin(), sub.end());
}

inline Scope scope_intersection(const Scope& a, const Scope& b) {
  Scope out;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

inline std::string scope_str(const Scope& s) {
  std::string out = "{";
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
  return out + "}";
}

/// For every entry of a table over `from`, the flat index of the entry of a
/// table over `to` (a subset of `from`) that it marginalizes onto.
inline std::vector<std::size_t> projection_index(const Scope& from, const Scope& to, const std::vector<int>& cards) {
  if (!is_subset(to, from))
    throw ContractViolation("projection target " + scope_str(to) + " is not a subset of " + scope_str(from));
  const auto to_strides = table_strides(to, cards);
  std::vector<std::size_t> contrib(from.size(), 0);
  for (std::size_t k = 0, t = 0; k < from.size(); ++k) {
    if (t < to.size() && to[t] == from[k]) contrib[k] = to_strides[t++];
  }
  const std::size_t n = table_size(from, cards);
  std::vector<std::size_t> out(n, 0);
  std::vector<int> x(from.size(), 0);
  std::size_t target = 0;
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = target;
    // odometer increment, last variable fastest
    for (std::size_t k = from.size(); k-- > 0;) {
      const int c = cards[std::size_t(from[k])];
      if (++x[k] < c) {
        target += contrib[k];
        break;
      }
      target -= contrib[k] * std::size_t(c - 1);
      x[k] = 0;
    }
  }
  return out;
}

inline std::vector<double> marginalize(const std::vector<double>& table, const Scope& from, const Scope& to,
                                       const std::vector<int>& cards) {
  const auto idx = projection_index(from, to, cards);
  if (idx.size() != table.size()) throw ContractViolation("marginalize: table size does not match scope");
  std::vector<double> out(table_size(to, cards), 0.0);
  for (std::size_t i = 0; i < idx.size(); ++i) out[idx[i]] += table[i];
  return out;
}

/// Normalized joint distribution over a sorted scope.
struct BeliefTable {
  Scope scope;
  std::vector<double> table;

  double total() const {
    double s = 0.0;
    for (double v : table) s += v;
    return s;
  }
  bool is_normalized(double tol) const {
    for (double v : table)
      if (!(v >= 0.0)) return false;
    return std::abs(total() - 1.0) <= tol;
  }
  void normalize() {
    const double s = total();
    if (!(s > 0.0) || !std::isfinite(s)) throw NumericFault("normalize", "table mass " + std::to_string(s));
    for (double& v : table) v /= s;
  }
};

/// In-place log-sum-exp normalization: turns log-weights into probabilities.
inline void softmax_inplace(std::vector<double>& w) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : w) mx = std::max(mx, v);
  double z = 0.0;
  for (double& v : w) z += (v = std::exp(v - mx));
  for (double& v : w) v /= z;
}

}  // namespace renn
