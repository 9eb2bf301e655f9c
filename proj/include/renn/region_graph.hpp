#pragma once

// Region graphs: root-region construction (grid faces, complete-graph star
// basis, cycle closing for general graphs), cluster variation, counting
// numbers, validity, and the region-based free energy.

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "renn/error.hpp"
#include "renn/model.hpp"
#include "renn/result.hpp"
#include "renn/table.hpp"

namespace renn {

/// Vertex sequence of a simple cycle; consecutive entries (and last/first)
/// are adjacent.
using Cycle = std::vector<int>;

struct SimpleGraph {
  int n = 0;
  std::vector<std::pair<int, int>> edges;  // i < j, no repeats

  std::vector<std::vector<int>> adjacency() const {
    std::vector<std::vector<int>> adj(static_cast<std::size_t>(n));
    for (auto [i, j] : edges) {
      adj[std::size_t(i)].push_back(j);
      adj[std::size_t(j)].push_back(i);
    }
    for (auto& a : adj) std::sort(a.begin(), a.end());
    return adj;
  }
  int num_components() const {
    std::vector<int> comp(std::size_t(n), -1);
    const auto adj = adjacency();
    int k = 0;
    for (int s = 0; s < n; ++s) {
      if (comp[std::size_t(s)] >= 0) continue;
      std::vector<int> st{s};
      comp[std::size_t(s)] = k;
      while (!st.empty()) {
        const int v = st.back();
        st.pop_back();
        for (int w : adj[std::size_t(v)])
          if (comp[std::size_t(w)] < 0) comp[std::size_t(w)] = k, st.push_back(w);
      }
      ++k;
    }
    return k;
  }
};

inline SimpleGraph graph_of(const FactorGraph& fg) { return SimpleGraph{fg.num_vars(), fg.pair_edges()}; }

inline SimpleGraph graph_of(const Topology& t) {
  auto es = t.edges();
  std::sort(es.begin(), es.end());
  es.erase(std::unique(es.begin(), es.end()), es.end());
  return SimpleGraph{t.n, es};
}

// ---------------------------------------------------------------------------
// Root cycles

/// Unit squares of a rows x cols grid (node r*cols+c), optionally with the
/// outer perimeter cycle appended.
inline std::vector<Cycle> faces_planar_grid(int rows, int cols, bool include_infinite_face) {
  if (rows < 2 || cols < 2) throw ContractViolation("grid faces need rows, cols >= 2");
  std::vector<Cycle> out;
  for (int r = 0; r + 1 < rows; ++r)
    for (int c = 0; c + 1 < cols; ++c)
      out.push_back({r * cols + c, r * cols + c + 1, (r + 1) * cols + c + 1, (r + 1) * cols + c});
  if (include_infinite_face) {
    Cycle p;
    for (int c = 0; c < cols; ++c) p.push_back(c);
    for (int r = 1; r < rows; ++r) p.push_back(r * cols + cols - 1);
    for (int c = cols - 2; c >= 0; --c) p.push_back((rows - 1) * cols + c);
    for (int r = rows - 2; r >= 1; --r) p.push_back(r * cols);
    out.push_back(std::move(p));
  }
  return out;
}

/// Triangles (root, j, k) for every edge (j, k) off the star spanning tree.
inline std::vector<Cycle> star_cycle_basis_complete(int n, int root) {
  if (n < 3) throw ContractViolation("star cycle basis needs n >= 3");
  if (root < 0 || root >= n) throw ContractViolation("star root out of range");
  std::vector<Cycle> out;
  for (int j = 0; j < n; ++j)
    for (int k = j + 1; k < n; ++k)
      if (j != root && k != root) out.push_back({root, j, k});
  return out;
}

inline std::vector<Cycle> star_cycle_basis_complete(const Topology& t, int root) {
  if (t.kind != Topology::Kind::Complete) throw ContractViolation("star cycle basis requires a complete topology");
  return star_cycle_basis_complete(t.n, root);
}

struct RootCycles {
  std::vector<Cycle> cycles;
  std::vector<std::pair<int, int>> bridges;  // edges on no cycle, kept as 2-variable roots
  bool acyclic_fallback = false;             // the graph had no cycle at all
};

namespace detail {

inline std::pair<int, int> ekey(int a, int b) { return {std::min(a, b), std::max(a, b)}; }

/// BFS over used edges, lowest-index neighbor first. Returns the vertex
/// sequence from `from` to `to`, or empty if unreachable.
inline std::vector<int> used_path(const std::vector<std::vector<int>>& adj, const std::set<std::pair<int, int>>& used,
                                  int from, int to) {
  if (from == to) return {from};
  std::vector<int> prev(adj.size(), -2);
  std::deque<int> q{from};
  prev[std::size_t(from)] = -1;
  while (!q.empty()) {
    const int v = q.front();
    q.pop_front();
    for (int w : adj[std::size_t(v)]) {
      if (prev[std::size_t(w)] != -2 || !used.count(ekey(v, w))) continue;
      prev[std::size_t(w)] = v;
      if (w == to) {
        std::vector<int> path{to};
        for (int u = v; u != -1; u = prev[std::size_t(u)]) path.push_back(u);
        std::reverse(path.begin(), path.end());
        return path;
      }
      q.push_back(w);
    }
  }
  return {};
}

/// Shortest cycle through v (BFS from each neighbor avoiding the direct
/// edge), or empty.
inline Cycle shortest_cycle_through(const std::vector<std::vector<int>>& adj, int v) {
  Cycle best;
  for (int w : adj[std::size_t(v)]) {
    if (w < v) continue;
    std::set<std::pair<int, int>> all;
    for (std::size_t a = 0; a < adj.size(); ++a)
      for (int b : adj[a])
        if (ekey(int(a), b) != ekey(v, w)) all.insert(ekey(int(a), b));
    auto p = used_path(adj, all, w, v);
    if (p.empty()) continue;
    // p runs w .. v; the cycle is v, w, ..., (before v)
    Cycle c{v};
    c.insert(c.end(), p.begin(), p.end() - 1);
    if (best.empty() || c.size() < best.size()) best = std::move(c);
  }
  return best;
}

}  // namespace detail

/// A starting cycle set for graphs with no known structure: the star basis
/// of a greedy maximal clique (size >= 3) if one exists, otherwise the
/// shortest cycle through the lowest-index vertex that lies on a cycle.
inline std::vector<Cycle> auto_seed(const SimpleGraph& g) {
  const auto adj = g.adjacency();
  std::set<std::pair<int, int>> es(g.edges.begin(), g.edges.end());
  std::vector<int> best;
  for (int v = 0; v < g.n; ++v) {
    std::vector<int> clique{v};
    for (int w : adj[std::size_t(v)]) {
      if (w < v) continue;
      bool ok = true;
      for (int u : clique) ok = ok && es.count(detail::ekey(u, w));
      if (ok) clique.push_back(w);
    }
    if (clique.size() > best.size()) best = clique;
  }
  if (best.size() >= 3) {
    std::vector<Cycle> out;
    for (const auto& c : star_cycle_basis_complete(int(best.size()), 0)) {
      Cycle m;
      for (int k : c) m.push_back(best[std::size_t(k)]);
      out.push_back(std::move(m));
    }
    return out;
  }
  for (int v = 0; v < g.n; ++v) {
    auto c = detail::shortest_cycle_through(adj, v);
    if (!c.empty()) return {c};
  }
  return {};
}

/// Grows a seed cycle basis until every edge is used: each unused edge from
/// a visited vertex is closed into a new cycle through shortest used paths.
inline RootCycles root_regions_general(const SimpleGraph& g, const std::vector<Cycle>& seed) {
  const auto adj = g.adjacency();
  std::set<std::pair<int, int>> edge_set(g.edges.begin(), g.edges.end());
  for (auto [i, j] : g.edges)
    if (i >= j || i < 0 || j >= g.n) throw ContractViolation("graph edges must satisfy 0 <= i < j < n");
  RootCycles out;
  std::vector<char> visited(std::size_t(g.n), 0);
  std::set<std::pair<int, int>> used;
  auto mark_cycle = [&](const Cycle& c) {
    for (std::size_t k = 0; k < c.size(); ++k) {
      const auto e = detail::ekey(c[k], c[(k + 1) % c.size()]);
      if (!edge_set.count(e))
        throw ContractViolation("cycle uses a non-edge " + std::to_string(e.first) + "-" + std::to_string(e.second));
      used.insert(e);
      visited[std::size_t(c[k])] = 1;
    }
    out.cycles.push_back(c);
  };
  for (const auto& c : seed) mark_cycle(c);

  while (true) {
    // lowest visited s, then lowest t, with (s,t) unused
    int s = -1, t = -1;
    for (int v = 0; v < g.n && s < 0; ++v) {
      if (!visited[std::size_t(v)]) continue;
      for (int w : adj[std::size_t(v)])
        if (!used.count(detail::ekey(v, w))) {
          s = v;
          t = w;
          break;
        }
    }
    if (s < 0) {
      // start the next component from its lowest vertex
      int fresh = -1;
      for (int v = 0; v < g.n; ++v)
        if (!visited[std::size_t(v)] && !adj[std::size_t(v)].empty()) {
          fresh = v;
          break;
        }
      if (fresh < 0) break;
      visited[std::size_t(fresh)] = 1;
      continue;
    }
    if (visited[std::size_t(t)]) {
      auto p2 = detail::used_path(adj, used, t, s);  // t .. s
      if (p2.empty()) throw ContractViolation("visited vertices are not connected by used edges");
      Cycle c{s};
      c.insert(c.end(), p2.begin(), p2.end() - 1);
      mark_cycle(c);
      continue;
    }
    // BFS from t through unvisited vertices to the first visited u.
    std::vector<int> prev(std::size_t(g.n), -2);
    prev[std::size_t(t)] = -1;
    std::deque<int> q{t};
    int u = -1, last = -1;
    while (!q.empty() && u < 0) {
      const int v = q.front();
      q.pop_front();
      for (int w : adj[std::size_t(v)]) {
        if (v == t && w == s) continue;
        if (visited[std::size_t(w)]) {
          u = w;
          last = v;
          break;
        }
        if (prev[std::size_t(w)] == -2) {
          prev[std::size_t(w)] = v;
          q.push_back(w);
        }
      }
    }
    if (u < 0) {
      out.bridges.push_back(detail::ekey(s, t));
      used.insert(detail::ekey(s, t));
      visited[std::size_t(t)] = 1;
      continue;
    }
    std::vector<int> p1;  // t .. last
    for (int v = last; v != -1; v = prev[std::size_t(v)]) p1.push_back(v);
    std::reverse(p1.begin(), p1.end());
    Cycle c{s};
    c.insert(c.end(), p1.begin(), p1.end());
    if (u != s) {
      auto p2 = detail::used_path(adj, used, u, s);  // u .. s
      if (p2.empty()) throw ContractViolation("visited vertices are not connected by used edges");
      c.insert(c.end(), p2.begin(), p2.end() - 1);
    }
    mark_cycle(c);
  }
  out.acyclic_fallback = out.cycles.empty() && !g.edges.empty();
  return out;
}

/// Root cycles chosen from the topology: grid faces, complete-graph star
/// basis rooted at 0, otherwise cycle closing from an automatic seed.
inline RootCycles root_cycles_for(const Topology& t, const SimpleGraph& g, bool include_infinite_face = false) {
  if (t.kind == Topology::Kind::Grid && t.rows >= 2 && t.cols >= 2)
    return root_regions_general(g, faces_planar_grid(t.rows, t.cols, include_infinite_face));
  if (t.kind == Topology::Kind::Complete && t.n >= 3) return root_regions_general(g, star_cycle_basis_complete(t.n, 0));
  return root_regions_general(g, auto_seed(g));
}

// ---------------------------------------------------------------------------
// Regions

/// Variables plus the factors assigned to them (both sorted).
struct RegionSpec {
  Scope vars;
  std::vector<int> factors;
  auto operator<=>(const RegionSpec&) const = default;
};

inline bool spec_subset(const RegionSpec& a, const RegionSpec& b) {
  return is_subset(a.vars, b.vars) && std::includes(b.factors.begin(), b.factors.end(), a.factors.begin(), a.factors.end());
}

/// Region holding every factor whose scope lies inside `vars`.
inline RegionSpec covering_region(const FactorGraph& fg, Scope vars) {
  std::sort(vars.begin(), vars.end());
  vars.erase(std::unique(vars.begin(), vars.end()), vars.end());
  RegionSpec r{vars, {}};
  for (int a = 0; a < fg.num_factors(); ++a)
    if (is_subset(fg.factor(a).scope, vars)) r.factors.push_back(a);
  return r;
}

/// Region for a cycle: its vertices, the pairwise factors on its edges, and
/// the unary factors of its vertices. Chords are left to other regions.
inline RegionSpec cycle_region(const FactorGraph& fg, const Cycle& c) {
  RegionSpec r{Scope(c.begin(), c.end()), {}};
  std::sort(r.vars.begin(), r.vars.end());
  if (std::adjacent_find(r.vars.begin(), r.vars.end()) != r.vars.end()) throw ContractViolation("cycle repeats a vertex");
  std::set<std::pair<int, int>> ce;
  for (std::size_t k = 0; k < c.size(); ++k) ce.insert(detail::ekey(c[k], c[(k + 1) % c.size()]));
  for (int a = 0; a < fg.num_factors(); ++a) {
    const auto& s = fg.factor(a).scope;
    if (s.size() == 1 && std::binary_search(r.vars.begin(), r.vars.end(), s[0])) r.factors.push_back(a);
    if (s.size() == 2 && ce.count({s[0], s[1]})) r.factors.push_back(a);
  }
  return r;
}

struct Region {
  int id = 0;
  Scope vars;                 // S(R), sorted
  std::vector<int> factors;   // A_R, sorted
  int level = 0;
  int c = 1;                  // counting number
  std::vector<int> parents;   // P(R)
  std::vector<int> children;
  std::vector<int> ancestors;    // A(R)
  std::vector<int> descendants;  // D(R)
};

class RegionGraph {
 public:
  RegionGraph() = default;

  /// Builds a graph from regions and their strict-subset order: edges are the
  /// cover relations, levels the longest chain from a root, counting numbers
  /// by the top-down recursion. Regions are re-numbered by (level, input
  /// order).
  static RegionGraph from_regions(const FactorGraph& fg, std::vector<RegionSpec> specs) {
    for (auto& s : specs) {
      std::sort(s.vars.begin(), s.vars.end());
      std::sort(s.factors.begin(), s.factors.end());
      for (int a : s.factors) {
        if (a < 0 || a >= fg.num_factors()) throw ContractViolation("region references unknown factor");
        if (!is_subset(fg.factor(a).scope, s.vars))
          throw ContractViolation("factor " + std::to_string(a) + " scope not inside region " + scope_str(s.vars));
      }
    }
    const std::size_t N = specs.size();
    std::vector<std::vector<char>> sub(N, std::vector<char>(N, 0));  // sub[i][j]: i strict subset of j
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t j = 0; j < N; ++j)
        if (i != j && specs[i] != specs[j] && spec_subset(specs[i], specs[j])) sub[i][j] = 1;
    // longest chain from a maximal region; regions larger first
    std::vector<int> level(N, 0);
    std::vector<std::size_t> order(N);
    for (std::size_t i = 0; i < N; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return specs[a].vars.size() + specs[a].factors.size() > specs[b].vars.size() + specs[b].factors.size();
    });
    for (std::size_t i : order)
      for (std::size_t j = 0; j < N; ++j)
        if (sub[i][j]) level[i] = std::max(level[i], level[j] + 1);
    std::vector<std::size_t> perm(N);
    for (std::size_t i = 0; i < N; ++i) perm[i] = i;
    std::stable_sort(perm.begin(), perm.end(), [&](std::size_t a, std::size_t b) { return level[a] < level[b]; });
    std::vector<int> new_id(N);
    for (std::size_t k = 0; k < N; ++k) new_id[perm[k]] = int(k);

    RegionGraph g;
    g.regions_.resize(N);
    for (std::size_t k = 0; k < N; ++k) {
      auto& r = g.regions_[k];
      r.id = int(k);
      r.vars = specs[perm[k]].vars;
      r.factors = specs[perm[k]].factors;
      r.level = level[perm[k]];
    }
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t j = 0; j < N; ++j) {
        if (!sub[i][j]) continue;
        auto& child = g.regions_[std::size_t(new_id[i])];
        child.ancestors.push_back(new_id[j]);
        g.regions_[std::size_t(new_id[j])].descendants.push_back(new_id[i]);
        bool cover = true;
        for (std::size_t k = 0; k < N && cover; ++k) cover = !(sub[i][k] && sub[k][j]);
        if (cover) {
          child.parents.push_back(new_id[j]);
          g.regions_[std::size_t(new_id[j])].children.push_back(new_id[i]);
          g.edges_.emplace_back(new_id[j], new_id[i]);
        }
      }
    for (auto& r : g.regions_) {
      std::sort(r.parents.begin(), r.parents.end());
      std::sort(r.children.begin(), r.children.end());
      std::sort(r.ancestors.begin(), r.ancestors.end());
      std::sort(r.descendants.begin(), r.descendants.end());
    }
    std::sort(g.edges_.begin(), g.edges_.end());
    g.compute_counting_numbers();
    g.num_vars_ = fg.num_vars();
    g.num_factors_ = fg.num_factors();
    return g;
  }

  const std::vector<Region>& regions() const noexcept { return regions_; }
  const Region& region(int id) const { return regions_.at(std::size_t(id)); }
  int size() const noexcept { return int(regions_.size()); }
  const std::vector<std::pair<int, int>>& edges() const noexcept { return edges_; }
  int num_levels() const {
    int L = 0;
    for (const auto& r : regions_) L = std::max(L, r.level + 1);
    return L;
  }
  std::vector<int> level(int l) const {
    std::vector<int> out;
    for (const auto& r : regions_)
      if (r.level == l) out.push_back(r.id);
    return out;
  }
  int num_vars() const noexcept { return num_vars_; }
  int num_factors() const noexcept { return num_factors_; }

  bool acyclic_fallback = false;  // built from edge roots of a cycle-free graph
  int cycle_count = 0;            // number of cycle roots

  void compute_counting_numbers() {
    // ancestors have strictly smaller level, so a level sweep is top-down
    std::vector<int> order(regions_.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = int(i);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return regions_[std::size_t(a)].level < regions_[std::size_t(b)].level; });
    for (int id : order) {
      auto& r = regions_[std::size_t(id)];
      int s = 0;
      for (int a : r.ancestors) s += regions_[std::size_t(a)].c;
      r.c = 1 - s;
    }
  }

  std::string dump() const {
    std::ostringstream os;
    for (const auto& r : regions_) {
      os << "region " << r.id << " level " << r.level << " c " << r.c << " vars";
      for (int v : r.vars) os << ' ' << v;
      os << " factors";
      for (int a : r.factors) os << ' ' << a;
      os << '\n';
    }
    for (auto [p, c] : edges_) os << "edge " << p << ' ' << c << '\n';
    return os.str();
  }

 private:
  std::vector<Region> regions_;
  std::vector<std::pair<int, int>> edges_;
  int num_vars_ = 0;
  int num_factors_ = 0;
};

namespace detail {

/// The intersection of two regions, split into one region per non-unary
/// factor it contains plus single-variable regions for leftover variables.
inline std::vector<RegionSpec> decomposed_intersection(const FactorGraph& fg, const RegionSpec& a, const RegionSpec& b) {
  RegionSpec x{scope_intersection(a.vars, b.vars), {}};
  std::set_intersection(a.factors.begin(), a.factors.end(), b.factors.begin(), b.factors.end(), std::back_inserter(x.factors));
  std::vector<RegionSpec> out;
  if (x.vars.empty()) return out;
  std::vector<char> covered(std::size_t(fg.num_vars()), 0);
  auto unaries_within = [&](const Scope& s) {
    std::vector<int> u;
    for (int f : x.factors)
      if (fg.factor(f).scope.size() == 1 && std::binary_search(s.begin(), s.end(), fg.factor(f).scope[0])) u.push_back(f);
    return u;
  };
  for (int f : x.factors) {
    const auto& s = fg.factor(f).scope;
    if (s.size() < 2) continue;
    RegionSpec atom{s, unaries_within(s)};
    atom.factors.push_back(f);
    std::sort(atom.factors.begin(), atom.factors.end());
    out.push_back(std::move(atom));
    for (int v : s) covered[std::size_t(v)] = 1;
  }
  for (int v : x.vars)
    if (!covered[std::size_t(v)]) out.push_back(RegionSpec{{v}, unaries_within({v})});
  return out;
}

}  // namespace detail

/// Cluster variation: closes the roots under (decomposed) intersection and
/// builds the region graph.
inline RegionGraph cluster_variation(const FactorGraph& fg, std::vector<RegionSpec> roots) {
  for (auto& r : roots) {
    std::sort(r.vars.begin(), r.vars.end());
    std::sort(r.factors.begin(), r.factors.end());
  }
  std::sort(roots.begin(), roots.end());
  roots.erase(std::unique(roots.begin(), roots.end()), roots.end());
  for (std::size_t i = 0; i < roots.size(); ++i)
    for (std::size_t j = 0; j < roots.size(); ++j)
      if (i != j && spec_subset(roots[i], roots[j]))
        throw ContractViolation("root region " + scope_str(roots[i].vars) + " is contained in root " + scope_str(roots[j].vars));
  std::vector<char> var_cov(std::size_t(fg.num_vars()), 0), fac_cov(std::size_t(fg.num_factors()), 0);
  for (const auto& r : roots) {
    for (int v : r.vars) {
      if (v < 0 || v >= fg.num_vars()) throw ContractViolation("root region variable out of range");
      var_cov[std::size_t(v)] = 1;
    }
    for (int a : r.factors) fac_cov[std::size_t(a)] = 1;
  }
  for (int v = 0; v < fg.num_vars(); ++v)
    if (!var_cov[std::size_t(v)]) throw ContractViolation("variable " + std::to_string(v) + " is not covered by any root region");
  for (int a = 0; a < fg.num_factors(); ++a)
    if (!fac_cov[std::size_t(a)]) throw ContractViolation("factor " + std::to_string(a) + " is not covered by any root region");

  std::vector<RegionSpec> all = roots;
  std::set<RegionSpec> seen(all.begin(), all.end());
  std::size_t done = 0;  // pairs (i, j) with j < done are processed
  while (done < all.size()) {
    const std::size_t end = all.size();
    for (std::size_t j = done; j < end; ++j)
      for (std::size_t i = 0; i < j; ++i)
        for (auto& x : detail::decomposed_intersection(fg, all[i], all[j]))
          if (seen.insert(x).second) all.push_back(std::move(x));
    done = end;
  }
  return RegionGraph::from_regions(fg, std::move(all));
}

/// Region graph from root cycles (plus bridge edges and any variable left
/// uncovered as a singleton root).
inline RegionGraph region_graph_from_cycles(const FactorGraph& fg, const RootCycles& rc) {
  std::vector<RegionSpec> roots;
  for (const auto& c : rc.cycles) roots.push_back(cycle_region(fg, c));
  for (auto [i, j] : rc.bridges) roots.push_back(covering_region(fg, {i, j}));
  if (rc.acyclic_fallback) {
    roots.clear();
    for (auto [i, j] : fg.pair_edges()) roots.push_back(covering_region(fg, {i, j}));
  }
  std::vector<char> cov(std::size_t(fg.num_vars()), 0);
  for (const auto& r : roots)
    for (int v : r.vars) cov[std::size_t(v)] = 1;
  for (int v = 0; v < fg.num_vars(); ++v)
    if (!cov[std::size_t(v)]) roots.push_back(covering_region(fg, {v}));
  auto g = cluster_variation(fg, std::move(roots));
  g.acyclic_fallback = rc.acyclic_fallback;
  g.cycle_count = int(rc.cycles.size());
  return g;
}

/// Region graph for a pairwise factor graph using the roots implied by the
/// topology.
inline RegionGraph build_region_graph(const FactorGraph& fg, const Topology& t, bool include_infinite_face = false) {
  if (!fg.is_pairwise()) throw ContractViolation("region graph construction needs factors of at most two variables");
  const auto g = graph_of(fg);
  return region_graph_from_cycles(fg, root_cycles_for(t, g, include_infinite_face));
}

/// Large regions are the factors with their scopes, small regions the single
/// variables (no factors).
inline RegionGraph bethe_region_graph(const FactorGraph& fg) {
  std::vector<RegionSpec> specs;
  for (int a = 0; a < fg.num_factors(); ++a) specs.push_back(RegionSpec{fg.factor(a).scope, {a}});
  for (int v = 0; v < fg.num_vars(); ++v) specs.push_back(RegionSpec{{v}, {}});
  return RegionGraph::from_regions(fg, std::move(specs));
}

// ---------------------------------------------------------------------------
// Validity

struct ValidityReport {
  bool valid = true;
  std::vector<std::string> offenders;  // "variable i: sum c = k" / "factor a: ..."
};

/// Σ_R c_R [i ∈ R] = 1 for every variable and factor node.
inline ValidityReport check_validity(const RegionGraph& rg, const FactorGraph& fg) {
  ValidityReport rep;
  std::vector<int> vs(std::size_t(fg.num_vars()), 0), fs(std::size_t(fg.num_factors()), 0);
  for (const auto& r : rg.regions()) {
    for (int v : r.vars) vs[std::size_t(v)] += r.c;
    for (int a : r.factors) fs[std::size_t(a)] += r.c;
    for (int a : r.factors)
      if (!is_subset(fg.factor(a).scope, r.vars))
        rep.offenders.push_back("region " + std::to_string(r.id) + ": factor " + std::to_string(a) + " not closed");
  }
  for (int v = 0; v < fg.num_vars(); ++v)
    if (vs[std::size_t(v)] != 1)
      rep.offenders.push_back("variable " + std::to_string(v) + ": sum c = " + std::to_string(vs[std::size_t(v)]));
  for (int a = 0; a < fg.num_factors(); ++a)
    if (fs[std::size_t(a)] != 1)
      rep.offenders.push_back("factor " + std::to_string(a) + ": sum c = " + std::to_string(fs[std::size_t(a)]));
  rep.valid = rep.offenders.empty();
  return rep;
}

// ---------------------------------------------------------------------------
// Energies

/// Σ_{a ∈ A_R} log ψ_a(x_a) over the region's joint table (the negative
/// region energy).
inline std::vector<double> region_log_potential(const Region& r, const FactorGraph& fg) {
  std::vector<double> t(table_size(r.vars, fg.cards()), 0.0);
  for (int a : r.factors) {
    const auto& f = fg.factor(a);
    const auto idx = projection_index(r.vars, f.scope, fg.cards());
    for (std::size_t k = 0; k < t.size(); ++k) t[k] += f.log_table[idx[k]];
  }
  return t;
}

/// E_R(x_R) = -Σ_{a ∈ A_R} log ψ_a(x_a) at a single region assignment.
inline double region_energy(const Region& r, const FactorGraph& fg, const std::vector<int>& x_r) {
  if (x_r.size() != r.vars.size()) throw ContractViolation("region assignment length mismatch");
  std::size_t idx = 0;
  for (std::size_t k = 0; k < r.vars.size(); ++k) {
    if (x_r[k] < 0 || x_r[k] >= fg.card(r.vars[k])) throw ContractViolation("region assignment state out of range");
    idx = idx * std::size_t(fg.card(r.vars[k])) + std::size_t(x_r[k]);
  }
  return -region_log_potential(r, fg)[idx];
}

inline double neg_entropy_term(double b) { return b > 0.0 ? b * std::log(b) : 0.0; }

/// Σ_R c_R Σ_{x_R} b_R (E_R + ln b_R). `beliefs[id]` is the belief of region id.
inline double region_free_energy(const RegionGraph& rg, const std::vector<BeliefTable>& beliefs, const FactorGraph& fg) {
  if (int(beliefs.size()) != rg.size()) throw ContractViolation("one belief per region required");
  double F = 0.0;
  for (const auto& r : rg.regions()) {
    const auto& b = beliefs[std::size_t(r.id)];
    if (b.scope != r.vars) throw ContractViolation("belief scope does not match region " + std::to_string(r.id));
    if (b.table.size() != table_size(r.vars, fg.cards())) throw ContractViolation("belief table size mismatch");
    if (!b.is_normalized(1e-6)) throw ContractViolation("belief of region " + std::to_string(r.id) + " is not normalized");
    if (r.c == 0) continue;
    const auto lp = region_log_potential(r, fg);
    double f = 0.0;
    for (std::size_t k = 0; k < lp.size(); ++k) f += -b.table[k] * lp[k] + neg_entropy_term(b.table[k]);
    F += r.c * f;
  }
  return F;
}

/// Variable scopes of all regions, in id order.
inline std::vector<Scope> region_scopes(const RegionGraph& rg) {
  std::vector<Scope> out;
  for (const auto& r : rg.regions()) out.push_back(r.vars);
  return out;
}

/// For every query scope, the average of the marginalizations of all region
/// beliefs whose scope covers it.
inline std::vector<BeliefTable> extract_marginals(const RegionGraph& rg, const std::vector<BeliefTable>& beliefs,
                                                  const std::vector<Scope>& queries, const std::vector<int>& cards) {
  if (int(beliefs.size()) != rg.size()) throw ContractViolation("one belief per region required");
  std::vector<BeliefTable> out;
  for (const auto& q : queries) {
    BeliefTable acc{q, std::vector<double>(table_size(q, cards), 0.0)};
    int count = 0;
    for (const auto& r : rg.regions()) {
      if (!is_subset(q, r.vars)) continue;
      const auto m = marginalize(beliefs[std::size_t(r.id)].table, r.vars, q, cards);
      for (std::size_t k = 0; k < m.size(); ++k) acc.table[k] += m[k];
      ++count;
    }
    if (count == 0) throw QueryError("no region covers " + scope_str(q));
    for (double& v : acc.table) v /= count;
    out.push_back(std::move(acc));
  }
  return out;
}

/// Univariate and per-factor marginals read off region beliefs.
inline void fill_marginals_from_regions(const RegionGraph& rg, const FactorGraph& fg,
                                        const std::vector<BeliefTable>& beliefs, InferenceResult& r) {
  std::vector<Scope> q;
  for (int v = 0; v < fg.num_vars(); ++v) q.push_back({v});
  for (const auto& f : fg.factors()) q.push_back(f.scope);
  auto m = extract_marginals(rg, beliefs, q, fg.cards());
  r.unary.clear();
  for (int v = 0; v < fg.num_vars(); ++v) r.unary.push_back(std::move(m[std::size_t(v)].table));
  r.factor_beliefs.assign(m.begin() + fg.num_vars(), m.end());
  r.region_beliefs = beliefs;
}

}  // namespace renn
