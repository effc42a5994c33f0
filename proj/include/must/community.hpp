#pragma once

// Weighted Louvain community detection and modularity.

#include "must/common.hpp"
#include "must/graph.hpp"

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <random>
#include <utility>
#include <vector>

namespace must {

/// Total, disjoint node -> community assignment with dense ids 0..C-1.
struct Partition {
  std::vector<int> assignment;
  std::vector<std::vector<int>> communities;

  /// Relabels arbitrary ids densely in order of first appearance by node index.
  static Partition from_labels(const std::vector<int>& labels) {
    Partition p;
    p.assignment.resize(labels.size());
    std::vector<std::pair<int, int>> seen;  // (raw label, dense id)
    for (std::size_t i = 0; i < labels.size(); ++i) {
      auto it = std::find_if(seen.begin(), seen.end(), [&](const auto& e) { return e.first == labels[i]; });
      int id;
      if (it == seen.end()) {
        id = static_cast<int>(seen.size());
        seen.emplace_back(labels[i], id);
        p.communities.emplace_back();
      } else {
        id = it->second;
      }
      p.assignment[i] = id;
      p.communities[static_cast<std::size_t>(id)].push_back(static_cast<int>(i));
    }
    return p;
  }

  static Partition singletons(int n) {
    std::vector<int> l(static_cast<std::size_t>(n));
    std::iota(l.begin(), l.end(), 0);
    return from_labels(l);
  }

  int size() const { return static_cast<int>(communities.size()); }
  int node_count() const { return static_cast<int>(assignment.size()); }

  bool valid() const {
    std::vector<int> hits(assignment.size(), 0);
    for (std::size_t c = 0; c < communities.size(); ++c) {
      if (communities[c].empty()) return false;
      for (int v : communities[c]) {
        if (v < 0 || v >= node_count() || assignment[static_cast<std::size_t>(v)] != static_cast<int>(c)) return false;
        ++hits[static_cast<std::size_t>(v)];
      }
    }
    return std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; });
  }

  friend bool operator==(const Partition& a, const Partition& b) { return a.assignment == b.assignment; }
};

/// Q = (1 / 2m) sum_ij [M_ij - k_i k_j / 2m] delta(c_i, c_j); 0 for a graph without weight.
inline double modularity(const Matrix& m, const Partition& p) {
  if (p.node_count() != m.rows()) throw std::invalid_argument("modularity: partition does not cover the graph");
  const double two_m = m.sum();
  if (two_m <= 0.0) return 0.0;
  const Vector k = m.rowwise().sum();
  double q = 0.0;
  for (const auto& c : p.communities) {
    double in = 0.0, tot = 0.0;
    for (int i : c) {
      tot += k(i);
      for (int j : c) in += m(i, j);
    }
    q += in / two_m - (tot / two_m) * (tot / two_m);
  }
  return q;
}

inline double modularity(const WeightedSnapshot& m, const Partition& p) { return modularity(m.weights(), p); }

struct LouvainResult {
  Partition partition;
  /// Modularity of the flat partition: entry 0 for singletons, then one entry per aggregation pass.
  std::vector<double> pass_modularity;
};

namespace detail {

/// Symmetric weighted graph with explicit self-loop weights, used across aggregation levels.
struct LouvainGraph {
  int n = 0;
  std::vector<std::vector<std::pair<int, double>>> adj;  // off-diagonal, ascending neighbor id
  std::vector<double> self;                                // A_ii
  std::vector<double> degree;                              // row sums including A_ii
  double two_m = 0.0;
};

inline LouvainGraph louvain_graph_from(const Matrix& m, const std::vector<int>& order) {
  LouvainGraph g;
  g.n = static_cast<int>(order.size());
  g.adj.resize(order.size());
  g.self.assign(order.size(), 0.0);
  g.degree.assign(order.size(), 0.0);
  for (int p = 0; p < g.n; ++p) {
    const int u = order[static_cast<std::size_t>(p)];
    for (int q = 0; q < g.n; ++q) {
      const double w = m(u, order[static_cast<std::size_t>(q)]);
      if (w == 0.0) continue;
      if (p == q) g.self[static_cast<std::size_t>(p)] += w;
      else g.adj[static_cast<std::size_t>(p)].emplace_back(q, w);
      g.degree[static_cast<std::size_t>(p)] += w;
    }
  }
  for (double d : g.degree) g.two_m += d;
  return g;
}

inline double louvain_graph_modularity(const LouvainGraph& g, const std::vector<int>& comm, int ncomm) {
  if (g.two_m <= 0.0) return 0.0;
  std::vector<double> in(static_cast<std::size_t>(ncomm), 0.0), tot(static_cast<std::size_t>(ncomm), 0.0);
  for (int u = 0; u < g.n; ++u) {
    const auto cu = static_cast<std::size_t>(comm[static_cast<std::size_t>(u)]);
    tot[cu] += g.degree[static_cast<std::size_t>(u)];
    in[cu] += g.self[static_cast<std::size_t>(u)];
    for (auto [v, w] : g.adj[static_cast<std::size_t>(u)])
      if (comm[static_cast<std::size_t>(v)] == static_cast<int>(cu)) in[cu] += w;
  }
  double q = 0.0;
  for (std::size_t c = 0; c < in.size(); ++c) q += in[c] / g.two_m - (tot[c] / g.two_m) * (tot[c] / g.two_m);
  return q;
}

/// Local-moving phase. Returns true if any node changed community.
inline bool louvain_local_moves(const LouvainGraph& g, std::vector<int>& comm, double min_gain) {
  const auto n = static_cast<std::size_t>(g.n);
  std::vector<double> tot(n, 0.0);
  for (std::size_t u = 0; u < n; ++u) tot[static_cast<std::size_t>(comm[u])] += g.degree[u];
  std::vector<double> link(n, 0.0);
  std::vector<int> touched;
  bool any = false;
  double q = louvain_graph_modularity(g, comm, g.n);
  for (;;) {
    bool moved = false;
    for (std::size_t u = 0; u < n; ++u) {
      const int own = comm[u];
      const double ku = g.degree[u];
      touched.clear();
      for (auto [v, w] : g.adj[u]) {
        const int cv = comm[static_cast<std::size_t>(v)];
        if (link[static_cast<std::size_t>(cv)] == 0.0 && std::find(touched.begin(), touched.end(), cv) == touched.end())
          touched.push_back(cv);
        link[static_cast<std::size_t>(cv)] += w;
      }
      tot[static_cast<std::size_t>(own)] -= ku;
      // Gain of inserting u into c, up to the positive factor 1/m.
      auto gain = [&](int c) { return link[static_cast<std::size_t>(c)] - tot[static_cast<std::size_t>(c)] * ku / g.two_m; };
      int best = own;
      double best_gain = gain(own);
      for (int c : touched) {
        const double gc = gain(c);
        if (gc > best_gain + 1e-12 * g.two_m) {
          best = c;
          best_gain = gc;
        }
      }
      tot[static_cast<std::size_t>(best)] += ku;
      if (best != own) {
        comm[u] = best;
        moved = true;
        any = true;
      }
      for (int c : touched) link[static_cast<std::size_t>(c)] = 0.0;
      link[static_cast<std::size_t>(own)] = 0.0;
    }
    const double q_new = louvain_graph_modularity(g, comm, g.n);
    const bool improved = q_new - q > min_gain;
    q = q_new;
    if (!moved || !improved) break;
  }
  return any;
}

}  // namespace detail

/// Louvain with nodes visited in the given order at the first level. Aggregated nodes are
/// ordered by the earliest visit position of their members, so the result does not depend on
/// node labels beyond the order.
inline LouvainResult louvain_ordered(const Matrix& m, const std::vector<int>& order, double min_gain = 1e-9) {
  const int n = static_cast<int>(m.rows());
  if (m.cols() != n || static_cast<int>(order.size()) != n) throw std::invalid_argument("louvain: bad input shapes");
  LouvainResult res;
  // member[p] = current aggregated node containing internal node p
  std::vector<int> member(static_cast<std::size_t>(n));
  std::iota(member.begin(), member.end(), 0);

  detail::LouvainGraph g = detail::louvain_graph_from(m, order);
  auto flat = [&] {
    std::vector<int> labels(static_cast<std::size_t>(n));
    for (int p = 0; p < n; ++p) labels[static_cast<std::size_t>(order[static_cast<std::size_t>(p)])] = member[static_cast<std::size_t>(p)];
    return Partition::from_labels(labels);
  };
  res.pass_modularity.push_back(modularity(m, Partition::singletons(n)));
  if (g.two_m <= 0.0) {
    res.partition = Partition::singletons(n);
    return res;
  }
  for (;;) {
    std::vector<int> comm(static_cast<std::size_t>(g.n));
    std::iota(comm.begin(), comm.end(), 0);
    if (!detail::louvain_local_moves(g, comm, min_gain)) break;

    // Renumber communities by their smallest member, which is also their earliest visit position.
    std::vector<int> renum(static_cast<std::size_t>(g.n), -1);
    int next = 0;
    for (int u = 0; u < g.n; ++u) {
      int& r = renum[static_cast<std::size_t>(comm[static_cast<std::size_t>(u)])];
      if (r < 0) r = next++;
    }
    for (auto& c : comm) c = renum[static_cast<std::size_t>(c)];
    for (auto& mbr : member) mbr = comm[static_cast<std::size_t>(mbr)];

    detail::LouvainGraph agg;
    agg.n = next;
    agg.adj.resize(static_cast<std::size_t>(next));
    agg.self.assign(static_cast<std::size_t>(next), 0.0);
    agg.degree.assign(static_cast<std::size_t>(next), 0.0);
    agg.two_m = g.two_m;
    Matrix dense = Matrix::Zero(next, next);
    for (int u = 0; u < g.n; ++u) {
      const int cu = comm[static_cast<std::size_t>(u)];
      dense(cu, cu) += g.self[static_cast<std::size_t>(u)];
      for (auto [v, w] : g.adj[static_cast<std::size_t>(u)]) dense(cu, comm[static_cast<std::size_t>(v)]) += w;
    }
    for (int a = 0; a < next; ++a) {
      agg.self[static_cast<std::size_t>(a)] = dense(a, a);
      for (int b = 0; b < next; ++b) {
        agg.degree[static_cast<std::size_t>(a)] += dense(a, b);
        if (a != b && dense(a, b) != 0.0) agg.adj[static_cast<std::size_t>(a)].emplace_back(b, dense(a, b));
      }
    }
    g = std::move(agg);
    res.pass_modularity.push_back(modularity(m, flat()));
    if (g.n == 1) break;
  }
  res.partition = flat();
  return res;
}

/// Seeded visit order (a deterministic shuffle of 0..n-1).
inline std::vector<int> louvain_visit_order(int n, std::uint64_t seed) {
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  for (std::size_t i = order.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(std::uniform_int_distribution<std::uint64_t>(0, i - 1)(rng));
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

inline LouvainResult louvain_trace(const Matrix& m, std::uint64_t seed) {
  return louvain_ordered(m, louvain_visit_order(static_cast<int>(m.rows()), seed));
}

inline Partition louvain(const Matrix& m, std::uint64_t seed) { return louvain_trace(m, seed).partition; }
inline Partition louvain(const WeightedSnapshot& m, std::uint64_t seed) { return louvain(m.weights(), seed); }

/// splitmix64 finalizer; derives independent per-item seeds from a run seed.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace must
