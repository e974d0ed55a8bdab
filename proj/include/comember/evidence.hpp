#pragma once

#include <unordered_map>
#include <vector>

#include "comember/core.hpp"
#include "comember/graph.hpp"

namespace comember {

// Local evidence of a pair: edge indicator and the number of other nodes
// adjacent to exactly 0, 1 or 2 of the pair.
struct PairEvidence {
  int kappa = 0;
  std::size_t n0 = 0, n1 = 0, n2 = 0;
  std::size_t n = 0;

  bool operator==(const PairEvidence&) const = default;
};

inline void require_simple(const Graph& g) {
  if (g.edge_types() != 2) throw Error("operation requires a simple graph (two edge types)");
}

// |N(v) ∩ N(w)| for every pair with at least one common neighbor.
// Cost is the number of wedges, sum_u deg(u)^2 / 2.
inline std::unordered_map<std::uint64_t, std::uint32_t> common_neighbor_counts(const Graph& g) {
  require_simple(g);
  std::unordered_map<std::uint64_t, std::uint32_t> out;
  for (NodeId u = 0; u < g.node_count(); ++u) {
    auto nb = g.neighbors(u);
    for (std::size_t a = 0; a < nb.size(); ++a)
      for (std::size_t b = a + 1; b < nb.size(); ++b) ++out[pair_key(nb[a], nb[b])];
  }
  return out;
}

inline PairEvidence evidence_from_counts(std::size_t n, std::size_t deg_v, std::size_t deg_w, std::size_t n2,
                                         int kappa) {
  long long n1 = static_cast<long long>(deg_v + deg_w) - 2 * static_cast<long long>(n2) - 2 * kappa;
  long long n0 = static_cast<long long>(n) - 2 - n1 - static_cast<long long>(n2);
  if (n1 < 0 || n0 < 0) throw InconsistencyError("pair evidence: negative derived count");
  return {kappa, static_cast<std::size_t>(n0), static_cast<std::size_t>(n1), n2, n};
}

inline PairEvidence pair_evidence(const Graph& g, NodeId v, NodeId w,
                                  const std::unordered_map<std::uint64_t, std::uint32_t>& n2_map) {
  if (v == w) throw Error("pair evidence needs distinct nodes");
  auto it = n2_map.find(pair_key(v, w));
  std::size_t n2 = it == n2_map.end() ? 0 : it->second;
  return evidence_from_counts(g.node_count(), g.degree(v), g.degree(w), n2, g.adjacent(v, w) ? 1 : 0);
}

// direct count, no precomputed map
inline PairEvidence pair_evidence(const Graph& g, NodeId v, NodeId w) {
  if (v == w) throw Error("pair evidence needs distinct nodes");
  PairEvidence e;
  e.n = g.node_count();
  e.kappa = g.adjacent(v, w) ? 1 : 0;
  for (NodeId x = 0; x < g.node_count(); ++x) {
    if (x == v || x == w) continue;
    int c = (g.adjacent(v, x) ? 1 : 0) + (g.adjacent(w, x) ? 1 : 0);
    (c == 0 ? e.n0 : c == 1 ? e.n1 : e.n2)++;
  }
  return e;
}

}  // namespace comember
