#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"

#include "comember/graph.hpp"
#include "comember/pvw_matrix.hpp"

namespace comember {

class DistanceMatrix {
 public:
  DistanceMatrix() = default;
  explicit DistanceMatrix(std::size_t n) : n_(n), d_(n * n, 0.0) {}
  std::size_t size() const { return n_; }
  double operator()(std::size_t v, std::size_t w) const { return d_[v * n_ + w]; }
  void set(std::size_t v, std::size_t w, double x) { d_[v * n_ + w] = d_[w * n_ + v] = x; }

 private:
  std::size_t n_ = 0;
  std::vector<double> d_;
};

inline DistanceMatrix distance_matrix(const PvwMatrix& pvw) {
  std::size_t n = pvw.node_count();
  if (n > 20000) throw SizeGuardError("distance matrix limited to n <= 20000");
  DistanceMatrix d(n);
  for (NodeId v = 0; v < n; ++v)
    for (NodeId w = v + 1; w < n; ++w) d.set(v, w, std::clamp(1.0 - pvw(v, w), 0.0, 1.0));
  return d;
}

// Leaves are 0..n-1; internal node n+k is the k-th merge. Child order is the
// display order.
struct Dendrogram {
  struct Node {
    int left = -1;
    int right = -1;
    double height = 0;
    std::size_t size = 1;
    NodeId min_leaf = 0;
  };
  std::size_t n = 0;
  std::vector<Node> nodes;

  bool is_leaf(int k) const { return nodes[k].left < 0; }
  int root() const { return static_cast<int>(nodes.size()) - 1; }
  double root_height() const { return n > 1 ? nodes.back().height : 0.0; }

  void leaves_under(int k, std::vector<NodeId>& out) const {
    std::vector<int> stack{k};
    while (!stack.empty()) {
      int x = stack.back();
      stack.pop_back();
      if (is_leaf(x)) {
        out.push_back(static_cast<NodeId>(x));
      } else {
        stack.push_back(nodes[x].right);
        stack.push_back(nodes[x].left);
      }
    }
  }
  std::vector<NodeId> leaf_order() const {
    std::vector<NodeId> out;
    if (n) leaves_under(root(), out);
    return out;
  }

  // ids: optional external labels for the leaves
  nlohmann::json to_json(const std::vector<long long>& ids = {}) const {
    auto rec = [&](auto&& self, int k) -> nlohmann::json {
      if (is_leaf(k)) return {{"leaf", ids.empty() ? static_cast<long long>(k) + 1 : ids[k]}, {"height", 0.0}};
      return {{"height", nodes[k].height},
              {"size", nodes[k].size},
              {"children", {self(self, nodes[k].left), self(self, nodes[k].right)}}};
    };
    if (n == 0) return nlohmann::json::object();
    return rec(rec, root());
  }
};

// Average linkage via nearest-neighbor chains; merges are then sorted by
// height (stable) and children placed smallest-leaf first.
inline Dendrogram average_linkage(const DistanceMatrix& dist) {
  const std::size_t n = dist.size();
  Dendrogram dg;
  dg.n = n;
  for (std::size_t v = 0; v < n; ++v) dg.nodes.push_back({-1, -1, 0.0, 1, static_cast<NodeId>(v)});
  if (n < 2) return dg;

  std::vector<double> d(n * n);
  for (std::size_t v = 0; v < n; ++v)
    for (std::size_t w = 0; w < n; ++w) d[v * n + w] = dist(v, w);
  std::vector<std::size_t> size(n, 1);
  std::vector<char> active(n, 1);
  struct Merge {
    std::size_t a, b;
    double h;
  };
  std::vector<Merge> merges;
  std::vector<std::size_t> chain;
  std::size_t remaining = n;
  while (remaining > 1) {
    if (chain.empty()) {
      std::size_t first = 0;
      while (!active[first]) ++first;
      chain.push_back(first);
    }
    for (;;) {
      std::size_t x = chain.back();
      std::size_t prev = chain.size() > 1 ? chain[chain.size() - 2] : n;
      std::size_t best = prev;
      double bd = prev < n ? d[x * n + prev] : INFINITY;
      for (std::size_t y = 0; y < n; ++y) {
        if (!active[y] || y == x) continue;
        if (d[x * n + y] < bd) {
          bd = d[x * n + y];
          best = y;
        }
      }
      if (best == prev) {
        chain.pop_back();
        chain.pop_back();
        std::size_t a = std::min(x, prev), b = std::max(x, prev);
        merges.push_back({a, b, bd});
        for (std::size_t k = 0; k < n; ++k) {
          if (!active[k] || k == a || k == b) continue;
          double nd = (size[a] * d[a * n + k] + size[b] * d[b * n + k]) / static_cast<double>(size[a] + size[b]);
          d[a * n + k] = d[k * n + a] = nd;
        }
        size[a] += size[b];
        active[b] = 0;
        --remaining;
        break;
      }
      chain.push_back(best);
    }
  }
  std::stable_sort(merges.begin(), merges.end(), [](const Merge& x, const Merge& y) { return x.h < y.h; });

  // relabel slots to tree nodes with union-find over the sorted sequence
  std::vector<std::size_t> parent(n), node_of(n);
  std::iota(parent.begin(), parent.end(), 0);
  std::iota(node_of.begin(), node_of.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  double last = 0;
  for (const auto& m : merges) {
    std::size_t ra = find(m.a), rb = find(m.b);
    int ca = static_cast<int>(node_of[ra]), cb = static_cast<int>(node_of[rb]);
    if (dg.nodes[cb].min_leaf < dg.nodes[ca].min_leaf) std::swap(ca, cb);
    Dendrogram::Node nd;
    nd.left = ca;
    nd.right = cb;
    nd.height = std::max(m.h, last);  // guards against rounding in the update
    last = nd.height;
    nd.size = dg.nodes[ca].size + dg.nodes[cb].size;
    nd.min_leaf = dg.nodes[ca].min_leaf;
    dg.nodes.push_back(nd);
    parent[rb] = ra;
    node_of[ra] = dg.nodes.size() - 1;
  }
  return dg;
}

namespace detail {
inline double cluster_average(const DistanceMatrix& d, const std::vector<NodeId>& a, const std::vector<NodeId>& b) {
  if (a.empty() || b.empty()) return 0.0;
  double s = 0;
  for (NodeId x : a)
    for (NodeId y : b) s += d(x, y);
  return s / static_cast<double>(a.size() * b.size());
}
}  // namespace detail

// Sum over internal nodes of the average distance of the first child to the
// cluster on its left plus the second child to the cluster on its right.
inline double ordering_objective(const Dendrogram& dg, const DistanceMatrix& d) {
  if (dg.n < 2) return 0;
  double total = 0;
  auto rec = [&](auto&& self, int k, int left, int right) -> void {
    if (dg.is_leaf(k)) return;
    int a = dg.nodes[k].left, b = dg.nodes[k].right;
    std::vector<NodeId> la, lb, ll, lr;
    dg.leaves_under(a, la);
    dg.leaves_under(b, lb);
    if (left >= 0) dg.leaves_under(left, ll);
    if (right >= 0) dg.leaves_under(right, lr);
    total += detail::cluster_average(d, la, ll) + detail::cluster_average(d, lb, lr);
    self(self, a, left, b);
    self(self, b, a, right);
  };
  rec(rec, dg.root(), -1, -1);
  return total;
}

// Root-to-leaf passes until nothing changes. A branch is flipped when that
// lowers the ordering objective: its own adjacent-cluster term plus the terms
// along the outer spines of both children, whose outside neighbors swap.
inline Dendrogram order_leaves(Dendrogram dg, const DistanceMatrix& d) {
  if (dg.n < 2) return dg;
  // leaf sets do not change under flips, so a fixed order gives each node a range
  std::vector<NodeId> flat = dg.leaf_order();
  std::vector<std::pair<std::size_t, std::size_t>> range(dg.nodes.size());
  for (std::size_t k = 0; k < flat.size(); ++k) range[flat[k]] = {k, k + 1};
  for (std::size_t k = dg.n; k < dg.nodes.size(); ++k) {
    auto [a0, a1] = range[dg.nodes[k].left];
    auto [b0, b1] = range[dg.nodes[k].right];
    range[k] = {std::min(a0, b0), std::max(a1, b1)};
  }
  auto avg = [&](int x, int y) {
    if (x < 0 || y < 0) return 0.0;
    auto [x0, x1] = range[x];
    auto [y0, y1] = range[y];
    double s = 0;
    for (std::size_t i = x0; i < x1; ++i)
      for (std::size_t j = y0; j < y1; ++j) s += d(flat[i], flat[j]);
    return s / static_cast<double>((x1 - x0) * (y1 - y0));
  };
  // change in the spine terms of subtree x when its outside neighbors go from (l0, r0) to (l1, r1)
  auto spine_delta = [&](int x, int l0, int r0, int l1, int r1) {
    double delta = 0;
    for (int y = x; !dg.is_leaf(y); y = dg.nodes[y].left) delta += avg(dg.nodes[y].left, l1) - avg(dg.nodes[y].left, l0);
    for (int y = x; !dg.is_leaf(y); y = dg.nodes[y].right)
      delta += avg(dg.nodes[y].right, r1) - avg(dg.nodes[y].right, r0);
    return delta;
  };
  bool changed = true;
  for (int pass = 0; changed && pass < 100; ++pass) {
    changed = false;
    auto rec = [&](auto&& self, int k, int left, int right) -> void {
      if (dg.is_leaf(k)) return;
      auto& nd = dg.nodes[k];
      int a = nd.left, b = nd.right;
      double keep = avg(a, left) + avg(b, right);
      double flip = avg(b, left) + avg(a, right);
      double delta = flip - keep + spine_delta(a, left, b, b, right) + spine_delta(b, a, right, left, a);
      if (delta < -1e-12) {
        std::swap(nd.left, nd.right);
        changed = true;
      }
      self(self, nd.left, left, nd.right);
      self(self, nd.right, nd.left, right);
    };
    rec(rec, dg.root(), -1, -1);
  }
  return dg;
}

// 8-bit binary PGM; pixel (i,j) = round(255 * p) for the i-th and j-th ordered nodes
inline std::string render_matrix(const PvwMatrix& pvw, const std::vector<NodeId>& order) {
  std::size_t n = order.size();
  std::string img = "P5\n" + std::to_string(n) + " " + std::to_string(n) + "\n255\n";
  std::size_t header = img.size();
  img.resize(header + n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double p = std::clamp(pvw(order[i], order[j]), 0.0, 1.0);
      img[header + i * n + j] = static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * p)));
    }
  return img;
}

// Clusters of the tree cut at `level` (merges with height <= level; level 0
// keeps every node separate), sorted by smallest member.
inline std::vector<std::vector<NodeId>> cut_dendrogram(const Dendrogram& dg, double level) {
  std::vector<std::vector<NodeId>> out;
  if (dg.n == 0) return out;
  std::vector<int> stack{dg.root()};
  while (!stack.empty()) {
    int k = stack.back();
    stack.pop_back();
    if (dg.is_leaf(k) || (level > 0 && dg.nodes[k].height <= level)) {
      std::vector<NodeId> leaves;
      dg.leaves_under(k, leaves);
      std::sort(leaves.begin(), leaves.end());
      out.push_back(std::move(leaves));
    } else {
      stack.push_back(dg.nodes[k].left);
      stack.push_back(dg.nodes[k].right);
    }
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.front() < b.front(); });
  return out;
}

struct Thresholds {
  double blue = 0.60;
  double red = 0.018;
};

struct CoarseView {
  double merge_level = 0, community_level = 0;
  Thresholds thresholds;
  struct MetaNode {
    std::vector<NodeId> members;
    std::size_t community;
  };
  struct MetaEdge {
    std::size_t a, b;
    std::size_t edge_count;
    double mean_pvw;
    std::string color;  // "blue", "red" or "neutral"
  };
  std::vector<MetaNode> meta_nodes;
  std::vector<std::vector<std::size_t>> communities;  // meta-node indices
  std::vector<MetaEdge> meta_edges;

  nlohmann::json to_json(const std::vector<long long>& ids = {}) const {
    auto ext = [&](NodeId v) { return ids.empty() ? static_cast<long long>(v) + 1 : ids[v]; };
    nlohmann::json j;
    j["merge_level"] = merge_level;
    j["community_level"] = community_level;
    j["thresholds"] = {{"blue", thresholds.blue}, {"red", thresholds.red}};
    j["meta_nodes"] = nlohmann::json::array();
    for (std::size_t k = 0; k < meta_nodes.size(); ++k) {
      nlohmann::json mem = nlohmann::json::array();
      for (NodeId v : meta_nodes[k].members) mem.push_back(ext(v));
      j["meta_nodes"].push_back(
          {{"id", k}, {"size", meta_nodes[k].members.size()}, {"members", mem}, {"community", meta_nodes[k].community}});
    }
    j["communities"] = communities;
    j["meta_edges"] = nlohmann::json::array();
    for (const auto& e : meta_edges)
      j["meta_edges"].push_back(
          {{"source", e.a}, {"target", e.b}, {"edge_count", e.edge_count}, {"mean_pvw", e.mean_pvw}, {"color", e.color}});
    return j;
  }
};

inline CoarseView coarse_grain(const Graph& g, const PvwMatrix& pvw, const Dendrogram& dg, double merge_level,
                               double community_level, const Thresholds& th = {}) {
  if (!(merge_level >= 0) || !(community_level >= merge_level))
    throw Error("coarse_grain: need 0 <= merge_level <= community_level");
  if (community_level > dg.root_height() + 1e-12) throw Error("coarse_grain: level above the root height");
  if (!(th.red >= 0 && th.blue <= 1 && th.red <= th.blue)) throw Error("coarse_grain: need 0 <= red <= blue <= 1");
  std::size_t n = dg.n;
  if (g.node_count() != n || pvw.node_count() != n) throw Error("coarse_grain: size mismatch");
  CoarseView cv;
  cv.merge_level = merge_level;
  cv.community_level = community_level;
  cv.thresholds = th;
  auto metas = cut_dendrogram(dg, merge_level);
  auto comms = cut_dendrogram(dg, community_level);
  std::vector<std::size_t> comm_of(n), meta_of(n);
  for (std::size_t c = 0; c < comms.size(); ++c)
    for (NodeId v : comms[c]) comm_of[v] = c;
  cv.communities.resize(comms.size());
  for (std::size_t k = 0; k < metas.size(); ++k) {
    for (NodeId v : metas[k]) meta_of[v] = k;
    std::size_t c = comm_of[metas[k].front()];
    cv.meta_nodes.push_back({metas[k], c});
    cv.communities[c].push_back(k);
  }
  std::size_t k = metas.size();
  std::vector<double> sum(k * k, 0.0);
  std::vector<std::size_t> edges(k * k, 0);
  for (NodeId v = 0; v < n; ++v)
    for (NodeId w = v + 1; w < n; ++w) {
      std::size_t a = meta_of[v], b = meta_of[w];
      if (a == b) continue;
      if (a > b) std::swap(a, b);
      sum[a * k + b] += pvw(v, w);
    }
  for (const auto& e : g.edges()) {
    std::size_t a = meta_of[e.u], b = meta_of[e.v];
    if (a == b) continue;
    if (a > b) std::swap(a, b);
    ++edges[a * k + b];
  }
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t b = a + 1; b < k; ++b) {
      double mean = std::clamp(sum[a * k + b] / static_cast<double>(metas[a].size() * metas[b].size()), 0.0, 1.0);
      std::string color = mean >= th.blue ? "blue" : mean <= th.red ? "red" : "neutral";
      if (edges[a * k + b] == 0 && color == "neutral") continue;
      cv.meta_edges.push_back({a, b, edges[a * k + b], mean, color});
    }
  return cv;
}

struct TriangleReport {
  std::uint64_t checked = 0;
  std::uint64_t violations = 0;
  bool sampled = false;
  double worst_margin = 0;  // max of d(v,w) - d(v,x) - d(w,x)
  NodeId worst[3] = {0, 0, 0};
};

inline TriangleReport triangle_check(const DistanceMatrix& d, std::uint64_t seed = 1) {
  TriangleReport r;
  std::size_t n = d.size();
  r.worst_margin = -INFINITY;
  auto check = [&](NodeId a, NodeId b, NodeId c) {
    ++r.checked;
    double ab = d(a, b), ac = d(a, c), bc = d(b, c);
    // only the longest side can violate
    double m1 = ab - ac - bc, m2 = ac - ab - bc, m3 = bc - ab - ac;
    double m = std::max({m1, m2, m3});
    if (m > 1e-12) ++r.violations;
    if (m > r.worst_margin) {
      r.worst_margin = m;
      if (m == m1) r.worst[0] = a, r.worst[1] = b, r.worst[2] = c;
      else if (m == m2) r.worst[0] = a, r.worst[1] = c, r.worst[2] = b;
      else r.worst[0] = b, r.worst[1] = c, r.worst[2] = a;
    }
  };
  if (n <= 2000) {
    for (NodeId a = 0; a < n; ++a)
      for (NodeId b = a + 1; b < n; ++b)
        for (NodeId c = b + 1; c < n; ++c) check(a, b, c);
  } else {
    r.sampled = true;
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<NodeId> pick(0, static_cast<NodeId>(n - 1));
    for (int s = 0; s < 1000000; ++s) {
      NodeId a = pick(rng), b = pick(rng), c = pick(rng);
      if (a == b || b == c || a == c) {
        --s;
        continue;
      }
      check(a, b, c);
    }
  }
  if (r.checked == 0) r.worst_margin = 0;
  return r;
}

}  // namespace comember
