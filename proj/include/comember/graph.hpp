#pragma once

#include <algorithm>
#include <istream>
#include <map>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "comember/core.hpp"

namespace comember {

struct TypedEdge {
  NodeId u;
  NodeId v;
  EdgeType type;
};

// Undirected graph with typed edges; type 0 means absent.
// Adjacency is stored CSR style with each neighbor list sorted.
class Graph {
 public:
  Graph() = default;

  Graph(std::size_t n, const std::vector<TypedEdge>& edges, int edge_types = 2)
      : n_(n), r_(edge_types) {
    if (r_ < 2 || r_ > 255) throw Error("edge type count must be in [2,255]");
    std::vector<std::size_t> deg(n_, 0);
    for (const auto& e : edges) {
      if (e.u >= n_ || e.v >= n_) throw Error("edge endpoint out of range");
      if (e.u == e.v) throw Error("self-loop in edge list");
      if (e.type == 0 || e.type >= r_) throw Error("edge type out of range");
      ++deg[e.u];
      ++deg[e.v];
    }
    offsets_.assign(n_ + 1, 0);
    for (std::size_t v = 0; v < n_; ++v) offsets_[v + 1] = offsets_[v] + deg[v];
    targets_.resize(offsets_[n_]);
    types_.resize(offsets_[n_]);
    std::vector<std::size_t> fill(offsets_.begin(), offsets_.end() - 1);
    for (const auto& e : edges) {
      targets_[fill[e.u]] = e.v;
      types_[fill[e.u]++] = e.type;
      targets_[fill[e.v]] = e.u;
      types_[fill[e.v]++] = e.type;
    }
    for (std::size_t v = 0; v < n_; ++v) {
      std::vector<std::pair<NodeId, EdgeType>> tmp;
      for (std::size_t k = offsets_[v]; k < offsets_[v + 1]; ++k) tmp.emplace_back(targets_[k], types_[k]);
      std::sort(tmp.begin(), tmp.end());
      for (std::size_t k = 1; k < tmp.size(); ++k)
        if (tmp[k].first == tmp[k - 1].first) throw Error("duplicate edge in edge list");
      for (std::size_t k = 0; k < tmp.size(); ++k) {
        targets_[offsets_[v] + k] = tmp[k].first;
        types_[offsets_[v] + k] = tmp[k].second;
      }
    }
    edges_.reserve(edges.size());
    for (NodeId v = 0; v < n_; ++v)
      for (std::size_t k = offsets_[v]; k < offsets_[v + 1]; ++k)
        if (v < targets_[k]) edges_.push_back({v, targets_[k], types_[k]});
  }

  std::size_t node_count() const { return n_; }
  std::size_t edge_count() const { return edges_.size(); }
  int edge_types() const { return r_; }
  const std::vector<TypedEdge>& edges() const { return edges_; }

  std::size_t degree(NodeId v) const { return offsets_[v + 1] - offsets_[v]; }

  std::span<const NodeId> neighbors(NodeId v) const {
    return {targets_.data() + offsets_[v], degree(v)};
  }
  std::span<const EdgeType> neighbor_types(NodeId v) const {
    return {types_.data() + offsets_[v], degree(v)};
  }

  EdgeType type(NodeId v, NodeId w) const {
    if (v == w) return 0;
    if (degree(v) > degree(w)) std::swap(v, w);
    auto nb = neighbors(v);
    auto it = std::lower_bound(nb.begin(), nb.end(), w);
    if (it == nb.end() || *it != w) return 0;
    return types_[offsets_[v] + static_cast<std::size_t>(it - nb.begin())];
  }
  bool adjacent(NodeId v, NodeId w) const { return type(v, w) != 0; }

  // dense n x n type table, row-major; intended for small graphs
  std::vector<EdgeType> type_table() const {
    std::vector<EdgeType> t(n_ * n_, 0);
    for (const auto& e : edges_) t[e.u * n_ + e.v] = t[e.v * n_ + e.u] = e.type;
    return t;
  }

 private:
  std::size_t n_ = 0;
  int r_ = 2;
  std::vector<std::size_t> offsets_{0};
  std::vector<NodeId> targets_;
  std::vector<EdgeType> types_;
  std::vector<TypedEdge> edges_;
};

struct EdgeListOptions {
  int edge_types = 0;  // 0: infer as max type + 1 (at least 2)
};

struct LoadedGraph {
  Graph graph;
  std::vector<long long> original_ids;  // internal index -> id in the file
  std::size_t duplicate_pairs = 0;
  std::size_t self_loops = 0;
};

// Whitespace separated "u v [type]" lines; '#' and '%' start comments.
// Ids are remapped to 0..n-1 in increasing order of the original id.
inline LoadedGraph load_edge_list(std::istream& in, const EdgeListOptions& opt = {}) {
  struct Raw {
    long long u, v;
    long t;
  };
  std::vector<Raw> raw;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find_first_of("#%");
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    std::vector<std::string> tok;
    std::string s;
    while (ls >> s) tok.push_back(s);
    if (tok.empty()) continue;
    if (tok.size() < 2 || tok.size() > 3) throw ParseError(lineno, "expected 'u v [type]'");
    Raw r{};
    try {
      std::size_t pos = 0;
      r.u = std::stoll(tok[0], &pos);
      if (pos != tok[0].size()) throw std::invalid_argument("trailing");
      r.v = std::stoll(tok[1], &pos);
      if (pos != tok[1].size()) throw std::invalid_argument("trailing");
      r.t = 1;
      if (tok.size() == 3) {
        r.t = std::stol(tok[2], &pos);
        if (pos != tok[2].size()) throw std::invalid_argument("trailing");
      }
    } catch (const std::logic_error&) {
      throw ParseError(lineno, "non-integer token");
    }
    if (r.t < 0 || r.t > 254) throw ParseError(lineno, "edge type out of range");
    raw.push_back(r);
  }
  if (raw.empty()) throw Error("empty edge list");

  LoadedGraph out;
  std::vector<long long> ids;
  for (const auto& r : raw) {
    ids.push_back(r.u);
    ids.push_back(r.v);
  }
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  std::unordered_map<long long, NodeId> index;
  for (std::size_t k = 0; k < ids.size(); ++k) index[ids[k]] = static_cast<NodeId>(k);

  std::unordered_map<std::uint64_t, long> last;
  std::vector<std::uint64_t> order;
  long max_type = 1;
  for (const auto& r : raw) {
    if (r.u == r.v) {
      ++out.self_loops;
      continue;
    }
    auto key = pair_key(index[r.u], index[r.v]);
    auto [it, fresh] = last.emplace(key, r.t);
    if (!fresh) {
      ++out.duplicate_pairs;
      it->second = r.t;
    } else {
      order.push_back(key);
    }
    max_type = std::max(max_type, r.t);
  }
  int r = opt.edge_types > 0 ? opt.edge_types : static_cast<int>(max_type) + 1;
  if (max_type >= r) throw Error("edge type exceeds declared type count");
  std::vector<TypedEdge> edges;
  for (auto key : order) {
    long t = last[key];
    if (t == 0) continue;  // explicit type 0 means absent
    edges.push_back({static_cast<NodeId>(key >> 32), static_cast<NodeId>(key & 0xffffffffu),
                     static_cast<EdgeType>(t)});
  }
  out.graph = Graph(ids.size(), edges, r);
  out.original_ids = std::move(ids);
  return out;
}

inline LoadedGraph load_edge_list(const std::string& text, const EdgeListOptions& opt = {}) {
  std::istringstream in(text);
  return load_edge_list(in, opt);
}

}  // namespace comember
