#pragma once

#include <algorithm>
#include <map>
#include <numeric>
#include <queue>
#include <random>
#include <string>
#include <tuple>
#include <vector>

#include "comember/partition.hpp"
#include "comember/pvw_matrix.hpp"

namespace comember {

// Raw utilities of a node being dead/alive when bad/good, reduced to theta.
struct UtilityConfig {
  double theta = 0.5;

  static UtilityConfig from_utilities(double u_bd, double u_ba, double u_gd, double u_ga) {
    if (u_ga < u_gd || u_bd < u_ba || (u_ga == u_gd && u_bd == u_ba))
      throw Error("utilities must satisfy u_GA >= u_GD, u_BD >= u_BA, not both equal");
    return {(u_ga - u_gd) / (u_ga - u_gd + u_bd - u_ba)};
  }
};

inline void check_theta(double theta) {
  if (!(theta >= 0 && theta <= 1)) throw Error("theta must lie in [0,1]");
}

inline double utility(const Partition& candidate, const Partition& truth, double theta) {
  if (candidate.node_count() != truth.node_count()) throw Error("utility: partitions over different node sets");
  std::map<std::pair<std::uint32_t, std::uint32_t>, double> overlap;
  for (NodeId v = 0; v < candidate.node_count(); ++v) overlap[{truth.block_of(v), candidate.block_of(v)}] += 1;
  double s = 0, c2 = 0;
  for (const auto& [k, c] : overlap) s += c * c;
  for (const auto& b : candidate.blocks()) c2 += static_cast<double>(b.size() * b.size());
  double n = static_cast<double>(candidate.node_count());
  return 0.5 * (s - theta * c2 - (1 - theta) * n);
}

// u(rho) for a partition rho of one candidate block of the given size
inline double block_utility(const std::vector<std::size_t>& part_sizes, double theta) {
  double s = 0, c = 0;
  for (auto k : part_sizes) {
    s += static_cast<double>(k * k);
    c += static_cast<double>(k);
  }
  return 0.5 * (s - theta * c * c - (1 - theta) * c);
}

inline double expected_utility(const Partition& candidate, const PvwMatrix& pvw, double theta) {
  if (candidate.node_count() != pvw.node_count()) throw Error("expected_utility: size mismatch");
  double s = 0;
  for (const auto& b : candidate.blocks())
    for (std::size_t i = 0; i < b.size(); ++i)
      for (std::size_t j = i + 1; j < b.size(); ++j) s += pvw(b[i], b[j]) - theta;
  return s;
}

inline double merge_gain(const std::vector<NodeId>& community, NodeId v, const PvwMatrix& pvw, double theta) {
  double s = 0;
  for (NodeId w : community) {
    if (w == v) throw Error("merge_gain: node already in community");
    s += pvw(v, w);
  }
  return s - theta * static_cast<double>(community.size());
}

struct DetectionResult {
  Partition partition;
  double expected_utility = 0;
  double theta_used = 0;
  std::vector<std::string> trace;
};

namespace detail {

inline std::vector<double> dense_pvw(const PvwMatrix& pvw) {
  std::size_t n = pvw.node_count();
  if (n > 20000) throw SizeGuardError("optimizer limited to n <= 20000");
  std::vector<double> p(n * n, 1.0);
  for (NodeId v = 0; v < n; ++v)
    for (NodeId w = v + 1; w < n; ++w) p[v * n + w] = p[w * n + v] = pvw(v, w);
  return p;
}

// p is a dense n x n matrix of co-membership probabilities
inline DetectionResult optimize_dense(const std::vector<double>& p, std::size_t n, double theta, std::uint64_t seed) {
  check_theta(theta);
  DetectionResult res;
  res.theta_used = theta;
  std::vector<std::uint32_t> label(n);
  std::iota(label.begin(), label.end(), 0u);

  // community ids are the smallest member; gains between communities are kept dense
  auto agglomerate = [&]() {
    std::map<std::uint32_t, std::vector<NodeId>> members;
    for (NodeId v = 0; v < n; ++v) members[label[v]].push_back(v);
    std::vector<std::uint32_t> ids;
    std::vector<std::uint32_t> slot(n, 0);
    for (auto& [id, mem] : members) {
      slot[id] = static_cast<std::uint32_t>(ids.size());
      ids.push_back(id);
    }
    std::size_t k = ids.size();
    std::vector<double> gain(k * k, 0.0);
    for (NodeId v = 0; v < n; ++v)
      for (NodeId w = v + 1; w < n; ++w) {
        auto a = slot[label[v]], b = slot[label[w]];
        if (a == b) continue;
        double g = p[v * n + w] - theta;
        gain[a * k + b] += g;
        gain[b * k + a] += g;
      }
    std::vector<std::uint32_t> version(k, 0);
    std::vector<char> alive(k, 1);
    // max gain first, then smallest (min id, max id) of the representative nodes
    using Item = std::tuple<double, std::uint32_t, std::uint32_t, std::uint32_t, std::uint32_t>;
    auto cmp = [&](const Item& x, const Item& y) {
      if (std::get<0>(x) != std::get<0>(y)) return std::get<0>(x) < std::get<0>(y);
      auto ax = std::minmax(ids[std::get<1>(x)], ids[std::get<2>(x)]);
      auto ay = std::minmax(ids[std::get<1>(y)], ids[std::get<2>(y)]);
      return ax > ay;
    };
    std::priority_queue<Item, std::vector<Item>, decltype(cmp)> heap(cmp);
    for (std::uint32_t a = 0; a < k; ++a)
      for (std::uint32_t b = a + 1; b < k; ++b)
        if (gain[a * k + b] > 0) heap.emplace(gain[a * k + b], a, b, 0, 0);
    std::size_t merges = 0;
    while (!heap.empty()) {
      auto [g, a, b, va, vb] = heap.top();
      heap.pop();
      if (!alive[a] || !alive[b] || va != version[a] || vb != version[b]) continue;
      // keep the slot whose representative is smaller
      if (ids[b] < ids[a]) std::swap(a, b);
      res.trace.push_back("merge " + std::to_string(ids[a] + 1) + " " + std::to_string(ids[b] + 1) +
                          " gain " + std::to_string(g));
      alive[b] = 0;
      ++version[a];
      for (std::uint32_t c = 0; c < k; ++c) {
        if (!alive[c] || c == a) continue;
        gain[a * k + c] += gain[b * k + c];
        gain[c * k + a] = gain[a * k + c];
      }
      for (NodeId v = 0; v < n; ++v)
        if (label[v] == ids[b]) label[v] = ids[a];
      for (std::uint32_t c = 0; c < k; ++c)
        if (alive[c] && c != a && gain[a * k + c] > 0) {
          auto x = std::min(a, c), y = std::max(a, c);
          heap.emplace(gain[a * k + c], x, y, version[x], version[y]);
        }
      ++merges;
    }
    return merges;
  };

  // single-node moves until no move raises expected utility
  std::mt19937_64 rng(seed);
  auto local_moves = [&]() {
    constexpr auto kNone = static_cast<std::uint32_t>(-1);
    std::size_t moves = 0;
    std::vector<NodeId> order(n);
    std::iota(order.begin(), order.end(), 0u);
    std::vector<double> to(n, 0.0);  // label -> sum of (p - theta) to its members other than v
    std::vector<char> present(n, 0);
    std::vector<std::uint32_t> seen;
    std::vector<std::size_t> size(n, 0);
    for (NodeId w = 0; w < n; ++w) ++size[label[w]];
    bool improved = true;
    while (improved) {
      improved = false;
      std::shuffle(order.begin(), order.end(), rng);
      for (NodeId v : order) {
        for (NodeId w = 0; w < n; ++w) {
          if (w == v) continue;
          auto c = label[w];
          if (!present[c]) {
            present[c] = 1;
            to[c] = 0;
            seen.push_back(c);
          }
          to[c] += p[v * n + w] - theta;
        }
        double stay = present[label[v]] ? to[label[v]] : 0.0;
        double best = 0.0;  // moving out to a fresh singleton
        std::uint32_t target = kNone;
        std::sort(seen.begin(), seen.end());
        for (auto c : seen)
          if (c != label[v] && to[c] > best) {
            best = to[c];
            target = c;
          }
        bool alone = !present[label[v]];
        for (auto c : seen) present[c] = 0;
        seen.clear();
        if (!(best > stay + 1e-12) || (target == kNone && alone)) continue;
        if (target == kNone) {
          target = 0;
          while (size[target]) ++target;
        }
        res.trace.push_back("move " + std::to_string(v + 1) + " gain " + std::to_string(best - stay));
        --size[label[v]];
        label[v] = target;
        ++size[target];
        ++moves;
        improved = true;
      }
    }
    // ids back to the smallest member
    std::vector<std::uint32_t> rep(n, kNone);
    for (NodeId v = 0; v < n; ++v)
      if (rep[label[v]] == kNone) rep[label[v]] = v;
    for (NodeId v = 0; v < n; ++v) label[v] = rep[label[v]];
    return moves;
  };

  auto descend = [&]() {
    for (int round = 0; round < 100; ++round) {
      std::size_t changes = agglomerate();
      changes += local_moves();
      if (changes == 0) break;
    }
  };
  auto score = [&]() {
    double eu = 0;
    for (NodeId v = 0; v < n; ++v)
      for (NodeId w = v + 1; w < n; ++w)
        if (label[v] == label[w]) eu += p[v * n + w] - theta;
    return eu;
  };
  // relabel to the smallest member; keys may be anything below 2n
  auto normalize = [&]() {
    std::vector<std::uint32_t> rep(2 * n, static_cast<std::uint32_t>(-1));
    for (NodeId v = 0; v < n; ++v) {
      if (rep[label[v]] == static_cast<std::uint32_t>(-1)) rep[label[v]] = v;
      label[v] = rep[label[v]];
    }
  };

  descend();
  auto best = label;
  double best_eu = score();

  // perturb the incumbent and descend again; keep strict improvements
  const std::size_t kicks = n < 3 ? 0 : 20 + n;
  std::size_t trace_mark = res.trace.size();
  for (std::size_t k = 0; k < kicks; ++k) {
    label = best;
    std::vector<std::uint32_t> reps;
    for (NodeId v = 0; v < n; ++v)
      if (label[v] == v) reps.push_back(v);
    if (reps.size() >= 2 && rng() % 2) {
      auto a = reps[rng() % reps.size()], b = reps[rng() % reps.size()];
      for (NodeId v = 0; v < n; ++v)
        if (label[v] == b) label[v] = a;
    } else {
      auto a = reps[rng() % reps.size()];
      for (NodeId v = 0; v < n; ++v)
        if (label[v] == a && rng() % 2) label[v] = static_cast<std::uint32_t>(n + v);
    }
    normalize();
    descend();
    double eu = score();
    if (eu > best_eu + 1e-12) {
      best = label;
      best_eu = eu;
      res.trace.push_back("kick " + std::to_string(k + 1) + " improved to " + std::to_string(eu));
      trace_mark = res.trace.size();
    } else {
      res.trace.resize(trace_mark);
    }
  }
  label = best;
  res.partition = Partition::from_labels(label);
  res.expected_utility = best_eu;
  return res;
}

}  // namespace detail

inline DetectionResult optimize_partition(const PvwMatrix& pvw, double theta, std::uint64_t seed = 1) {
  return detail::optimize_dense(detail::dense_pvw(pvw), pvw.node_count(), theta, seed);
}

inline std::vector<double> theta_grid(std::size_t points = 41) {
  std::vector<double> g(points);
  for (std::size_t k = 0; k < points; ++k) g[k] = points == 1 ? 0.5 : static_cast<double>(k) / (points - 1);
  return g;
}

struct SweepPoint {
  double theta;
  double nmi;
  double expected_utility;
  std::size_t blocks;
};

struct SweepResult {
  double best_theta = 0;
  double best_nmi = 0;
  Partition best_partition;
  std::vector<SweepPoint> curve;
};

inline SweepResult theta_sweep(const PvwMatrix& pvw, const Partition& truth, const std::vector<double>& grid,
                               std::uint64_t seed = 1) {
  if (truth.node_count() != pvw.node_count()) throw Error("theta_sweep: truth size mismatch");
  auto p = detail::dense_pvw(pvw);
  SweepResult res;
  res.best_nmi = -1;
  for (double theta : grid) {
    auto r = detail::optimize_dense(p, pvw.node_count(), theta, seed);
    double score = nmi(r.partition, truth);
    res.curve.push_back({theta, score, r.expected_utility, r.partition.block_count()});
    if (score > res.best_nmi) {
      res.best_nmi = score;
      res.best_theta = theta;
      res.best_partition = r.partition;
    }
  }
  return res;
}

}  // namespace comember
