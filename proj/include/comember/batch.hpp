#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <functional>
#include <map>
#include <mutex>
#include <ostream>
#include <shared_mutex>
#include <thread>
#include <unordered_map>
#include <vector>

#include "comember/evidence.hpp"
#include "comember/graph.hpp"
#include "comember/pvw_hat.hpp"
#include "comember/pvw_matrix.hpp"

namespace comember {

// Memo of p-hat keyed by (kappa, n1, n2) for a fixed n; n0 is implied.
class TripleCache {
 public:
  using Estimator = std::function<double(const PairEvidence&)>;

  explicit TripleCache(std::size_t n = 0, Estimator est = {}) : n_(n), est_(std::move(est)) {}
  TripleCache(const TripleCache& o) : n_(o.n_), est_(o.est_), values_(o.values_), counts_(o.counts_) {}
  TripleCache& operator=(const TripleCache& o) {
    n_ = o.n_;
    est_ = o.est_;
    values_ = o.values_;
    counts_ = o.counts_;
    return *this;
  }

  static std::uint64_t key(int kappa, std::size_t n1, std::size_t n2) {
    return (static_cast<std::uint64_t>(kappa) << 63) | (static_cast<std::uint64_t>(n1) << 32) | n2;
  }
  static PairEvidence evidence(std::uint64_t key, std::size_t n) {
    int kappa = static_cast<int>(key >> 63);
    std::size_t n1 = (key >> 32) & 0x7fffffffu, n2 = key & 0xffffffffu;
    return {kappa, n - 2 - n1 - n2, n1, n2, n};
  }

  std::size_t node_count() const { return n_; }

  // fills are idempotent: racing threads compute the same value
  double get(int kappa, std::size_t n1, std::size_t n2) {
    auto k = key(kappa, n1, n2);
    {
      std::shared_lock lock(mu_);
      auto it = values_.find(k);
      if (it != values_.end()) return it->second;
    }
    double p = estimate(evidence(k, n_));
    std::unique_lock lock(mu_);
    values_.emplace(k, p);
    return p;
  }

  void add_counts(const std::unordered_map<std::uint64_t, std::uint64_t>& c) {
    std::unique_lock lock(mu_);
    for (const auto& [k, v] : c) counts_[k] += v;
  }

  std::size_t size() const {
    std::shared_lock lock(mu_);
    return values_.size();
  }

  struct Row {
    int kappa;
    std::size_t n1, n2;
    double p_hat;
    std::uint64_t count;
  };

  // sorted by (kappa, n1, n2); includes every cached or counted triple
  std::vector<Row> rows() const {
    std::shared_lock lock(mu_);
    std::map<std::uint64_t, Row> out;
    for (const auto& [k, v] : values_) {
      auto e = evidence(k, n_);
      out[k] = {e.kappa, e.n1, e.n2, v, 0};
    }
    for (const auto& [k, c] : counts_) {
      auto it = out.find(k);
      if (it == out.end()) {
        auto e = evidence(k, n_);
        it = out.emplace(k, Row{e.kappa, e.n1, e.n2, estimate(e), 0}).first;
      }
      it->second.count = c;
    }
    std::vector<Row> v;
    for (auto& [k, r] : out) v.push_back(r);
    return v;
  }

  void write_csv(std::ostream& out) const {
    out << "kappa,n1,n2,p_hat,count\n";  // p_hat holds whichever estimator filled the cache
    out.precision(17);
    for (const auto& r : rows()) out << r.kappa << ',' << r.n1 << ',' << r.n2 << ',' << r.p_hat << ',' << r.count << '\n';
  }

 private:
  double estimate(const PairEvidence& e) const { return est_ ? est_(e) : pvw_hat(e); }

  std::size_t n_;
  Estimator est_;
  mutable std::shared_mutex mu_;
  std::unordered_map<std::uint64_t, double> values_;
  std::unordered_map<std::uint64_t, std::uint64_t> counts_;
};

struct BatchOptions {
  bool collect_counts = false;
  unsigned threads = 0;          // 0: hardware concurrency
  bool store_matrix = true;      // false: timing mode, results discarded
  std::size_t max_stored_pairs = 200'000'000;
  TripleCache::Estimator estimator;   // empty: p-hat
  std::string method = "hat";
};

struct BatchStats {
  std::uint64_t sum_n2 = 0;
  std::uint64_t pairs_with_common_neighbor = 0;
  std::uint64_t explicit_pairs = 0;  // n2 > 0 or kappa = 1
  std::size_t distinct_triples = 0;
  double seconds = 0;
  unsigned threads = 1;
};

struct BatchResult {
  PvwMatrix pvw;
  TripleCache cache;
  BatchStats stats;
};

inline BatchResult pvw_matrix_batch(const Graph& g, const BatchOptions& opt = {}) {
  require_simple(g);
  auto start = std::chrono::steady_clock::now();
  const std::size_t n = g.node_count();
  if (n < 3) throw Error("pvw batch needs n >= 3");
  unsigned threads = opt.threads ? opt.threads : std::max(1u, std::thread::hardware_concurrency());
  BatchResult res{PvwMatrix(n), TripleCache(n, opt.estimator), {}};
  res.stats.threads = threads;

  std::size_t max_deg = 0;
  for (NodeId v = 0; v < n; ++v) max_deg = std::max(max_deg, g.degree(v));

  struct Worker {
    std::vector<std::uint32_t> cnt;
    std::vector<char> is_nb;
    std::vector<NodeId> touched;
    std::vector<std::tuple<NodeId, NodeId, double>> out;
    std::unordered_map<std::uint64_t, std::uint64_t> counts;
    std::unordered_map<std::uint64_t, double> local;
    std::vector<std::uint64_t> covered_by_sum;
    std::uint64_t sum_n2 = 0, with_cn = 0, explicit_pairs = 0;
    std::size_t reported = 0;
  };
  std::vector<Worker> workers(threads);
  std::atomic<std::size_t> next{0};
  std::atomic<std::uint64_t> stored{0};
  std::atomic<bool> over_budget{false};
  constexpr std::size_t kChunk = 32;

  auto run = [&](Worker& wk) {
    wk.cnt.assign(n, 0);
    wk.is_nb.assign(n, 0);
    wk.covered_by_sum.assign(2 * max_deg + 1, 0);
    auto lookup = [&](int kappa, std::size_t n1, std::size_t n2) {
      auto k = TripleCache::key(kappa, n1, n2);
      auto it = wk.local.find(k);
      if (it != wk.local.end()) return it->second;
      double p = res.cache.get(kappa, n1, n2);
      wk.local.emplace(k, p);
      return p;
    };
    auto emit = [&](NodeId v, NodeId w, std::size_t n2, int kappa) {
      auto e = evidence_from_counts(n, g.degree(v), g.degree(w), n2, kappa);
      double p = lookup(kappa, e.n1, e.n2);
      ++wk.explicit_pairs;
      ++wk.covered_by_sum[g.degree(v) + g.degree(w)];
      if (opt.collect_counts) ++wk.counts[TripleCache::key(kappa, e.n1, e.n2)];
      if (opt.store_matrix) wk.out.emplace_back(v, w, p);
    };
    for (;;) {
      std::size_t begin = next.fetch_add(kChunk);
      if (begin >= n) break;
      std::size_t end = std::min(n, begin + kChunk);
      for (NodeId v = static_cast<NodeId>(begin); v < end; ++v) {
        for (NodeId u : g.neighbors(v)) wk.is_nb[u] = 1;
        for (NodeId u : g.neighbors(v))
          for (NodeId w : g.neighbors(u))
            if (w > v && wk.cnt[w]++ == 0) wk.touched.push_back(w);
        for (NodeId w : wk.touched) {
          wk.sum_n2 += wk.cnt[w];
          ++wk.with_cn;
          emit(v, w, wk.cnt[w], wk.is_nb[w]);
        }
        for (NodeId w : g.neighbors(v))
          if (w > v && wk.cnt[w] == 0) emit(v, w, 0, 1);
        for (NodeId w : wk.touched) wk.cnt[w] = 0;
        wk.touched.clear();
        for (NodeId u : g.neighbors(v)) wk.is_nb[u] = 0;
      }
      if (opt.store_matrix) {
        std::size_t produced = wk.out.size() - wk.reported;
        wk.reported = wk.out.size();
        if (stored += produced; stored > opt.max_stored_pairs) {
          over_budget = true;
          return;
        }
      }
    }
  };
  if (threads == 1) {
    run(workers[0]);
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(run, std::ref(workers[t]));
    for (auto& th : pool) th.join();
  }
  if (over_budget) throw SizeGuardError("pvw batch: stored pair count exceeds configured budget");

  // pairs with no edge and no common neighbor depend only on the degree sum
  std::vector<std::uint64_t> covered(2 * max_deg + 1, 0);
  for (auto& wk : workers) {
    res.stats.sum_n2 += wk.sum_n2;
    res.stats.pairs_with_common_neighbor += wk.with_cn;
    res.stats.explicit_pairs += wk.explicit_pairs;
    for (std::size_t s = 0; s < covered.size(); ++s) covered[s] += wk.covered_by_sum[s];
    if (opt.collect_counts) res.cache.add_counts(wk.counts);
    if (opt.store_matrix)
      for (const auto& [v, w, p] : wk.out) res.pvw.set(v, w, p);
    wk = Worker{};
  }
  std::map<std::size_t, std::uint64_t> deg_hist;
  for (NodeId v = 0; v < n; ++v) ++deg_hist[g.degree(v)];
  std::vector<std::uint64_t> pairs_by_sum(2 * max_deg + 1, 0);
  for (auto a = deg_hist.begin(); a != deg_hist.end(); ++a)
    for (auto b = a; b != deg_hist.end(); ++b) {
      std::uint64_t c = a == b ? a->second * (a->second - 1) / 2 : a->second * b->second;
      pairs_by_sum[a->first + b->first] += c;
    }
  std::vector<double> by_sum(2 * max_deg + 1, -1.0);
  std::unordered_map<std::uint64_t, std::uint64_t> default_counts;
  for (std::size_t s = 0; s < by_sum.size(); ++s) {
    std::uint64_t rest = pairs_by_sum[s] - covered[s];
    if (rest == 0 || s > n - 2) continue;
    by_sum[s] = res.cache.get(0, s, 0);
    default_counts[TripleCache::key(0, s, 0)] = rest;
  }
  if (opt.collect_counts) res.cache.add_counts(default_counts);
  std::vector<std::uint32_t> degrees(n);
  for (NodeId v = 0; v < n; ++v) degrees[v] = static_cast<std::uint32_t>(g.degree(v));
  res.pvw.set_degree_fallback(std::move(degrees), std::move(by_sum));
  res.pvw.metadata["method"] = opt.method;
  res.stats.distinct_triples = res.cache.size();
  res.stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return res;
}

}  // namespace comember
