#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "comember/core.hpp"

namespace comember {

// Disjoint nonempty blocks covering 0..n-1, blocks ordered by smallest member.
class Partition {
 public:
  Partition() = default;

  explicit Partition(std::vector<std::vector<NodeId>> blocks) : blocks_(std::move(blocks)) {
    std::size_t n = 0;
    for (auto& b : blocks_) {
      if (b.empty()) throw Error("empty block in partition");
      std::sort(b.begin(), b.end());
      n += b.size();
    }
    std::sort(blocks_.begin(), blocks_.end(), [](const auto& a, const auto& b) { return a.front() < b.front(); });
    membership_.assign(n, static_cast<std::uint32_t>(-1));
    for (std::size_t k = 0; k < blocks_.size(); ++k)
      for (NodeId v : blocks_[k]) {
        if (v >= n || membership_[v] != static_cast<std::uint32_t>(-1))
          throw Error("blocks do not partition the node set");
        membership_[v] = static_cast<std::uint32_t>(k);
      }
  }

  // any integer labels; equal labels share a block
  template <typename Label>
  static Partition from_labels(const std::vector<Label>& labels) {
    std::map<Label, std::size_t> slot;
    std::vector<std::vector<NodeId>> blocks;
    for (std::size_t v = 0; v < labels.size(); ++v) {
      auto [it, fresh] = slot.emplace(labels[v], blocks.size());
      if (fresh) blocks.emplace_back();
      blocks[it->second].push_back(static_cast<NodeId>(v));
    }
    return Partition(std::move(blocks));
  }

  static Partition singletons(std::size_t n) {
    std::vector<std::vector<NodeId>> b(n);
    for (std::size_t v = 0; v < n; ++v) b[v] = {static_cast<NodeId>(v)};
    return Partition(std::move(b));
  }

  static Partition one_block(std::size_t n) {
    std::vector<NodeId> b(n);
    for (std::size_t v = 0; v < n; ++v) b[v] = static_cast<NodeId>(v);
    return Partition({b});
  }

  std::size_t node_count() const { return membership_.size(); }
  std::size_t block_count() const { return blocks_.size(); }
  const std::vector<std::vector<NodeId>>& blocks() const { return blocks_; }
  std::uint32_t block_of(NodeId v) const { return membership_[v]; }
  const std::vector<std::uint32_t>& membership() const { return membership_; }
  bool together(NodeId v, NodeId w) const { return membership_[v] == membership_[w]; }

  bool operator==(const Partition& o) const { return blocks_ == o.blocks_; }

  // "{1,2}{3}" with 1-based node numbers
  std::string canonical_string() const {
    std::string s;
    for (const auto& b : blocks_) {
      s += '{';
      for (std::size_t k = 0; k < b.size(); ++k) {
        if (k) s += ',';
        s += std::to_string(b[k] + 1);
      }
      s += '}';
    }
    return s;
  }

 private:
  std::vector<std::vector<NodeId>> blocks_;
  std::vector<std::uint32_t> membership_;
};

// labels are 0-based internally; external formats add 1
struct CommunityAssignment {
  std::vector<std::uint32_t> labels;
  std::uint32_t m = 1;

  void validate() const {
    for (auto l : labels)
      if (l >= m) throw Error("community label out of range");
  }
  Partition partition() const { return Partition::from_labels(labels); }
};

inline std::uint64_t bell_number(unsigned n) {
  // Bell triangle
  std::vector<std::uint64_t> row{1};
  for (unsigned i = 0; i < n; ++i) {
    std::vector<std::uint64_t> next{row.back()};
    for (auto x : row) next.push_back(next.back() + x);
    row = std::move(next);
  }
  return row.front();
}

// Restricted growth strings a[0]=0, a[i] <= 1+max(a[0..i-1]), capped at max_blocks-1.
class PartitionEnumerator {
 public:
  static constexpr std::size_t kMaxNodes = 12;

  PartitionEnumerator(std::size_t n, std::size_t max_blocks) : n_(n), k_(max_blocks) {
    if (n > kMaxNodes) throw SizeGuardError("partition enumeration limited to n <= 12");
    if (max_blocks == 0 && n > 0) throw Error("max_blocks must be positive");
    a_.assign(n_, 0);
    b_.assign(n_, 0);
    done_ = false;
  }

  // current restricted growth string
  const std::vector<std::uint32_t>& labels() const { return a_; }
  std::size_t block_count() const { return n_ == 0 ? 0 : b_.back() + 1; }
  bool done() const { return done_; }

  void next() {
    // b_[i] = max(a[0..i])
    for (std::size_t i = n_; i-- > 1;) {
      std::uint32_t cap = std::min<std::uint32_t>(b_[i - 1] + 1, static_cast<std::uint32_t>(k_ - 1));
      if (a_[i] < cap) {
        ++a_[i];
        b_[i] = std::max(b_[i - 1], a_[i]);
        for (std::size_t j = i + 1; j < n_; ++j) {
          a_[j] = 0;
          b_[j] = b_[i];
        }
        return;
      }
    }
    done_ = true;
  }

 private:
  std::size_t n_, k_;
  std::vector<std::uint32_t> a_, b_;
  bool done_ = true;
};

inline void for_each_partition(std::size_t n, std::size_t max_blocks,
                               const std::function<void(const std::vector<std::uint32_t>&, std::size_t)>& f) {
  for (PartitionEnumerator e(n, max_blocks); !e.done(); e.next()) f(e.labels(), e.block_count());
}

inline std::vector<Partition> enumerate_partitions(std::size_t n, std::size_t max_blocks) {
  std::vector<Partition> out;
  for_each_partition(n, max_blocks, [&](const auto& labels, std::size_t) { out.push_back(Partition::from_labels(labels)); });
  return out;
}

// Standard NMI 2I(a;b)/(H(a)+H(b)); two single-block partitions score 1.
inline double nmi(const Partition& a, const Partition& b) {
  if (a.node_count() != b.node_count()) throw Error("nmi: partitions over different node sets");
  const double n = static_cast<double>(a.node_count());
  if (n == 0) return 1.0;
  std::map<std::pair<std::uint32_t, std::uint32_t>, double> joint;
  for (NodeId v = 0; v < a.node_count(); ++v) joint[{a.block_of(v), b.block_of(v)}] += 1.0;
  auto entropy = [n](const Partition& p) {
    double h = 0;
    for (const auto& blk : p.blocks()) {
      double q = blk.size() / n;
      h -= q * std::log(q);
    }
    return h;
  };
  double ha = entropy(a), hb = entropy(b);
  if (ha + hb == 0.0) return 1.0;
  double mi = 0;
  for (const auto& [key, c] : joint) {
    double pa = a.blocks()[key.first].size() / n;
    double pb = b.blocks()[key.second].size() / n;
    double pab = c / n;
    mi += pab * std::log(pab / (pa * pb));
  }
  return std::clamp(2.0 * mi / (ha + hb), 0.0, 1.0);
}

constexpr const char* kNmiVariant = "standard partition NMI, 2I(X;Y)/(H(X)+H(Y))";

}  // namespace comember
