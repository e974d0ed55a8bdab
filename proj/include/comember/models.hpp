#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "comember/graph.hpp"
#include "comember/partition.hpp"

namespace comember {

struct PlantedParams {
  std::size_t n = 0;
  std::size_t m = 1;
  double p_in = 0.0;
  double p_out = 0.0;

  void validate() const {
    if (m == 0) throw Error("planted params: m must be positive");
    if (!(p_in >= 0 && p_in <= 1 && p_out >= 0 && p_out <= 1))
      throw Error("planted params: probabilities must lie in [0,1]");
  }
};

// Blockmodel parameters: community prior p (size m) and, for every
// community pair, a distribution over r edge types (q[i][j][k], symmetric in i,j).
class BlockParams {
 public:
  BlockParams() = default;
  BlockParams(std::vector<double> prior, int edge_types)
      : p_(std::move(prior)), r_(edge_types), q_(p_.size() * p_.size() * edge_types, 0.0) {}

  static BlockParams planted(std::size_t m, double p_in, double p_out) {
    BlockParams b(std::vector<double>(m, 1.0 / m), 2);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j) {
        double p = i == j ? p_in : p_out;
        b.q(i, j, 0) = 1 - p;
        b.q(i, j, 1) = p;
      }
    return b;
  }

  std::size_t communities() const { return p_.size(); }
  int edge_types() const { return r_; }
  const std::vector<double>& prior() const { return p_; }
  double prior(std::size_t i) const { return p_[i]; }
  double& q(std::size_t i, std::size_t j, std::size_t k) { return q_[(i * p_.size() + j) * r_ + k]; }
  double q(std::size_t i, std::size_t j, std::size_t k) const { return q_[(i * p_.size() + j) * r_ + k]; }

  void validate() const {
    auto check_stochastic = [](auto begin, auto end) {
      double s = 0;
      for (auto it = begin; it != end; ++it) {
        if (*it < 0) throw Error("block params: negative probability");
        s += *it;
      }
      if (std::abs(s - 1.0) > 1e-12) throw Error("block params: vector does not sum to 1");
    };
    check_stochastic(p_.begin(), p_.end());
    std::size_t m = p_.size();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j) {
        auto b = q_.begin() + static_cast<long>((i * m + j) * r_);
        check_stochastic(b, b + r_);
        for (int k = 0; k < r_; ++k)
          if (q(i, j, k) != q(j, i, k)) throw Error("block params: q must be symmetric");
      }
  }

 private:
  std::vector<double> p_;
  int r_ = 2;
  std::vector<double> q_;
};

struct PlantedSample {
  CommunityAssignment assignment;
  Partition partition;
  Graph graph;
};

inline PlantedSample sample_planted(const PlantedParams& params, std::uint64_t seed) {
  params.validate();
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::uint32_t> comm(0, static_cast<std::uint32_t>(params.m - 1));
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  PlantedSample s;
  s.assignment.m = static_cast<std::uint32_t>(params.m);
  s.assignment.labels.resize(params.n);
  for (auto& l : s.assignment.labels) l = comm(rng);
  std::vector<TypedEdge> edges;
  for (NodeId v = 0; v < params.n; ++v)
    for (NodeId w = v + 1; w < params.n; ++w) {
      double p = s.assignment.labels[v] == s.assignment.labels[w] ? params.p_in : params.p_out;
      if (unif(rng) < p) edges.push_back({v, w, 1});
    }
  s.partition = s.assignment.partition();
  s.graph = Graph(params.n, edges);
  return s;
}

}  // namespace comember
