#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "comember/core.hpp"
#include "comember/graph.hpp"
#include "comember/models.hpp"
#include "comember/partition.hpp"
#include "comember/pvw_matrix.hpp"
#include "comember/quadrature.hpp"

namespace comember {

constexpr std::size_t kMaxAssignmentStates = 2000000;

struct EdgeCounts {
  std::size_t e_in = 0, non_in = 0, e_out = 0, non_out = 0;
};

// Planted-partition counts from block membership (labels need not be canonical).
template <typename Labels>
EdgeCounts edge_counts(const Labels& labels, const Graph& g) {
  std::size_t n = g.node_count();
  std::map<std::uint32_t, std::size_t> sizes;
  for (std::size_t v = 0; v < n; ++v) ++sizes[labels[v]];
  std::size_t within = 0;
  for (const auto& [l, s] : sizes) within += s * (s - 1) / 2;
  EdgeCounts c;
  for (const auto& e : g.edges()) (labels[e.u] == labels[e.v] ? c.e_in : c.e_out)++;
  c.non_in = within - c.e_in;
  c.non_out = pair_count(n) - within - c.e_out;
  return c;
}

inline EdgeCounts edge_counts(const Partition& p, const Graph& g) { return edge_counts(p.membership(), g); }

inline double planted_edge_loglik(const EdgeCounts& c, double p_in, double p_out) {
  return xlogy(static_cast<double>(c.e_in), p_in) + xlogy(static_cast<double>(c.non_in), 1 - p_in) +
         xlogy(static_cast<double>(c.e_out), p_out) + xlogy(static_cast<double>(c.non_out), 1 - p_out);
}

// log of (m)_k / m^n; non-integer m uses prod_j max(m - j, 0)
inline double log_falling_over_power(double m, std::size_t k, std::size_t n) {
  double s = -static_cast<double>(n) * std::log(m);
  for (std::size_t j = 0; j < k; ++j) {
    double f = m - static_cast<double>(j);
    if (f <= 0) return kNegInf;
    s += std::log(f);
  }
  return s;
}

inline double joint_blockmodel(const CommunityAssignment& phi, const Graph& g, const BlockParams& b) {
  std::size_t n = g.node_count();
  if (phi.labels.size() != n) throw Error("assignment size does not match graph");
  if (phi.m != b.communities()) throw Error("assignment community count does not match params");
  if (g.edge_types() > b.edge_types()) throw Error("graph has more edge types than params");
  double s = 0;
  for (std::size_t v = 0; v < n; ++v) s += std::log(b.prior(phi.labels[v]));
  auto types = g.type_table();
  for (std::size_t v = 0; v < n; ++v)
    for (std::size_t w = v + 1; w < n; ++w) s += std::log(b.q(phi.labels[v], phi.labels[w], types[v * n + w]));
  return s;
}

inline double joint_planted(const Partition& pi, const Graph& g, const PlantedParams& p) {
  if (pi.node_count() != g.node_count()) throw Error("partition size does not match graph");
  if (pi.block_count() > p.m) return kNegInf;
  double lf = log_falling_over_power(static_cast<double>(p.m), pi.block_count(), g.node_count());
  return lf + planted_edge_loglik(edge_counts(pi, g), p.p_in, p.p_out);
}

// Unnormalized log-probabilities of every partition (or assignment) with the evidence.
struct PosteriorTable {
  struct Entry {
    std::vector<std::uint32_t> labels;
    double log_joint;
  };
  std::vector<Entry> entries;
  double log_normalizer = kNegInf;  // log Pr(G)

  double probability(std::size_t k) const { return std::exp(entries[k].log_joint - log_normalizer); }

  void write_text(std::ostream& out) const {
    out.precision(17);
    for (const auto& e : entries)
      out << Partition::from_labels(e.labels).canonical_string() << ' ' << (e.log_joint - log_normalizer) << '\n';
  }
};

inline PosteriorTable posterior_planted(const Graph& g, const PlantedParams& p) {
  PosteriorTable t;
  std::vector<double> logs;
  for_each_partition(g.node_count(), std::min(p.m, std::max<std::size_t>(g.node_count(), 1)),
                     [&](const auto& labels, std::size_t k) {
                       double lj = log_falling_over_power(static_cast<double>(p.m), k, g.node_count()) +
                                   planted_edge_loglik(edge_counts(labels, g), p.p_in, p.p_out);
                       t.entries.push_back({labels, lj});
                       logs.push_back(lj);
                     });
  t.log_normalizer = log_sum_exp(logs);
  return t;
}

inline std::size_t checked_state_count(std::size_t m, std::size_t n) {
  double states = std::pow(static_cast<double>(m), static_cast<double>(n));
  if (states > static_cast<double>(kMaxAssignmentStates)) throw SizeGuardError("m^n exceeds 2e6 states");
  return static_cast<std::size_t>(std::llround(states));
}

// Calls f(labels, log_joint) for every assignment in [m]^n.
template <typename F>
void for_each_assignment(const Graph& g, const BlockParams& b, F&& f) {
  std::size_t n = g.node_count(), m = b.communities();
  std::size_t total = checked_state_count(m, n);
  CommunityAssignment phi{std::vector<std::uint32_t>(n, 0), static_cast<std::uint32_t>(m)};
  for (std::size_t s = 0; s < total; ++s) {
    std::size_t x = s;
    for (std::size_t v = 0; v < n; ++v) {
      phi.labels[v] = static_cast<std::uint32_t>(x % m);
      x /= m;
    }
    f(phi.labels, joint_blockmodel(phi, g, b));
  }
}

inline PosteriorTable posterior_blockmodel(const Graph& g, const BlockParams& b) {
  PosteriorTable t;
  std::vector<double> logs;
  for_each_assignment(g, b, [&](const auto& labels, double lj) {
    t.entries.push_back({labels, lj});
    logs.push_back(lj);
  });
  t.log_normalizer = log_sum_exp(logs);
  return t;
}

inline std::vector<double> node_marginal_exact(const Graph& g, const BlockParams& b, NodeId v) {
  std::size_t m = b.communities();
  std::vector<double> acc(m, kNegInf);
  for_each_assignment(g, b, [&](const auto& labels, double lj) { acc[labels[v]] = log_add(acc[labels[v]], lj); });
  double z = log_sum_exp(acc);
  if (z == kNegInf) throw InconsistencyError("graph has zero probability under params");
  std::vector<double> out(m);
  for (std::size_t i = 0; i < m; ++i) out[i] = std::exp(acc[i] - z);
  return out;
}

namespace detail {
inline std::vector<double> normalize_logs(const std::vector<double>& logs) {
  double z = log_sum_exp(logs);
  if (z == kNegInf) throw InconsistencyError("degenerate normalization (all weights zero)");
  std::vector<double> out(logs.size());
  for (std::size_t k = 0; k < logs.size(); ++k) out[k] = std::exp(logs[k] - z);
  return out;
}
}  // namespace detail

inline std::vector<double> node_marginal_local(const Graph& g, const BlockParams& b, NodeId v) {
  std::size_t m = b.communities(), n = g.node_count();
  std::vector<double> logs(m);
  for (std::size_t i = 0; i < m; ++i) {
    double s = std::log(b.prior(i));
    for (NodeId x = 0; x < n; ++x) {
      if (x == v) continue;
      EdgeType k = g.type(v, x);
      double t = 0;
      for (std::size_t j = 0; j < m; ++j) t += b.prior(j) * b.q(i, j, k);
      s += std::log(t);
    }
    logs[i] = s;
  }
  return detail::normalize_logs(logs);
}

// m x m row-major; drop_product omits the third-node factors
inline std::vector<double> pair_marginal_local(const Graph& g, const BlockParams& b, NodeId v, NodeId w,
                                               bool drop_product = false) {
  if (v == w) throw Error("pair marginal needs distinct nodes");
  std::size_t m = b.communities(), n = g.node_count();
  std::vector<double> logs(m * m);
  EdgeType kvw = g.type(v, w);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      double s = std::log(b.prior(i)) + std::log(b.prior(j)) + std::log(b.q(i, j, kvw));
      if (!drop_product)
        for (NodeId x = 0; x < n; ++x) {
          if (x == v || x == w) continue;
          EdgeType kv = g.type(v, x), kw = g.type(w, x);
          double t = 0;
          for (std::size_t k = 0; k < m; ++k) t += b.prior(k) * b.q(i, k, kv) * b.q(j, k, kw);
          s += std::log(t);
        }
      logs[i * m + j] = s;
    }
  return detail::normalize_logs(logs);
}

// Priors for the integrated brute-force mode: (p_I,p_O) uniform on
// 0 <= p_O <= p_I <= 1 and log m uniform on [log 2, log n].
struct PriorIntegration {
  unsigned triangle_points = 64;  // per axis
  unsigned m_points = 33;
};

inline PvwMatrix exact_pvw_bruteforce(const Graph& g, const PlantedParams& p,
                                      const std::optional<PriorIntegration>& integration = std::nullopt) {
  std::size_t n = g.node_count();
  if (n > 10) throw SizeGuardError("exact_pvw_bruteforce limited to n <= 10");
  if (!integration) p.validate();
  PvwMatrix out(n);
  if (n < 2) return out;

  std::vector<double> log_m_factor(n + 1, kNegInf);  // by block count
  std::size_t max_blocks = n;
  std::map<std::tuple<std::size_t, std::size_t, std::size_t, std::size_t>, double> lik_cache;
  QuadratureRule pin, t;
  QuadratureRule mrule;
  if (integration) {
    mrule = log_uniform_m_rule(n, integration->m_points);
    for (std::size_t k = 1; k <= n; ++k) {
      double acc = kNegInf;
      for (std::size_t q = 0; q < mrule.nodes.size(); ++q)
        acc = log_add(acc, std::log(mrule.weights[q]) + log_falling_over_power(mrule.nodes[q], k, n));
      log_m_factor[k] = acc;
    }
    pin = gauss_legendre(integration->triangle_points, 0, 1);
    t = gauss_legendre(integration->triangle_points, 0, 1);
  } else {
    max_blocks = std::min(p.m, n);
    for (std::size_t k = 1; k <= max_blocks; ++k)
      log_m_factor[k] = log_falling_over_power(static_cast<double>(p.m), k, n);
  }
  auto edge_term = [&](const EdgeCounts& c) {
    if (!integration) return planted_edge_loglik(c, p.p_in, p.p_out);
    auto key = std::make_tuple(c.e_in, c.non_in, c.e_out, c.non_out);
    auto it = lik_cache.find(key);
    if (it != lik_cache.end()) return it->second;
    // density 2 on the triangle, p_O = p_I * t with Jacobian p_I
    double acc = kNegInf;
    for (std::size_t a = 0; a < pin.nodes.size(); ++a)
      for (std::size_t b = 0; b < t.nodes.size(); ++b) {
        double pi = pin.nodes[a], po = pi * t.nodes[b];
        double lw = std::log(2.0 * pin.weights[a] * t.weights[b] * pi);
        acc = log_add(acc, lw + planted_edge_loglik(c, pi, po));
      }
    lik_cache.emplace(key, acc);
    return acc;
  };

  std::vector<std::vector<std::uint32_t>> parts;
  std::vector<double> logs;
  for_each_partition(n, max_blocks, [&](const auto& labels, std::size_t k) {
    double lj = log_m_factor[k];
    if (lj == kNegInf) return;
    lj += edge_term(edge_counts(labels, g));
    parts.push_back(labels);
    logs.push_back(lj);
  });
  double z = log_sum_exp(logs);
  if (z == kNegInf) throw InconsistencyError("graph has zero probability under params");
  std::vector<double> acc(pair_count(n), 0.0);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    double w = std::exp(logs[k] - z);
    if (w == 0) continue;
    std::size_t idx = 0;
    for (std::size_t v = 0; v < n; ++v)
      for (std::size_t u = v + 1; u < n; ++u, ++idx)
        if (parts[k][v] == parts[k][u]) acc[idx] += w;
  }
  std::size_t idx = 0;
  for (NodeId v = 0; v < n; ++v)
    for (NodeId u = v + 1; u < n; ++u, ++idx) out.set(v, u, std::min(1.0, acc[idx]));
  out.metadata["method"] = "bruteforce";
  out.metadata["mode"] = integration ? "integrated" : "fixed";
  if (!integration) out.metadata["params"] = {{"m", p.m}, {"p_in", p.p_in}, {"p_out", p.p_out}};
  return out;
}

// Single-site conditional Pr(phi(v) = i | phi(-v), G)
inline std::vector<double> gibbs_conditional(const Graph& g, const BlockParams& b,
                                             const std::vector<std::uint32_t>& labels, NodeId v) {
  std::size_t m = b.communities(), n = g.node_count();
  std::vector<double> logs(m);
  for (std::size_t i = 0; i < m; ++i) {
    double s = std::log(b.prior(i));
    for (NodeId x = 0; x < n; ++x)
      if (x != v) s += std::log(b.q(i, labels[x], g.type(v, x)));
    logs[i] = s;
  }
  return detail::normalize_logs(logs);
}

struct GibbsEstimate {
  PvwMatrix pvw;
  std::vector<double> std_error;  // pair_index order
  std::size_t batches = 0;
};

inline GibbsEstimate gibbs_pvw_montecarlo(const Graph& g, const PlantedParams& p, std::size_t sweeps,
                                          std::size_t burn_in, std::uint64_t seed, std::size_t batches = 20) {
  p.validate();
  if (sweeps < burn_in) throw Error("gibbs: sweeps must be >= burn_in");
  std::size_t n = g.node_count(), m = p.m;
  std::size_t kept = sweeps - burn_in;
  if (kept < batches || batches < 2) throw Error("gibbs: too few sweeps for batch means");
  auto b = BlockParams::planted(m, p.p_in, p.p_out);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::uint32_t> init(0, static_cast<std::uint32_t>(m - 1));
  std::uniform_real_distribution<double> unif(0, 1);
  std::vector<std::uint32_t> labels(n);
  for (auto& l : labels) l = init(rng);

  std::size_t np = pair_count(n), per_batch = kept / batches;
  std::vector<double> batch_sum(np, 0.0), total(np, 0.0), sumsq(np, 0.0);
  std::size_t in_batch = 0, done_batches = 0;
  for (std::size_t s = 0; s < burn_in + per_batch * batches; ++s) {
    for (NodeId v = 0; v < n; ++v) {
      auto pr = gibbs_conditional(g, b, labels, v);
      double u = unif(rng), c = 0;
      std::uint32_t pick = static_cast<std::uint32_t>(m - 1);
      for (std::size_t i = 0; i < m; ++i) {
        c += pr[i];
        if (u < c) {
          pick = static_cast<std::uint32_t>(i);
          break;
        }
      }
      labels[v] = pick;
    }
    if (s < burn_in) continue;
    // Rao-Blackwellized: Pr(phi(v) = phi(w) | rest) instead of the indicator
    std::size_t idx = 0;
    for (NodeId v = 0; v < n; ++v) {
      if (v + 1 == n) break;
      auto pv = gibbs_conditional(g, b, labels, v);
      for (NodeId w = v + 1; w < n; ++w, ++idx) batch_sum[idx] += pv[labels[w]];
    }
    if (++in_batch == per_batch) {
      for (std::size_t k = 0; k < np; ++k) {
        double mean = batch_sum[k] / static_cast<double>(per_batch);
        total[k] += mean;
        sumsq[k] += mean * mean;
        batch_sum[k] = 0;
      }
      in_batch = 0;
      ++done_batches;
    }
  }
  GibbsEstimate est{PvwMatrix(n), std::vector<double>(np), done_batches};
  double B = static_cast<double>(done_batches);
  std::size_t idx = 0;
  for (NodeId v = 0; v < n; ++v)
    for (NodeId w = v + 1; w < n; ++w, ++idx) {
      double mean = total[idx] / B;
      double var = std::max(0.0, (sumsq[idx] - B * mean * mean) / (B - 1));
      est.pvw.set(v, w, mean);
      est.std_error[idx] = std::sqrt(var / B);
    }
  est.pvw.metadata["method"] = "gibbs";
  est.pvw.metadata["sweeps"] = sweeps;
  est.pvw.metadata["burn_in"] = burn_in;
  est.pvw.metadata["seed"] = seed;
  return est;
}

}  // namespace comember
