#pragma once

#include <memory>
#include <string>
#include <vector>

#include "comember/full_filter.hpp"

namespace comember {

// Supplies the second- and third-order statistics the node-marginal equations need.
// An oracle may carry auxiliary state integrated alongside the marginals.
class MarginalOracle {
 public:
  virtual ~MarginalOracle() = default;
  virtual std::string name() const = 0;

  virtual std::size_t aux_size() const { return 0; }
  virtual void init_aux(double* /*aux*/) const {}
  virtual void begin_interval(const double* /*aux*/) {}
  virtual void aux_derivative(const double* /*aux*/, double* /*daux*/) const {}
  // after an accepted step; true if aux was changed
  virtual bool post_step(double* /*aux*/) const { return false; }
  // graph change; called after the statistics for the update were read
  virtual void on_flip(double* /*aux*/, NodeId /*v*/, NodeId /*w*/, EdgeType /*to*/) {}

  // p_ij^{vw} as m x m row-major (i for v); p is the n x m marginal matrix
  virtual void pair_stats(const double* aux, const double* p, NodeId v, NodeId w, double* out) const = 0;
  // p_ijk^{vwx} as m^3 row-major
  virtual void triple_stats(const double* aux, const double* p, NodeId v, NodeId w, NodeId x, double* out) const = 0;

  // T_i^v = sum_w sum_j b p_ij^{vw} + sum_{w,x} sum_jk b p_ijk^{vwx} and S, using the
  // self-rates of the current graph
  virtual void evidence_terms(const double* aux, const double* p, const DynamicBlockParams& b, std::size_t n,
                              const std::vector<EdgeType>& kappa, double* T, double& S) const {
    const std::size_t m = b.m;
    std::vector<double> buf(m * m * m);
    std::fill(T, T + n * m, 0.0);
    S = 0;
    auto self = [&](std::size_t i, std::size_t j, NodeId v, NodeId w) {
      int k = kappa[pair_index(n, v, w)];
      return b.b(i, j, k, k);
    };
    for (NodeId v = 0; v < n; ++v)
      for (NodeId w = 0; w < n; ++w) {
        if (w == v) continue;
        pair_stats(aux, p, v, w, buf.data());
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < m; ++j) {
            double c = self(i, j, v, w) * buf[i * m + j];
            T[v * m + i] += c;
            if (v < w) S += c;
          }
      }
    for (NodeId v = 0; v < n; ++v)
      for (NodeId w = 0; w < n; ++w)
        for (NodeId x = w + 1; x < n; ++x) {
          if (w == v || x == v) continue;
          triple_stats(aux, p, v, w, x, buf.data());
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < m; ++j)
              for (std::size_t k = 0; k < m; ++k) T[v * m + i] += self(j, k, w, x) * buf[(i * m + j) * m + k];
        }
  }
};

// Product-form closure: every joint statistic factorizes over nodes.
class IndependenceOracle : public MarginalOracle {
 public:
  explicit IndependenceOracle(std::size_t m) : m_(m) {}
  std::string name() const override { return "independence"; }
  void pair_stats(const double*, const double* p, NodeId v, NodeId w, double* out) const override {
    for (std::size_t i = 0; i < m_; ++i)
      for (std::size_t j = 0; j < m_; ++j) out[i * m_ + j] = p[v * m_ + i] * p[w * m_ + j];
  }
  void triple_stats(const double*, const double* p, NodeId v, NodeId w, NodeId x, double* out) const override {
    for (std::size_t i = 0; i < m_; ++i)
      for (std::size_t j = 0; j < m_; ++j)
        for (std::size_t k = 0; k < m_; ++k)
          out[(i * m_ + j) * m_ + k] = p[v * m_ + i] * p[w * m_ + j] * p[x * m_ + k];
  }

 private:
  std::size_t m_;
};

// Exact statistics from a full filter evolved jointly as auxiliary state. The aux vector is
// kept at total mass equal to the state count so its entries stay near 1.
class FullFilterOracle : public MarginalOracle {
 public:
  FullFilterOracle(const DynamicBlockParams& params, std::size_t n, std::vector<EdgeType> kappa,
                   std::vector<double> prior = {})
      : ff_(params, n, std::move(kappa), std::move(prior)) {}

  std::string name() const override { return "full-filter"; }
  const FullFilter& filter() const { return ff_; }
  std::size_t aux_size() const override { return ff_.state_count(); }
  void init_aux(double* aux) const override {
    const auto& d = ff_.distribution();
    double scale = static_cast<double>(d.size());
    for (std::size_t s = 0; s < d.size(); ++s) aux[s] = d[s] * scale;
  }
  void begin_interval(const double* aux) override { shift_ = ff_.expected_rate(aux); }
  void aux_derivative(const double* aux, double* daux) const override { ff_.apply_generator(aux, daux, shift_); }
  bool post_step(double* aux) const override {
    bool changed = false;
    double sum = 0;
    std::size_t N = ff_.state_count();
    for (std::size_t s = 0; s < N; ++s) {
      if (aux[s] < 0) {
        aux[s] = 0;
        changed = true;
      }
      sum += aux[s];
    }
    double target = static_cast<double>(N);
    if (sum < 1e-20 * target || sum > 1e20 * target) {
      for (std::size_t s = 0; s < N; ++s) aux[s] *= target / sum;
      changed = true;
    }
    return changed;
  }
  void on_flip(double* aux, NodeId v, NodeId w, EdgeType to) override {
    ff_.multiply_flip(aux, v, w, to);
    ff_.set_edge(v, w, to);
    renormalize(aux);
  }
  void renormalize(double* aux) const {
    std::size_t N = ff_.state_count();
    double sum = 0;
    for (std::size_t s = 0; s < N; ++s) sum += aux[s];
    if (!(sum > 0)) throw InconsistencyError("full-filter oracle: zero mass");
    for (std::size_t s = 0; s < N; ++s) aux[s] *= static_cast<double>(N) / sum;
  }

  void pair_stats(const double* aux, const double*, NodeId v, NodeId w, double* out) const override {
    const std::size_t m = ff_.community_count();
    std::fill(out, out + m * m, 0.0);
    double total = 0;
    for (std::size_t s = 0; s < ff_.state_count(); ++s) {
      out[ff_.digit(s, v) * m + ff_.digit(s, w)] += aux[s];
      total += aux[s];
    }
    for (std::size_t k = 0; k < m * m; ++k) out[k] /= total;
  }
  void triple_stats(const double* aux, const double*, NodeId v, NodeId w, NodeId x, double* out) const override {
    const std::size_t m = ff_.community_count();
    std::fill(out, out + m * m * m, 0.0);
    double total = 0;
    for (std::size_t s = 0; s < ff_.state_count(); ++s) {
      out[(ff_.digit(s, v) * m + ff_.digit(s, w)) * m + ff_.digit(s, x)] += aux[s];
      total += aux[s];
    }
    for (std::size_t k = 0; k < m * m * m; ++k) out[k] /= total;
  }

  // the two sums combine to E[1{phi(v)=i} D(phi)] with D the total edge self-rate
  void evidence_terms(const double* aux, const double*, const DynamicBlockParams& b, std::size_t n,
                      const std::vector<EdgeType>&, double* T, double& S) const override {
    const std::size_t m = b.m;
    const auto& D = ff_.edge_diagonal();
    std::fill(T, T + n * m, 0.0);
    double total = 0, sd = 0;
    ff_.for_each_state([&](std::size_t s, const std::uint32_t* d) {
      double x = aux[s], xd = x * D[s];
      total += x;
      sd += xd;
      for (std::size_t v = 0; v < n; ++v) T[v * m + d[v]] += xd;
    });
    for (std::size_t k = 0; k < n * m; ++k) T[k] /= total;
    S = sd / total;
  }

 private:
  FullFilter ff_;
  double shift_ = 0;
};

class MarginalFilter {
 public:
  MarginalFilter(DynamicBlockParams params, std::size_t n, std::vector<EdgeType> kappa,
                 std::shared_ptr<MarginalOracle> oracle, std::vector<double> initial = {})
      : p_(std::move(params)), n_(n), kappa_(std::move(kappa)), oracle_(std::move(oracle)) {
    p_.validate();
    if (!oracle_) throw Error("marginal filter: oracle required");
    if (kappa_.size() != pair_count(n_)) throw Error("marginal filter: graph size mismatch");
    const std::size_t m = p_.m;
    state_.assign(n_ * m + oracle_->aux_size(), 0.0);
    if (initial.empty()) {
      std::fill(state_.begin(), state_.begin() + n_ * m, 1.0 / static_cast<double>(m));
    } else {
      if (initial.size() != n_ * m) throw Error("marginal filter: initial marginals must be n x m");
      std::copy(initial.begin(), initial.end(), state_.begin());
    }
    oracle_->init_aux(aux());
  }

  double time() const { return t_; }
  std::size_t node_count() const { return n_; }
  std::vector<double> marginals() const { return {state_.begin(), state_.begin() + n_ * p_.m}; }
  const std::vector<std::string>& warnings() const { return warnings_; }
  const MarginalOracle& oracle() const { return *oracle_; }
  const OdeStats& ode_stats() const { return stats_; }

  // d/dt p_i^v = (A p^v)_i + T_i^v - p_i^v S
  void derivative(const std::vector<double>& x, std::vector<double>& dx) const {
    const std::size_t m = p_.m, nm = n_ * m;
    const double* p = x.data();
    std::vector<double> T(nm);
    double S = 0;
    oracle_->evidence_terms(x.data() + nm, p, p_, n_, kappa_, T.data(), S);
    for (std::size_t v = 0; v < n_; ++v)
      for (std::size_t i = 0; i < m; ++i) {
        double a = 0;
        for (std::size_t j = 0; j < m; ++j) a += p_.A(i, j) * p[v * m + j];
        dx[v * m + i] = a + T[v * m + i] - p[v * m + i] * S;
      }
    if (oracle_->aux_size()) oracle_->aux_derivative(x.data() + nm, dx.data() + nm);
  }

  void predict(double dt, const OdeOptions& opt = {}) {
    if (!(dt >= 0)) throw Error("marginal filter: negative time step");
    if (dt == 0) return;
    oracle_->begin_interval(aux());
    auto sys = [&](const std::vector<double>& x, std::vector<double>& dx, double) { derivative(x, dx); };
    auto post = [&](std::vector<double>& x, double t) {
      bool changed = oracle_->aux_size() ? oracle_->post_step(x.data() + n_ * p_.m) : false;
      return reproject(x, t) || changed;
    };
    integrate_dopri(sys, state_, t_, t_ + dt, dt_, opt, post, &stats_);
    t_ += dt;
  }

  // edge {a,b} changes from its current type to `to`
  void update(NodeId a, NodeId b, EdgeType to) {
    if (a >= n_ || b >= n_ || a == b) throw Error("marginal filter: bad edge");
    if (to >= p_.r) throw Error("marginal filter: edge type out of range");
    EdgeType from = kappa_[pair_index(n_, a, b)];
    if (from == to) throw Error("marginal filter: flip does not change the edge type");
    const std::size_t m = p_.m;
    std::vector<double> pab(m * m), trip(m * m * m), next(n_ * m, 0.0);
    const double* p = state_.data();
    oracle_->pair_stats(aux(), p, a, b, pab.data());
    double S = 0;
    for (std::size_t j = 0; j < m; ++j)
      for (std::size_t k = 0; k < m; ++k) S += p_.b(j, k, to, from) * pab[j * m + k];
    if (!(S > 0)) throw InconsistencyError("marginal filter: observed flip has zero probability");
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j) {
        next[a * m + i] += p_.b(i, j, to, from) * pab[i * m + j] / S;
        next[b * m + j] += p_.b(i, j, to, from) * pab[i * m + j] / S;
      }
    for (NodeId v = 0; v < n_; ++v) {
      if (v == a || v == b) continue;
      oracle_->triple_stats(aux(), p, v, a, b, trip.data());
      for (std::size_t i = 0; i < m; ++i) {
        double s = 0;
        for (std::size_t j = 0; j < m; ++j)
          for (std::size_t k = 0; k < m; ++k) s += p_.b(j, k, to, from) * trip[(i * m + j) * m + k];
        next[v * m + i] = s / S;
      }
    }
    std::copy(next.begin(), next.end(), state_.begin());
    kappa_[pair_index(n_, a, b)] = to;
    oracle_->on_flip(aux(), a, b, to);
  }

 private:
  double* aux() { return state_.data() + n_ * p_.m; }

  bool reproject(std::vector<double>& x, double t) {
    const std::size_t m = p_.m;
    bool changed = false;
    for (std::size_t v = 0; v < n_; ++v) {
      double s = 0;
      for (std::size_t i = 0; i < m; ++i) s += x[v * m + i];
      if (std::fabs(s - 1) > 1e-6) {
        for (std::size_t i = 0; i < m; ++i) x[v * m + i] /= s;
        warnings_.push_back("t=" + std::to_string(t) + " node " + std::to_string(v + 1) +
                            " row sum drifted to " + std::to_string(s) + "; re-projected");
        changed = true;
      }
    }
    return changed;
  }

  DynamicBlockParams p_;
  std::size_t n_;
  std::vector<EdgeType> kappa_;
  std::shared_ptr<MarginalOracle> oracle_;
  std::vector<double> state_;
  std::vector<std::string> warnings_;
  double t_ = 0, dt_ = 0;
  OdeStats stats_;
};

}  // namespace comember
