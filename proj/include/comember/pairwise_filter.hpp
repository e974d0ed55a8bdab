#pragma once

#include <memory>
#include <string>
#include <vector>

#include "comember/closure.hpp"
#include "comember/full_filter.hpp"

namespace comember {

// index of v < w < x among the n-choose-3 triples (colex order)
inline std::size_t triple_index(std::size_t v, std::size_t w, std::size_t x) {
  if (v > w) std::swap(v, w);
  if (w > x) std::swap(w, x);
  if (v > w) std::swap(v, w);
  return x * (x - 1) * (x - 2) / 6 + w * (w - 1) / 2 + v;
}
inline std::size_t triple_count(std::size_t n) { return n * (n - 1) * (n - 2) / 6; }

// Supplies r_vw^{vx} and s_vw^{xy} for the co-membership equations. May carry auxiliary
// state integrated with the pair probabilities.
class PairClosure {
 public:
  virtual ~PairClosure() = default;
  virtual std::string name() const = 0;

  virtual std::size_t aux_size() const { return 0; }
  virtual void init_aux(double* /*aux*/) const {}
  virtual void begin_interval(const double* /*aux*/) {}
  virtual void aux_derivative(const double* /*aux*/, double* /*daux*/) const {}
  virtual bool post_step(double* /*aux*/) const { return false; }
  virtual void on_flip(double* /*aux*/, NodeId /*v*/, NodeId /*w*/, EdgeType /*to*/) {}

  // called before r / s queries; p holds p^{vw} in pair_index order
  virtual void prepare(const double* aux, const double* p) = 0;
  // r_vw^{vx} = p^{v,w,x} - p^{vw} p^{vx}
  virtual double r(NodeId v, NodeId w, NodeId x) const = 0;
  virtual bool has_s() const { return false; }
  // s_vw^{xy} = p^{v,w,x,y} + p^{v,w}{x,y} - p^{vw} p^{xy}
  virtual double s(NodeId /*v*/, NodeId /*w*/, NodeId /*x*/, NodeId /*y*/) const { return 0; }
};

// r = s = 0
class IndependentClosure : public PairClosure {
 public:
  std::string name() const override { return "independent"; }
  void prepare(const double*, const double*) override {}
  double r(NodeId, NodeId, NodeId) const override { return 0; }
};

// maximum-entropy triples, s = 0 for disjoint pairs
class MaxEntClosure : public PairClosure {
 public:
  MaxEntClosure(std::size_t n, std::size_t m) : n_(n), m_(m), triple_(triple_count(n)) {
    if (m < 2) throw Error("maxent closure needs m >= 2");
  }
  std::string name() const override { return "maxent"; }
  void prepare(const double*, const double* p) override {
    p_ = p;
    for (std::size_t x = 2; x < n_; ++x)
      for (std::size_t w = 1; w < x; ++w)
        for (std::size_t v = 0; v < w; ++v)
          triple_[triple_index(v, w, x)] = maxent_closure(p[pair_index(n_, w, x)], p[pair_index(n_, v, x)],
                                                          p[pair_index(n_, v, w)], static_cast<int>(m_));
  }
  double triple(NodeId v, NodeId w, NodeId x) const { return triple_[triple_index(v, w, x)]; }
  double r(NodeId v, NodeId w, NodeId x) const override {
    return triple(v, w, x) - p_[pair_index(n_, v, w)] * p_[pair_index(n_, v, x)];
  }

 private:
  std::size_t n_, m_;
  std::vector<double> triple_;
  const double* p_ = nullptr;
};

// co-membership moments of an assignment distribution
struct ComembershipMoments {
  std::size_t n = 0;
  std::vector<double> pair;     // p^{vw}, pair_index order
  std::vector<double> triple;   // p^{v,w,x}, triple_index order
  std::vector<double> second;   // E[c_e c_f], N x N (empty unless requested)

  // weights need not be normalized
  static ComembershipMoments compute(const FullFilter& ff, const double* weight, bool with_second) {
    ComembershipMoments mo;
    const std::size_t n = ff.node_count(), m = ff.community_count(), N = pair_count(n);
    mo.n = n;
    mo.pair.assign(N, 0.0);
    mo.triple.assign(triple_count(n), 0.0);
    if (with_second) mo.second.assign(N * N, 0.0);
    std::vector<std::vector<NodeId>> groups(m);
    std::vector<std::size_t> same;
    double total = 0;
    ff.for_each_state([&](std::size_t s, const std::uint32_t* d) {
      double x = weight[s];
      total += x;
      if (x == 0) return;
      for (auto& g : groups) g.clear();
      for (NodeId v = 0; v < n; ++v) groups[d[v]].push_back(v);
      same.clear();
      for (const auto& g : groups) {
        for (std::size_t a = 0; a < g.size(); ++a)
          for (std::size_t b = a + 1; b < g.size(); ++b) {
            auto e = pair_index(n, g[a], g[b]);
            mo.pair[e] += x;
            same.push_back(e);
            for (std::size_t c = b + 1; c < g.size(); ++c) mo.triple[triple_index(g[a], g[b], g[c])] += x;
          }
      }
      if (with_second)
        for (auto e : same)
          for (auto f : same) mo.second[e * N + f] += x;
    });
    for (double& v : mo.pair) v /= total;
    for (double& v : mo.triple) v /= total;
    for (double& v : mo.second) v /= total;
    return mo;
  }

  double p(NodeId v, NodeId w) const { return pair[pair_index(n, v, w)]; }
  double r(NodeId v, NodeId w, NodeId x) const { return triple[triple_index(v, w, x)] - p(v, w) * p(v, x); }
  double s(NodeId v, NodeId w, NodeId x, NodeId y) const {
    std::size_t N = pair.size();
    return second[pair_index(n, v, w) * N + pair_index(n, x, y)] - p(v, w) * p(x, y);
  }
};

// exact r and s from a jointly evolved full filter
class FullFilterClosure : public PairClosure {
 public:
  FullFilterClosure(const DynamicBlockParams& params, std::size_t n, std::vector<EdgeType> kappa,
                    std::vector<double> prior = {})
      : ff_(params, n, std::move(kappa), std::move(prior)) {}

  std::string name() const override { return "full-filter"; }
  const FullFilter& filter() const { return ff_; }
  std::size_t aux_size() const override { return ff_.state_count(); }
  void init_aux(double* aux) const override {
    const auto& d = ff_.distribution();
    for (std::size_t s = 0; s < d.size(); ++s) aux[s] = d[s] * static_cast<double>(d.size());
  }
  void begin_interval(const double* aux) override { shift_ = ff_.expected_rate(aux); }
  void aux_derivative(const double* aux, double* daux) const override { ff_.apply_generator(aux, daux, shift_); }
  bool post_step(double* aux) const override {
    bool changed = false;
    for (std::size_t s = 0; s < ff_.state_count(); ++s)
      if (aux[s] < 0) {
        aux[s] = 0;
        changed = true;
      }
    return changed;
  }
  void on_flip(double* aux, NodeId v, NodeId w, EdgeType to) override {
    ff_.multiply_flip(aux, v, w, to);
    ff_.set_edge(v, w, to);
    double sum = 0;
    for (std::size_t s = 0; s < ff_.state_count(); ++s) sum += aux[s];
    if (!(sum > 0)) throw InconsistencyError("full-filter closure: zero mass");
    for (std::size_t s = 0; s < ff_.state_count(); ++s) aux[s] *= static_cast<double>(ff_.state_count()) / sum;
  }
  void prepare(const double* aux, const double*) override {
    mo_ = ComembershipMoments::compute(ff_, aux, ff_.node_count() >= 4);
  }
  const ComembershipMoments& moments() const { return mo_; }
  double r(NodeId v, NodeId w, NodeId x) const override { return mo_.r(v, w, x); }
  bool has_s() const override { return ff_.node_count() >= 4; }
  double s(NodeId v, NodeId w, NodeId x, NodeId y) const override { return mo_.s(v, w, x, y); }

 private:
  FullFilter ff_;
  double shift_ = 0;
  ComembershipMoments mo_;
};

struct ClampRecord {
  double time;
  NodeId v, w;
  double value;
};

// Co-membership filter for the dynamic planted partition model.
class PairwiseFilter {
 public:
  static constexpr double kClampSlack = 1e-9;

  PairwiseFilter(DynamicPlantedParams params, std::vector<EdgeType> kappa, std::shared_ptr<PairClosure> closure,
                 std::vector<double> initial = {})
      : p_(params), n_(params.n), kappa_(std::move(kappa)), closure_(std::move(closure)) {
    p_.validate();
    if (p_.m < 2) throw Error("pairwise filter needs m >= 2");
    if (n_ < 2 || kappa_.size() != pair_count(n_)) throw Error("pairwise filter: graph size mismatch");
    for (auto k : kappa_)
      if (k > 1) throw Error("pairwise filter: planted graphs have edge types 0/1");
    if (!closure_) throw Error("pairwise filter: closure required");
    const std::size_t N = pair_count(n_);
    state_.assign(N + closure_->aux_size(), 0.0);
    if (initial.empty()) {
      std::fill(state_.begin(), state_.begin() + N, 1.0 / static_cast<double>(p_.m));
    } else {
      if (initial.size() != N) throw Error("pairwise filter: initial vector must have n(n-1)/2 entries");
      std::copy(initial.begin(), initial.end(), state_.begin());
    }
    closure_->init_aux(aux());
  }

  double time() const { return t_; }
  std::size_t node_count() const { return n_; }
  std::vector<double> comembership() const { return {state_.begin(), state_.begin() + pair_count(n_)}; }
  double p(NodeId v, NodeId w) const { return state_[pair_index(n_, v, w)]; }
  const std::vector<ClampRecord>& clamp_log() const { return clamps_; }
  const PairClosure& closure() const { return *closure_; }
  const OdeStats& ode_stats() const { return stats_; }

  // gamma^{vw} = gamma_I - gamma_O for the current type of the edge
  double gamma(NodeId v, NodeId w) const {
    return kappa_[pair_index(n_, v, w)] ? p_.mu_I - p_.mu_O : p_.lambda_I - p_.lambda_O;
  }

  struct Terms {
    std::vector<double> R, S;
  };

  // R_vw and S_vw (closure must be prepared)
  Terms terms() const {
    const std::size_t N = pair_count(n_);
    Terms t{std::vector<double>(N, 0.0), std::vector<double>(N, 0.0)};
    for (NodeId v = 0; v < n_; ++v)
      for (NodeId w = v + 1; w < n_; ++w) {
        double R = 0;
        for (NodeId y = 0; y < n_; ++y) {
          if (y == v || y == w) continue;
          R += gamma(v, y) * closure_->r(v, w, y) + gamma(w, y) * closure_->r(w, v, y);
        }
        double S = 0;
        if (closure_->has_s())
          for (NodeId a = 0; a < n_; ++a) {
            if (a == v || a == w) continue;
            for (NodeId b = a + 1; b < n_; ++b)
              if (b != v && b != w) S += gamma(a, b) * closure_->s(v, w, a, b);
          }
        t.R[pair_index(n_, v, w)] = R;
        t.S[pair_index(n_, v, w)] = S;
      }
    return t;
  }

  Terms current_terms() {
    closure_->prepare(aux(), state_.data());
    return terms();
  }

  void derivative(const std::vector<double>& x, std::vector<double>& dx) {
    const std::size_t N = pair_count(n_);
    closure_->prepare(x.data() + N, x.data());
    auto t = terms();
    double m = static_cast<double>(p_.m), relax = 2 * p_.a * m / (m - 1);
    for (NodeId v = 0; v < n_; ++v)
      for (NodeId w = v + 1; w < n_; ++w) {
        std::size_t e = pair_index(n_, v, w);
        double q = x[e] * (1 - x[e]);
        dx[e] = relax * (1 / m - x[e]) - gamma(v, w) * q - t.R[e] - t.S[e];
      }
    if (closure_->aux_size()) closure_->aux_derivative(x.data() + N, dx.data() + N);
  }

  void predict(double dt, const OdeOptions& opt = {}) {
    if (!(dt >= 0)) throw Error("pairwise filter: negative time step");
    if (dt == 0) return;
    closure_->begin_interval(aux());
    auto sys = [&](const std::vector<double>& x, std::vector<double>& dx, double) { derivative(x, dx); };
    auto post = [&](std::vector<double>& x, double t) {
      bool changed = closure_->aux_size() ? closure_->post_step(x.data() + pair_count(n_)) : false;
      return clamp(x.data(), t) || changed;
    };
    integrate_dopri(sys, state_, t_, t_ + dt, dt_, opt, post, &stats_);
    t_ += dt;
  }

  // edge {a,b} changes from its current type to `to` (0 or 1)
  void update(NodeId a, NodeId b, EdgeType to) {
    if (a >= n_ || b >= n_ || a == b) throw Error("pairwise filter: bad edge");
    if (to > 1) throw Error("pairwise filter: edge type out of range");
    const std::size_t N = pair_count(n_);
    std::size_t ab = pair_index(n_, a, b);
    if (kappa_[ab] == to) throw Error("pairwise filter: flip does not change the edge type");
    double gI = to ? p_.lambda_I : p_.mu_I, gO = to ? p_.lambda_O : p_.mu_O;
    double g = gI - gO;
    double pab = state_[ab];
    double delta = gI * pab + gO * (1 - pab);
    if (!(delta > 0)) throw InconsistencyError("pairwise filter: observed flip has zero rate");
    closure_->prepare(aux(), state_.data());
    std::vector<double> next(state_.begin(), state_.begin() + N);
    if (g != 0)
      for (NodeId v = 0; v < n_; ++v)
        for (NodeId w = v + 1; w < n_; ++w) {
          std::size_t e = pair_index(n_, v, w);
          double c;
          if (e == ab) {
            c = state_[e] * (1 - state_[e]);
          } else if (v == a || v == b || w == a || w == b) {
            NodeId shared = (v == a || v == b) ? v : w;
            NodeId other = shared == v ? w : v;
            NodeId third = shared == a ? b : a;
            c = closure_->r(shared, other, third);
          } else {
            c = closure_->s(v, w, a, b);
          }
          next[e] += g * c / delta;
        }
    std::copy(next.begin(), next.end(), state_.begin());
    kappa_[ab] = to;
    closure_->on_flip(aux(), a, b, to);
    clamp(state_.data(), t_);
  }

 private:
  double* aux() { return state_.data() + pair_count(n_); }

  bool clamp(double* x, double t) {
    bool changed = false;
    for (NodeId v = 0; v < n_; ++v)
      for (NodeId w = v + 1; w < n_; ++w) {
        double& p = x[pair_index(n_, v, w)];
        if (p >= 0 && p <= 1) continue;
        if (p < -kClampSlack || p > 1 + kClampSlack) clamps_.push_back({t, v, w, p});
        p = std::clamp(p, 0.0, 1.0);
        changed = true;
      }
    return changed;
  }

  DynamicPlantedParams p_;
  std::size_t n_;
  std::vector<EdgeType> kappa_;
  std::shared_ptr<PairClosure> closure_;
  std::vector<double> state_;
  std::vector<ClampRecord> clamps_;
  double t_ = 0, dt_ = 0;
  OdeStats stats_;
};

}  // namespace comember
