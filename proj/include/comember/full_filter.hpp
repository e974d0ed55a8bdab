#pragma once

#include <cmath>
#include <algorithm>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "comember/core.hpp"
#include "comember/dynamics.hpp"
#include "comember/ode.hpp"

namespace comember {

constexpr std::size_t kMaxFilterStates = 2'000'000;

struct FilterIntegration {
  enum class Method { Dopri, Strang } method = Method::Dopri;
  OdeOptions ode{};
  double split_step = 0.01;   // Strang splitting step for stiff edge rates
};

// Exact filter over all m^n community assignments. State index: node 0 is the most
// significant base-m digit.
class FullFilter {
 public:
  FullFilter(DynamicBlockParams params, std::size_t n, std::vector<EdgeType> kappa, std::vector<double> prior = {})
      : p_(std::move(params)), n_(n), kappa_(std::move(kappa)) {
    p_.validate();
    if (n_ < 2) throw Error("full filter: need n >= 2");
    if (kappa_.size() != pair_count(n_)) throw Error("full filter: graph size mismatch");
    for (auto k : kappa_)
      if (k >= p_.r) throw Error("full filter: edge type out of range");
    states_ = 1;
    for (std::size_t v = 0; v < n_; ++v) {
      if (states_ > kMaxFilterStates / p_.m) throw SizeGuardError("full filter: m^n exceeds 2e6 states");
      states_ *= p_.m;
    }
    strides_.assign(n_, 1);
    for (std::size_t v = n_; v-- > 1;) strides_[v - 1] = strides_[v] * p_.m;
    hops_ = std::make_unique<KroneckerSum>(std::vector<Eigen::MatrixXd>(n_, p_.A));
    hop_diag_.assign(states_, 0.0);
    edge_diag_.assign(states_, 0.0);
    for_each_state([&](std::size_t s, const std::uint32_t* d) {
      double a = 0, b = 0;
      for (std::size_t v = 0; v < n_; ++v) a += p_.A(d[v], d[v]);
      for (std::size_t v = 0; v < n_; ++v)
        for (std::size_t w = v + 1; w < n_; ++w) {
          int k = kappa_[pair_index(n_, v, w)];
          b += p_.b(d[v], d[w], k, k);
        }
      hop_diag_[s] = a;
      edge_diag_[s] = b;
    });
    if (prior.empty()) {
      dist_.assign(states_, 1.0 / static_cast<double>(states_));
    } else {
      if (prior.size() != states_) throw Error("full filter: prior size mismatch");
      double s = 0;
      for (double x : prior) {
        if (!(x >= 0)) throw Error("full filter: prior entries must be >= 0");
        s += x;
      }
      if (!(s > 0)) throw Error("full filter: prior has zero mass");
      dist_ = prior;
      for (double& x : dist_) x /= s;
    }
  }

  std::size_t node_count() const { return n_; }
  std::size_t community_count() const { return p_.m; }
  std::size_t state_count() const { return states_; }
  const DynamicBlockParams& params() const { return p_; }
  const std::vector<EdgeType>& graph() const { return kappa_; }
  EdgeType type(NodeId v, NodeId w) const { return kappa_[pair_index(n_, v, w)]; }
  std::uint32_t digit(std::size_t s, NodeId v) const { return static_cast<std::uint32_t>((s / strides_[v]) % p_.m); }
  std::size_t index_of(const std::vector<std::uint32_t>& phi) const {
    std::size_t s = 0;
    for (std::size_t v = 0; v < n_; ++v) s += phi[v] * strides_[v];
    return s;
  }

  // f(state index, digits) over all states in index order
  template <class F>
  void for_each_state(F&& f) const {
    std::vector<std::uint32_t> d(n_, 0);
    for (std::size_t s = 0; s < states_; ++s) {
      f(s, d.data());
      for (std::size_t v = n_; v-- > 0;) {
        if (++d[v] < p_.m) break;
        d[v] = 0;
      }
    }
  }

  // sum over edges of the self-rate b_{phi(e), kappa_e kappa_e}, per state
  const std::vector<double>& edge_diagonal() const { return edge_diag_; }
  const std::vector<double>& hop_diagonal() const { return hop_diag_; }

  // y = (A'_kappa - shift) x
  void apply_generator(const double* x, double* y, double shift = 0) const {
    hops_->apply(x, y);
    for (std::size_t s = 0; s < states_; ++s) y[s] += (edge_diag_[s] - shift) * x[s];
  }

  // expected total self-rate under x (x need not be normalized)
  double expected_rate(const double* x) const {
    double num = 0, den = 0;
    for (std::size_t s = 0; s < states_; ++s) {
      num += (edge_diag_[s] + hop_diag_[s]) * x[s];
      den += x[s];
    }
    return den > 0 ? num / den : 0;
  }

  // x_phi *= b_{phi(v) phi(w), to <- current}
  void multiply_flip(double* x, NodeId v, NodeId w, EdgeType to) const {
    check_flip(v, w, to);
    EdgeType from = type(v, w);
    const std::size_t m = p_.m;
    std::vector<double> weight(m * m);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j) weight[i * m + j] = p_.b(i, j, to, from);
    for (std::size_t s = 0; s < states_; ++s) x[s] *= weight[digit(s, v) * m + digit(s, w)];
  }

  // change the observed graph (keeps the edge self-rates in step)
  void set_edge(NodeId v, NodeId w, EdgeType to) {
    check_flip(v, w, to);
    EdgeType from = type(v, w);
    const std::size_t m = p_.m;
    std::vector<double> delta(m * m);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j) delta[i * m + j] = p_.b(i, j, to, to) - p_.b(i, j, from, from);
    for (std::size_t s = 0; s < states_; ++s) edge_diag_[s] += delta[digit(s, v) * m + digit(s, w)];
    kappa_[pair_index(n_, v, w)] = to;
    split_h_ = -1;
  }

  // one Strang step: half edge decay, exact hop propagation, half edge decay; returns log of mass change
  double strang_step(std::vector<double>& x, double h) {
    if (h != split_h_) {
      split_h_ = h;
      Eigen::MatrixXd E = (p_.A * h).exp();
      split_exp_.assign(n_, E);
      half_decay_.resize(states_);
      double mx = *std::max_element(edge_diag_.begin(), edge_diag_.end());
      split_shift_ = mx;
      for (std::size_t s = 0; s < states_; ++s) half_decay_[s] = std::exp(0.5 * h * (edge_diag_[s] - mx));
    }
    for (std::size_t s = 0; s < states_; ++s) x[s] *= half_decay_[s];
    hops_->apply_product(split_exp_, x);
    for (std::size_t s = 0; s < states_; ++s) x[s] *= half_decay_[s];
    double sum = std::accumulate(x.begin(), x.end(), 0.0);
    if (!(sum > 0)) throw InconsistencyError("full filter: mass vanished during prediction");
    for (double& v : x) v /= sum;
    return std::log(sum) + split_shift_ * h;
  }

  // --- filter state ---
  double time() const { return t_; }
  const std::vector<double>& distribution() const { return dist_; }
  double log_evidence() const { return log_evidence_; }

  // prediction with the graph held fixed over [t, t + dt)
  void predict(double dt, const FilterIntegration& opt = {}) {
    if (!(dt >= 0)) throw Error("full filter: negative time step");
    if (dt == 0) return;
    if (opt.method == FilterIntegration::Method::Strang) {
      std::size_t steps = static_cast<std::size_t>(std::ceil(dt / opt.split_step - 1e-9));
      steps = std::max<std::size_t>(steps, 1);
      double h = dt / static_cast<double>(steps);
      for (std::size_t k = 0; k < steps; ++k) log_evidence_ += strang_step(dist_, h);
    } else {
      double c = expected_rate(dist_.data());
      double rescale = 0;
      auto sys = [&](const std::vector<double>& x, std::vector<double>& dx, double) {
        apply_generator(x.data(), dx.data(), c);
      };
      auto post = [&](std::vector<double>& x, double) {
        bool changed = false;
        double sum = 0;
        for (double& v : x) {
          if (v < 0) {
            v = 0;
            changed = true;
          }
          sum += v;
        }
        if (sum < 1e-30 || sum > 1e30) {
          if (!(sum > 0)) throw InconsistencyError("full filter: mass vanished during prediction");
          for (double& v : x) v /= sum;
          rescale += std::log(sum);
          changed = true;
        }
        return changed;
      };
      integrate_dopri(sys, dist_, t_, t_ + dt, dopri_dt_, opt.ode, post, &stats_);
      double sum = std::accumulate(dist_.begin(), dist_.end(), 0.0);
      if (!(sum > 0)) throw InconsistencyError("full filter: mass vanished during prediction");
      for (double& v : dist_) v /= sum;
      log_evidence_ += std::log(sum) + rescale + c * dt;
    }
    t_ += dt;
  }

  // Bayesian update for a single edge changing to type `to`
  void update(NodeId v, NodeId w, EdgeType to) {
    multiply_flip(dist_.data(), v, w, to);
    double sum = std::accumulate(dist_.begin(), dist_.end(), 0.0);
    if (!(sum > 0)) throw InconsistencyError("full filter: observed flip has zero probability under the model");
    for (double& x : dist_) x /= sum;
    log_evidence_ += std::log(sum);
    set_edge(v, w, to);
  }

  // p_i^v, row-major v * m + i
  std::vector<double> node_marginals() const { return node_marginals(dist_.data()); }
  std::vector<double> node_marginals(const double* x) const {
    std::vector<double> out(n_ * p_.m, 0.0);
    double total = 0;
    for_each_state([&](std::size_t s, const std::uint32_t* d) {
      for (std::size_t v = 0; v < n_; ++v) out[v * p_.m + d[v]] += x[s];
      total += x[s];
    });
    for (double& o : out) o /= total;
    return out;
  }

  // p^{vw} in pair_index order
  std::vector<double> comembership() const { return comembership(dist_.data()); }
  std::vector<double> comembership(const double* x) const {
    std::vector<double> out(pair_count(n_), 0.0);
    double total = 0;
    for_each_state([&](std::size_t s, const std::uint32_t* d) {
      std::size_t k = 0;
      for (std::size_t v = 0; v < n_; ++v)
        for (std::size_t w = v + 1; w < n_; ++w, ++k)
          if (d[v] == d[w]) out[k] += x[s];
      total += x[s];
    });
    for (double& o : out) o /= total;
    return out;
  }

  Eigen::MatrixXd dense_generator() const {
    if (states_ > 4096) throw SizeGuardError("full filter: dense generator limited to 4096 states");
    Eigen::MatrixXd G(states_, states_);
    std::vector<double> e(states_, 0.0), col(states_);
    for (std::size_t c = 0; c < states_; ++c) {
      e[c] = 1;
      apply_generator(e.data(), col.data());
      for (std::size_t r = 0; r < states_; ++r) G(r, c) = col[r];
      e[c] = 0;
    }
    return G;
  }

  const OdeStats& ode_stats() const { return stats_; }

 private:
  void check_flip(NodeId v, NodeId w, EdgeType to) const {
    if (v >= n_ || w >= n_ || v == w) throw Error("full filter: bad edge");
    if (to >= p_.r) throw Error("full filter: edge type out of range");
    if (to == type(v, w)) throw Error("full filter: flip does not change the edge type");
  }

  DynamicBlockParams p_;
  std::size_t n_;
  std::vector<EdgeType> kappa_;
  std::size_t states_ = 1;
  std::vector<std::size_t> strides_;
  std::unique_ptr<KroneckerSum> hops_;
  std::vector<double> hop_diag_, edge_diag_;
  std::vector<double> dist_;
  double t_ = 0, log_evidence_ = 0, dopri_dt_ = 0;
  double split_h_ = -1, split_shift_ = 0;
  std::vector<Eigen::MatrixXd> split_exp_;
  std::vector<double> half_decay_;
  OdeStats stats_;
};

// Dense generator C of the joint (assignment, graph) process; edges in pair_index order
// with the first edge as the most significant base-r digit, assignment digits above them.
inline Eigen::MatrixXd joint_generator_dense(const DynamicBlockParams& p, std::size_t n) {
  p.validate();
  const std::size_t N = pair_count(n);
  double total = std::pow(static_cast<double>(p.m), static_cast<double>(n)) *
                 std::pow(static_cast<double>(p.r), static_cast<double>(N));
  if (total > 4096) throw SizeGuardError("joint generator: dense form limited to 4096 states");
  std::size_t phis = 1, kappas = 1;
  for (std::size_t v = 0; v < n; ++v) phis *= p.m;
  for (std::size_t e = 0; e < N; ++e) kappas *= static_cast<std::size_t>(p.r);
  std::size_t dim = phis * kappas;
  Eigen::MatrixXd C = Eigen::MatrixXd::Zero(dim, dim);
  auto decode = [](std::size_t x, std::size_t base, std::size_t len) {
    std::vector<std::uint32_t> d(len);
    for (std::size_t k = len; k-- > 0;) {
      d[k] = static_cast<std::uint32_t>(x % base);
      x /= base;
    }
    return d;
  };
  for (std::size_t a = 0; a < phis; ++a)
    for (std::size_t b = 0; b < kappas; ++b) {
      auto phi = decode(a, p.m, n);
      auto kap = decode(b, p.r, N);
      std::size_t col = a * kappas + b;
      // community hops of one node
      for (std::size_t v = 0; v < n; ++v)
        for (std::size_t i = 0; i < p.m; ++i) {
          auto phi2 = phi;
          phi2[v] = static_cast<std::uint32_t>(i);
          std::size_t a2 = 0;
          for (auto d : phi2) a2 = a2 * p.m + d;
          C(a2 * kappas + b, col) += p.A(i, phi[v]);
        }
      // single edge changes
      std::size_t e = 0;
      for (std::size_t v = 0; v < n; ++v)
        for (std::size_t w = v + 1; w < n; ++w, ++e)
          for (int k = 0; k < p.r; ++k) {
            auto kap2 = kap;
            kap2[e] = static_cast<std::uint32_t>(k);
            std::size_t b2 = 0;
            for (auto d : kap2) b2 = b2 * static_cast<std::size_t>(p.r) + d;
            C(a * kappas + b2, col) += p.b(phi[v], phi[w], k, static_cast<int>(kap[e]));
          }
    }
  return C;
}

// Drives a filter along a timeline: predicts between observed flips, updates at flips,
// calls snapshot(t) at t = 0, cadence, 2 cadence, ... <= horizon (before any event at t).
template <class Filter, class Predict, class Snapshot>
void drive_filter(Filter& f, const EventTimeline& tl, double cadence, Predict&& predict, Snapshot&& snapshot) {
  if (!(cadence > 0)) throw Error("drive_filter: cadence must be positive");
  std::size_t k = 0, next_event = 0;
  auto snap_time = [&](std::size_t j) { return static_cast<double>(j) * cadence; };
  double t = 0;
  for (;;) {
    double ts = snap_time(k);
    bool have_snap = ts <= tl.horizon * (1 + 1e-12);
    while (next_event < tl.events.size() && tl.events[next_event].kind == TimelineEvent::Kind::Hop) ++next_event;
    bool have_event = next_event < tl.events.size();
    if (!have_snap && !have_event) break;
    double te = have_event ? tl.events[next_event].time : 0;
    if (have_snap && (!have_event || ts <= te)) {
      ts = std::min(ts, tl.horizon);
      predict(ts - t);
      t = ts;
      snapshot(t);
      ++k;
    } else {
      predict(te - t);
      t = te;
      const auto& e = tl.events[next_event++];
      f.update(e.v, e.w, static_cast<EdgeType>(e.to));
    }
  }
  if (t < tl.horizon) predict(tl.horizon - t);
}

}  // namespace comember
