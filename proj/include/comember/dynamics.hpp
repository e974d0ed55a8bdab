#pragma once

#include <cmath>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include "json.hpp"

#include "comember/core.hpp"
#include "comember/graph.hpp"

namespace comember {

// Rate matrices use column-from convention: M(k, l) is the rate of l -> k, columns sum to zero.
inline void check_rate_matrix(const Eigen::MatrixXd& M, const std::string& name) {
  if (M.rows() != M.cols() || M.rows() == 0) throw Error(name + ": rate matrix must be square and non-empty");
  for (Eigen::Index l = 0; l < M.cols(); ++l) {
    double s = 0;
    for (Eigen::Index k = 0; k < M.rows(); ++k) {
      if (k != l && M(k, l) < 0) throw Error(name + ": negative off-diagonal rate");
      if (!std::isfinite(M(k, l))) throw Error(name + ": non-finite rate");
      s += M(k, l);
    }
    if (std::fabs(s) > 1e-12) throw Error(name + ": column does not sum to zero");
  }
}

// stationary distribution of a rate matrix (null vector normalized to sum 1)
inline Eigen::VectorXd stationary_distribution(const Eigen::MatrixXd& M) {
  Eigen::Index k = M.rows();
  Eigen::MatrixXd sys(k + 1, k);
  sys.topRows(k) = M;
  sys.row(k).setOnes();
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(k + 1);
  rhs(k) = 1;
  Eigen::VectorXd pi = sys.colPivHouseholderQr().solve(rhs);
  for (Eigen::Index i = 0; i < k; ++i) pi(i) = std::max(pi(i), 0.0);
  return pi / pi.sum();
}

struct DynamicBlockParams {
  std::size_t m = 1;
  int r = 2;
  Eigen::MatrixXd A;                 // m x m community hop rates
  std::vector<Eigen::MatrixXd> B;    // m*m blocks, B[i*m+j] = B_ij, r x r

  const Eigen::MatrixXd& block(std::size_t i, std::size_t j) const { return B[i * m + j]; }
  // rate of an edge between communities i, j changing l -> k
  double b(std::size_t i, std::size_t j, int k, int l) const { return B[i * m + j](k, l); }

  void validate() const {
    if (m < 1) throw Error("DynamicBlockParams: m must be >= 1");
    if (r < 2) throw Error("DynamicBlockParams: r must be >= 2");
    if (static_cast<std::size_t>(A.rows()) != m) throw Error("DynamicBlockParams: A must be m x m");
    check_rate_matrix(A, "A");
    if (B.size() != m * m) throw Error("DynamicBlockParams: need m*m edge blocks");
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j) {
        const auto& bij = block(i, j);
        if (bij.rows() != r) throw Error("DynamicBlockParams: B blocks must be r x r");
        check_rate_matrix(bij, "B");
        if ((bij - block(j, i)).cwiseAbs().maxCoeff() > 0) throw Error("DynamicBlockParams: B_ij must equal B_ji");
      }
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["m"] = m;
    j["r"] = r;
    auto mat = [](const Eigen::MatrixXd& M) {
      nlohmann::json rows = nlohmann::json::array();
      for (Eigen::Index a = 0; a < M.rows(); ++a) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index c = 0; c < M.cols(); ++c) row.push_back(M(a, c));
        rows.push_back(row);
      }
      return rows;
    };
    j["A"] = mat(A);
    j["B"] = nlohmann::json::array();
    for (const auto& b : B) j["B"].push_back(mat(b));
    return j;
  }

  static DynamicBlockParams from_json(const nlohmann::json& j) {
    auto mat = [](const nlohmann::json& rows) {
      Eigen::MatrixXd M(rows.size(), rows.empty() ? 0 : rows[0].size());
      for (std::size_t a = 0; a < rows.size(); ++a)
        for (std::size_t c = 0; c < rows[a].size(); ++c) M(a, c) = rows[a][c].get<double>();
      return M;
    };
    DynamicBlockParams p;
    p.m = j.at("m").get<std::size_t>();
    p.r = j.at("r").get<int>();
    p.A = mat(j.at("A"));
    for (const auto& b : j.at("B")) p.B.push_back(mat(b));
    p.validate();
    return p;
  }
};

// H(n, m, a, lambda_I, mu_I, lambda_O, mu_O); edge type 1 = present
struct DynamicPlantedParams {
  std::size_t n = 0;
  std::size_t m = 2;
  double a = 0;
  double lambda_I = 0, mu_I = 0, lambda_O = 0, mu_O = 0;

  void validate() const {
    if (m < 1) throw Error("DynamicPlantedParams: m must be >= 1");
    for (double x : {a, lambda_I, mu_I, lambda_O, mu_O})
      if (!(x >= 0) || !std::isfinite(x)) throw Error("DynamicPlantedParams: rates must be finite and >= 0");
  }

  // leaving rate a split evenly over the other m-1 communities
  DynamicBlockParams to_block() const {
    validate();
    DynamicBlockParams p;
    p.m = m;
    p.r = 2;
    p.A = Eigen::MatrixXd::Zero(m, m);
    if (m > 1)
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j) p.A(i, j) = i == j ? -a : a / static_cast<double>(m - 1);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j) {
        double on = i == j ? lambda_I : lambda_O, off = i == j ? mu_I : mu_O;
        Eigen::MatrixXd b(2, 2);
        b << -on, off, on, -off;
        p.B.push_back(b);
      }
    return p;
  }

  nlohmann::json to_json() const {
    return {{"n", n}, {"m", m}, {"a", a}, {"lambda_I", lambda_I}, {"mu_I", mu_I}, {"lambda_O", lambda_O}, {"mu_O", mu_O}};
  }
  static DynamicPlantedParams from_json(const nlohmann::json& j) {
    DynamicPlantedParams p;
    p.n = j.at("n").get<std::size_t>();
    p.m = j.at("m").get<std::size_t>();
    p.a = j.at("a").get<double>();
    p.lambda_I = j.at("lambda_I").get<double>();
    p.mu_I = j.at("mu_I").get<double>();
    p.lambda_O = j.at("lambda_O").get<double>();
    p.mu_O = j.at("mu_O").get<double>();
    p.validate();
    return p;
  }
};

// Structured A_1 (+) A_2 (+) ... ; the first factor is the most significant index digit.
class KroneckerSum {
 public:
  static constexpr std::size_t kMaxDimension = std::size_t(1) << 31;

  explicit KroneckerSum(std::vector<Eigen::MatrixXd> factors) : factors_(std::move(factors)) {
    dim_ = 1;
    for (const auto& f : factors_) {
      if (f.rows() != f.cols() || f.rows() == 0) throw Error("kronecker_sum: factors must be square");
      if (dim_ > kMaxDimension / static_cast<std::size_t>(f.rows()))
        throw SizeGuardError("kronecker_sum: joint dimension too large");
      dim_ *= static_cast<std::size_t>(f.rows());
    }
    strides_.assign(factors_.size(), 1);
    for (std::size_t k = factors_.size(); k-- > 1;) strides_[k - 1] = strides_[k] * factors_[k].rows();
  }

  std::size_t dimension() const { return dim_; }
  const std::vector<Eigen::MatrixXd>& factors() const { return factors_; }
  std::size_t stride(std::size_t k) const { return strides_[k]; }

  // y = (sum of factors) x
  void apply(const double* x, double* y) const {
    std::fill(y, y + dim_, 0.0);
    for (std::size_t k = 0; k < factors_.size(); ++k) along(k, factors_[k], x, y);
  }
  std::vector<double> apply(const std::vector<double>& x) const {
    if (x.size() != dim_) throw Error("kronecker_sum: vector size mismatch");
    std::vector<double> y(dim_);
    apply(x.data(), y.data());
    return y;
  }

  // y += (I (x) .. M_k .. (x) I) x
  void along(std::size_t k, const Eigen::MatrixXd& M, const double* x, double* y) const {
    const std::size_t s = strides_[k], d = static_cast<std::size_t>(M.rows()), block = s * d;
    for (std::size_t base = 0; base < dim_; base += block)
      for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) {
          double a = M(i, j);
          if (a == 0) continue;
          double* yo = y + base + i * s;
          const double* xi = x + base + j * s;
          for (std::size_t t = 0; t < s; ++t) yo[t] += a * xi[t];
        }
  }

  // x <- (M_1 (x) M_2 (x) ...) x, e.g. exp of the sum as a product of factor exponentials
  void apply_product(const std::vector<Eigen::MatrixXd>& mats, std::vector<double>& x) const {
    if (mats.size() != factors_.size() || x.size() != dim_) throw Error("kronecker product: size mismatch");
    std::vector<double> tmp(dim_);
    for (std::size_t k = 0; k < mats.size(); ++k) {
      std::fill(tmp.begin(), tmp.end(), 0.0);
      along(k, mats[k], x.data(), tmp.data());
      x.swap(tmp);
    }
  }

  Eigen::MatrixXd dense() const {
    if (dim_ > 4096) throw SizeGuardError("kronecker_sum: dense form limited to 4096 states");
    Eigen::MatrixXd D = Eigen::MatrixXd::Zero(dim_, dim_);
    std::vector<double> e(dim_, 0.0), col(dim_);
    for (std::size_t c = 0; c < dim_; ++c) {
      e[c] = 1;
      apply(e.data(), col.data());
      for (std::size_t r = 0; r < dim_; ++r) D(r, c) = col[r];
      e[c] = 0;
    }
    return D;
  }

 private:
  std::vector<Eigen::MatrixXd> factors_;
  std::vector<std::size_t> strides_;
  std::size_t dim_ = 1;
};

inline KroneckerSum kronecker_sum(std::vector<Eigen::MatrixXd> generators) {
  for (const auto& g : generators) check_rate_matrix(g, "kronecker_sum factor");
  return KroneckerSum(std::move(generators));
}

struct TimelineEvent {
  enum class Kind : std::uint8_t { Hop, Flip };
  double time = 0;
  Kind kind = Kind::Hop;
  NodeId v = 0, w = 0;   // w unused for hops
  std::uint32_t from = 0, to = 0;

  bool operator==(const TimelineEvent&) const = default;
};

struct EventTimeline {
  std::size_t n = 0, m = 1;
  int r = 2;
  double horizon = 0;
  nlohmann::json params;
  std::vector<std::uint32_t> initial_assignment;
  std::vector<EdgeType> initial_types;   // pair_index order
  std::vector<TimelineEvent> events;

  void validate() const {
    if (initial_assignment.size() != n || initial_types.size() != pair_count(n))
      throw Error("timeline: initial state size mismatch");
    auto phi = initial_assignment;
    auto kappa = initial_types;
    for (auto c : phi)
      if (c >= m) throw Error("timeline: community out of range");
    for (auto k : kappa)
      if (k >= r) throw Error("timeline: edge type out of range");
    double last = -1;
    for (const auto& e : events) {
      if (!(e.time >= 0) || !(e.time > last)) throw Error("timeline: event times must increase from 0");
      if (e.time > horizon) throw Error("timeline: event after horizon");
      last = e.time;
      if (e.kind == TimelineEvent::Kind::Hop) {
        if (e.v >= n || e.to >= m || phi[e.v] != e.from || e.from == e.to) throw Error("timeline: inconsistent hop");
        phi[e.v] = e.to;
      } else {
        if (e.v >= n || e.w >= n || e.v == e.w || e.to >= static_cast<std::uint32_t>(r))
          throw Error("timeline: bad flip");
        auto& k = kappa[pair_index(n, e.v, e.w)];
        if (k != e.from || e.from == e.to) throw Error("timeline: inconsistent flip");
        k = static_cast<EdgeType>(e.to);
      }
    }
  }

  std::size_t count(TimelineEvent::Kind kind) const {
    std::size_t c = 0;
    for (const auto& e : events) c += e.kind == kind;
    return c;
  }

  void write(std::ostream& out) const {
    out.precision(17);
    out << "# comember-timeline v1\n";
    out << "n " << n << "\nm " << m << "\nr " << r << "\nhorizon " << horizon << "\n";
    out << "params " << params.dump() << "\n";
    out << "phi";
    for (auto c : initial_assignment) out << ' ' << c + 1;
    out << "\n";
    for (NodeId v = 0; v < n; ++v)
      for (NodeId w = v + 1; w < n; ++w)
        if (auto k = initial_types[pair_index(n, v, w)]) out << "edge " << v + 1 << ' ' << w + 1 << ' ' << int(k) << "\n";
    for (const auto& e : events) {
      if (e.kind == TimelineEvent::Kind::Hop)
        out << "hop " << e.time << ' ' << e.v + 1 << ' ' << e.from + 1 << ' ' << e.to + 1 << "\n";
      else
        out << "flip " << e.time << ' ' << e.v + 1 << ' ' << e.w + 1 << ' ' << e.from << ' ' << e.to << "\n";
    }
  }

  static EventTimeline read(std::istream& in) {
    EventTimeline tl;
    std::string line;
    std::size_t lineno = 0;
    bool sized = false;
    auto need_size = [&]() {
      if (!sized) {
        if (tl.n == 0) throw ParseError(lineno, "timeline: n must precede state lines");
        tl.initial_types.assign(pair_count(tl.n), 0);
        sized = true;
      }
    };
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty() || line[0] == '#') continue;
      std::istringstream ls(line);
      std::string key;
      ls >> key;
      if (key == "n") {
        ls >> tl.n;
      } else if (key == "m") {
        ls >> tl.m;
      } else if (key == "r") {
        ls >> tl.r;
      } else if (key == "horizon") {
        ls >> tl.horizon;
      } else if (key == "params") {
        std::string rest;
        std::getline(ls, rest);
        try {
          tl.params = nlohmann::json::parse(rest);
        } catch (const std::exception& ex) {
          throw ParseError(lineno, std::string("timeline: bad params json: ") + ex.what());
        }
        continue;
      } else if (key == "phi") {
        need_size();
        long long c;
        while (ls >> c) {
          if (c < 1) throw ParseError(lineno, "timeline: communities are 1-based");
          tl.initial_assignment.push_back(static_cast<std::uint32_t>(c - 1));
        }
        continue;
      } else if (key == "edge") {
        need_size();
        long long v, w, k;
        if (!(ls >> v >> w >> k) || v < 1 || w < 1 || static_cast<std::size_t>(v) > tl.n ||
            static_cast<std::size_t>(w) > tl.n || v == w || k < 0 || k > 255)
          throw ParseError(lineno, "timeline: bad edge line");
        tl.initial_types[pair_index(tl.n, v - 1, w - 1)] = static_cast<EdgeType>(k);
        continue;
      } else if (key == "hop" || key == "flip") {
        need_size();
        TimelineEvent e;
        long long v, w = 0, a, b;
        bool ok = key == "hop" ? static_cast<bool>(ls >> e.time >> v >> a >> b)
                               : static_cast<bool>(ls >> e.time >> v >> w >> a >> b);
        if (!ok || v < 1 || static_cast<std::size_t>(v) > tl.n) throw ParseError(lineno, "timeline: bad event line");
        e.v = static_cast<NodeId>(v - 1);
        if (key == "hop") {
          if (a < 1 || b < 1) throw ParseError(lineno, "timeline: communities are 1-based");
          e.kind = TimelineEvent::Kind::Hop;
          e.from = static_cast<std::uint32_t>(a - 1);
          e.to = static_cast<std::uint32_t>(b - 1);
        } else {
          if (w < 1 || static_cast<std::size_t>(w) > tl.n || a < 0 || b < 0)
            throw ParseError(lineno, "timeline: bad flip line");
          e.kind = TimelineEvent::Kind::Flip;
          e.w = static_cast<NodeId>(w - 1);
          e.from = static_cast<std::uint32_t>(a);
          e.to = static_cast<std::uint32_t>(b);
        }
        tl.events.push_back(e);
        continue;
      } else {
        throw ParseError(lineno, "timeline: unknown record '" + key + "'");
      }
      if (ls.fail()) throw ParseError(lineno, "timeline: bad value for " + key);
    }
    need_size();
    try {
      tl.validate();
    } catch (const Error& ex) {
      throw ParseError(lineno, ex.what());
    }
    return tl;
  }
};

// Replays a timeline: community assignment and graph just after each applied event.
class TimelineCursor {
 public:
  explicit TimelineCursor(const EventTimeline& tl) : tl_(&tl), phi_(tl.initial_assignment), kappa_(tl.initial_types) {}
  bool done() const { return next_ >= tl_->events.size(); }
  const TimelineEvent& peek() const { return tl_->events[next_]; }
  const TimelineEvent& advance() {
    const auto& e = tl_->events[next_++];
    if (e.kind == TimelineEvent::Kind::Hop)
      phi_[e.v] = e.to;
    else
      kappa_[pair_index(tl_->n, e.v, e.w)] = static_cast<EdgeType>(e.to);
    return e;
  }
  // apply every event with time <= t
  void advance_to(double t) {
    while (!done() && peek().time <= t) advance();
  }
  const std::vector<std::uint32_t>& assignment() const { return phi_; }
  const std::vector<EdgeType>& types() const { return kappa_; }

 private:
  const EventTimeline* tl_;
  std::vector<std::uint32_t> phi_;
  std::vector<EdgeType> kappa_;
  std::size_t next_ = 0;
};

inline Graph graph_from_types(std::size_t n, const std::vector<EdgeType>& types, int r) {
  std::vector<TypedEdge> edges;
  for (NodeId v = 0; v < n; ++v)
    for (NodeId w = v + 1; w < n; ++w)
      if (auto k = types[pair_index(n, v, w)]) edges.push_back({v, w, k});
  return Graph(n, edges, r);
}

struct InitialDraw {
  std::vector<std::uint32_t> assignment;   // empty: each node uniform over the m communities
  enum class GraphStart { Empty, Stationary } graph = GraphStart::Stationary;
  std::vector<EdgeType> types;             // pair_index order; non-empty overrides graph
};

// Exact event-driven simulation. Every node and edge carries an exponential clock; by
// memorylessness the next event is drawn from the total rate and edge clocks need no
// bookkeeping when an endpoint hops.
inline EventTimeline simulate(const DynamicBlockParams& p, std::size_t n, const InitialDraw& init, double T,
                              std::uint64_t seed) {
  p.validate();
  if (n < 2) throw Error("simulate: need n >= 2");
  if (!(T >= 0)) throw Error("simulate: horizon must be >= 0");
  std::mt19937_64 rng(seed);
  EventTimeline tl;
  tl.n = n;
  tl.m = p.m;
  tl.r = p.r;
  tl.horizon = T;
  tl.params = p.to_json();
  if (init.assignment.empty()) {
    std::uniform_int_distribution<std::uint32_t> U(0, static_cast<std::uint32_t>(p.m - 1));
    for (std::size_t v = 0; v < n; ++v) tl.initial_assignment.push_back(U(rng));
  } else {
    if (init.assignment.size() != n) throw Error("simulate: assignment size mismatch");
    tl.initial_assignment = init.assignment;
  }
  const std::size_t N = pair_count(n);
  if (!init.types.empty()) {
    if (init.types.size() != N) throw Error("simulate: edge type vector size mismatch");
    tl.initial_types = init.types;
  } else {
    tl.initial_types.assign(N, 0);
    if (init.graph == InitialDraw::GraphStart::Stationary) {
      std::vector<Eigen::VectorXd> pis(p.m * p.m);
      for (std::size_t b = 0; b < pis.size(); ++b) pis[b] = stationary_distribution(p.B[b]);
      std::uniform_real_distribution<double> U(0, 1);
      for (NodeId v = 0; v < n; ++v)
        for (NodeId w = v + 1; w < n; ++w) {
          const auto& pi = pis[tl.initial_assignment[v] * p.m + tl.initial_assignment[w]];
          double u = U(rng), acc = 0;
          int k = 0;
          for (; k < p.r - 1; ++k)
            if ((acc += pi(k)) > u) break;
          tl.initial_types[pair_index(n, v, w)] = static_cast<EdgeType>(k);
        }
    }
  }
  tl.validate();

  auto phi = tl.initial_assignment;
  auto kappa = tl.initial_types;
  std::vector<double> node_rate(n), edge_rate(N);
  auto edge_leave = [&](NodeId v, NodeId w) {
    return -p.b(phi[v], phi[w], kappa[pair_index(n, v, w)], kappa[pair_index(n, v, w)]);
  };
  for (NodeId v = 0; v < n; ++v) node_rate[v] = -p.A(phi[v], phi[v]);
  for (NodeId v = 0; v < n; ++v)
    for (NodeId w = v + 1; w < n; ++w) edge_rate[pair_index(n, v, w)] = edge_leave(v, w);
  std::uniform_real_distribution<double> U(0, 1);
  double t = 0;
  for (;;) {
    double total = 0;
    for (double x : node_rate) total += x;
    for (double x : edge_rate) total += x;
    if (total <= 0) break;
    t += std::exponential_distribution<double>(total)(rng);
    if (t > T) break;
    double u = U(rng) * total;
    TimelineEvent e;
    e.time = t;
    bool chosen = false;
    for (NodeId v = 0; v < n && !chosen; ++v) {
      if (u < node_rate[v]) {
        e.kind = TimelineEvent::Kind::Hop;
        e.v = v;
        e.from = phi[v];
        chosen = true;
      } else {
        u -= node_rate[v];
      }
    }
    for (NodeId v = 0; v < n && !chosen; ++v)
      for (NodeId w = v + 1; w < n && !chosen; ++w) {
        double x = edge_rate[pair_index(n, v, w)];
        if (u < x) {
          e.kind = TimelineEvent::Kind::Flip;
          e.v = v;
          e.w = w;
          e.from = kappa[pair_index(n, v, w)];
          chosen = true;
        } else {
          u -= x;
        }
      }
    if (!chosen) continue;  // rounding at the tail of the scan; redraw
    // destination proportional to the off-diagonal rates of the leaving state
    if (e.kind == TimelineEvent::Kind::Hop) {
      double out = node_rate[e.v], x = U(rng) * out;
      std::uint32_t to = e.from;
      for (std::uint32_t k = 0; k < p.m; ++k) {
        if (k == e.from) continue;
        to = k;
        if ((x -= p.A(k, e.from)) < 0) break;
      }
      e.to = to;
      phi[e.v] = to;
      node_rate[e.v] = -p.A(to, to);
      for (NodeId w = 0; w < n; ++w)
        if (w != e.v) edge_rate[pair_index(n, e.v, w)] = edge_leave(e.v, w);
    } else {
      const auto& bm = p.block(phi[e.v], phi[e.w]);
      double out = edge_rate[pair_index(n, e.v, e.w)], x = U(rng) * out;
      std::uint32_t to = e.from;
      for (int k = 0; k < p.r; ++k) {
        if (static_cast<std::uint32_t>(k) == e.from) continue;
        to = static_cast<std::uint32_t>(k);
        if ((x -= bm(k, e.from)) < 0) break;
      }
      e.to = to;
      kappa[pair_index(n, e.v, e.w)] = static_cast<EdgeType>(to);
      edge_rate[pair_index(n, e.v, e.w)] = edge_leave(e.v, e.w);
    }
    tl.events.push_back(e);
  }
  return tl;
}

inline EventTimeline simulate(const DynamicPlantedParams& p, const InitialDraw& init, double T, std::uint64_t seed) {
  auto tl = simulate(p.to_block(), p.n, init, T, seed);
  tl.params = p.to_json();
  tl.params["model"] = "planted";
  return tl;
}

// rates recorded in a timeline header
inline DynamicBlockParams timeline_params(const EventTimeline& tl) {
  if (tl.params.is_object() && tl.params.value("model", "") == "planted")
    return DynamicPlantedParams::from_json(tl.params).to_block();
  return DynamicBlockParams::from_json(tl.params);
}

}  // namespace comember
