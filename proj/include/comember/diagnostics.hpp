#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "json.hpp"

#include "comember/pairwise_filter.hpp"

namespace comember {

struct Histogram {
  double lo = 0, hi = 0;
  std::vector<std::size_t> counts;

  static Histogram of(const std::vector<double>& xs, std::size_t bins, double lo, double hi) {
    Histogram h{lo, hi, std::vector<std::size_t>(bins, 0)};
    if (!(hi > lo)) h.hi = lo + 1e-12;
    for (double x : xs) {
      auto b = static_cast<long long>(std::floor((x - h.lo) / (h.hi - h.lo) * static_cast<double>(bins)));
      h.counts[static_cast<std::size_t>(std::clamp<long long>(b, 0, static_cast<long long>(bins) - 1))]++;
    }
    return h;
  }
  double bin_center(std::size_t b) const {
    return lo + (static_cast<double>(b) + 0.5) * (hi - lo) / static_cast<double>(counts.size());
  }
  double mode() const {
    return bin_center(static_cast<std::size_t>(std::max_element(counts.begin(), counts.end()) - counts.begin()));
  }
  nlohmann::json to_json() const {
    return {{"lo", lo}, {"hi", hi}, {"counts", counts}};
  }
};

struct SampleSummary {
  std::size_t count = 0;
  double mean = 0, sd = 0, min = 0, max = 0;

  static SampleSummary of(const std::vector<double>& xs) {
    SampleSummary s;
    s.count = xs.size();
    if (xs.empty()) return s;
    s.min = *std::min_element(xs.begin(), xs.end());
    s.max = *std::max_element(xs.begin(), xs.end());
    for (double x : xs) s.mean += x;
    s.mean /= static_cast<double>(xs.size());
    for (double x : xs) s.sd += (x - s.mean) * (x - s.mean);
    s.sd = xs.size() > 1 ? std::sqrt(s.sd / static_cast<double>(xs.size() - 1)) : 0;
    return s;
  }
  nlohmann::json to_json() const {
    return {{"count", count}, {"mean", mean}, {"sd", sd}, {"min", min}, {"max", max}};
  }
};

// Exact R_vw and S_vw of the co-membership equations under an assignment distribution.
// S uses E[c_vw G] - p E[G] = gamma q + R + S with G = sum_e gamma^e c_e.
struct ExactPairTerms {
  ComembershipMoments moments;
  std::vector<double> R, S;
};

inline ExactPairTerms exact_pair_terms(const FullFilter& ff, const double* weight, const std::vector<double>& gamma) {
  const std::size_t n = ff.node_count(), m = ff.community_count(), N = pair_count(n);
  if (gamma.size() != N) throw Error("exact_pair_terms: gamma size mismatch");
  ExactPairTerms out;
  auto& mo = out.moments;
  mo.n = n;
  mo.pair.assign(N, 0.0);
  mo.triple.assign(triple_count(n), 0.0);
  std::vector<double> cg(N, 0.0);
  double eg = 0, total = 0;
  std::vector<std::vector<NodeId>> groups(m);
  std::vector<std::size_t> same;
  ff.for_each_state([&](std::size_t s, const std::uint32_t* d) {
    double x = weight[s];
    total += x;
    if (x == 0) return;
    for (auto& g : groups) g.clear();
    for (NodeId v = 0; v < n; ++v) groups[d[v]].push_back(v);
    same.clear();
    double G = 0;
    for (const auto& g : groups)
      for (std::size_t a = 0; a < g.size(); ++a)
        for (std::size_t b = a + 1; b < g.size(); ++b) {
          auto e = pair_index(n, g[a], g[b]);
          mo.pair[e] += x;
          same.push_back(e);
          G += gamma[e];
          for (std::size_t c = b + 1; c < g.size(); ++c) mo.triple[triple_index(g[a], g[b], g[c])] += x;
        }
    eg += x * G;
    for (auto e : same) cg[e] += x * G;
  });
  for (double& v : mo.pair) v /= total;
  for (double& v : mo.triple) v /= total;
  eg /= total;
  out.R.assign(N, 0.0);
  out.S.assign(N, 0.0);
  for (NodeId v = 0; v < n; ++v)
    for (NodeId w = v + 1; w < n; ++w) {
      std::size_t e = pair_index(n, v, w);
      double R = 0;
      for (NodeId y = 0; y < n; ++y) {
        if (y == v || y == w) continue;
        R += gamma[pair_index(n, v, y)] * mo.r(v, w, y) + gamma[pair_index(n, w, y)] * mo.r(w, v, y);
      }
      double p = mo.pair[e];
      out.R[e] = R;
      out.S[e] = (cg[e] / total - p * eg) - gamma[e] * p * (1 - p) - R;
    }
  return out;
}

inline std::vector<double> planted_gamma(const DynamicPlantedParams& p, const std::vector<EdgeType>& kappa) {
  std::vector<double> g(kappa.size());
  for (std::size_t e = 0; e < kappa.size(); ++e) g[e] = kappa[e] ? p.mu_I - p.mu_O : p.lambda_I - p.lambda_O;
  return g;
}

struct DiagnosticsOptions {
  double horizon = 2.0;
  double cadence = 0.05;
  double burn_in = 0.25;      // snapshots before this time are skipped
  std::uint64_t seed = 1;
  std::size_t bins = 40;
  FilterIntegration integration{FilterIntegration::Method::Strang, {}, 0.005};
};

struct ClosureDiagnostics {
  std::vector<double> R_in, R_out, S_in, S_out;   // split by true co-membership at the snapshot
  std::vector<double> r_exact, r_closure;         // r_vw^{vx}: exact vs maxent on exact pairs
  std::size_t snapshots = 0;
  std::size_t flips = 0;

  nlohmann::json to_json(std::size_t bins) const {
    auto span = [](const std::vector<double>& a, const std::vector<double>& b) {
      double lo = 0, hi = 0;
      bool first = true;
      for (const auto* v : {&a, &b})
        for (double x : *v) {
          lo = first ? x : std::min(lo, x);
          hi = first ? x : std::max(hi, x);
          first = false;
        }
      return std::pair{lo, hi};
    };
    nlohmann::json j;
    j["snapshots"] = snapshots;
    j["flips"] = flips;
    auto [rlo, rhi] = span(R_in, R_out);
    auto [slo, shi] = span(S_in, S_out);
    auto [tlo, thi] = span(r_exact, r_closure);
    j["R_I"] = {{"summary", SampleSummary::of(R_in).to_json()}, {"hist", Histogram::of(R_in, bins, rlo, rhi).to_json()}};
    j["R_O"] = {{"summary", SampleSummary::of(R_out).to_json()}, {"hist", Histogram::of(R_out, bins, rlo, rhi).to_json()}};
    j["S_I"] = {{"summary", SampleSummary::of(S_in).to_json()}, {"hist", Histogram::of(S_in, bins, slo, shi).to_json()}};
    j["S_O"] = {{"summary", SampleSummary::of(S_out).to_json()}, {"hist", Histogram::of(S_out, bins, slo, shi).to_json()}};
    j["r_exact"] = {{"summary", SampleSummary::of(r_exact).to_json()},
                    {"hist", Histogram::of(r_exact, bins, tlo, thi).to_json()}};
    j["r_closure"] = {{"summary", SampleSummary::of(r_closure).to_json()},
                      {"hist", Histogram::of(r_closure, bins, tlo, thi).to_json()}};
    return j;
  }
};

// Runs the full filter along a planted timeline and records the exact closure terms.
inline ClosureDiagnostics closure_diagnostics(const DynamicPlantedParams& params, const EventTimeline& tl,
                                              const DiagnosticsOptions& opt = {}) {
  if (params.m < 3) throw Error("closure_diagnostics: the triple closure needs m >= 3");
  const std::size_t n = params.n;
  FullFilter ff(params.to_block(), n, tl.initial_types);
  TimelineCursor truth(tl);
  ClosureDiagnostics out;
  auto snapshot = [&](double t) {
    if (t < opt.burn_in) return;
    ++out.snapshots;
    truth.advance_to(t);
    const auto& phi = truth.assignment();
    auto terms = exact_pair_terms(ff, ff.distribution().data(), planted_gamma(params, ff.graph()));
    const auto& mo = terms.moments;
    for (NodeId v = 0; v < n; ++v)
      for (NodeId w = v + 1; w < n; ++w) {
        std::size_t e = pair_index(n, v, w);
        bool in = phi[v] == phi[w];
        (in ? out.R_in : out.R_out).push_back(terms.R[e]);
        (in ? out.S_in : out.S_out).push_back(terms.S[e]);
      }
    for (NodeId x = 2; x < n; ++x)
      for (NodeId w = 1; w < x; ++w)
        for (NodeId v = 0; v < w; ++v) {
          double tri = mo.triple[triple_index(v, w, x)];
          double closed = maxent_closure(mo.p(w, x), mo.p(v, x), mo.p(v, w), static_cast<int>(params.m));
          // each node in turn as the shared one
          const NodeId trio[3] = {v, w, x};
          for (int k = 0; k < 3; ++k) {
            NodeId a = trio[k], b = trio[(k + 1) % 3], c = trio[(k + 2) % 3];
            out.r_exact.push_back(tri - mo.p(a, b) * mo.p(a, c));
            out.r_closure.push_back(closed - mo.p(a, b) * mo.p(a, c));
          }
        }
  };
  drive_filter(ff, tl, opt.cadence, [&](double dt) { ff.predict(dt, opt.integration); }, snapshot);
  out.flips = tl.count(TimelineEvent::Kind::Flip);
  return out;
}

inline ClosureDiagnostics closure_diagnostics(const DynamicPlantedParams& params, const DiagnosticsOptions& opt = {}) {
  auto tl = simulate(params, InitialDraw{}, opt.horizon, opt.seed);
  return closure_diagnostics(params, tl, opt);
}

}  // namespace comember
