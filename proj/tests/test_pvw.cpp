#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <tuple>
#include <numeric>
#include <random>

#include "comember/evidence.hpp"
#include "comember/pvw_hat.hpp"
#include "comember/pvw_integral.hpp"

using namespace comember;

namespace {

Graph karate() {
  std::ifstream in(std::string(COMEMBER_DATA_DIR) + "/karate.edges");
  return load_edge_list(in).graph;  // ids 1..34 map to 0..33
}

Graph from_pairs(std::size_t n, std::initializer_list<std::pair<NodeId, NodeId>> e) {
  std::vector<TypedEdge> out;
  for (auto [u, v] : e) out.push_back({u, v, 1});
  return Graph(n, out);
}

std::vector<double> ranks(const std::vector<double>& x) {
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return x[a] < x[b]; });
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = 0.5 * (i + j);
    i = j + 1;
  }
  return r;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  double ma = std::accumulate(a.begin(), a.end(), 0.0) / a.size();
  double mb = std::accumulate(b.begin(), b.end(), 0.0) / b.size();
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

TEST(CommonNeighbors, Triangle) {
  auto c = common_neighbor_counts(from_pairs(3, {{0, 1}, {1, 2}, {0, 2}}));
  EXPECT_EQ(c.size(), 3u);
  for (auto& [k, v] : c) EXPECT_EQ(v, 1u);
}

TEST(CommonNeighbors, Path) {
  auto c = common_neighbor_counts(from_pairs(3, {{0, 1}, {1, 2}}));
  ASSERT_EQ(c.size(), 1u);
  EXPECT_EQ(c.at(pair_key(0, 2)), 1u);
}

TEST(CommonNeighbors, MatchesSetIntersection) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<TypedEdge> e;
  for (NodeId v = 0; v < 40; ++v)
    for (NodeId w = v + 1; w < 40; ++w)
      if (u(rng) < 0.15) e.push_back({v, w, 1});
  Graph g(40, e);
  auto c = common_neighbor_counts(g);
  std::size_t positive = 0;
  for (NodeId v = 0; v < 40; ++v)
    for (NodeId w = v + 1; w < 40; ++w) {
      std::uint32_t k = 0;
      for (NodeId x = 0; x < 40; ++x) k += (x != v && x != w && g.adjacent(v, x) && g.adjacent(w, x));
      auto it = c.find(pair_key(v, w));
      EXPECT_EQ(it == c.end() ? 0u : it->second, k);
      positive += k > 0;
    }
  EXPECT_EQ(c.size(), positive);
}

TEST(CommonNeighbors, RejectsTypedGraph) { EXPECT_THROW(common_neighbor_counts(Graph(3, {{0, 1, 2}}, 3)), Error); }

TEST(PairEvidence, KarateOneThirtyFour) {
  auto g = karate();
  EXPECT_EQ(g.degree(0), 16u);
  EXPECT_EQ(g.degree(33), 17u);
  auto e = pair_evidence(g, 0, 33, common_neighbor_counts(g));
  EXPECT_EQ(e, (PairEvidence{0, 3, 25, 4, 34}));
  EXPECT_EQ(pair_evidence(g, 0, 33), e);
}

TEST(PairEvidence, EdgelessGraph) { EXPECT_EQ(pair_evidence(Graph(7, {}), 2, 5), (PairEvidence{0, 5, 0, 0, 7})); }

TEST(PairEvidence, CliqueK4) {
  auto g = from_pairs(4, {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}});
  auto c = common_neighbor_counts(g);
  for (NodeId v = 0; v < 4; ++v)
    for (NodeId w = v + 1; w < 4; ++w) EXPECT_EQ(pair_evidence(g, v, w, c), (PairEvidence{1, 0, 0, 2, 4}));
}

TEST(PairEvidence, MapAndDirectAgreeOnKarate) {
  auto g = karate();
  auto c = common_neighbor_counts(g);
  for (NodeId v = 0; v < 34; ++v)
    for (NodeId w = v + 1; w < 34; ++w) {
      auto e = pair_evidence(g, v, w, c);
      EXPECT_EQ(e, pair_evidence(g, v, w));
      EXPECT_EQ(e.n0 + e.n1 + e.n2, 32u);
    }
}

TEST(PairEvidence, Errors) {
  EXPECT_THROW(pair_evidence(Graph(3, {}), 1, 1), Error);
  EXPECT_THROW(evidence_from_counts(5, 0, 0, 3, 0), InconsistencyError);
}

TEST(PeakLocation, NoNeighbors) {
  auto p = peak_location({0, 10, 0, 0, 12});
  EXPECT_EQ(p.delta_p, 0.0);
  EXPECT_EQ(p.psi_p, 0.0);
}

TEST(PeakLocation, KarateOneThirtyFour) {
  auto p = peak_location({0, 3, 25, 4, 34});
  EXPECT_DOUBLE_EQ(p.delta_p, 33.0 / 64.0);
  EXPECT_DOUBLE_EQ(p.psi_p, (48.0 - 625.0) / 4096.0);
  EXPECT_NEAR(p.psi_p, -0.1409, 5e-5);
}

TEST(PeakLocation, SymmetricEvidence) {
  auto p = peak_location({0, 5, 0, 5, 12});
  EXPECT_DOUBLE_EQ(p.delta_p, 0.5);
  EXPECT_DOUBLE_EQ(p.psi_p, 4.0 * 25 / (4.0 * 100));
  EXPECT_GT(p.psi_p, 0.0);
}

TEST(PeakLocation, TooSmall) { EXPECT_THROW(peak_location({0, 0, 0, 0, 2}), Error); }

TEST(LambdaTilde, UnitAtZeroPsi) {
  // 4 n0 n2 = n1^2
  auto t = lambda_tilde({0, 1, 4, 4, 11});
  EXPECT_DOUBLE_EQ(peak_location({0, 1, 4, 4, 11}).psi_p, 0.0);
  EXPECT_DOUBLE_EQ(t.value, 1.0);
  EXPECT_FALSE(t.degenerate);
}

TEST(LambdaTilde, KarateOneThirtyFourBelowOne) {
  PairEvidence e{0, 3, 25, 4, 34};
  double d = 33.0 / 64, psi = (48.0 - 625.0) / 4096;
  auto lf = [&](double ps) {
    return 3 * std::log((1 - d) * (1 - d) + ps) + 25 * std::log(d * (1 - d) - ps) + 4 * std::log(d * d + ps);
  };
  auto t = lambda_tilde(e);
  EXPECT_NEAR(std::log(t.value), lf(0) - lf(psi), 1e-12);
  EXPECT_LT(t.value, 1.0);
}

TEST(LambdaTilde, SignFollowsPsi) {
  std::mt19937_64 rng(5);
  for (int k = 0; k < 500; ++k) {
    std::size_t n = 3 + rng() % 60, rest = n - 2;
    std::size_t n2 = rng() % (rest + 1), n1 = rng() % (rest - n2 + 1), n0 = rest - n1 - n2;
    PairEvidence e{static_cast<int>(rng() % 2), n0, n1, n2, n};
    auto p = peak_location(e);
    auto t = lambda_tilde(e);
    if (t.degenerate) continue;
    if (p.psi_p > 0) {
      EXPECT_GE(t.value, 1.0);
    }
    if (p.psi_p < 0) {
      EXPECT_LE(t.value, 1.0);
    }
  }
}

TEST(LambdaCorrections, Plateau) {
  auto [l0, l1] = lambda_corrections({1, 32, 0, 0, 34});
  EXPECT_DOUBLE_EQ(l0, 0.7197);
  EXPECT_NEAR(l1, 0.5605 * 34 + 1.598, 0.002);
  EXPECT_NEAR(l1, 20.655, 0.001);
}

TEST(LambdaCorrections, KarateOneThirtyFour) {
  auto [l0, l1] = lambda_corrections({0, 3, 25, 4, 34});
  EXPECT_NEAR(l0, 0.46 * std::pow(33.0 / 64, -0.15), 1e-15);
  EXPECT_NEAR(l0, 0.508, 5e-4);
  EXPECT_NEAR(l1, std::pow(33.0 / 64, -0.7), 1e-15);
}

TEST(LambdaCorrections, SmallDeltaTakesPlateau) {
  // delta_p = 0.01 with n = 34: (n1 + 2 n2) / 64 = 0.01 has no integer solution, so use n = 52, n1 = 1
  auto [l0, l1] = lambda_corrections({0, 49, 1, 0, 52});
  EXPECT_NEAR(peak_location({0, 49, 1, 0, 52}).delta_p, 0.01, 1e-15);
  EXPECT_NEAR(l1, std::min(0.56051044368284805729 * 52 + 1.598, std::pow(0.01, -0.7)), 1e-12);
  EXPECT_NEAR(std::pow(0.01, -0.7), 25.12, 0.01);
  EXPECT_LT(0.56051044368284805729 * 34 + 1.598, 25.12);
  EXPECT_NEAR(l0, std::min(0.7197, 0.46 * std::pow(0.01, -0.15)), 1e-15);
}

TEST(MuBar, Values) {
  EXPECT_NEAR(mu_bar(4), 0.25 / std::log(2.0), 1e-15);
  EXPECT_NEAR(mu_bar(4), 0.3607, 5e-5);
  EXPECT_NEAR(mu_bar(34), (0.5 - 1.0 / 34) / std::log(17.0), 1e-15);
  EXPECT_NEAR(mu_bar(34), 0.1661, 5e-5);
  EXPECT_THROW(mu_bar(2), Error);
}

TEST(MuBar, StrictlyDecreasing) {
  double prev = mu_bar(3);
  for (std::size_t n = 4; n <= 1'000'000; n += (n < 1000 ? 1 : n / 100)) {
    double x = mu_bar(n);
    ASSERT_LT(x, prev) << n;
    prev = x;
  }
}

TEST(PvwHat, IsolatedEdge) {
  PairEvidence e{1, 32, 0, 0, 34};
  double mb = mu_bar(34), l1 = lambda_corrections(e).second;
  EXPECT_NEAR(pvw_hat(e), l1 / (l1 + 1 / mb - 1), 1e-14);
  EXPECT_NEAR(pvw_hat(e), 0.8045, 5e-5);
  EXPECT_NEAR(1 / mb - 1, std::log(17.0) / (0.5 - 1.0 / 34) - 1, 1e-13);
}

TEST(PvwHat, FormulaOnRandomEvidence) {
  std::mt19937_64 rng(8);
  for (int k = 0; k < 300; ++k) {
    std::size_t n = 3 + rng() % 40, rest = n - 2;
    std::size_t n2 = rng() % (rest + 1), n1 = rng() % (rest - n2 + 1);
    PairEvidence e{static_cast<int>(rng() % 2), rest - n1 - n2, n1, n2, n};
    auto t = lambda_tilde(e);
    auto [l0, l1] = lambda_corrections(e);
    double r = (e.kappa ? l1 : l0) * t.value;
    double expect = r / (r + 1 / mu_bar(n) - 1);
    double p = pvw_hat(e);
    EXPECT_NEAR(p, expect, 1e-12 * std::max(1.0, expect));
    EXPECT_GT(p, 0.0);
    EXPECT_LE(p, 1.0);
  }
}

TEST(PvwHat, EdgeRaisesProbability) {
  std::mt19937_64 rng(9);
  for (int k = 0; k < 300; ++k) {
    std::size_t n = 3 + rng() % 200, rest = n - 2;
    std::size_t n2 = rng() % (rest + 1), n1 = rng() % (rest - n2 + 1);
    PairEvidence e0{0, rest - n1 - n2, n1, n2, n}, e1 = e0;
    e1.kappa = 1;
    auto [l0, l1] = lambda_corrections(e0);
    if (l1 > l0 && pvw_hat(e1) < 1.0) {
      EXPECT_GT(pvw_hat(e1), pvw_hat(e0));
    }
  }
}

TEST(PvwHat, SpearmanAgainstIntegralOnKarate) {
  auto g = karate();
  auto c = common_neighbor_counts(g);
  std::vector<double> a, b;
  std::map<std::tuple<int, std::size_t, std::size_t>, double> memo;
  for (NodeId v = 0; v < 34; ++v)
    for (NodeId w = v + 1; w < 34; ++w) {
      auto e = pair_evidence(g, v, w, c);
      auto key = std::make_tuple(e.kappa, e.n1, e.n2);
      if (!memo.count(key)) memo[key] = pvw_integral(e);
      a.push_back(pvw_hat(e));
      b.push_back(memo[key]);
    }
  double rho = pearson(ranks(a), ranks(b));
  EXPECT_GE(rho, 0.9);
}

TEST(PvwIntegral, KaratePairs) {
  auto g = karate();
  auto p = [&](NodeId v, NodeId w) { return pvw_integral(pair_evidence(g, v - 1, w - 1)); };
  EXPECT_NEAR(p(4, 8), 0.988, 0.002);
  EXPECT_NEAR(p(1, 34), 0.0065, 0.0005);
  EXPECT_NEAR(p(8, 14), 0.961, 0.002);
  EXPECT_NEAR(p(9, 31), 0.921, 0.003);
  EXPECT_NEAR(p(1, 32), 0.089, 0.003);
  EXPECT_NEAR(p(14, 34), 0.089, 0.003);
  const NodeId group[] = {15, 16, 19, 21, 23};
  for (int i = 0; i < 5; ++i)
    for (int j = i + 1; j < 5; ++j) EXPECT_NEAR(p(group[i], group[j]), 0.845, 0.003);
}

TEST(PvwIntegral, DependsOnlyOnEvidence) {
  auto g = karate();
  // {15,16} and {19,21} share evidence, so the values are identical
  auto e1 = pair_evidence(g, 14, 15), e2 = pair_evidence(g, 18, 20);
  ASSERT_EQ(e1, e2);
  EXPECT_EQ(pvw_integral(e1), pvw_integral(e2));
}

TEST(PvwIntegral, SizeGuard) {
  MPriorSpec s;
  s.max_n = 50;
  EXPECT_THROW(pvw_integral({0, 98, 0, 0, 100}, s), SizeGuardError);
}
