#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include "comember/batch.hpp"
#include "comember/exact.hpp"
#include "comember/hierarchy.hpp"
#include "comember/models.hpp"
#include "comember/pvw_integral.hpp"

using namespace comember;

namespace {

LoadedGraph karate() {
  std::ifstream in(std::string(COMEMBER_DATA_DIR) + "/karate.edges");
  return load_edge_list(in);
}

const PvwMatrix& karate_pvw() {
  static PvwMatrix p = [] {
    BatchOptions opt;
    opt.estimator = [](const PairEvidence& e) { return pvw_integral(e); };
    return pvw_matrix_batch(karate().graph, opt).pvw;
  }();
  return p;
}

PvwMatrix from_function(std::size_t n, auto f) {
  PvwMatrix p(n);
  for (NodeId v = 0; v < n; ++v)
    for (NodeId w = v + 1; w < n; ++w) p.set(v, w, f(v, w));
  return p;
}

DistanceMatrix random_distances(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0, 1);
  DistanceMatrix d(n);
  for (std::size_t v = 0; v < n; ++v)
    for (std::size_t w = v + 1; w < n; ++w) d.set(v, w, u(rng));
  return d;
}

// textbook O(n^3) UPGMA, returns merge heights in order
std::vector<double> upgma_heights(const DistanceMatrix& d) {
  std::vector<std::vector<NodeId>> cl;
  for (NodeId v = 0; v < d.size(); ++v) cl.push_back({v});
  std::vector<double> h;
  while (cl.size() > 1) {
    double best = INFINITY;
    std::size_t ba = 0, bb = 0;
    for (std::size_t a = 0; a < cl.size(); ++a)
      for (std::size_t b = a + 1; b < cl.size(); ++b) {
        double s = 0;
        for (NodeId x : cl[a])
          for (NodeId y : cl[b]) s += d(x, y);
        s /= double(cl[a].size() * cl[b].size());
        if (s < best) best = s, ba = a, bb = b;
      }
    h.push_back(best);
    cl[ba].insert(cl[ba].end(), cl[bb].begin(), cl[bb].end());
    cl.erase(cl.begin() + bb);
  }
  return h;
}

bool is_permutation_of_n(const std::vector<NodeId>& order, std::size_t n) {
  std::vector<NodeId> s = order;
  std::sort(s.begin(), s.end());
  std::vector<NodeId> id(n);
  std::iota(id.begin(), id.end(), 0u);
  return s == id;
}

void check_heights(const Dendrogram& dg) {
  for (std::size_t k = dg.n; k < dg.nodes.size(); ++k) {
    const auto& nd = dg.nodes[k];
    EXPECT_GE(nd.height, dg.nodes[nd.left].height - 1e-15);
    EXPECT_GE(nd.height, dg.nodes[nd.right].height - 1e-15);
    EXPECT_EQ(nd.size, dg.nodes[nd.left].size + dg.nodes[nd.right].size);
  }
}

}  // namespace

TEST(DistanceMatrixOp, Values) {
  double mb = mu_bar(5);
  auto p = from_function(5, [&](NodeId v, NodeId) { return v == 0 ? 1.0 : mb; });
  auto d = distance_matrix(p);
  EXPECT_EQ(d(0, 3), 0.0);
  EXPECT_DOUBLE_EQ(d(1, 2), 1 - mb);
  EXPECT_EQ(d(2, 1), d(1, 2));
  for (int v = 0; v < 5; ++v) EXPECT_EQ(d(v, v), 0.0);
}

TEST(DistanceMatrixOp, Clamped) {
  auto d = distance_matrix(from_function(3, [](NodeId v, NodeId) { return v == 0 ? 1.0 + 1e-9 : -1e-9; }));
  EXPECT_EQ(d(0, 1), 0.0);
  EXPECT_EQ(d(1, 2), 1.0);
}

TEST(AverageLinkage, ThreeNodeHandExample) {
  DistanceMatrix d(3);
  d.set(0, 1, 0.1);
  d.set(0, 2, 0.4);
  d.set(1, 2, 0.6);
  auto dg = average_linkage(d);
  ASSERT_EQ(dg.nodes.size(), 5u);
  EXPECT_NEAR(dg.nodes[3].height, 0.1, 1e-15);
  std::vector<NodeId> first;
  dg.leaves_under(3, first);
  std::sort(first.begin(), first.end());
  EXPECT_EQ(first, (std::vector<NodeId>{0, 1}));
  EXPECT_NEAR(dg.nodes[4].height, 0.5, 1e-15);
  EXPECT_NEAR(dg.root_height(), 0.5, 1e-15);
}

TEST(AverageLinkage, TwoPerfectBlocks) {
  auto p = from_function(10, [](NodeId v, NodeId w) { return (v < 5) == (w < 5) ? 1.0 : 0.0; });
  auto dg = average_linkage(distance_matrix(p));
  for (std::size_t k = 10; k < 18; ++k) {
    std::vector<NodeId> l;
    dg.leaves_under(static_cast<int>(k), l);
    bool left = l.front() < 5;
    for (NodeId v : l) EXPECT_EQ(v < 5, left);
    EXPECT_NEAR(dg.nodes[k].height, 0.0, 1e-15);
  }
  EXPECT_NEAR(dg.root_height(), 1.0, 1e-15);
}

TEST(AverageLinkage, MatchesTextbookUpgmaHeights) {
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    auto d = random_distances(4 + seed % 20, seed);
    auto dg = average_linkage(d);
    std::vector<double> h;
    for (std::size_t k = dg.n; k < dg.nodes.size(); ++k) h.push_back(dg.nodes[k].height);
    auto ref = upgma_heights(d);
    std::sort(h.begin(), h.end());
    std::sort(ref.begin(), ref.end());
    ASSERT_EQ(h.size(), ref.size());
    for (std::size_t k = 0; k < h.size(); ++k) EXPECT_NEAR(h[k], ref[k], 1e-12);
  }
}

TEST(AverageLinkage, HeightsMonotoneOnRandomMatrices) {
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    auto dg = average_linkage(random_distances(2 + seed % 40, 1000 + seed));
    check_heights(dg);
    EXPECT_TRUE(is_permutation_of_n(dg.leaf_order(), dg.n));
  }
}

TEST(AverageLinkage, Degenerate) {
  EXPECT_EQ(average_linkage(DistanceMatrix(0)).leaf_order().size(), 0u);
  auto one = average_linkage(DistanceMatrix(1));
  EXPECT_EQ(one.leaf_order(), (std::vector<NodeId>{0}));
  EXPECT_EQ(one.root_height(), 0.0);
}

TEST(OrderLeaves, TwoNodesSmallestFirst) {
  DistanceMatrix d(2);
  d.set(0, 1, 0.3);
  auto dg = order_leaves(average_linkage(d), d);
  EXPECT_EQ(dg.leaf_order(), (std::vector<NodeId>{0, 1}));
}

TEST(OrderLeaves, BlockDiagonalIsContiguous) {
  std::vector<int> block{0, 1, 2, 0, 1, 2, 0, 1, 2, 0, 1, 2};
  auto p = from_function(12, [&](NodeId v, NodeId w) { return block[v] == block[w] ? 0.9 : 0.05; });
  auto d = distance_matrix(p);
  auto order = order_leaves(average_linkage(d), d).leaf_order();
  int changes = 0;
  for (std::size_t k = 1; k < order.size(); ++k) changes += block[order[k]] != block[order[k - 1]];
  EXPECT_EQ(changes, 2);
}

TEST(OrderLeaves, NoWorseThanUnflipped) {
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    auto d = random_distances(5 + seed % 25, 2000 + seed);
    auto dg = average_linkage(d);
    auto od = order_leaves(dg, d);
    EXPECT_LE(ordering_objective(od, d), ordering_objective(dg, d) + 1e-12);
  }
}

TEST(OrderLeaves, NoSingleFlipImproves) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    auto d = random_distances(4 + seed % 15, 4000 + seed);
    auto od = order_leaves(average_linkage(d), d);
    double base = ordering_objective(od, d);
    for (std::size_t k = od.n; k < od.nodes.size(); ++k) {
      auto alt = od;
      std::swap(alt.nodes[k].left, alt.nodes[k].right);
      EXPECT_GE(ordering_objective(alt, d), base - 1e-12) << "seed " << seed << " node " << k;
    }
  }
}

TEST(OrderLeaves, PermutationAndIdempotent) {
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    auto d = random_distances(3 + seed % 30, 3000 + seed);
    auto once = order_leaves(average_linkage(d), d);
    auto twice = order_leaves(once, d);
    EXPECT_TRUE(is_permutation_of_n(once.leaf_order(), d.size()));
    EXPECT_EQ(once.leaf_order(), twice.leaf_order());
    check_heights(once);
  }
}

TEST(RenderMatrix, IdentityDiagonal) {
  auto p = from_function(4, [](NodeId, NodeId) { return 0.0; });
  auto img = render_matrix(p, {0, 1, 2, 3});
  std::string header = "P5\n4 4\n255\n";
  ASSERT_EQ(img.substr(0, header.size()), header);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      EXPECT_EQ(static_cast<unsigned char>(img[header.size() + i * 4 + j]), i == j ? 255 : 0);
}

TEST(RenderMatrix, IntensityRounding) {
  auto p = from_function(3, [](NodeId v, NodeId w) { return v + w == 1 ? 0.5 : 0.2; });
  auto img = render_matrix(p, {2, 0, 1});
  std::size_t h = std::string("P5\n3 3\n255\n").size();
  EXPECT_EQ(static_cast<unsigned char>(img[h + 1 * 3 + 2]), 128);  // nodes 0,1: round(127.5)
  EXPECT_EQ(static_cast<unsigned char>(img[h + 0 * 3 + 1]), 51);   // nodes 2,0
}

TEST(RenderMatrix, TwoBlocksBright) {
  auto p = from_function(6, [](NodeId v, NodeId w) { return (v % 2) == (w % 2) ? 1.0 : 0.0; });
  auto d = distance_matrix(p);
  auto order = order_leaves(average_linkage(d), d).leaf_order();
  auto img = render_matrix(p, order);
  std::size_t h = std::string("P5\n6 6\n255\n").size();
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j) EXPECT_EQ(static_cast<unsigned char>(img[h + i * 6 + j]), (i < 3) == (j < 3) ? 255 : 0);
}

TEST(RenderMatrix, KarateDeterministicAndFactionsVisible) {
  auto lg = karate();
  const auto& p = karate_pvw();
  auto d = distance_matrix(p);
  auto order = order_leaves(average_linkage(d), d).leaf_order();
  auto a = render_matrix(p, order), b = render_matrix(p, order);
  EXPECT_EQ(a, b);
  EXPECT_EQ(std::hash<std::string>{}(a), std::hash<std::string>{}(render_matrix(karate_pvw(), order)));
  // the two-way cut of the ordered tree splits 1 and 34 and each side is contiguous in the order
  auto dg = order_leaves(average_linkage(d), d);
  int l = dg.nodes[dg.root()].left;
  std::vector<NodeId> left;
  dg.leaves_under(l, left);
  std::set<NodeId> ls(left.begin(), left.end());
  EXPECT_NE(ls.count(0), ls.count(33));
  for (std::size_t k = 0; k < order.size(); ++k) EXPECT_EQ(ls.count(order[k]) == 1, k < left.size());
}

TEST(CutDendrogram, LevelZeroAndRoot) {
  auto d = random_distances(12, 5);
  auto dg = average_linkage(d);
  EXPECT_EQ(cut_dendrogram(dg, 0).size(), 12u);
  EXPECT_EQ(cut_dendrogram(dg, dg.root_height()).size(), 1u);
}

TEST(CoarseGrain, MergeZeroIsOriginalGraph) {
  auto lg = karate();
  const auto& p = karate_pvw();
  auto d = distance_matrix(p);
  auto dg = order_leaves(average_linkage(d), d);
  auto cv = coarse_grain(lg.graph, p, dg, 0.0, 0.5);
  ASSERT_EQ(cv.meta_nodes.size(), 34u);
  for (std::size_t k = 0; k < 34; ++k) EXPECT_EQ(cv.meta_nodes[k].members, (std::vector<NodeId>{NodeId(k)}));
  std::size_t with_edges = 0;
  for (const auto& e : cv.meta_edges) {
    EXPECT_EQ(e.edge_count, lg.graph.adjacent(NodeId(e.a), NodeId(e.b)) ? 1u : 0u);
    EXPECT_DOUBLE_EQ(e.mean_pvw, p(NodeId(e.a), NodeId(e.b)));
    with_edges += e.edge_count;
  }
  EXPECT_EQ(with_edges, 78u);
}

TEST(CoarseGrain, RootLevelSingleMetaNode) {
  auto lg = karate();
  const auto& p = karate_pvw();
  auto dg = average_linkage(distance_matrix(p));
  auto cv = coarse_grain(lg.graph, p, dg, dg.root_height(), dg.root_height());
  ASSERT_EQ(cv.meta_nodes.size(), 1u);
  EXPECT_EQ(cv.meta_nodes[0].members.size(), 34u);
  EXPECT_TRUE(cv.meta_edges.empty());
}

TEST(CoarseGrain, CaptionThresholdsOnKaratePairs) {
  // at merge level 0 meta-edges are node pairs; colors follow the pair values quoted for karate
  auto lg = karate();
  const auto& p = karate_pvw();
  auto dg = average_linkage(distance_matrix(p));
  auto cv = coarse_grain(lg.graph, p, dg, 0.0, 0.0, {0.60, 0.018});
  std::map<std::pair<std::size_t, std::size_t>, std::string> color;
  for (const auto& e : cv.meta_edges) color[{e.a, e.b}] = e.color;
  auto col = [&](int v, int w) {
    auto it = color.find({v - 1, w - 1});
    return it == color.end() ? std::string("absent") : it->second;
  };
  EXPECT_EQ(col(4, 8), "blue");
  EXPECT_EQ(col(8, 14), "blue");
  EXPECT_EQ(col(9, 31), "blue");
  EXPECT_EQ(col(15, 16), "blue");
  EXPECT_EQ(col(1, 34), "red");
  EXPECT_EQ(col(1, 32), "neutral");   // adjacent, 8.9%
  EXPECT_EQ(col(14, 34), "neutral");
  // every pair is classified by its value
  for (NodeId v = 0; v < 34; ++v)
    for (NodeId w = v + 1; w < 34; ++w) {
      double x = p(v, w);
      std::string want = x >= 0.60 ? "blue" : x <= 0.018 ? "red" : lg.graph.adjacent(v, w) ? "neutral" : "absent";
      EXPECT_EQ(col(v + 1, w + 1), want) << v + 1 << "," << w + 1;
    }
}

TEST(CoarseGrain, MetaNodesPartitionAndMeansInRange) {
  std::mt19937_64 rng(4);
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    auto s = sample_planted({60, 3, 0.3, 0.05}, seed);
    auto p = pvw_matrix_batch(s.graph, {}).pvw;
    auto dg = average_linkage(distance_matrix(p));
    std::uniform_real_distribution<double> u(0, dg.root_height());
    double a = u(rng), b = u(rng);
    auto cv = coarse_grain(s.graph, p, dg, std::min(a, b), std::max(a, b));
    std::vector<int> seen(60, 0);
    for (const auto& m : cv.meta_nodes)
      for (NodeId v : m.members) ++seen[v];
    for (int c : seen) EXPECT_EQ(c, 1);
    for (const auto& e : cv.meta_edges) {
      EXPECT_GE(e.mean_pvw, 0.0);
      EXPECT_LE(e.mean_pvw, 1.0);
    }
    // each community is a union of meta-nodes
    std::size_t total = 0;
    for (const auto& c : cv.communities) total += c.size();
    EXPECT_EQ(total, cv.meta_nodes.size());
  }
}

TEST(CoarseGrain, Errors) {
  auto lg = karate();
  const auto& p = karate_pvw();
  auto dg = average_linkage(distance_matrix(p));
  EXPECT_THROW(coarse_grain(lg.graph, p, dg, 0.3, 0.2), Error);
  EXPECT_THROW(coarse_grain(lg.graph, p, dg, -0.1, 0.2), Error);
  EXPECT_THROW(coarse_grain(lg.graph, p, dg, 0.1, dg.root_height() + 0.1), Error);
  EXPECT_THROW(coarse_grain(lg.graph, p, dg, 0.1, 0.2, {0.01, 0.5}), Error);
}

TEST(TriangleCheck, MetricInput) {
  // points on a line
  DistanceMatrix d(8);
  for (int v = 0; v < 8; ++v)
    for (int w = v + 1; w < 8; ++w) d.set(v, w, (w - v) / 8.0);
  auto r = triangle_check(d);
  EXPECT_EQ(r.violations, 0u);
  EXPECT_EQ(r.checked, 56u);
  EXPECT_FALSE(r.sampled);
}

TEST(TriangleCheck, ExactPosteriorObeysIt) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    PlantedParams params{6, 3, 0.7, 0.1};
    auto s = sample_planted(params, seed);
    auto r = triangle_check(distance_matrix(exact_pvw_bruteforce(s.graph, params)));
    EXPECT_EQ(r.violations, 0u);
    EXPECT_EQ(r.checked, 20u);
  }
}

TEST(TriangleCheck, KarateMatchesBruteForceScan) {
  auto g = karate().graph;
  auto d = distance_matrix(pvw_matrix_batch(g, {}).pvw);
  std::uint64_t count = 0;
  double worst = -INFINITY;
  for (int a = 0; a < 34; ++a)
    for (int b = 0; b < 34; ++b)
      for (int c = 0; c < 34; ++c) {
        if (a == b || b == c || a == c || a > b) continue;  // side {a,b} against apex c
        double m = d(a, b) - d(a, c) - d(b, c);
        worst = std::max(worst, m);
      }
  for (int a = 0; a < 34; ++a)
    for (int b = a + 1; b < 34; ++b)
      for (int c = b + 1; c < 34; ++c) {
        bool bad = d(a, b) > d(a, c) + d(b, c) + 1e-12 || d(a, c) > d(a, b) + d(b, c) + 1e-12 ||
                   d(b, c) > d(a, b) + d(a, c) + 1e-12;
        count += bad;
      }
  auto r = triangle_check(d);
  EXPECT_EQ(r.violations, count);
  EXPECT_EQ(r.checked, 5984u);
  EXPECT_NEAR(r.worst_margin, worst, 1e-15);
  EXPECT_NEAR(d(r.worst[0], r.worst[1]) - d(r.worst[0], r.worst[2]) - d(r.worst[1], r.worst[2]), worst, 1e-15);
  EXPECT_LT(double(count) / 5984, 0.5);
}

TEST(TriangleCheck, SampledBeyondLimit) {
  DistanceMatrix d(2001);
  auto r = triangle_check(d, 3);
  EXPECT_TRUE(r.sampled);
  EXPECT_EQ(r.checked, 1000000u);
  EXPECT_EQ(r.violations, 0u);
}

TEST(DendrogramJson, Shape) {
  DistanceMatrix d(3);
  d.set(0, 1, 0.1);
  d.set(0, 2, 0.4);
  d.set(1, 2, 0.6);
  auto j = average_linkage(d).to_json({10, 20, 30});
  EXPECT_NEAR(j["height"].get<double>(), 0.5, 1e-15);
  EXPECT_EQ(j["size"], 3);
  ASSERT_EQ(j["children"].size(), 2u);
  std::set<long long> leaves;
  auto walk = [&](auto&& self, const nlohmann::json& x) -> void {
    if (x.contains("leaf")) {
      leaves.insert(x["leaf"].get<long long>());
      return;
    }
    for (const auto& c : x["children"]) self(self, c);
  };
  walk(walk, j);
  EXPECT_EQ(leaves, (std::set<long long>{10, 20, 30}));
}
