#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include <unsupported/Eigen/KroneckerProduct>
#include <unsupported/Eigen/MatrixFunctions>

#include "comember/dynamics.hpp"

using namespace comember;

namespace {

DynamicPlantedParams h12() { return {12, 3, 0.5, 16, 4, 2, 18}; }

Eigen::MatrixXd random_rate_matrix(int k, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0, 2);
  Eigen::MatrixXd M(k, k);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) M(i, j) = i == j ? 0 : u(rng);
  for (int j = 0; j < k; ++j) M(j, j) = -(M.col(j).sum());
  return M;
}

// time-weighted fraction of present edges among same / different community pairs
std::pair<double, double> time_averaged_density(const EventTimeline& tl, double from) {
  TimelineCursor cur(tl);
  double t = 0, in_w = 0, out_w = 0, in_t = 0, out_t = 0;
  auto accumulate = [&](double t1) {
    double a = std::max(t, from), b = t1;
    if (b <= a) return;
    const auto& phi = cur.assignment();
    const auto& k = cur.types();
    for (NodeId v = 0; v < tl.n; ++v)
      for (NodeId w = v + 1; w < tl.n; ++w) {
        bool in = phi[v] == phi[w];
        double on = k[pair_index(tl.n, v, w)] ? 1 : 0;
        (in ? in_w : out_w) += on * (b - a);
        (in ? in_t : out_t) += b - a;
      }
  };
  while (!cur.done()) {
    double te = cur.peek().time;
    accumulate(te);
    t = te;
    cur.advance();
  }
  accumulate(tl.horizon);
  return {in_w / in_t, out_w / out_t};
}

}  // namespace

TEST(RateMatrix, Validation) {
  Eigen::MatrixXd ok(2, 2);
  ok << -1, 2, 1, -2;
  EXPECT_NO_THROW(check_rate_matrix(ok, "ok"));
  Eigen::MatrixXd neg = ok;
  neg(0, 1) = -0.5;
  neg(1, 1) = 0.5;
  EXPECT_THROW(check_rate_matrix(neg, "neg"), Error);
  Eigen::MatrixXd drift = ok;
  drift(0, 0) = -1.1;
  EXPECT_THROW(check_rate_matrix(drift, "drift"), Error);
  EXPECT_THROW(check_rate_matrix(Eigen::MatrixXd(2, 3), "shape"), Error);
}

TEST(RateMatrix, StationaryDistribution) {
  Eigen::MatrixXd b(2, 2);
  b << -16, 4, 16, -4;
  auto pi = stationary_distribution(b);
  EXPECT_NEAR(pi(1), 0.8, 1e-14);
  std::mt19937_64 rng(4);
  for (int k = 2; k <= 5; ++k) {
    auto M = random_rate_matrix(k, rng);
    auto p = stationary_distribution(M);
    EXPECT_LT((M * p).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_NEAR(p.sum(), 1, 1e-14);
  }
}

TEST(PlantedParams, BlockConversion) {
  auto p = h12().to_block();
  EXPECT_NO_THROW(p.validate());
  EXPECT_DOUBLE_EQ(p.A(0, 0), -0.5);
  EXPECT_DOUBLE_EQ(p.A(1, 0), 0.25);
  EXPECT_DOUBLE_EQ(p.b(1, 1, 1, 0), 16);   // within, off -> on
  EXPECT_DOUBLE_EQ(p.b(1, 1, 0, 1), 4);
  EXPECT_DOUBLE_EQ(p.b(0, 2, 1, 0), 2);
  EXPECT_DOUBLE_EQ(p.b(2, 0, 0, 1), 18);
  DynamicPlantedParams bad = h12();
  bad.mu_O = -1;
  EXPECT_THROW(bad.validate(), Error);
  auto back = DynamicPlantedParams::from_json(h12().to_json());
  EXPECT_EQ(back.to_json(), h12().to_json());
  auto blk = DynamicBlockParams::from_json(p.to_json());
  EXPECT_EQ(blk.to_json(), p.to_json());
}

TEST(Simulate, ZeroRatesGiveNoEvents) {
  DynamicPlantedParams p{8, 3, 0, 0, 0, 0, 0};
  auto tl = simulate(p, InitialDraw{}, 10, 1);
  EXPECT_TRUE(tl.events.empty());
  EXPECT_EQ(tl.initial_assignment.size(), 8u);
}

TEST(Simulate, DeterministicUnderSeed) {
  auto a = simulate(h12(), InitialDraw{}, 2, 7), b = simulate(h12(), InitialDraw{}, 2, 7);
  EXPECT_EQ(a.events, b.events);
  EXPECT_EQ(a.initial_types, b.initial_types);
  auto c = simulate(h12(), InitialDraw{}, 2, 8);
  EXPECT_NE(a.events, c.events);
  EXPECT_NO_THROW(a.validate());
  for (const auto& e : a.events) EXPECT_LE(e.time, 2.0);
}

TEST(Simulate, StationaryEdgeDensities) {
  // birth-death stationary on-fraction lambda / (lambda + mu): 0.8 within, 0.1 between
  double in = 0, out = 0;
  const int runs = 4;
  for (int s = 0; s < runs; ++s) {
    auto tl = simulate(h12(), InitialDraw{}, 25, 100 + s);
    auto [i, o] = time_averaged_density(tl, 1.0);
    in += i / runs;
    out += o / runs;
  }
  EXPECT_NEAR(in, 0.8, 0.05);
  EXPECT_NEAR(out, 0.1, 0.05);
}

TEST(Simulate, EmptyStartRelaxes) {
  InitialDraw init;
  init.graph = InitialDraw::GraphStart::Empty;
  auto tl = simulate(h12(), init, 20, 3);
  for (auto k : tl.initial_types) EXPECT_EQ(k, 0);
  auto [in, out] = time_averaged_density(tl, 2.0);
  EXPECT_NEAR(in, 0.8, 0.05);
  EXPECT_NEAR(out, 0.1, 0.05);
}

TEST(Simulate, HopCountsMatchExponentialClocks) {
  // each node leaves at rate a, so total hops over [0,T] ~ Poisson(n a T); destinations uniform
  auto p = h12();
  const double T = 20;
  const int runs = 20;
  std::vector<double> counts;
  std::vector<double> dest(3, 0);   // (to - from) mod m in {1,2}
  for (int s = 0; s < runs; ++s) {
    auto tl = simulate(p, InitialDraw{}, T, 500 + s);
    counts.push_back(static_cast<double>(tl.count(TimelineEvent::Kind::Hop)));
    for (const auto& e : tl.events)
      if (e.kind == TimelineEvent::Kind::Hop) dest[(e.to + 3 - e.from) % 3] += 1;
  }
  double mean = 0, var = 0;
  for (double c : counts) mean += c / runs;
  for (double c : counts) var += (c - mean) * (c - mean) / (runs - 1);
  const double lambda = 12 * 0.5 * T;   // 120
  EXPECT_NEAR(mean, lambda, 4 * std::sqrt(lambda / runs));
  // Poisson dispersion: variance / mean near 1 (chi-square with 19 dof, wide band)
  EXPECT_GT(var / mean, 0.4);
  EXPECT_LT(var / mean, 1.9);
  EXPECT_EQ(dest[0], 0);
  double total = dest[1] + dest[2];
  EXPECT_NEAR(dest[1] / total, 0.5, 4 * std::sqrt(0.25 / total));
}

TEST(Simulate, GeneralBlockModelOccupation) {
  std::mt19937_64 rng(9);
  DynamicBlockParams p;
  p.m = 2;
  p.r = 3;
  p.A = Eigen::MatrixXd::Zero(2, 2);   // frozen communities
  std::vector<Eigen::MatrixXd> blocks;
  for (int k = 0; k < 3; ++k) blocks.push_back(random_rate_matrix(3, rng));
  p.B = {blocks[0], blocks[1], blocks[1], blocks[2]};
  InitialDraw init;
  init.assignment = {0, 0, 0, 1, 1, 1};
  auto tl = simulate(p, 6, init, 400, 12);
  EXPECT_EQ(tl.count(TimelineEvent::Kind::Hop), 0u);
  // time-averaged type occupation of pairs inside community 0 vs the stationary law of B_00
  TimelineCursor cur(tl);
  std::vector<double> occ(3, 0);
  double t = 0;
  auto acc = [&](double t1) {
    for (auto [v, w] : {std::pair{0, 1}, {0, 2}, {1, 2}}) occ[cur.types()[pair_index(6, v, w)]] += t1 - t;
  };
  while (!cur.done()) {
    acc(cur.peek().time);
    t = cur.peek().time;
    cur.advance();
  }
  acc(tl.horizon);
  auto pi = stationary_distribution(blocks[0]);
  double total = occ[0] + occ[1] + occ[2];
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(occ[k] / total, pi(k), 0.05) << k;
}

TEST(Simulate, RejectsBadInput) {
  DynamicBlockParams p = h12().to_block();
  EXPECT_THROW(simulate(p, 1, InitialDraw{}, 1, 1), Error);
  EXPECT_THROW(simulate(p, 4, InitialDraw{}, -1, 1), Error);
  InitialDraw init;
  init.assignment = {0, 1};
  EXPECT_THROW(simulate(p, 4, init, 1, 1), Error);
  p.B[1](0, 0) = -3;
  EXPECT_THROW(simulate(p, 4, InitialDraw{}, 1, 1), Error);
}

TEST(Timeline, WriteReadRoundTrip) {
  auto tl = simulate(h12(), InitialDraw{}, 1.5, 21);
  std::stringstream buf;
  tl.write(buf);
  auto back = EventTimeline::read(buf);
  EXPECT_EQ(back.n, tl.n);
  EXPECT_EQ(back.m, tl.m);
  EXPECT_EQ(back.r, tl.r);
  EXPECT_EQ(back.horizon, tl.horizon);
  EXPECT_EQ(back.params, tl.params);
  EXPECT_EQ(back.initial_assignment, tl.initial_assignment);
  EXPECT_EQ(back.initial_types, tl.initial_types);
  EXPECT_EQ(back.events, tl.events);
  auto p = timeline_params(back);
  EXPECT_EQ(p.to_json(), h12().to_block().to_json());
}

TEST(Timeline, ReadRejectsInconsistentEvents) {
  std::string head = "n 3\nm 2\nr 2\nhorizon 1\nphi 1 1 2\nedge 1 2 1\n";
  auto parse = [](const std::string& s) {
    std::istringstream in(s);
    return EventTimeline::read(in);
  };
  EXPECT_NO_THROW(parse(head + "flip 0.5 1 2 1 0\n"));
  EXPECT_THROW(parse(head + "flip 0.5 1 2 0 1\n"), ParseError);      // edge already on
  EXPECT_THROW(parse(head + "hop 0.5 1 2 1\n"), ParseError);         // node 1 is in community 1
  EXPECT_THROW(parse(head + "hop 0.5 1 1 2\nhop 0.4 2 1 2\n"), ParseError);  // times go back
  EXPECT_THROW(parse(head + "hop 1.5 1 1 2\n"), ParseError);         // after horizon
  EXPECT_THROW(parse(head + "bogus 1\n"), ParseError);
  EXPECT_THROW(parse("phi 1 2\n"), ParseError);                      // n missing
}

TEST(Timeline, CursorReplaysState) {
  auto tl = simulate(h12(), InitialDraw{}, 1, 33);
  ASSERT_GT(tl.events.size(), 10u);
  TimelineCursor cur(tl);
  double mid = tl.events[tl.events.size() / 2].time;
  cur.advance_to(mid);
  auto phi = tl.initial_assignment;
  auto kappa = tl.initial_types;
  for (const auto& e : tl.events) {
    if (e.time > mid) break;
    if (e.kind == TimelineEvent::Kind::Hop)
      phi[e.v] = e.to;
    else
      kappa[pair_index(tl.n, e.v, e.w)] = static_cast<EdgeType>(e.to);
  }
  EXPECT_EQ(cur.assignment(), phi);
  EXPECT_EQ(cur.types(), kappa);
  auto g = graph_from_types(tl.n, kappa, 2);
  std::size_t on = 0;
  for (auto k : kappa) on += k != 0;
  EXPECT_EQ(g.edge_count(), on);
}

TEST(Kronecker, TwoStateSumColumnsZero) {
  Eigen::MatrixXd a(2, 2);
  a << -1, 1, 1, -1;
  auto ks = kronecker_sum({a, a});
  auto D = ks.dense();
  ASSERT_EQ(D.rows(), 4);
  for (int c = 0; c < 4; ++c) EXPECT_NEAR(D.col(c).sum(), 0, 1e-15);
  Eigen::MatrixXd expect(4, 4);
  expect << -2, 1, 1, 0,
             1, -2, 0, 1,
             1, 0, -2, 1,
             0, 1, 1, -2;
  EXPECT_EQ(D, expect);
}

TEST(Kronecker, ProductVectorIdentity) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g;
  auto A = random_rate_matrix(3, rng), B = random_rate_matrix(4, rng);
  Eigen::VectorXd x(3), y(4);
  for (int i = 0; i < 3; ++i) x(i) = g(rng);
  for (int i = 0; i < 4; ++i) y(i) = g(rng);
  Eigen::VectorXd xy = Eigen::kroneckerProduct(x, y);
  auto ks = kronecker_sum({A, B});
  auto out = ks.apply(std::vector<double>(xy.data(), xy.data() + xy.size()));
  Eigen::VectorXd expect = Eigen::kroneckerProduct(Eigen::VectorXd(A * x), y) +
                           Eigen::kroneckerProduct(x, Eigen::VectorXd(B * y));
  for (int i = 0; i < 12; ++i) EXPECT_NEAR(out[i], expect(i), 1e-12);
}

TEST(Kronecker, MatchesDenseConstruction) {
  std::mt19937_64 rng(5);
  for (int rep = 0; rep < 5; ++rep) {
    auto A = random_rate_matrix(3, rng), B = random_rate_matrix(2, rng), C = random_rate_matrix(2, rng);
    Eigen::MatrixXd I2 = Eigen::MatrixXd::Identity(2, 2), I3 = Eigen::MatrixXd::Identity(3, 3);
    Eigen::MatrixXd dense = Eigen::kroneckerProduct(A, I2) + Eigen::kroneckerProduct(I3, B);
    EXPECT_LT((kronecker_sum({A, B}).dense() - dense).cwiseAbs().maxCoeff(), 1e-14);
    // three factors, entry formula a_ii' d_jj' d_kk' + ...
    Eigen::MatrixXd I4 = Eigen::MatrixXd::Identity(4, 4), I6 = Eigen::MatrixXd::Identity(6, 6);
    Eigen::MatrixXd d3 = Eigen::kroneckerProduct(A, I4) + Eigen::kroneckerProduct(I3, Eigen::MatrixXd(Eigen::kroneckerProduct(B, I2))) +
                         Eigen::kroneckerProduct(I6, C);
    EXPECT_LT((kronecker_sum({A, B, C}).dense() - d3).cwiseAbs().maxCoeff(), 1e-14);
  }
}

TEST(Kronecker, ProductOfExponentialsIsExponentialOfSum) {
  std::mt19937_64 rng(8);
  auto A = random_rate_matrix(3, rng), B = random_rate_matrix(3, rng);
  auto ks = kronecker_sum({A, B});
  Eigen::MatrixXd E = (ks.dense() * 0.3).exp();
  std::vector<double> x(9);
  std::uniform_real_distribution<double> u(0, 1);
  for (double& v : x) v = u(rng);
  Eigen::VectorXd xv = Eigen::Map<Eigen::VectorXd>(x.data(), 9);
  Eigen::VectorXd expect = E * xv;
  ks.apply_product({Eigen::MatrixXd((A * 0.3).exp()), Eigen::MatrixXd((B * 0.3).exp())}, x);
  for (int i = 0; i < 9; ++i) EXPECT_NEAR(x[i], expect(i), 1e-12);
}

TEST(Kronecker, DimensionGuard) {
  Eigen::MatrixXd a(4, 4);
  a.setZero();
  std::vector<Eigen::MatrixXd> many(16, a);   // 4^16 = 2^32
  EXPECT_THROW(kronecker_sum(many), SizeGuardError);
  EXPECT_THROW(kronecker_sum(std::vector<Eigen::MatrixXd>(7, a)).dense(), SizeGuardError);
  Eigen::MatrixXd bad(2, 2);
  bad << -1, 0, 2, 0;
  EXPECT_THROW(kronecker_sum({bad}), Error);
}
