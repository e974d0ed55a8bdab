#pragma once

#include <cmath>
#include <utility>

#include "comember/core.hpp"
#include "comember/evidence.hpp"

namespace comember {

constexpr double kLambda0Plateau = 0.7197;
constexpr double kLambda1Slope = 0.56051044368284805729;
constexpr double kLambda1Offset = 1.598;

struct PeakPoint {
  double delta_p = 0;
  double psi_p = 0;
};

// log of ((1-d)^2+psi)^n0 (d(1-d)-psi)^n1 (d^2+psi)^n2 with 0^0 = 1
inline double log_f(const PairEvidence& e, double delta, double psi) {
  auto term = [](std::size_t k, double x) {
    if (k == 0) return 0.0;
    return static_cast<double>(k) * std::log(std::max(x, 0.0));
  };
  return term(e.n0, (1 - delta) * (1 - delta) + psi) + term(e.n1, delta * (1 - delta) - psi) +
         term(e.n2, delta * delta + psi);
}

inline PeakPoint peak_location(const PairEvidence& e) {
  if (e.n < 3) throw Error("peak location needs n >= 3");
  double N = static_cast<double>(e.n - 2);
  double n0 = static_cast<double>(e.n0), n1 = static_cast<double>(e.n1), n2 = static_cast<double>(e.n2);
  return {(n1 + 2 * n2) / (2 * N), (4 * n0 * n2 - n1 * n1) / (4 * N * N)};
}

struct LambdaTilde {
  double value = 1;
  bool degenerate = false;  // f vanished at both evaluation points
};

inline LambdaTilde lambda_tilde(const PairEvidence& e) {
  auto pk = peak_location(e);
  double at_peak = log_f(e, pk.delta_p, pk.psi_p);
  double at_axis = log_f(e, pk.delta_p, 0.0);
  if (at_peak == kNegInf && at_axis == kNegInf) return {1.0, true};
  double l = pk.psi_p >= 0 ? at_peak - at_axis : at_axis - at_peak;
  return {std::exp(l), false};
}

inline std::pair<double, double> lambda_corrections(const PairEvidence& e) {
  double dp = peak_location(e).delta_p;
  double plateau = kLambda1Slope * static_cast<double>(e.n) + kLambda1Offset;
  if (dp == 0) return {kLambda0Plateau, plateau};
  return {std::min(kLambda0Plateau, 0.46 * std::pow(dp, -0.15)), std::min(plateau, std::pow(dp, -0.7))};
}

inline double mu_bar(std::size_t n) {
  if (n <= 2) throw Error("mu_bar needs n >= 3");
  double nn = static_cast<double>(n);
  return (0.5 - 1.0 / nn) / std::log(nn / 2.0);
}

// Lambda * Lambda~ / (Lambda * Lambda~ + 1/mu_bar - 1), evaluated via logs
inline double pvw_hat(const PairEvidence& e) {
  auto [l0, l1] = lambda_corrections(e);
  double lk = e.kappa ? l1 : l0;
  auto pk = peak_location(e);
  double a = log_f(e, pk.delta_p, pk.psi_p), b = log_f(e, pk.delta_p, 0.0);
  double log_tilde = (a == kNegInf && b == kNegInf) ? 0.0 : (pk.psi_p >= 0 ? a - b : b - a);
  double log_ratio = std::log(lk) + log_tilde;
  double log_odds_prior = std::log(1.0 / mu_bar(e.n) - 1.0);
  // p = 1 / (1 + exp(log_odds_prior - log_ratio))
  return 1.0 / (1.0 + std::exp(log_odds_prior - log_ratio));
}

}  // namespace comember
