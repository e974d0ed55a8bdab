#pragma once

#include <cmath>
#include <map>
#include <mutex>
#include <utility>
#include <vector>

#include <boost/math/special_functions/legendre.hpp>

namespace comember {

struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

// n-point Gauss-Legendre rule on [a,b]
inline QuadratureRule gauss_legendre(unsigned n, double a, double b) {
  static std::mutex mu;
  static std::map<unsigned, QuadratureRule> cache;  // on [-1,1]
  QuadratureRule base;
  {
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(n);
    if (it == cache.end()) {
      auto zeros = boost::math::legendre_p_zeros<double>(static_cast<int>(n));
      QuadratureRule r;
      for (double x : zeros) {
        double dp = boost::math::legendre_p_prime<double>(static_cast<int>(n), x);
        double w = 2.0 / ((1 - x * x) * dp * dp);
        r.nodes.push_back(x);
        r.weights.push_back(w);
        if (x != 0.0) {
          r.nodes.push_back(-x);
          r.weights.push_back(w);
        }
      }
      it = cache.emplace(n, std::move(r)).first;
    }
    base = it->second;
  }
  double half = 0.5 * (b - a), mid = 0.5 * (a + b);
  for (std::size_t k = 0; k < base.nodes.size(); ++k) {
    base.nodes[k] = mid + half * base.nodes[k];
    base.weights[k] *= half;
  }
  return base;
}

// Nodes s_k of a rule in s = log m on [log 2, log n]; weights normalized to 1.
// Degenerates to the single point m = 2 when n <= 2.
inline QuadratureRule log_uniform_m_rule(std::size_t n, unsigned points) {
  if (n <= 2) return {{2.0}, {1.0}};
  auto r = gauss_legendre(points, std::log(2.0), std::log(static_cast<double>(n)));
  double total = 0;
  for (double w : r.weights) total += w;
  for (std::size_t k = 0; k < r.nodes.size(); ++k) {
    r.nodes[k] = std::exp(r.nodes[k]);
    r.weights[k] /= total;
  }
  return r;
}

}  // namespace comember
