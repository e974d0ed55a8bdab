#pragma once

#include <algorithm>
#include <cmath>
#include <sstream>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "comember/core.hpp"
#include "comember/evidence.hpp"
#include "comember/pvw_hat.hpp"
#include "comember/quadrature.hpp"

namespace comember {

struct MPriorSpec {
  unsigned m_points = 33;         // Gauss-Legendre nodes in log m over [log 2, log n]
  double rel_tolerance = 1e-8;    // per 2-D integral
  unsigned max_depth = 15;
  std::size_t max_n = 2000;       // cost guard
};

namespace detail {

// log of 2 * E[J|M] * f(delta, psi_M) at (p_I, p_O) for hypothesis M
inline double log_pvw_integrand(const PairEvidence& e, double mu, bool together, double pi, double po) {
  double d = mu * pi + (1 - mu) * po;
  double gap = (pi - po) * (pi - po);
  double psi = together ? mu * (1 - mu) * gap : -mu * mu * gap;
  double pj = together ? pi : po;
  double ej = e.kappa ? pj : 1 - pj;
  if (ej <= 0) return kNegInf;
  return std::log(2.0 * ej) + log_f(e, d, psi);
}

// log of the integral over 0 <= p_O <= p_I <= 1, in coordinates p_O = p_I t
inline double log_triangle_integral(const PairEvidence& e, double mu, bool together, const MPriorSpec& spec) {
  using boost::math::quadrature::gauss_kronrod;
  auto logg = [&](double pi, double t) { return std::log(pi) + log_pvw_integrand(e, mu, together, pi, pi * t); };
  // scale by a grid estimate of the maximum so the integrand stays representable
  double shift = kNegInf;
  constexpr int kGrid = 64;
  for (int a = 0; a < kGrid; ++a)
    for (int b = 0; b < kGrid; ++b) shift = std::max(shift, logg((a + 0.5) / kGrid, (b + 0.5) / kGrid));
  if (shift == kNegInf) return kNegInf;
  double worst = 0;
  auto inner = [&](double pi) {
    double err = 0, l1 = 0;
    auto f = [&](double t) { return std::exp(logg(pi, t) - shift); };
    double v = gauss_kronrod<double, 31>::integrate(f, 0.0, 1.0, spec.max_depth, spec.rel_tolerance * 1e-2, &err, &l1);
    return v;
  };
  double err = 0, l1 = 0;
  double v = gauss_kronrod<double, 31>::integrate(inner, 0.0, 1.0, spec.max_depth, spec.rel_tolerance, &err, &l1);
  worst = err / std::max(v, 1e-300);
  if (!(v > 0) || worst > 1e3 * spec.rel_tolerance) {
    std::ostringstream msg;
    msg << "pvw_integral: quadrature did not converge (relative residual " << worst << ")";
    throw Error(msg.str());
  }
  return shift + std::log(v);
}

}  // namespace detail

// log E_m[I_1] - log E_m[I_0]
inline double pvw_log_likelihood_ratio(const PairEvidence& e, const MPriorSpec& spec = {}) {
  if (e.n < 3) throw Error("pvw_integral needs n >= 3");
  if (e.n > spec.max_n) throw SizeGuardError("pvw_integral: n exceeds configured limit");
  auto rule = log_uniform_m_rule(e.n, spec.m_points);
  double num = kNegInf, den = kNegInf;
  for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
    double mu = 1.0 / rule.nodes[k], lw = std::log(rule.weights[k]);
    num = log_add(num, lw + detail::log_triangle_integral(e, mu, true, spec));
    den = log_add(den, lw + detail::log_triangle_integral(e, mu, false, spec));
  }
  return num - den;
}

inline double pvw_integral(const PairEvidence& e, const MPriorSpec& spec = {}) {
  double log_ratio = pvw_log_likelihood_ratio(e, spec);
  double log_odds_prior = std::log(1.0 / mu_bar(e.n) - 1.0);
  return 1.0 / (1.0 + std::exp(log_odds_prior - log_ratio));
}

}  // namespace comember
