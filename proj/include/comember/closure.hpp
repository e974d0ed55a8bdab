#pragma once

#include <algorithm>
#include <cmath>
#include <sstream>

#include "comember/core.hpp"

namespace comember {

struct TripleBounds {
  double lower;      // p-: 1/2 (p_wx + p_vx + p_vw - 1)
  double upper;      // p+: smallest of the three pair values
  double lower0;     // max(p-, 0)
};

namespace detail {
inline TripleBounds raw_bounds(double p_wx, double p_vx, double p_vw) {
  double lo = 0.5 * (p_wx + p_vx + p_vw - 1.0);
  return {lo, std::min({p_wx, p_vx, p_vw}), std::max(lo, 0.0)};
}
}  // namespace detail

inline TripleBounds third_order_bounds(double p_wx, double p_vx, double p_vw) {
  for (double p : {p_wx, p_vx, p_vw})
    if (!(p >= 0 && p <= 1)) throw Error("third_order_bounds: pair probabilities must lie in [0,1]");
  auto b = detail::raw_bounds(p_wx, p_vx, p_vw);
  if (b.lower0 > b.upper + 1e-12) {
    std::ostringstream msg;
    msg << "third_order_bounds: triangle violation (lower " << b.lower0 << " > upper " << b.upper << ")";
    throw InconsistencyError(msg.str());
  }
  return b;
}

// Root of the entropy slope kept as endpoint + offset. Near an endpoint one log term
// vanishes and a plain double cannot resolve it.
struct MaxEntRoot {
  long double base = 0;
  long double offset = 0;
  long double value() const { return base + offset; }
};

namespace detail {

// the five log terms of dH/dp written as c_k + s_k t around p = base + t
template <class Real>
struct SlopeTerms {
  Real logk;
  Real c[5];
  int sign[5];
  static constexpr int weight[5] = {1, 1, 1, -1, -2};

  SlopeTerms(double p_wx, double p_vx, double p_vw, Real base, int m) {
    Real lo = Real(0.5) * (Real(p_wx) + p_vx + p_vw - 1);
    logk = std::log(Real(m - 2) * (m - 2) / (Real(4) * (m - 1)));
    Real xs[3] = {p_wx, p_vx, p_vw};
    for (int k = 0; k < 3; ++k) {
      c[k] = xs[k] - base;
      sign[k] = -1;
    }
    c[3] = base;
    sign[3] = 1;
    c[4] = base - lo;
    sign[4] = 1;
  }
  Real g(Real t) const {
    Real v = logk;
    for (int k = 0; k < 5; ++k) v += weight[k] * std::log(c[k] + sign[k] * t);
    return v;
  }
  Real dg(Real t) const {
    Real v = 0;
    for (int k = 0; k < 5; ++k) v += weight[k] * sign[k] / (c[k] + sign[k] * t);
    return v;
  }
};

// g decreases from +inf at tl to -inf at tr
template <class Real>
Real slope_root(const SlopeTerms<Real>& st, Real tl, Real tr) {
  Real t = Real(0.5) * (tl + tr);
  for (int it = 0; it < 400; ++it) {
    Real v = st.g(t);
    if (v == 0) break;
    if (v > 0)
      tl = t;
    else
      tr = t;
    Real step = t - v / st.dg(t);
    if (!(step > tl && step < tr)) step = Real(0.5) * (tl + tr);
    if (step == t || std::nextafter(tl, tr) >= tr) break;
    t = step;
  }
  return t;
}

}  // namespace detail

// derivative of the triple entropy with respect to p = p^{v,w,x}
inline long double maxent_entropy_slope(double p_wx, double p_vx, double p_vw, const MaxEntRoot& p, int m) {
  return detail::SlopeTerms<long double>(p_wx, p_vx, p_vw, p.base, m).g(p.offset);
}

inline double maxent_entropy_slope(double p_wx, double p_vx, double p_vw, double p, int m) {
  return static_cast<double>(maxent_entropy_slope(p_wx, p_vx, p_vw, MaxEntRoot{p, 0}, m));
}

// all-together probability of three nodes maximizing entropy given the pair values
inline MaxEntRoot maxent_closure_extended(double p_wx, double p_vx, double p_vw, int m) {
  using L = long double;
  if (m < 2) throw Error("maxent_closure needs m >= 2");
  L lo = 0.5L * (L(p_wx) + p_vx + p_vw - 1);
  L left = std::max<L>(lo, 0), right = std::min({p_wx, p_vx, p_vw});
  if (!(left < right)) return {right, 0};
  if (m == 2) return {left, 0};  // no room for three distinct communities
  // coarse solve, then re-solve around whichever endpoint is nearer
  detail::SlopeTerms<L> coarse(p_wx, p_vx, p_vw, 0, m);
  L p = detail::slope_root(coarse, left, right);
  L base = (right - p < p - left) ? right : left;
  detail::SlopeTerms<L> fine(p_wx, p_vx, p_vw, base, m);
  return {base, detail::slope_root(fine, left - base, right - base)};
}

// double-precision solve, used inside the filters
inline double maxent_closure(double p_wx, double p_vx, double p_vw, int m) {
  if (m < 2) throw Error("maxent_closure needs m >= 2");
  double lo = 0.5 * (p_wx + p_vx + p_vw - 1);
  double left = std::max(lo, 0.0), right = std::min({p_wx, p_vx, p_vw});
  if (!(left < right)) return right;
  if (m == 2) return left;
  return detail::slope_root(detail::SlopeTerms<double>(p_wx, p_vx, p_vw, 0, m), left, right);
}

// third-order statistics of (v,w,x) implied by the pair values and p^{v,w,x}
struct ThirdOrderStats {
  double together;   // p^{v,w,x}
  double v_alone;    // p^{v}{w,x}
  double w_alone;    // p^{w}{v,x}
  double x_alone;    // p^{x}{v,w}
  double apart;      // p^{v}{w}{x}

  static ThirdOrderStats from(double p_wx, double p_vx, double p_vw, double together) {
    return {together, p_wx - together, p_vx - together, p_vw - together,
            1 - p_wx - p_vx - p_vw + 2 * together};
  }
};

}  // namespace comember
