#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include <boost/numeric/odeint.hpp>

#include "comember/core.hpp"

namespace comember {

struct OdeOptions {
  double rel_tol = 1e-10;
  double abs_tol = 1e-14;
  double max_step = 0;          // 0: unbounded
  std::size_t max_steps = 50'000'000;
};

struct OdeStats {
  std::size_t accepted = 0, rejected = 0;
};

// Adaptive Dormand-Prince 5(4) from t0 to t1. dt carries the step size between calls.
// post(x, t) runs after each accepted step and returns true if it changed x.
template <class System, class Post>
void integrate_dopri(System&& sys, std::vector<double>& x, double t0, double t1, double& dt, const OdeOptions& opt,
                     Post&& post, OdeStats* stats = nullptr) {
  namespace odeint = boost::numeric::odeint;
  if (!(t1 >= t0)) throw Error("integrate: end time before start time");
  if (t1 == t0) return;
  using State = std::vector<double>;
  auto stepper = odeint::make_controlled(opt.abs_tol, opt.rel_tol, odeint::runge_kutta_dopri5<State>());
  auto rhs = [&](const State& s, State& ds, double t) { sys(s, ds, t); };
  double t = t0;
  if (!(dt > 0)) dt = std::min(1e-3, t1 - t0);
  std::size_t fails = 0;
  const double eps = 1e-14 * std::max(1.0, std::fabs(t1));
  while (t1 - t > eps) {
    if (opt.max_step > 0) dt = std::min(dt, opt.max_step);
    double h = std::min(dt, t1 - t);
    bool last = h == t1 - t;
    double before = t;
    auto res = stepper.try_step(rhs, x, t, h);
    if (res == odeint::success) {
      fails = 0;
      if (last) t = t1;  // land exactly on the end time
      if (stats) ++stats->accepted;
      if (post(x, t)) stepper.reset();
      // keep the grown step for the next call unless we were truncated at t1
      if (!last || h > dt) dt = h;
    } else {
      if (stats) ++stats->rejected;
      dt = h;
      if (++fails > 200 || !(h > 1e-15 * std::max(1.0, std::fabs(before))))
        throw Error("integrate: step size underflow");
    }
    if (stats && stats->accepted + stats->rejected > opt.max_steps) throw Error("integrate: step budget exhausted");
  }
}

}  // namespace comember
