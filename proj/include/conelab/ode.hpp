#ifndef CONELAB_ODE_HPP
#define CONELAB_ODE_HPP

#include <array>
#include <cmath>
#include <functional>
#include <sstream>
#include <vector>

#include <boost/numeric/odeint.hpp>

#include "conelab/core.hpp"

namespace conelab {

struct OdeTolerances {
  double rel = 1e-10;
  double abs = 1e-12;
  int max_steps = 200000;
  // cap on |dt| relative to max(|t|, 1); keeps the quintic interpolant
  // well inside the integrator's accuracy
  double max_step_rel = 0.005;
};

struct OdeStats {
  int accepted = 0;
  int rejected = 0;
};

struct HermiteState {
  double y, dy, ddy;
};

// y'' = a(t, y, y')
using Accel = std::function<double(double, double, double)>;
// return false to stop integration at t (e.g. gradient blow-up)
using Guard = std::function<bool(double, double, double)>;

// Node data of an adaptive solve plus a C^2 quintic Hermite interpolant.
class DenseSolution {
 public:
  std::vector<double> t, y, dy, ddy;
  Accel accel;
  OdeStats stats;
  OdeTolerances tol;
  bool stopped_early = false;
  double stop_location = 0;

  double t_lo() const { return std::min(t.front(), t.back()); }
  double t_hi() const { return std::max(t.front(), t.back()); }
  bool contains(double x) const {
    double lo = t_lo(), hi = t_hi(), pad = 1e-12 * std::max(1.0, std::fabs(hi));
    return x >= lo - pad && x <= hi + pad;
  }

  // y and y' from the interpolant; y'' from the ODE so the residual is exact
  HermiteState eval(double x) const {
    if (!contains(x)) {
      std::ostringstream os;
      os << "DenseSolution: t=" << x << " outside [" << t_lo() << ", " << t_hi() << "]";
      throw domain_error(os.str());
    }
    auto yi = interpolate(x);
    return {yi[0], yi[1], accel(x, yi[0], yi[1])};
  }

  std::array<double, 2> interpolate(double x) const {
    std::size_t N = t.size();
    if (N == 1) return {y[0], dy[0]};
    bool inc = t.back() > t.front();
    // locate interval
    std::size_t lo = 0, hi = N - 1;
    while (hi - lo > 1) {
      std::size_t mid = (lo + hi) / 2;
      bool right = inc ? (t[mid] <= x) : (t[mid] >= x);
      if (right) lo = mid; else hi = mid;
    }
    double t0 = t[lo], t1 = t[hi];
    double h = t1 - t0;
    double s = (x - t0) / h;
    s = std::clamp(s, 0.0, 1.0);
    double s2 = s * s, s3 = s2 * s, s4 = s3 * s, s5 = s4 * s;
    double H0 = 1 - 10 * s3 + 15 * s4 - 6 * s5;
    double H1 = s - 6 * s3 + 8 * s4 - 3 * s5;
    double H2 = 0.5 * s2 - 1.5 * s3 + 1.5 * s4 - 0.5 * s5;
    double H3 = 10 * s3 - 15 * s4 + 6 * s5;
    double H4 = -4 * s3 + 7 * s4 - 3 * s5;
    double H5 = 0.5 * s3 - s4 + 0.5 * s5;
    double D0 = -30 * s2 + 60 * s3 - 30 * s4;
    double D1 = 1 - 18 * s2 + 32 * s3 - 15 * s4;
    double D2 = s - 4.5 * s2 + 6 * s3 - 2.5 * s4;
    double D3 = -D0;
    double D4 = -12 * s2 + 28 * s3 - 15 * s4;
    double D5 = 1.5 * s2 - 4 * s3 + 2.5 * s4;
    double v = H0 * y[lo] + h * H1 * dy[lo] + h * h * H2 * ddy[lo] + H3 * y[hi] + h * H4 * dy[hi] +
               h * h * H5 * ddy[hi];
    double dv = (D0 * y[lo] + D3 * y[hi]) / h + D1 * dy[lo] + D4 * dy[hi] + h * (D2 * ddy[lo] + D5 * ddy[hi]);
    return {v, dv};
  }
};

// Adaptive Runge-Kutta-Fehlberg 7(8) from t0 to t1 (either direction).
inline DenseSolution integrate_second_order(const Accel& a, double t0, double y0, double dy0, double t1,
                                            const OdeTolerances& tol = {}, const Guard& guard = {}) {
  namespace odeint = boost::numeric::odeint;
  using State = std::array<double, 2>;
  if (!(tol.rel > 0) || !(tol.abs > 0)) throw domain_error("integrate_second_order: tolerances must be positive");
  if (!std::isfinite(t0) || !std::isfinite(t1) || t0 == t1) throw domain_error("integrate_second_order: bad span");
  DenseSolution sol;
  sol.accel = a;
  sol.tol = tol;
  auto sys = [&](const State& x, State& dxdt, double t) {
    dxdt[0] = x[1];
    dxdt[1] = a(t, x[0], x[1]);
  };
  auto push = [&](double t, const State& x) {
    sol.t.push_back(t);
    sol.y.push_back(x[0]);
    sol.dy.push_back(x[1]);
    sol.ddy.push_back(a(t, x[0], x[1]));
  };
  auto stepper = odeint::make_controlled(tol.abs, tol.rel, odeint::runge_kutta_fehlberg78<State>());
  State x{y0, dy0};
  double t = t0;
  double dir = t1 > t0 ? 1.0 : -1.0;
  double span = std::fabs(t1 - t0);
  double dt = dir * std::min(span, 1e-3 * std::max(1.0, std::fabs(t0)));
  push(t, x);
  if (guard && !guard(t, x[0], x[1])) throw numerical_failure("integrate_second_order: guard fails at start");
  for (int step = 0; dir * (t1 - t) > 1e-14 * std::max(1.0, std::fabs(t1)); ++step) {
    if (step > tol.max_steps) {
      numerical_failure e("integrate_second_order: step budget exhausted");
      e.location = t;
      throw e;
    }
    double cap = tol.max_step_rel * std::max(1.0, std::fabs(t));
    if (std::fabs(dt) > cap) dt = dir * cap;
    if (dir * (t + dt - t1) > 0) dt = t1 - t;
    if (std::fabs(dt) < 1e-14 * std::max(1.0, std::fabs(t))) {
      std::ostringstream os;
      os << "integrate_second_order: step size collapse at t=" << t;
      numerical_failure e(os.str());
      e.location = t;
      throw e;
    }
    State xs = x;
    double ts = t;
    auto res = stepper.try_step(sys, x, t, dt);
    if (res == odeint::success) {
      if (!std::isfinite(x[0]) || !std::isfinite(x[1])) {
        std::ostringstream os;
        os << "integrate_second_order: solution not finite at t=" << t;
        numerical_failure e(os.str());
        e.location = ts;
        throw e;
      }
      if (guard && !guard(t, x[0], x[1])) {
        sol.stopped_early = true;
        sol.stop_location = ts;
        x = xs;
        t = ts;
        break;
      }
      ++sol.stats.accepted;
      push(t, x);
    } else {
      ++sol.stats.rejected;
    }
  }
  if (sol.t.size() < 2) throw numerical_failure("integrate_second_order: no step accepted");
  return sol;
}

}  // namespace conelab

#endif
