#ifndef CONELAB_WEIGHTS_HPP
#define CONELAB_WEIGHTS_HPP

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <functional>
#include <queue>
#include <string>
#include <vector>

#include "conelab/core.hpp"

namespace conelab {

enum class WeightKind { gaussian, inverse_gaussian };

// Phi_m(t) = t^m e^{-t^2/4} or Psi_m(t) = t^m e^{+t^2/4}
struct WeightSpec {
  WeightKind kind = WeightKind::gaussian;
  double m = 0.0;

  double log_eval(double t) const {
    double q = t * t / 4.0;
    double lt = (m == 0.0) ? 0.0 : m * std::log(t);
    return kind == WeightKind::gaussian ? lt - q : lt + q;
  }
  // d/dt and d^2/dt^2 of log w
  double dlog(double t) const { return m / t + (kind == WeightKind::gaussian ? -t / 2 : t / 2); }
  double d2log(double t) const { return -m / (t * t) + (kind == WeightKind::gaussian ? -0.5 : 0.5); }
};

inline WeightSpec gaussian(double m) { return {WeightKind::gaussian, m}; }
inline WeightSpec inverse_gaussian(double m) { return {WeightKind::inverse_gaussian, m}; }

struct WeightValue {
  double value;
  double log_value;
};

inline WeightValue eval_weight(const WeightSpec& spec, double t) {
  if (!(t > 0.0)) throw domain_error("eval_weight: t must be positive");
  double lv = spec.log_eval(t);
  // exp under/overflows to 0 / +inf without trapping
  return {std::exp(lv), lv};
}

struct QuadratureSpec {
  double rel_tol = 1e-10;
  double abs_tol = 1e-14;
  int max_subdivisions = 4000;
  double tail_cutoff_ratio = 1e-16;

  void validate() const {
    if (!(rel_tol > 0) || !(abs_tol > 0)) throw domain_error("QuadratureSpec: tolerances must be positive");
    if (max_subdivisions < 1) throw domain_error("QuadratureSpec: max_subdivisions < 1");
    if (!(tail_cutoff_ratio > 0) || tail_cutoff_ratio >= 1) throw domain_error("QuadratureSpec: bad tail_cutoff_ratio");
  }
};

struct QuadResult {
  double value = 0;
  double error = 0;
  int evaluations = 0;
  int subdivisions = 0;
};

namespace detail {

struct GKPiece {
  double a, b, value, error;
  bool operator<(const GKPiece& o) const { return error < o.error; }
};

template <class F>
GKPiece gk21(F& f, double a, double b, int& evals) {
  using GK = boost::math::quadrature::gauss_kronrod<double, 21>;
  using G = boost::math::quadrature::gauss<double, 10>;
  static const auto& x = GK::abscissa();
  static const auto& wk = GK::weights();
  static const auto& wg = G::weights();
  double c = 0.5 * (a + b), h = 0.5 * (b - a);
  double f0 = f(c);
  double k = wk[0] * f0, g = 0.0;
  for (std::size_t i = 1; i < x.size(); ++i) {
    double s = f(c - h * x[i]) + f(c + h * x[i]);
    k += wk[i] * s;
    if (i % 2 == 1) g += wg[(i - 1) / 2] * s;
  }
  evals += 21;
  return {a, b, k * h, std::fabs((k - g) * h)};
}

}  // namespace detail

// Globally adaptive Gauss-Kronrod (G10/K21) over a partition given by breaks.
template <class F>
QuadResult adaptive_gk(F&& f, const std::vector<double>& breaks, const QuadratureSpec& q) {
  q.validate();
  QuadResult out;
  std::priority_queue<detail::GKPiece> heap;
  double total = 0, err = 0;
  for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
    if (breaks[i + 1] <= breaks[i]) continue;
    auto p = detail::gk21(f, breaks[i], breaks[i + 1], out.evaluations);
    total += p.value;
    err += p.error;
    heap.push(p);
  }
  std::vector<detail::GKPiece> frozen;  // too narrow to split further
  while (err > std::max(q.abs_tol, q.rel_tol * std::fabs(total))) {
    if (heap.empty()) break;
    if (out.subdivisions >= q.max_subdivisions) {
      throw numerical_failure("quadrature did not converge within max_subdivisions", total, err);
    }
    auto p = heap.top();
    heap.pop();
    double mid = 0.5 * (p.a + p.b);
    if (p.b - p.a < 1e-13 * std::max(1.0, std::fabs(mid))) {
      frozen.push_back(p);
      continue;
    }
    auto l = detail::gk21(f, p.a, mid, out.evaluations);
    auto r = detail::gk21(f, mid, p.b, out.evaluations);
    total += l.value + r.value - p.value;
    err += l.error + r.error - p.error;
    heap.push(l);
    heap.push(r);
    ++out.subdivisions;
  }
  if (!std::isfinite(total)) throw numerical_failure("quadrature produced a non-finite value", total, err);
  if (err > std::max(q.abs_tol, q.rel_tol * std::fabs(total))) {
    throw numerical_failure("quadrature stalled at roundoff level", total, err);
  }
  out.value = total;
  out.error = std::max(err, 0.0);
  return out;
}

template <class F>
QuadResult adaptive_gk(F&& f, double a, double b, const QuadratureSpec& q) {
  return adaptive_gk(std::forward<F>(f), std::vector<double>{a, b}, q);
}

struct RadialIntegral {
  LogScaled value;
  double rel_error = 0;   // quadrature error / |value|
  double cutoff = 0;      // truncation radius used for infinite ranges
  double tail_bound = 0;  // relative bound on the discarded tail
  int evaluations = 0;
};

// int_a^b g(t) dt for an integrand handed over in log-scaled form. The
// integrand is normalised by the largest log-magnitude seen on a scan so
// exp(+-t^2/4) never has to be formed.
// ref_log, when finite, is the log-size of a comparable quantity; the value is
// then only resolved to rel_tol relative to it (integrands that cancel to noise).
inline RadialIntegral integrate_logscaled(const std::function<LogScaled(double)>& gl, double a, double b,
                                          const QuadratureSpec& q = {}, double ref_log = -kInf) {
  q.validate();
  if (!(a >= 0.0)) throw domain_error("integrate_radial: lower limit must be >= 0");
  if (!(b > a)) {
    if (b == a) return {};
    throw domain_error("integrate_radial: b < a");
  }
  bool infinite = std::isinf(b);

  auto lg = [&](double t) {
    if (t <= 0.0) return -kInf;
    return gl(t).log_abs();
  };

  std::vector<double> scan;
  std::vector<double> lscan;
  double top = -kInf;
  double cut_log = std::log(q.tail_cutoff_ratio);
  if (!infinite) {
    const int N = 64;
    for (int i = 0; i <= N; ++i) {
      double t = a + (b - a) * (i == 0 ? 1e-9 : (i == N ? 1.0 - 1e-12 : double(i) / N));
      scan.push_back(t);
      lscan.push_back(lg(t));
      top = std::max(top, lscan.back());
    }
  } else {
    // step ~ local decay length of the Gaussian factor
    double t = a;
    int below = 0;
    double prev = -kInf;
    int rising = 0;
    for (int it = 0; it < 200000; ++it) {
      double h = std::min(0.5, 0.5 / std::max(1.0, 0.5 * t));
      double ts = (t == 0.0) ? 1e-9 : t;
      double l = lg(ts);
      scan.push_back(ts);
      lscan.push_back(l);
      top = std::max(top, l);
      if (std::isfinite(top) && l < top + cut_log) {
        if (++below >= 3) break;
      } else {
        below = 0;
      }
      // log-magnitude climbing steadily far out: not integrable
      rising = (std::isfinite(l) && l > prev + 1e-3) ? rising + 1 : 0;
      if (rising > 400 && t > a + 40.0) throw domain_error("integrate_radial: integrand grows at infinity");
      prev = l;
      if (!std::isfinite(top) && t > a + 60.0) break;  // identically zero so far
      if (t > a + 1e4) throw numerical_failure("integrate_radial: integrand does not decay", top, kInf);
      t += h;
    }
  }
  if (infinite && std::isfinite(top)) {
    // the scan stops once the integrand has dropped; make sure it stays down
    double T = scan.back();
    for (double f : {1.25, 1.5, 2.0, 3.0, 4.0}) {
      double l = lg(a + f * (T - a) + 1.0);
      if (std::isfinite(l) && l > std::max(top, ref_log) + 1.0)
        throw domain_error("integrate_radial: integrand grows at infinity");
    }
  }
  RadialIntegral res;
  if (!std::isfinite(top)) {
    if (top == kInf || std::isnan(top)) throw numerical_failure("integrate_radial: integrand not finite");
    res.cutoff = infinite ? scan.back() : b;
    return res;  // integrand vanishes on the scan
  }
  double hi = infinite ? scan.back() : b;
  res.cutoff = hi;
  // initial partition: at most 48 pieces taken from the scan
  std::vector<double> breaks{a};
  std::size_t stride = std::max<std::size_t>(1, scan.size() / 48);
  for (std::size_t i = stride; i + 1 < scan.size(); i += stride)
    if (scan[i] > breaks.back() && scan[i] < hi) breaks.push_back(scan[i]);
  breaks.push_back(hi);

  auto g = [&](double t) {
    if (t <= 0.0) return 0.0;
    LogScaled v = gl(t);
    if (v.is_zero()) return 0.0;
    return v.mant * std::exp(v.log_scale - top);
  };
  QuadratureSpec qq = q;
  if (std::isfinite(ref_log)) qq.abs_tol = std::max(q.abs_tol, q.rel_tol * std::exp(std::min(ref_log - top, 700.0)));
  QuadResult qr = adaptive_gk(g, breaks, qq);
  res.value = LogScaled(qr.value, top);
  res.evaluations = qr.evaluations;
  res.rel_error = qr.value != 0.0 ? qr.error / std::fabs(qr.value) : qr.error;
  if (infinite && qr.value != 0.0) {
    // remainder estimate from int_T^inf Phi_k <= 4 T^{-1} Phi_k(T)
    double lt = lg(hi);
    res.tail_bound = std::isfinite(lt) ? 4.0 / hi * std::exp(lt - top) / std::fabs(qr.value) : 0.0;
  }
  return res;
}

// int_a^b f(t) w(t) dt
inline RadialIntegral integrate_radial(const std::function<double(double)>& f, const WeightSpec& w,
                                       double a, double b, const QuadratureSpec& q = {}) {
  if (std::isinf(b) && w.kind == WeightKind::inverse_gaussian)
    throw domain_error("integrate_radial: inverse Gaussian weight on an infinite range diverges");
  return integrate_logscaled(
      [&](double t) {
        double v = f(t);
        return LogScaled(v, w.log_eval(t));
      },
      a, b, q);
}

inline double integrate_radial_value(const std::function<double(double)>& f, const WeightSpec& w,
                                     double a, double b, const QuadratureSpec& q = {}) {
  return integrate_radial(f, w, a, b, q).value.value();
}

// Unweighted integral over [a, inf) for algebraically decaying integrands,
// via t = a/s on (0, 1].
inline QuadResult integrate_algebraic_tail(const std::function<double(double)>& f, double a,
                                           const QuadratureSpec& q = {}) {
  if (!(a > 0.0)) throw domain_error("integrate_algebraic_tail: a must be positive");
  auto g = [&](double s) {
    if (s <= 0.0) return 0.0;
    return f(a / s) * a / (s * s);
  };
  std::vector<double> br{0.0, 1.0 / 64, 1.0 / 16, 0.25, 0.5, 1.0};
  return adaptive_gk(g, br, q);
}

// Same substitution for a log-scaled integrand, normalised by its size near
// a. The substitution stops at r_cap: profiles that carry e^{-r^2/4} e^{+r^2/4}
// lose their log-scale to cancellation far out. Beyond r_cap the integrand is
// continued as the power law fitted on [r_cap/2, r_cap].
inline RadialIntegral integrate_algebraic_tail_logscaled(const std::function<LogScaled(double)>& gl, double a,
                                                         const QuadratureSpec& q = {}) {
  if (!(a > 0.0)) throw domain_error("integrate_algebraic_tail: a must be positive");
  double r_cap = std::min(1e3 * a, 4e3);
  if (r_cap <= 2 * a) r_cap = 4 * a;
  double top = -kInf;
  for (double s : {1.0, 0.5, 0.25, 0.1}) top = std::max(top, gl(a / s).log_abs());
  RadialIntegral res;
  res.cutoff = r_cap;
  if (!std::isfinite(top)) {
    if (top == kInf || std::isnan(top)) throw numerical_failure("integrate_algebraic_tail: integrand not finite");
    return res;
  }
  auto g = [&](double s) {
    LogScaled v = gl(a / s);
    if (v.is_zero()) return 0.0;
    return v.mant * std::exp(v.log_scale - top) * a / (s * s);
  };
  double s_min = a / r_cap;
  std::vector<double> br;
  for (int i = 0; i <= 8; ++i) br.push_back(s_min * std::pow(1.0 / s_min, i / 8.0));
  br.back() = 1.0;
  QuadResult qr = adaptive_gk(g, br, q);
  LogScaled g1 = gl(r_cap), g2 = gl(r_cap / 2);
  double rem = 0;
  if (!g1.is_zero()) {
    double p = (g2.log_abs() - g1.log_abs()) / std::log(2.0);
    if (!(p > 1.05) || g1.sign() != g2.sign())
      throw numerical_failure("integrate_algebraic_tail: integrand does not decay faster than 1/r", qr.value, kInf);
    rem = g1.sign() * std::exp(g1.log_abs() - top) * r_cap / (p - 1);
  }
  double total = qr.value + rem;
  res.value = LogScaled(total, top);
  res.evaluations = qr.evaluations + 2;
  res.rel_error = total != 0.0 ? qr.error / std::fabs(total) : qr.error;
  res.tail_bound = total != 0.0 ? std::fabs(rem / total) : 0.0;
  return res;
}

struct PartsResidual {
  double absolute;
  double relative;
};

// int_rho^{rho+1} Phi_m against 2Phi_{m-1}(rho) - 2Phi_{m-1}(rho+1) + 2(m-1) int Phi_{m-2}
inline PartsResidual check_parts_identity(double m, double rho, const QuadratureSpec& q = {}) {
  if (rho < 1.0) throw domain_error("check_parts_identity: rho must be >= 1");
  auto one = [](double) { return 1.0; };
  LogScaled lhs = integrate_radial(one, gaussian(m), rho, rho + 1, q).value;
  LogScaled t1 = LogScaled::from_log(gaussian(m - 1).log_eval(rho)) * 2.0;
  LogScaled t2 = LogScaled::from_log(gaussian(m - 1).log_eval(rho + 1)) * 2.0;
  LogScaled rhs = t1 - t2;
  if (m != 1.0) rhs = rhs + integrate_radial(one, gaussian(m - 2), rho, rho + 1, q).value * (2.0 * (m - 1));
  LogScaled d = lhs - rhs;
  double rel = std::fabs(ratio(d, lhs));
  return {std::fabs(d.value()), rel};
}

// Measured constant C in int_rho^{rho+1} Phi_m = 2/rho Phi_m(rho) + C Phi_m(rho) rho^{-2}
inline double parts_o_constant(double m, double rho, const QuadratureSpec& q = {}) {
  auto one = [](double) { return 1.0; };
  LogScaled I = integrate_radial(one, gaussian(m), rho, rho + 1, q).value;
  LogScaled ph = LogScaled::from_log(gaussian(m).log_eval(rho));
  return (ratio(I, ph) - 2.0 / rho) * rho * rho;
}

// int_rho^inf Phi_m / (2 rho^{-1} Phi_m(rho))
inline double tail_ratio(double m, double rho, const QuadratureSpec& q = {}) {
  auto one = [](double) { return 1.0; };
  LogScaled I = integrate_radial(one, gaussian(m), rho, kInf, q).value;
  LogScaled den = LogScaled::from_log(gaussian(m).log_eval(rho) + std::log(2.0 / rho));
  return ratio(I, den);
}

}  // namespace conelab

#endif
