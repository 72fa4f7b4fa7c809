#ifndef CONELAB_ASYMPTOTICS_HPP
#define CONELAB_ASYMPTOTICS_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/numeric/odeint.hpp>

#include "conelab/core.hpp"
#include "conelab/frequency.hpp"
#include "conelab/geometry.hpp"
#include "conelab/operators.hpp"
#include "conelab/weights.hpp"

namespace conelab {

// the hypothesis of an asymptotic statement does not hold for the input
struct precondition_error : domain_error {
  using domain_error::domain_error;
};

// ------------------------------------------------------------ flow of X

struct FlowResult {
  double r0 = 0, tau = 1, r = 0;
  bool integrated = false;     // true when the flow ODE was actually solved
  double consistency = 0;      // |r - tau r0| / (tau r0)
};

inline constexpr double kFlowConsistency = 1e-8;

// X.r = r, so level sets of r flow to level sets: S_{r0} -> S_{tau r0}.
// On self-similar ends the flow is integrated in the graph coordinate rho.
inline FlowResult flow_X(const EndPtr& end, double r0, double tau) {
  if (!(tau >= 1)) throw domain_error("flow_X: tau must be >= 1");
  if (!(r0 >= end->R_inner * (1 - 1e-12))) throw domain_error("flow_X: start below the end's inner radius");
  FlowResult out;
  out.r0 = r0;
  out.tau = tau;
  auto ss = std::dynamic_pointer_cast<const SelfSimilarEnd>(end->model);
  if (!ss) {
    out.r = tau * r0;
    return out;
  }
  if (tau * r0 > ss->r_max() * (1 + 1e-12)) throw domain_error("flow_X: flow leaves the profile domain");
  out.integrated = true;
  if (tau == 1) {
    out.r = r0;
    return out;
  }
  namespace odeint = boost::numeric::odeint;
  using State = std::array<double, 1>;
  const GraphPtr& g = ss->profile();
  auto sys = [&](const State& x, State& dx, double) {
    double rho = x[0];
    GraphJet j = g->at(rho);
    double rr = std::sqrt(rho * rho + j.u * j.u);
    dx[0] = rr * rr / (rho + j.u * j.du);  // r / (dr/drho)
  };
  State x{ss->rho_of(r0)};
  double T = std::log(tau);
  auto stepper = odeint::make_controlled(1e-14, 1e-13, odeint::runge_kutta_fehlberg78<State>());
  odeint::integrate_adaptive(stepper, sys, x, 0.0, T, T / 50);
  out.r = ss->r_of(x[0]);
  out.consistency = std::fabs(out.r - tau * r0) / (tau * r0);
  if (!(out.consistency < kFlowConsistency)) {
    std::ostringstream os;
    os << "flow_X: integrated flow drifts from tau r0 by " << out.consistency;
    throw numerical_failure(os.str());
  }
  return out;
}

// ------------------------------------------------------------ link metrics

struct LinkMetricRow {
  double tau = 0, scale = 1, bound = 1;  // bound = exp(lambda/(2 tau^2))
};

struct LinkMetricReport {
  double R_L = 0;
  double Lambda = 0;
  double lambda_cert = 0;  // Lambda / R_L^2
  double lambda_fit = 0;   // slope of ln(scale) against 1/(2 tau^2)
  double intercept = 0;
  double r_squared = 1;
  std::vector<LinkMetricRow> rows;
  bool bound_holds = true;
  bool shape_ok = true;
  bool pass = true;
  std::string diagnostic;
};

// g_L(tau) relative to the limit link metric (a scalar for warped models):
// W(tau R_L) / (tau R_L)^2, with W/r^2 -> 1 on every supported end.
inline double link_scale(const EndPtr& end, double tau) {
  if (!(tau >= 1)) throw domain_error("link_metric: tau must be >= 1");
  double r = tau * (end->R_inner + 1);
  return end->model->warp(r) / (r * r);
}

inline constexpr double kShapeR2 = 0.99;

inline LinkMetricReport link_metric(const EndPtr& end, const std::vector<double>& taus) {
  if (taus.size() < 3) throw domain_error("link_metric: need at least three tau values");
  LinkMetricReport rep;
  rep.R_L = end->R_inner + 1;
  rep.Lambda = end->Lambda();
  rep.lambda_cert = rep.Lambda / (rep.R_L * rep.R_L);
  std::vector<double> xs, ys;
  for (double t : taus) {
    LinkMetricRow row;
    row.tau = t;
    row.scale = link_scale(end, t);
    double x = 1 / (2 * t * t);
    row.bound = std::exp(rep.lambda_cert * x);
    double y = std::log(row.scale);
    // e^{-l x} g_L <= g_L(tau) <= e^{l x} g_L, with a roundoff allowance
    if (std::fabs(y) > rep.lambda_cert * x + 1e-14) rep.bound_holds = false;
    xs.push_back(x);
    ys.push_back(y);
    rep.rows.push_back(row);
  }
  double N = double(xs.size());
  double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / N, my = std::accumulate(ys.begin(), ys.end(), 0.0) / N;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  rep.lambda_fit = sxx > 0 ? sxy / sxx : 0;
  rep.intercept = my - rep.lambda_fit * mx;
  // constant scale (exact cone): the shape is trivially exact
  rep.r_squared = syy > 1e-300 ? sxy * sxy / (sxx * syy) : 1.0;
  rep.shape_ok = rep.r_squared >= kShapeR2;
  rep.pass = rep.bound_holds && rep.shape_ok;
  std::ostringstream os;
  os << "R_L=" << rep.R_L << " Lambda=" << rep.Lambda << " lambda_cert=" << rep.lambda_cert
     << " lambda_fit=" << rep.lambda_fit << " R^2=" << rep.r_squared;
  if (!rep.bound_holds) os << "; distortion exceeds exp(lambda/(2 tau^2))";
  rep.diagnostic = os.str();
  return rep;
}

inline void write_link_metric_csv(std::ostream& os, const LinkMetricReport& r) {
  os << "tau_or_R,scale_or_L2gap,bound\n";
  for (auto& row : r.rows) os << format_double(row.tau) << "," << format_double(row.scale) << "," << format_double(row.bound) << "\n";
}

// ------------------------------------------------------------ homogeneity

// int_{E_R} r^{-n}|grad G|^2 + r^{2-n}(d_r G)^2 with G = r^{-d} u
inline double homogeneity_hypothesis(const SeparatedFunction& u, double R, double d, const QuadratureSpec& q = {}) {
  int n = u.end->n;
  double mu = u.mode.mu;
  BulkKernel k = [=](const Jet& j, double r, const EndGeometry& e) {
    double gp = j.d1 - d * j.f / r;  // r^d (r^{-d} f)'
    return e.G * e.G * gp * gp + mu * j.f * j.f / e.W + r * r * gp * gp;
  };
  auto lw = [=](double r) { return (-2 * d - n) * std::log(r); };
  return bulk_integral(u, R, kInf, k, lw, q, TailKind::algebraic).value.value();
}

struct HypothesisCheck {
  std::vector<double> R, scaled;  // R^2 * hypothesis integral
  double alpha_tilde2 = 0;        // sup of the scaled values
  double growth = 0;              // log-slope of the scaled values at the far end
  bool holds = false;
  std::string diagnostic;
};

inline constexpr double kGrowthTol = 0.05;

// sup_R R^2 I(R) must stay bounded; a growing R^2 I(R) or a divergent I
// means the degree is too small.
inline HypothesisCheck check_homogeneity_hypothesis(const SeparatedFunction& u, double d, const std::vector<double>& Rs,
                                                    const QuadratureSpec& q_in = {}) {
  QuadratureSpec q = q_in;
  q.rel_tol = std::max(q.rel_tol, 1e-8);
  HypothesisCheck h;
  std::ostringstream os;
  try {
    for (double R : Rs) {
      h.R.push_back(R);
      h.scaled.push_back(R * R * homogeneity_hypothesis(u, R, d, q));
    }
  } catch (const numerical_failure& e) {
    os << "hypothesis integral diverges at degree " << d << " (" << e.what() << ")";
    h.diagnostic = os.str();
    h.alpha_tilde2 = kInf;
    return h;
  }
  h.alpha_tilde2 = *std::max_element(h.scaled.begin(), h.scaled.end());
  std::size_t N = h.R.size();
  if (N >= 2 && h.scaled[N - 1] > 0 && h.scaled[N - 2] > 0)
    h.growth = std::log(h.scaled[N - 1] / h.scaled[N - 2]) / std::log(h.R[N - 1] / h.R[N - 2]);
  h.holds = std::isfinite(h.alpha_tilde2) && h.growth < kGrowthTol;
  os << "alpha_tilde^2=" << h.alpha_tilde2 << " growth=" << h.growth;
  if (!h.holds) os << "; R^2 I(R) unbounded at degree " << d;
  h.diagnostic = os.str();
  return h;
}

// ------------------------------------------------------------ trace

struct TraceAtInfinity {
  double degree = 0;
  int mode_index = 0;
  double coefficient = 0;  // trace = coefficient * a
  bool zero = false;
  double alpha2 = 0;            // coefficient^2 ||a||^2 lim (W/r^2)^{(n-1)/2}
  double measured_degree = 0;   // d + log-slope of the pullback norms
  double rate = 0;              // p in gap ~ R^{-p}
  bool exact = false;           // pullbacks equal the limit to roundoff
  std::vector<double> R, pullback_norm, gap;  // on A_{2,1}
  HypothesisCheck hypothesis;
  std::string diagnostic;
};

inline constexpr double kDegreeTol = 0.05;

namespace detail {

// log of int_1^2 (g(s))^2 s^{n-1} ds for a log-magnitude sampler lg(s)
inline double annulus_log_l2(const std::function<double(double)>& lg, int n) {
  using GL = boost::math::quadrature::gauss<double, 20>;
  const auto& x = GL::abscissa();
  const auto& w = GL::weights();
  std::vector<double> logs;
  auto add = [&](double s, double wt) { logs.push_back(std::log(wt * 0.5) + 2 * lg(s) + (n - 1) * std::log(s)); };
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] == 0) {
      add(1.5, w[i]);
      continue;
    }
    add(1.5 + 0.5 * x[i], w[i]);
    add(1.5 - 0.5 * x[i], w[i]);
  }
  double top = *std::max_element(logs.begin(), logs.end());
  if (!std::isfinite(top)) return -kInf;
  double s = 0;
  for (double l : logs) s += std::exp(l - top);
  return top + std::log(s);
}

}  // namespace detail

inline std::vector<double> default_trace_grid(const SeparatedFunction& u) {
  double far = far_radius(u);
  return ratio_grid(10, std::max(20.0, far / 2), 2.0);
}

// Pullbacks Pi_R^*(r^{-d} u)(s) = f(Rs)/(Rs)^d on the annulus s in [1, 2].
inline TraceAtInfinity trace_at_infinity(const SeparatedFunction& u, double d, const std::vector<double>& grid = {}) {
  TraceAtInfinity t;
  t.degree = d;
  t.mode_index = u.mode.index;
  std::vector<double> Rs = grid.empty() ? default_trace_grid(u) : grid;
  if (Rs.size() < 3) throw domain_error("trace_at_infinity: need at least three radii");
  t.hypothesis = check_homogeneity_hypothesis(u, d, Rs);
  if (!t.hypothesis.holds)
    throw precondition_error("trace_at_infinity: homogeneity hypothesis fails: " + t.hypothesis.diagnostic);
  int n = u.end->n;
  auto lg = [&](double r) { return u.profile->jet(r).value().log_abs() - d * std::log(r); };
  for (double R : Rs) {
    t.R.push_back(R);
    t.pullback_norm.push_back(0.5 * detail::annulus_log_l2([&](double s) { return lg(R * s); }, n));
  }
  std::size_t N = Rs.size();
  double slope = (t.pullback_norm[N - 1] - t.pullback_norm[N - 2]) / std::log(Rs[N - 1] / Rs[N - 2]);
  if (!std::isfinite(t.pullback_norm[N - 1])) slope = -kInf;
  t.measured_degree = d + slope;
  std::ostringstream os;
  if (slope > kDegreeTol) {
    os << "trace_at_infinity: pullbacks grow like R^" << slope << " at degree " << d;
    throw numerical_failure(os.str());
  }
  double far = far_radius(u);
  if (slope < -kDegreeTol) {
    t.zero = true;
    t.coefficient = 0;
    t.alpha2 = 0;
    for (double v : t.pullback_norm) t.gap.push_back(std::exp(v));
    t.rate = -slope;
    os << "degree " << d << ": pullbacks decay (measured degree " << t.measured_degree << "), trace 0";
    t.diagnostic = os.str();
    return t;
  }
  auto g = [&](double r) { return u.profile->jet(r).value().value() * std::pow(r, -d); };
  t.coefficient = rho2_limit(g, far);
  double c = t.coefficient;
  auto gap_log = [&](double R) {
    return 0.5 * detail::annulus_log_l2(
                     [&](double s) {
                       double r = R * s;
                       return std::log(std::fabs(g(r) - c) + 1e-300);
                     },
                     n);
  };
  for (double R : Rs) t.gap.push_back(std::exp(gap_log(R)) / std::fabs(c));
  t.exact = *std::max_element(t.gap.begin(), t.gap.end()) < 1e-12;
  t.rate = t.exact ? 0.0 : -std::log(t.gap[N - 1] / t.gap[N - 2]) / std::log(Rs[N - 1] / Rs[N - 2]);
  double wlim = rho2_limit([&](double r) { return u.end->model->warp(r) / (r * r); }, far);
  t.alpha2 = c * c * u.mode.norm2 * std::pow(wlim, 0.5 * (n - 1));
  os << "degree " << d << ": trace " << c << " * a_" << u.mode.index << ", alpha^2=" << t.alpha2
     << (t.exact ? ", homogeneous to roundoff" : ", gap rate R^-" + format_double(t.rate));
  t.diagnostic = os.str();
  return t;
}

// ------------------------------------------------------------ Prop. bound

struct HomogeneityRow {
  double R = 0;
  double lhs = 0;           // int_{E_R} r^{-n} |F - G|^2
  double alpha_tilde2 = 0;  // sup_{R' >= R} R'^2 I(R')
  double bound = 0;         // 16 alpha_tilde^2 R^{-2}
  double constant = 0;      // R^2 lhs / alpha_tilde^2
};

struct HomogeneityBoundReport {
  double degree = 0;
  TraceAtInfinity trace;
  std::vector<HomogeneityRow> rows;
  double measured_constant = 0;
  bool trivial = false;  // lhs == 0 everywhere
  bool holds = false;
  std::string diagnostic;
};

inline constexpr double kHomogeneityConstant = 16.0;

inline HomogeneityBoundReport verify_homogeneity_bound(const SeparatedFunction& u, const std::vector<double>& Rs,
                                                       double d = 0, const QuadratureSpec& q_in = {}) {
  if (Rs.empty()) throw domain_error("verify_homogeneity_bound: empty R grid");
  QuadratureSpec q = q_in;
  q.rel_tol = std::max(q.rel_tol, 1e-8);
  HomogeneityBoundReport rep;
  rep.degree = d;
  rep.trace = trace_at_infinity(u, d);
  double c = rep.trace.coefficient;
  int n = u.end->n;
  // sup over radii beyond each R: the R grid plus doublings out to the far radius
  double far = far_radius(u);
  std::vector<double> probe(Rs.begin(), Rs.end());
  for (double r = Rs.back() * 2; r <= far / 4; r *= 2) probe.push_back(r);
  std::sort(probe.begin(), probe.end());
  std::vector<double> scaled;
  for (double r : probe) scaled.push_back(r * r * homogeneity_hypothesis(u, r, d, q));
  BulkKernel k = [=](const Jet& j, double r, const EndGeometry&) {
    double A = c == 0 ? 0.0 : c * std::exp(d * std::log(r) - j.log_scale);
    double diff = j.f - A;
    return diff * diff;
  };
  auto lw = [=](double r) { return (-2 * d - n) * std::log(r); };
  rep.holds = true;
  rep.trivial = true;
  for (double R : Rs) {
    HomogeneityRow row;
    row.R = R;
    for (std::size_t i = 0; i < probe.size(); ++i)
      if (probe[i] >= R) row.alpha_tilde2 = std::max(row.alpha_tilde2, scaled[i]);
    row.lhs = bulk_integral(u, R, kInf, k, lw, q, TailKind::algebraic).value.value();
    row.bound = kHomogeneityConstant * row.alpha_tilde2 / (R * R);
    row.constant = row.alpha_tilde2 > 0 ? R * R * row.lhs / row.alpha_tilde2 : (row.lhs > 0 ? kInf : 0.0);
    if (row.lhs != 0) rep.trivial = false;
    if (!(row.lhs <= row.bound)) rep.holds = false;
    rep.measured_constant = std::max(rep.measured_constant, row.constant);
    rep.rows.push_back(row);
  }
  std::ostringstream os;
  os << "F = " << c << " * a_" << u.mode.index << "; measured constant " << rep.measured_constant << " vs "
     << kHomogeneityConstant;
  if (rep.trivial) os << "; G homogeneous, LHS = 0";
  if (!rep.holds) os << "; bound violated";
  rep.diagnostic = os.str();
  return rep;
}

inline void write_homogeneity_csv(std::ostream& os, const HomogeneityBoundReport& r) {
  os << "tau_or_R,scale_or_L2gap,bound\n";
  for (auto& row : r.rows) os << format_double(row.R) << "," << format_double(row.lhs) << "," << format_double(row.bound) << "\n";
}

}  // namespace conelab

#endif
