#ifndef CONELAB_RADIAL_HPP
#define CONELAB_RADIAL_HPP

#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "conelab/core.hpp"
#include "conelab/geometry.hpp"
#include "conelab/ode.hpp"
#include "conelab/operators.hpp"

namespace conelab {

// f'' + p f' + q f = 0, the separated form of (L + lambda)(f a) = 0
struct RadialODE {
  EndPtr end;
  int n = 3;
  double m = 0, lambda = 0, mu = 0;
  OpSign sign = OpSign::minus;

  double k() const { return n - 1 + m; }
  double p(double r) const {
    auto e = end->at(r);
    double s = sign == OpSign::minus ? -0.5 : 0.5;
    return e.dG / e.G + (n - 1) * e.dW / (2 * e.W) + s * r + m / r;
  }
  double q(double r) const {
    auto e = end->at(r);
    return (lambda - mu / e.W) / (e.G * e.G);
  }
  DriftOperator op() const { return {sign, m}; }
  EigenContext context() const { return {op(), lambda}; }
};

inline RadialODE radial_coefficients(EndPtr end, double m, double lambda, double mu, OpSign sign) {
  RadialODE o;
  o.n = end->n;
  o.end = std::move(end);
  o.m = m;
  o.lambda = lambda;
  o.mu = mu;
  o.sign = sign;
  return o;
}

// ------------------------------------------------------------ series

enum class Branch { slow, gaussian };

// f ~ exp(gamma r^2) r^alpha sum_j c_j r^{-2j}, exact-cone coefficients
struct AsymptoticSeed {
  Branch branch = Branch::slow;
  double R = 0;
  int order = 0;
  double alpha = 0, gamma = 0;
  std::vector<double> c;

  Jet eval(double r) const {
    double x = 1 / (r * r);
    double F = 0, F1 = 0, F2 = 0, xp = 1;
    for (std::size_t j = 0; j < c.size(); ++j) {
      double e = alpha - 2.0 * j;
      double t = c[j] * xp;
      F += t;
      F1 += t * e / r;
      F2 += t * e * (e - 1) / (r * r);
      xp *= x;
    }
    Jet J{F, F1, F2, alpha * std::log(r)};
    return J.times_exp(gamma * r * r, 2 * gamma * r, 2 * gamma).tidy();
  }
  // size of the first omitted term relative to the sum
  double tail_estimate(double r) const {
    if (c.size() < 2) return 0;
    return std::fabs(c.back() * std::pow(r, -2.0 * (c.size() - 1))) / std::fabs(eval_sum(r));
  }
  double eval_sum(double r) const {
    double x = 1 / (r * r), s = 0, xp = 1;
    for (double cj : c) {
      s += cj * xp;
      xp *= x;
    }
    return s;
  }
};

namespace detail {
// slow-branch coefficients of an exact-cone operator with parameter k = n-1+m
inline std::vector<double> slow_coefficients(OpSign sign, double k, double lambda, double mu, int count) {
  std::vector<double> c{1.0};
  for (int j = 1; j < count; ++j) {
    double beta = sign == OpSign::minus ? 2 * lambda - 2.0 * (j - 1) : -2 * lambda - 2.0 * (j - 1);
    double b = beta * (beta - 1 + k) - mu;
    c.push_back((sign == OpSign::minus ? -b : b) * c.back() / j);
  }
  return c;
}
}  // namespace detail

// order <= 0 picks the order automatically (tail below 1e-17 or the smallest term)
inline AsymptoticSeed asymptotic_seed(const RadialODE& ode, Branch branch, double R, int order = 0) {
  AsymptoticSeed s;
  s.branch = branch;
  s.R = R;
  double k = ode.k();
  OpSign inner = ode.sign;
  double lam = ode.lambda;
  if (branch == Branch::gaussian) {
    inner = ode.sign == OpSign::minus ? OpSign::plus : OpSign::minus;
    lam = ode.sign == OpSign::minus ? ode.lambda + 0.5 * (k + 1) : ode.lambda - 0.5 * (k + 1);
    s.gamma = ode.sign == OpSign::minus ? 0.25 : -0.25;
  }
  s.alpha = inner == OpSign::minus ? 2 * lam : -2 * lam;
  double x = 1 / (R * R);
  if (order > 0) {
    auto c = detail::slow_coefficients(inner, k, lam, ode.mu, order + 2);
    for (int j = 0; j < order; ++j) {
      double a = std::fabs(c[j]), b = std::fabs(c[j + 1]) * x;
      if (a == 0 && b == 0) continue;
      if (!(b < 0.5 * a)) {
        std::ostringstream os;
        os << "asymptotic_seed: series not decreasing at R=" << R << " (term " << j + 1 << "); use a larger R";
        throw domain_error(os.str());
      }
    }
    c.resize(order + 1);
    s.c = c;
    s.order = order;
    return s;
  }
  auto c = detail::slow_coefficients(inner, k, lam, ode.mu, 60);
  std::vector<double> kept{c[0]};
  double sum = c[0], prev = 1.0, xp = 1.0;
  bool terminated = false;
  for (std::size_t j = 1; j < c.size(); ++j) {
    xp *= x;
    double t = std::fabs(c[j] * xp);
    if (c[j] == 0) {  // terminating series: exact
      terminated = true;
      break;
    }
    if (t > prev) break;             // asymptotic series turned
    kept.push_back(c[j]);
    sum += c[j] * xp;
    prev = t;
    if (t < 1e-17 * std::fabs(sum)) break;
  }
  if (!terminated && prev > 1e-12 * std::fabs(sum)) {
    std::ostringstream os;
    os << "asymptotic_seed: smallest series term " << prev << " at R=" << R << "; use a larger R";
    throw domain_error(os.str());
  }
  s.c = kept;
  s.order = int(kept.size()) - 1;
  return s;
}

// ODE residual of the truncated series at r, relative to the size of its terms
inline double series_residual(const RadialODE& ode, const AsymptoticSeed& s, double r) {
  Jet j = s.eval(r);
  double p = ode.p(r), q = ode.q(r);
  double res = j.d2 + p * j.d1 + q * j.f;
  return std::fabs(res) / (std::fabs(j.d2) + std::fabs(p * j.d1) + std::fabs(q * j.f));
}

// ------------------------------------------------------------ profiles

// f = exp(beta r^2 + log0) g with g from the ODE; optional series tail past r_tail
class OdeProfile final : public RadialProfile {
 public:
  DenseSolution sol;
  double beta = 0;
  double log0 = 0;
  RadialODE ode;
  std::optional<AsymptoticSeed> tail;
  double r_tail = kInf;

  Jet jet(double r) const override {
    if (tail && r >= r_tail) return tail->eval(r);
    if (!sol.contains(r)) {
      std::ostringstream os;
      os << "OdeProfile: r=" << r << " outside [" << r_lo() << ", " << r_hi() << "]";
      throw domain_error(os.str());
    }
    auto h = sol.eval(r);
    Jet g{h.y, h.dy, h.ddy, log0};
    return g.times_exp(beta * r * r, 2 * beta * r, 2 * beta).tidy();
  }
  double r_lo() const override { return sol.t_lo(); }
  double r_hi() const override { return tail ? kInf : sol.t_hi(); }

  // |f'' + p f' + q f| relative to the largest term
  double ode_residual(double r) const {
    Jet j = jet(r);
    double p = ode.p(r), q = ode.q(r);
    return std::fabs(j.d2 + p * j.d1 + q * j.f) /
           std::max({std::fabs(j.d2), std::fabs(p * j.d1), std::fabs(q * j.f)});
  }
};
using OdeProfilePtr = std::shared_ptr<const OdeProfile>;

// Integrates f from r0 (state given as a jet) to r1 in the variable
// g = exp(-beta r^2) f, which keeps e^{+-r^2/4} branches O(r^k).
inline OdeProfilePtr integrate_profile(const RadialODE& ode, double r0, Jet f0, double r1, const OdeTolerances& tol = {},
                                       double beta = 0.0) {
  if (!(r0 > 0) || !(r1 > 0)) throw domain_error("integrate_profile: span must lie in (0, inf)");
  auto prof = std::make_shared<OdeProfile>();
  prof->ode = ode;
  prof->beta = beta;
  f0 = f0.tidy();
  prof->log0 = f0.log_scale - beta * r0 * r0;
  double g0 = f0.f, dg0 = f0.d1 - 2 * beta * r0 * f0.f;
  Accel acc = [ode, beta](double r, double g, double dg) {
    double p = ode.p(r), q = ode.q(r);
    double P = p + 4 * beta * r;
    double Q = q + 2 * beta + 4 * beta * beta * r * r + 2 * beta * r * p;
    return -P * dg - Q * g;
  };
  prof->sol = integrate_second_order(acc, r0, g0, dg0, r1, tol);
  return prof;
}

// Inward solve from a series seed at R; the series supplies f beyond R.
inline OdeProfilePtr seeded_profile(const RadialODE& ode, Branch branch, double R, double r_lo,
                                    const OdeTolerances& tol = {}, int order = 0) {
  auto seed = asymptotic_seed(ode, branch, R, order);
  auto p = integrate_profile(ode, R, seed.eval(R), r_lo, tol, seed.gamma);
  auto q = std::make_shared<OdeProfile>(*p);
  q->tail = seed;
  q->r_tail = R;
  return q;
}

// ------------------------------------------------------------ exponent fits

struct RateFit {
  double alpha = 0, beta = 0, constant = 0;
  double rms_residual = 0;
  double cond = 0;
  int samples = 0;
  int correction_terms = 0;
};

// log|v| ~ beta rho^2 + alpha ln rho + c + sum_{j<=K} e_j rho^{-2j}
inline RateFit decaying_mode_rate(const std::function<LogScaled(double)>& v, double rho_a, double rho_b,
                                  int correction_terms = 4, int samples = 241) {
  if (!(rho_b >= rho_a + 4)) throw domain_error("decaying_mode_rate: window must span at least 4");
  int K = correction_terms, cols = 3 + K;
  Eigen::MatrixXd A(samples, cols);
  Eigen::VectorXd b(samples);
  double mid = 0.5 * (rho_a + rho_b);
  double sgn = 0;
  for (int i = 0; i < samples; ++i) {
    double rho = rho_a + (rho_b - rho_a) * i / (samples - 1);
    LogScaled y = v(rho);
    if (y.is_zero()) throw numerical_failure("decaying_mode_rate: profile vanishes in the window");
    if (sgn == 0) sgn = y.sign();
    if (y.sign() != sgn) {
      numerical_failure e("decaying_mode_rate: sign change (oscillation) in the window");
      e.location = rho;
      throw e;
    }
    double t = rho / mid;
    A(i, 0) = t * t;
    A(i, 1) = std::log(t);
    A(i, 2) = 1;
    for (int j = 1; j <= K; ++j) A(i, 2 + j) = std::pow(t, -2.0 * j);
    b(i) = y.log_abs();
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
  Eigen::VectorXd x = qr.solve(b);
  RateFit f;
  f.beta = x(0) / (mid * mid);
  f.alpha = x(1);
  f.constant = x(2) - x(1) * std::log(mid);
  f.rms_residual = std::sqrt((A * x - b).squaredNorm() / samples);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A);
  auto sv = svd.singularValues();
  f.cond = sv(0) / sv(sv.size() - 1);
  f.samples = samples;
  f.correction_terms = K;
  return f;
}

inline std::function<LogScaled(double)> profile_sampler(ProfilePtr p) {
  return [p](double r) { return p->jet(r).value(); };
}

// ------------------------------------------------------------ solution basis

inline LogScaled wronskian(const Jet& a, const Jet& b) {
  return {a.f * b.d1 - a.d1 * b.f, a.log_scale + b.log_scale};
}

// Abel weight exp(int p) for exact-cone coefficients: r^k e^{-+r^2/4}
inline double abel_log_weight(const RadialODE& ode, double r) {
  double s = ode.sign == OpSign::minus ? -0.25 : 0.25;
  return ode.k() * std::log(r) + s * r * r;
}

// Solution of the minus-sign radial ODE (mu = 0) regular at the origin:
// Kummer M(-lambda, (k+1)/2, r^2/4). Integrated outward in the scaled variable.
inline OdeProfilePtr regular_solution(const RadialODE& ode, double r1, const OdeTolerances& tol = {}) {
  if (ode.mu != 0) throw domain_error("regular_solution: radial mode only");
  double r0 = 1e-3, k = ode.k(), lam = ode.lambda;
  Jet f0{1 - lam * r0 * r0 / (2 * (k + 1)), -lam * r0 / (k + 1), 0, 0};
  double beta = ode.sign == OpSign::minus ? 0.25 : 0.0;
  return integrate_profile(ode, r0, f0, r1, tol, beta);
}

struct BasisDecomposition {
  LogScaled A, B;  // y = A S + B G
  double max_rel_residual = 0;
};

// Coefficients from Wronskians at r_ref; residual sampled on [a, b].
inline BasisDecomposition decompose(ProfilePtr y, ProfilePtr S, ProfilePtr G, double r_ref, double a, double b,
                                    int samples = 101) {
  Jet jy = y->jet(r_ref), jS = S->jet(r_ref), jG = G->jet(r_ref);
  LogScaled W = wronskian(jS, jG);
  BasisDecomposition d;
  d.A = wronskian(jy, jG) / W;
  d.B = wronskian(jS, jy) / W;
  for (int i = 0; i < samples; ++i) {
    double r = a + (b - a) * i / (samples - 1);
    LogScaled vy = y->jet(r).value();
    LogScaled fit = d.A * S->jet(r).value() + d.B * G->jet(r).value();
    double rel = std::fabs(ratio(vy - fit, vy));
    d.max_rel_residual = std::max(d.max_rel_residual, rel);
  }
  return d;
}

}  // namespace conelab

#endif
