#ifndef CONELAB_SELFSIMILAR_HPP
#define CONELAB_SELFSIMILAR_HPP

#include <cmath>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "conelab/core.hpp"
#include "conelab/geometry.hpp"
#include "conelab/ode.hpp"
#include "conelab/operators.hpp"
#include "conelab/radial.hpp"

namespace conelab {

// Rotationally symmetric graphs u(rho) over R^n \ B:
//   u''/(1+u'^2) + (n-1)u'/rho + sigma (rho u' - u)/2 = 0,
// sigma = +1 for expanders (H = <X,nu>/2), -1 for shrinkers.
inline double ss_sigma(SelfSimilarKind k) { return k == SelfSimilarKind::expander ? 1.0 : -1.0; }

// E(u, u') with u'' = (1 + u'^2) E; linear and homogeneous in (u, u')
inline double ss_E(SelfSimilarKind k, int n, double rho, double u, double du) {
  return -(n - 1) * du / rho - ss_sigma(k) * (rho * du - u) / 2;
}

inline double ss_accel(SelfSimilarKind k, int n, double rho, double u, double du) {
  return (1 + du * du) * ss_E(k, n, rho, u, du);
}

// |H -+ <X,nu>/2| from curvature formulas that do not reuse the ODE form
inline double ss_curvature_defect(SelfSimilarKind k, int n, double rho, const GraphJet& j) {
  double S = std::sqrt(1 + j.du * j.du);
  double H = j.ddu / (S * S * S) + (n - 1) * j.du / (rho * S);
  double support = (j.u - rho * j.du) / S;
  return std::fabs(H - ss_sigma(k) * support / 2);
}

// Slow expansion u = rho A(t), t = rho^-2, A = s + a_1 t + ...
struct GraphSeries {
  SelfSimilarKind kind;
  int n;
  std::vector<double> a;

  GraphJet eval(double rho) const {
    double t = 1 / (rho * rho);
    double u = 0, du = 0, ddu = 0, tp = 1;
    for (std::size_t j = 0; j < a.size(); ++j) {
      double e = 1.0 - 2.0 * j;  // rho^{1-2j}
      double v = a[j] * tp * rho;
      u += v;
      du += v * e / rho;
      ddu += v * e * (e - 1) / (rho * rho);
      tp *= t;
    }
    return {u, du, ddu};
  }
};

namespace detail {
inline std::vector<double> series_mul(const std::vector<double>& x, const std::vector<double>& y, std::size_t N) {
  std::vector<double> z(N, 0.0);
  for (std::size_t i = 0; i < N && i < x.size(); ++i)
    for (std::size_t j = 0; i + j < N && j < y.size(); ++j) z[i + j] += x[i] * y[j];
  return z;
}
inline std::vector<double> series_inv(const std::vector<double>& x, std::size_t N) {
  std::vector<double> z(N, 0.0);
  z[0] = 1 / x[0];
  for (std::size_t k = 1; k < N; ++k) {
    double s = 0;
    for (std::size_t j = 1; j <= k && j < x.size(); ++j) s += x[j] * z[k - j];
    z[k] = -s / x[0];
  }
  return z;
}
}  // namespace detail

// order-by-order solution of (n-1)P -+ A_t - 2 t P_t/(1+P^2) = 0, P = A - 2 t A_t
inline GraphSeries graph_series(SelfSimilarKind kind, int n, double slope, int order = 8) {
  GraphSeries g{kind, n, {slope}};
  for (int j = 1; j <= order; ++j) {
    std::size_t N = j;  // need coefficients up to t^{j-1}
    std::vector<double> P(j), tPt(j);
    for (int i = 0; i < j; ++i) {
      P[i] = (1 - 2.0 * i) * g.a[i];
      tPt[i] = i * (1 - 2.0 * i) * g.a[i];
    }
    auto P2 = detail::series_mul(P, P, N);
    P2[0] += 1;
    auto frac = detail::series_mul(tPt, detail::series_inv(P2, N), N);
    double rest = (n - 1) * (3 - 2.0 * j) * g.a[j - 1] - 2 * frac[j - 1];
    // expander: -A_t, shrinker: +A_t
    g.a.push_back(kind == SelfSimilarKind::expander ? rest / j : -rest / j);
  }
  return g;
}

class GraphSolution final : public GraphProfile {
 public:
  DenseSolution sol;
  SelfSimilarKind kind = SelfSimilarKind::expander;
  int n = 2;
  std::optional<GraphSeries> tail;
  double rho_tail = kInf;

  GraphJet at(double rho) const override {
    if (tail && rho >= rho_tail) return tail->eval(rho);
    auto h = sol.eval(rho);
    return {h.y, h.dy, h.ddy};
  }
  double rho_lo() const override { return sol.t_lo(); }
  double rho_hi() const override { return tail ? 1e4 : sol.t_hi(); }
  // (u/rho + u')/2 converges to the cone slope at rate rho^-2 faster than u/rho
  double measured_slope(double rho) const {
    auto j = at(rho);
    return 0.5 * (j.u / rho + j.du);
  }
  // slope s whose slow series matches u at rho (secant; the series is affine-ish in s)
  double asymptotic_slope(double rho) const {
    double target = at(rho).u;
    double s0 = measured_slope(rho), s1 = s0 * (1 + 1e-3) + 1e-6;
    auto F = [&](double s) { return graph_series(kind, n, s).eval(rho).u - target; };
    double f0 = F(s0), f1 = F(s1);
    for (int it = 0; it < 30 && f1 != f0; ++it) {
      double s2 = s1 - f1 * (s1 - s0) / (f1 - f0);
      s0 = s1;
      f0 = f1;
      s1 = s2;
      f1 = F(s1);
      if (std::fabs(s1 - s0) < 1e-15 * std::max(1.0, std::fabs(s1))) break;
    }
    return s1;
  }
  double residual(double rho) const {
    auto j = at(rho);
    return ss_curvature_defect(kind, n, rho, j);
  }
};
using GraphSolutionPtr = std::shared_ptr<const GraphSolution>;

class PlaneGraph final : public GraphProfile {
 public:
  PlaneGraph(double lo, double hi) : lo_(lo), hi_(hi) {}
  GraphJet at(double) const override { return {0, 0, 0}; }
  double rho_lo() const override { return lo_; }
  double rho_hi() const override { return hi_; }

 private:
  double lo_, hi_;
};

struct GraphSolveOptions {
  OdeTolerances tol;
  double grad_limit = 1e6;
};

inline GraphSolutionPtr solve_selfsimilar_inner(SelfSimilarKind kind, int n, double rho0, double u0, double du0,
                                                double rho_max, const GraphSolveOptions& o = {}) {
  if (n < 2) throw domain_error("solve_selfsimilar_profile: n must be >= 2");
  auto g = std::make_shared<GraphSolution>();
  g->kind = kind;
  g->n = n;
  Accel a = [kind, n](double r, double u, double du) { return ss_accel(kind, n, r, u, du); };
  double lim = o.grad_limit;
  Guard guard = [lim](double, double, double du) { return std::fabs(du) < lim; };
  g->sol = integrate_second_order(a, rho0, u0, du0, rho_max, o.tol, guard);
  if (g->sol.stopped_early) {
    std::ostringstream os;
    os << "solve_selfsimilar_profile: gradient blow-up (non-graphical); last good radius " << g->sol.stop_location;
    numerical_failure e(os.str());
    e.location = g->sol.stop_location;
    throw e;
  }
  return g;
}

// Series seed at R and inward integration (stable for shrinkers).
inline GraphSolutionPtr solve_selfsimilar_from_slope(SelfSimilarKind kind, int n, double slope, double R,
                                                     double rho_lo, const GraphSolveOptions& o = {}) {
  auto series = graph_series(kind, n, slope);
  auto s = series.eval(R);
  auto g = std::make_shared<GraphSolution>(*solve_selfsimilar_inner(kind, n, R, s.u, s.du, rho_lo, o));
  g->tail = series;
  g->rho_tail = R;
  return g;
}

// Expanders: shooting on u0 at rho0 (u0' = u0/rho0) with bisection on the
// measured slope at rho_max. Inward integration would amplify the
// e^{-rho^2/4} mode and is not used.
inline GraphSolutionPtr solve_expander_with_slope(int n, double slope, double rho0, double rho_max,
                                                  const GraphSolveOptions& o = {}, double slope_tol = 1e-12) {
  auto shoot = [&](double u0) {
    auto g = solve_selfsimilar_inner(SelfSimilarKind::expander, n, rho0, u0, u0 / rho0, rho_max, o);
    return std::make_pair(g->asymptotic_slope(rho_max) - slope, g);
  };
  double lo = slope * rho0, hi = lo;
  double step = std::max(1.0, std::fabs(lo));
  auto flo = shoot(lo).first, fhi = flo;
  for (int it = 0; it < 60 && flo * fhi > 0; ++it) {
    lo -= step;
    hi += step;
    step *= 1.6;
    flo = shoot(lo).first;
    fhi = shoot(hi).first;
  }
  if (flo * fhi > 0) throw numerical_failure("solve_selfsimilar_profile: shooting bracket not found");
  GraphSolutionPtr best;
  for (int it = 0; it < 200; ++it) {
    double mid = 0.5 * (lo + hi);
    auto [fm, g] = shoot(mid);
    best = g;
    if (std::fabs(fm) < slope_tol || hi - lo < 1e-15 * std::max(1.0, std::fabs(mid))) break;
    if (fm * flo > 0) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  return best;
}

// ------------------------------------------------------------ expander pairs

// w = u_2 - u_1 integrated directly: with p = u_1', q = w',
//   w'' = (1+p^2) E(w, q) + q (2p + q) E(u_1 + w, p + q),
// in the scaled variable w = exp(beta rho^2 + log0) g.
class DifferenceGraph final : public GraphProfile {
 public:
  GraphPtr base;
  DenseSolution sol;
  double beta = 0, log0 = 0;
  bool zero = false;
  double lo = 0, hi = 0;

  Jet jet(double rho) const {
    if (zero) return {};
    auto h = sol.eval(rho);
    return Jet{h.y, h.dy, h.ddy, log0}.times_exp(beta * rho * rho, 2 * beta * rho, 2 * beta).tidy();
  }
  GraphJet at(double rho) const override {
    Jet j = jet(rho);
    double s = std::exp(j.log_scale);
    return {j.f * s, j.d1 * s, j.d2 * s};
  }
  double rho_lo() const override { return zero ? lo : sol.t_lo(); }
  double rho_hi() const override { return zero ? hi : sol.t_hi(); }
};
using DifferencePtr = std::shared_ptr<const DifferenceGraph>;

class SumGraph final : public GraphProfile {
 public:
  SumGraph(GraphPtr a, GraphPtr b) : a_(std::move(a)), b_(std::move(b)) {}
  GraphJet at(double rho) const override {
    auto x = a_->at(rho), y = b_->at(rho);
    return {x.u + y.u, x.du + y.du, x.ddu + y.ddu};
  }
  double rho_lo() const override { return std::max(a_->rho_lo(), b_->rho_lo()); }
  double rho_hi() const override { return std::min(a_->rho_hi(), b_->rho_hi()); }

 private:
  GraphPtr a_, b_;
};

struct ExpanderPair {
  int n = 2;
  double slope = 0, A1 = 0, R_seed = 0;
  GraphPtr base, second;
  DifferencePtr diff;
};

// base: an expander graph with asymptotic slope `slope` covering [rho_lo, R_seed].
// The difference is seeded at R_seed with amplitude A1 times the decaying
// mode rho^{-n-1} e^{-(1+s^2) rho^2/4} (exact plus-operator series when s = 0).
inline ExpanderPair construct_expander_pair(int n, GraphPtr base, double slope, double A1, double R_seed,
                                            double rho_lo, const OdeTolerances& tol = {}) {
  ExpanderPair P;
  P.n = n;
  P.slope = slope;
  P.A1 = A1;
  P.R_seed = R_seed;
  P.base = base;
  auto d = std::make_shared<DifferenceGraph>();
  d->base = base;
  d->lo = rho_lo;
  d->hi = R_seed;
  if (A1 == 0) {
    d->zero = true;
  } else {
    double s2 = 1 + slope * slope;
    d->beta = -s2 / 4;
    Jet seed;
    if (slope == 0) {
      auto e = exact_cone(n, 1.0, 2 * R_seed);
      auto ode = radial_coefficients(e, 0, -0.5, 0, OpSign::plus);
      seed = asymptotic_seed(ode, Branch::gaussian, R_seed).eval(R_seed);
    } else {
      double R = R_seed, a = -(n + 1.0);
      seed = Jet{1, a / R, a * (a - 1) / (R * R), a * std::log(R)}.times_exp(-s2 * R * R / 4, -s2 * R / 2, -s2 / 2);
    }
    seed.log_scale += std::log(std::fabs(A1));
    if (A1 < 0) {
      seed.f = -seed.f;
      seed.d1 = -seed.d1;
      seed.d2 = -seed.d2;
    }
    seed = seed.tidy();
    double beta = d->beta;
    d->log0 = seed.log_scale - beta * R_seed * R_seed;
    double g0 = seed.f, dg0 = seed.d1 - 2 * beta * R_seed * seed.f;
    double log0 = d->log0;
    Accel acc = [n, base, beta, log0](double rho, double g, double dg) {
      auto b = base->at(rho);
      double sc = std::exp(beta * rho * rho + log0);  // w = sc g
      double qs = dg + 2 * beta * rho * g;            // w' / sc
      double w = sc * g, q = sc * qs;
      double p = b.du;
      // w''/sc
      double lin = (1 + p * p) * ss_E(SelfSimilarKind::expander, n, rho, g, qs);
      double nl = qs * (2 * p + q) * ss_E(SelfSimilarKind::expander, n, rho, b.u + w, p + q);
      double wpp = lin + nl;
      return wpp - 4 * beta * rho * dg - (2 * beta + 4 * beta * beta * rho * rho) * g;
    };
    d->sol = integrate_second_order(acc, R_seed, g0, dg0, rho_lo, tol);
  }
  P.diff = d;
  P.second = std::make_shared<SumGraph>(base, d);
  return P;
}

// ------------------------------------------------------------ graph difference

// Normal height of Sigma_2 over Sigma_1 as a function of the extrinsic radius
// of the base point. t solves u_2(rho - t u_1'/S) = u_1(rho) + t/S, written in
// terms of w = u_2 - u_1 so tiny heights carry full relative precision.
class NormalHeightProfile final : public RadialProfile {
 public:
  NormalHeightProfile(GraphPtr u1, GraphPtr u2, DifferencePtr w = nullptr)
      : u1_(std::move(u1)), u2_(std::move(u2)), w_(std::move(w)) {
    lo_rho_ = std::max(u1_->rho_lo(), u2_->rho_lo());
    hi_rho_ = std::min(u1_->rho_hi(), u2_->rho_hi());
    end_ = std::make_shared<SelfSimilarEnd>(u1_, SelfSimilarKind::expander, 0.0);
    // margin for the difference stencils and the normal shift
    lo_rho_ *= 1.01;
    hi_rho_ /= 1.01;
  }

  double r_lo() const override { return end_->r_of(lo_rho_); }
  double r_hi() const override { return end_->r_of(hi_rho_); }

  // w in log-scaled form
  Jet w_jet(double rho) const {
    if (w_) return w_->jet(rho);
    auto a = u1_->at(rho), b = u2_->at(rho);
    return Jet{b.u - a.u, b.du - a.du, b.ddu - a.ddu, 0}.tidy();
  }

  // height t(rho) and the correction factor c = t S / w
  double correction(double rho) const {
    Jet wj = w_jet(rho);
    if (wj.f == 0) return 1.0;
    double w = wj.f * std::exp(wj.log_scale);
    if (w == 0) return 1.0;  // below the representable range: linear regime
    auto a = u1_->at(rho);
    double S = std::sqrt(1 + a.du * a.du), al = a.du / S, be = 1 / S;
    // Phi(t) = [u2(rho - t al) - u2(rho)] + w - t be
    double t = w / S;
    for (int it = 0; it < 50; ++it) {
      double d = -t * al, D, dD;
      if (std::fabs(d) < 1e-4 * rho) {
        auto b = u2_->at(rho);
        double b3 = third(rho);
        D = b.du * d + 0.5 * b.ddu * d * d + b3 * d * d * d / 6;
        dD = (b.du + b.ddu * d + 0.5 * b3 * d * d) * (-al);
      } else {
        double x = rho + d;
        if (x < u2_->rho_lo() || x > u2_->rho_hi()) throw numerical_failure("graph_difference: normal leaves the graph");
        auto bx = u2_->at(x), b = u2_->at(rho);
        D = bx.u - b.u;
        dD = -bx.du * al;
      }
      double F = D + w - t * be, dF = dD - be;
      if (dF == 0) throw numerical_failure("graph_difference: graphs meet non-transversally");
      double nt = t - F / dF;
      if (std::fabs(nt - t) <= 1e-15 * std::fabs(nt)) {
        t = nt;
        break;
      }
      t = nt;
    }
    return t * S / w;
  }

  Jet jet(double r) const override {
    double rho = end_->rho_of(r);
    // t = (w / S) c, derivatives in rho, then chain rule to r
    Jet wj = w_jet(rho);
    auto a = u1_->at(rho);
    double S = std::sqrt(1 + a.du * a.du);
    double u3 = third1(rho);
    double S1 = a.du * a.ddu / S;
    double S2 = (a.ddu * a.ddu + a.du * u3) / S - a.du * a.ddu * S1 / (S * S);
    // v = w / S
    double v = wj.f / S;
    double v1 = wj.d1 / S - wj.f * S1 / (S * S);
    double v2 = wj.d2 / S - 2 * wj.d1 * S1 / (S * S) - wj.f * (S2 / (S * S) - 2 * S1 * S1 / (S * S * S));
    double c = correction(rho), c1 = 0, c2 = 0;
    if (std::fabs(c - 1) > 1e-13) {
      double h = 1e-3 * rho;
      double cp = correction(rho + h), cm = correction(rho - h);
      c1 = (cp - cm) / (2 * h);
      c2 = (cp - 2 * c + cm) / (h * h);
    }
    double t0 = v * c, t1 = v1 * c + v * c1, t2 = v2 * c + 2 * v1 * c1 + v * c2;
    // rho(r): r_rho = (rho + u u')/r
    double rr = std::sqrt(rho * rho + a.u * a.u);
    double r_rho = (rho + a.u * a.du) / rr;
    double r_rhorho = (1 + a.du * a.du + a.u * a.ddu) / rr - r_rho * r_rho / rr;
    double rho_r = 1 / r_rho;
    double rho_rr = -r_rhorho / (r_rho * r_rho * r_rho);
    return Jet{t0, t1 * rho_r, t2 * rho_r * rho_r + t1 * rho_rr, wj.log_scale}.tidy();
  }

 private:
  double third(double rho) const {
    double h = 1e-4 * rho;
    if (rho - h < u2_->rho_lo() || rho + h > u2_->rho_hi()) return 0;
    return (u2_->at(rho + h).ddu - u2_->at(rho - h).ddu) / (2 * h);
  }
  double third1(double rho) const {
    double h = 1e-4 * rho;
    if (rho - h < u1_->rho_lo() || rho + h > u1_->rho_hi()) return 0;
    return (u1_->at(rho + h).ddu - u1_->at(rho - h).ddu) / (2 * h);
  }
  GraphPtr u1_, u2_;
  DifferencePtr w_;
  std::shared_ptr<SelfSimilarEnd> end_;
  double lo_rho_, hi_rho_;
};

struct GraphDifferenceCertificate {
  double kappa = 0;           // sup r|u| + r^2|grad u|
  double kappa_growth = 0;    // log-slope of r|u| + r^2|grad u| over the outer half
  bool kappa_pass = false;
  AlmostEigenCertificate eigen;
  bool pass = false;
  std::string diagnostic;
};

struct GraphDifference {
  SeparatedFunction u;
  GraphDifferenceCertificate cert;
};

// end1 must be the end over profile1 (exact cone for the plane).
inline GraphDifference graph_difference(GraphPtr profile1, GraphPtr profile2, EndPtr end1, SelfSimilarKind kind,
                                        double R, double R_max, DifferencePtr w = nullptr, int samples = 200) {
  auto prof = std::make_shared<NormalHeightProfile>(profile1, profile2, std::move(w));
  GraphDifference g;
  double lam = kind == SelfSimilarKind::expander ? -0.5 : 0.5;
  OpSign sign = kind == SelfSimilarKind::expander ? OpSign::plus : OpSign::minus;
  g.u = separated(end1, end1->link.constant_mode(), prof, {{sign, 0}, lam});
  auto& c = g.cert;
  double zero_probe = std::fabs(prof->jet(0.5 * (R + R_max)).f);
  if (zero_probe == 0.0) {
    c.kappa = 0;
    c.kappa_pass = true;
    c.eigen.pass = true;
    c.pass = true;
    c.diagnostic = "identical profiles: u = 0";
    return g;
  }
  auto grid = geometric_grid(R, R_max, samples);
  std::vector<double> kv;
  for (double r : grid) {
    Jet j = prof->jet(r);
    double s = std::exp(j.log_scale);
    double val = r * std::fabs(j.f) * s + r * r * std::sqrt(g.u.grad2_mant(j, r)) * s;
    kv.push_back(val);
    c.kappa = std::max(c.kappa, val);
  }
  std::size_t h = grid.size() / 2;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int cnt = 0;
  for (std::size_t i = h; i < grid.size(); ++i) {
    if (!(kv[i] > 0)) continue;
    double x = std::log(grid[i]), y = std::log(kv[i]);
    sx += x; sy += y; sxx += x * x; sxy += x * y;
    ++cnt;
  }
  if (cnt > 2) c.kappa_growth = (cnt * sxy - sx * sy) / (cnt * sxx - sx * sx);
  c.kappa_pass = std::isfinite(c.kappa) && c.kappa_growth <= 0.25;
  ResidualConvention conv =
      kind == SelfSimilarKind::expander ? ResidualConvention::expander : ResidualConvention::inverse_square;
  c.eigen = certify_almost_eigen(g.u, {sign, 0}, lam, R, R_max, conv, samples);
  c.pass = c.kappa_pass && c.eigen.pass;
  std::ostringstream os;
  os << "kappa=" << c.kappa << " (growth " << c.kappa_growth << "), " << c.eigen.diagnostic;
  c.diagnostic = os.str();
  return g;
}

}  // namespace conelab

#endif
