#ifndef CONELAB_GEOMETRY_HPP
#define CONELAB_GEOMETRY_HPP

#include <cmath>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "conelab/core.hpp"

namespace conelab {

// ---------------------------------------------------------------- link

enum class LinkKind { round_sphere, round_circle };

struct LinkMode {
  int index = 0;           // harmonic degree; 0 is the constant mode
  double mu = 0;           // eigenvalue of the link Laplacian
  double norm2 = 0;        // ||a||^2 on the link
  double grad_norm2 = 0;   // ||grad a||^2 on the link
};

inline double unit_sphere_volume(int d) {  // |S^d|
  return 2.0 * std::pow(kPi, 0.5 * (d + 1)) / std::tgamma(0.5 * (d + 1));
}

struct LinkSpec {
  int dim = 2;  // n - 1
  LinkKind kind = LinkKind::round_sphere;
  double radius = 1.0;
  std::vector<LinkMode> modes;

  double volume() const { return unit_sphere_volume(dim) * std::pow(radius, dim); }

  LinkMode constant_mode() const { return {0, 0.0, volume(), 0.0}; }

  // zonal harmonic of degree l; L^2 norms exact for the circle and 2-sphere,
  // normalised to 1 in higher dimension
  LinkMode harmonic(int l) const {
    if (l == 0) return constant_mode();
    double mu = double(l) * (l + dim - 1) / (radius * radius);
    double n2;
    if (dim == 1)
      n2 = kPi * radius;  // cos(l theta)
    else if (dim == 2)
      n2 = 4.0 * kPi * radius * radius / (2.0 * l + 1.0);  // P_l(cos phi)
    else
      n2 = 1.0;
    return {l, mu, n2, mu * n2};
  }

  const LinkMode& mode(int index) const {
    for (const auto& m : modes)
      if (m.index == index) return m;
    throw domain_error("LinkSpec: mode not in table");
  }

  static LinkSpec round(int n, double c = 1.0, std::vector<int> degrees = {0, 1, 2}) {
    if (n < 2) throw domain_error("LinkSpec: n must be >= 2");
    if (!(c > 0)) throw domain_error("LinkSpec: radius must be positive");
    LinkSpec L;
    L.dim = n - 1;
    L.kind = (n == 2) ? LinkKind::round_circle : LinkKind::round_sphere;
    L.radius = c;
    for (int l : degrees) L.modes.push_back(L.harmonic(l));
    return L;
  }
};

// ---------------------------------------------------------------- ends

// Metric d sigma^2 + W g_L with |grad r| = G, everything as functions of r.
struct EndGeometry {
  double W, dW, G, dG;
};

enum class EndKind { exact_cone, perturbed_cone, selfsimilar };
enum class WarpForm { additive, power };
enum class SelfSimilarKind { shrinker, expander };

class EndModel {
 public:
  virtual ~EndModel() = default;
  virtual EndGeometry at(double r) const = 0;
  virtual EndKind kind() const = 0;
  virtual std::string describe() const = 0;
  // h(r)/r^2 -> 1 scale of the warped link metric; used by link_metric
  virtual double warp(double r) const { return at(r).W; }
};
using ModelPtr = std::shared_ptr<const EndModel>;

class ExactCone final : public EndModel {
 public:
  EndGeometry at(double r) const override { return {r * r, 2 * r, 1.0, 0.0}; }
  EndKind kind() const override { return EndKind::exact_cone; }
  std::string describe() const override { return "exact_cone"; }
};

// g = dr^2 + h(r) g_L, h = r^2 + delta or r^2 (1 + delta r^{-s})
class PerturbedCone final : public EndModel {
 public:
  PerturbedCone(double delta, WarpForm form = WarpForm::additive, double s = 2.0)
      : delta_(delta), form_(form), s_(s) {
    if (form == WarpForm::power && s < 2.0) throw domain_error("PerturbedCone: power warp needs s >= 2");
  }
  EndGeometry at(double r) const override {
    if (form_ == WarpForm::additive) return {r * r + delta_, 2 * r, 1.0, 0.0};
    double t = delta_ * std::pow(r, 2 - s_);
    return {r * r + t, 2 * r + (2 - s_) * t / r, 1.0, 0.0};
  }
  EndKind kind() const override { return EndKind::perturbed_cone; }
  std::string describe() const override {
    std::ostringstream os;
    os << "perturbed_cone(delta=" << delta_ << (form_ == WarpForm::power ? ", power s=" : ", additive");
    if (form_ == WarpForm::power) os << s_;
    os << ")";
    return os.str();
  }
  double delta() const { return delta_; }
  WarpForm form() const { return form_; }
  double s() const { return s_; }

 private:
  double delta_;
  WarpForm form_;
  double s_;
};

// Rotationally symmetric graph {(x, u(|x|))} in R^{n+1}, radial function r = |X|.
class SelfSimilarEnd final : public EndModel {
 public:
  SelfSimilarEnd(GraphPtr u, SelfSimilarKind kind, double slope)
      : u_(std::move(u)), kind_(kind), slope_(slope), c2_(1.0 / (1.0 + slope * slope)) {}

  double r_of(double rho) const {
    double u = u_->at(rho).u;
    return std::sqrt(rho * rho + u * u);
  }
  double r_min() const { return r_of(u_->rho_lo()); }
  double r_max() const { return r_of(u_->rho_hi()); }

  double rho_of(double r) const {
    double lo = u_->rho_lo(), hi = u_->rho_hi();
    if (r < r_of(lo) * (1 - 1e-12) || r > r_of(hi) * (1 + 1e-12))
      throw domain_error("SelfSimilarEnd: r outside the profile domain");
    double rho = std::clamp(r * std::sqrt(c2_), lo, hi);
    for (int it = 0; it < 60; ++it) {
      GraphJet j = u_->at(rho);
      double rr = std::sqrt(rho * rho + j.u * j.u);
      double g = rr - r;
      if (g > 0) hi = rho; else lo = rho;
      double rp = (rho + j.u * j.du) / rr;
      double nxt = rho - g / rp;
      if (!(nxt > lo && nxt < hi)) nxt = 0.5 * (lo + hi);
      if (std::fabs(nxt - rho) < 1e-15 * rho) return nxt;
      rho = nxt;
    }
    return rho;
  }

  EndGeometry at(double r) const override {
    double rho = rho_of(r);
    GraphJet j = u_->at(rho);
    if (!std::isfinite(j.ddu)) throw numerical_failure("SelfSimilarEnd: profile lacks a second derivative");
    double S = std::sqrt(1 + j.du * j.du);
    double rr = std::sqrt(rho * rho + j.u * j.u);
    double num = rho + j.u * j.du;
    double r_rho = num / rr;
    double G = num / (rr * S);
    double num_rho = 1 + j.du * j.du + j.u * j.ddu;
    double S_rho = j.du * j.ddu / S;
    double G_rho = num_rho / (rr * S) - num * (r_rho * S + rr * S_rho) / (rr * rr * S * S);
    double W = rho * rho / c2_;
    double dW = (2 * rho / c2_) / r_rho;
    return {W, dW, G, G_rho / r_rho};
  }
  EndKind kind() const override { return EndKind::selfsimilar; }
  std::string describe() const override {
    std::ostringstream os;
    os << (kind_ == SelfSimilarKind::expander ? "expander" : "shrinker") << "_end(slope=" << slope_ << ")";
    return os.str();
  }
  const GraphPtr& profile() const { return u_; }
  SelfSimilarKind ss_kind() const { return kind_; }
  double slope() const { return slope_; }
  double link_radius() const { return std::sqrt(c2_); }

  // <X, nu> and |A|^2 of the graph at horizontal radius rho
  double support(double rho) const {
    GraphJet j = u_->at(rho);
    return (j.u - rho * j.du) / std::sqrt(1 + j.du * j.du);
  }
  double mean_curvature(double rho, int n) const {
    // H = u''/S^3 + (n-1) u'/(rho S), upward normal
    GraphJet j = u_->at(rho);
    double S = std::sqrt(1 + j.du * j.du);
    return j.ddu / (S * S * S) + (n - 1) * j.du / (rho * S);
  }
  double second_fundamental_norm2(double rho, int n) const {
    GraphJet j = u_->at(rho);
    double S = std::sqrt(1 + j.du * j.du);
    double k1 = j.ddu / (S * S * S);
    double k2 = j.du / (rho * S);
    return k1 * k1 + (n - 1) * k2 * k2;
  }

 private:
  GraphPtr u_;
  SelfSimilarKind kind_;
  double slope_;
  double c2_;  // squared link radius
};

struct HessianGap {
  double radial, tangential, norm;
};

struct SphereData {
  double area, H, grad_r, gap_dr_N, gap_dr_X, gap_N_X;
};

struct CertificationReport {
  bool pass = false;
  double sup_grad = 0;        // sup r^4 ||grad r| - 1|
  double sup_hess = 0;        // sup r^2 |Hess r^2 - 2g|
  double refined_sup_grad = 0;
  double refined_sup_hess = 0;
  double Lambda = 0;
  bool refinement_ok = true;
  bool caps_ok = true;
  double violating_radius = 0;
  std::string violating_quantity;
  int samples = 0;
  std::string diagnostic;
};

inline constexpr double kCertSafety = 1.05;

class WeaklyConicalEnd {
 public:
  int n = 3;
  double R_inner = 1;
  double R_max = 8;
  LinkSpec link;
  ModelPtr model;
  CertificationReport cert;

  double Lambda() const { return cert.Lambda; }
  EndKind kind() const { return model->kind(); }
  EndGeometry at(double r) const { return model->at(r); }

  double area_factor(double r) const {  // W^{(n-1)/2}
    return std::pow(at(r).W, 0.5 * (n - 1));
  }
  double log_area_factor(double r) const { return 0.5 * (n - 1) * std::log(at(r).W); }
  double laplacian_r(double r) const {
    auto e = at(r);
    return e.G * e.dG + (n - 1) * e.G * e.G * e.dW / (2 * e.W);
  }
  HessianGap hessian_gap(double r) const {
    auto e = at(r);
    double rad = 2 * e.G * e.G + 2 * r * e.G * e.dG - 2;
    double tan = r * e.G * e.G * e.dW / e.W - 2;
    return {rad, tan, std::sqrt(rad * rad + (n - 1) * tan * tan)};
  }
};
using EndPtr = std::shared_ptr<const WeaklyConicalEnd>;

inline std::vector<double> geometric_grid(double a, double b, int N) {
  if (N < 2 || !(b > a) || !(a > 0)) throw domain_error("geometric_grid: bad arguments");
  std::vector<double> g(N);
  double q = std::log(b / a) / (N - 1);
  for (int i = 0; i < N; ++i) g[i] = a * std::exp(q * i);
  g.back() = b;
  return g;
}

// geometric grid from a to b inclusive with step ratio at most `ratio`
inline std::vector<double> ratio_grid(double a, double b, double ratio) {
  if (!(ratio > 1) || !(b > a) || !(a > 0)) throw domain_error("ratio_grid: bad arguments");
  int steps = std::max(1, int(std::ceil(std::log(b / a) / std::log(ratio) - 1e-9)));
  return geometric_grid(a, b, steps + 1);
}

inline CertificationReport certify_weakly_conical(const WeaklyConicalEnd& end, const std::vector<double>& grid) {
  if (grid.size() < 100) throw domain_error("certify_weakly_conical: need at least 100 grid samples");
  CertificationReport rep;
  rep.samples = int(grid.size());
  auto sample = [&](double r, double& sg, double& sh, double& rg, double& rh) {
    auto e = end.at(r);
    double g = std::pow(r, 4) * std::fabs(e.G - 1);
    double h = r * r * end.hessian_gap(r).norm;
    if (!std::isfinite(g) || !std::isfinite(h))
      throw numerical_failure("certify_weakly_conical: non-finite geometry sample");
    if (g > sg) { sg = g; rg = r; }
    if (h > sh) { sh = h; rh = r; }
  };
  double rg = 0, rh = 0, rrg = 0, rrh = 0;
  for (double r : grid) sample(r, rep.sup_grad, rep.sup_hess, rg, rh);
  // 2x refinement: add the geometric midpoints
  rep.refined_sup_grad = rep.sup_grad;
  rep.refined_sup_hess = rep.sup_hess;
  rrg = rg;
  rrh = rh;
  for (std::size_t i = 0; i + 1 < grid.size(); ++i)
    sample(std::sqrt(grid[i] * grid[i + 1]), rep.refined_sup_grad, rep.refined_sup_hess, rrg, rrh);
  double coarse = std::max(rep.sup_grad, rep.sup_hess);
  double fine = std::max(rep.refined_sup_grad, rep.refined_sup_hess);
  rep.refinement_ok = fine <= kCertSafety * coarse + 1e-300;
  rep.Lambda = kCertSafety * fine;
  double R = grid.front();
  std::ostringstream diag;
  if (rep.Lambda / std::pow(R, 4) > 0.5) {
    rep.caps_ok = false;
    rep.violating_radius = R;
    rep.violating_quantity = "Lambda r^-4 > 1/2 (|grad r| condition)";
  }
  if (rep.Lambda / (R * R) > 0.5) {
    rep.caps_ok = false;
    rep.violating_radius = R;
    rep.violating_quantity = "Lambda r^-2 > 1/2 (Hessian condition)";
  }
  rep.pass = rep.caps_ok && rep.refinement_ok;
  if (!rep.caps_ok)
    diag << "cap violated at r=" << rep.violating_radius << ": " << rep.violating_quantity << ", Lambda=" << rep.Lambda;
  else if (!rep.refinement_ok)
    diag << "refined sup " << fine << " exceeds coarse sup " << coarse << " by more than the safety factor";
  else
    diag << "sup r^4|G-1|=" << rep.refined_sup_grad << " at r=" << rrg << ", sup r^2|gap|=" << rep.refined_sup_hess
         << " at r=" << rrh;
  rep.diagnostic = diag.str();
  return rep;
}

struct EndDescription {
  EndKind kind = EndKind::exact_cone;
  int n = 3;
  double R_inner = 1.0;
  double R_max = 0.0;  // 0 -> 8 R_inner
  double link_radius = 1.0;
  std::vector<int> degrees{0, 1, 2};
  double delta = 0.0;
  WarpForm warp = WarpForm::additive;
  double s = 2.0;
  // self-similar ends
  GraphPtr graph;
  SelfSimilarKind ss_kind = SelfSimilarKind::expander;
  double slope = 0.0;
  int grid_samples = 200;
};

// Builds and certifies; throws certification_error on failure.
inline WeaklyConicalEnd build_end_unchecked(const EndDescription& d) {
  WeaklyConicalEnd e;
  e.n = d.n;
  e.R_inner = d.R_inner;
  e.R_max = d.R_max > 0 ? d.R_max : 8 * d.R_inner;
  switch (d.kind) {
    case EndKind::exact_cone:
      e.model = std::make_shared<ExactCone>();
      e.link = LinkSpec::round(d.n, d.link_radius, d.degrees);
      break;
    case EndKind::perturbed_cone:
      e.model = std::make_shared<PerturbedCone>(d.delta, d.warp, d.s);
      e.link = LinkSpec::round(d.n, d.link_radius, d.degrees);
      break;
    case EndKind::selfsimilar: {
      if (!d.graph) throw domain_error("build_end: self-similar end needs a profile");
      auto m = std::make_shared<SelfSimilarEnd>(d.graph, d.ss_kind, d.slope);
      e.R_inner = std::max(d.R_inner, m->r_min());
      e.R_max = d.R_max > 0 ? std::min(d.R_max, m->r_max()) : m->r_max();
      e.model = m;
      // the asymptotic link is the sphere of radius 1/sqrt(1+s^2)
      e.link = LinkSpec::round(d.n, m->link_radius(), d.degrees);
      break;
    }
  }
  if (!(e.R_max > e.R_inner)) throw domain_error("build_end: empty radial range");
  if (d.kind == EndKind::exact_cone) {
    e.cert.pass = true;
    e.cert.samples = d.grid_samples;
    e.cert.diagnostic = "exact cone";
  } else {
    e.cert = certify_weakly_conical(e, geometric_grid(e.R_inner, e.R_max, d.grid_samples));
  }
  return e;
}

inline EndPtr build_end(const EndDescription& d) {
  auto e = build_end_unchecked(d);
  if (!e.cert.pass)
    throw certification_error("build_end: " + e.cert.diagnostic, e.cert.violating_radius, e.cert.violating_quantity);
  return std::make_shared<const WeaklyConicalEnd>(std::move(e));
}

inline EndPtr exact_cone(int n, double R_inner = 1.0, double R_max = 0.0, double c = 1.0) {
  EndDescription d;
  d.n = n;
  d.R_inner = R_inner;
  d.R_max = R_max;
  d.link_radius = c;
  return build_end(d);
}

inline EndPtr perturbed_cone(int n, double delta, double R_inner = 1.0, double R_max = 0.0) {
  EndDescription d;
  d.kind = EndKind::perturbed_cone;
  d.n = n;
  d.delta = delta;
  d.R_inner = R_inner;
  d.R_max = R_max;
  return build_end(d);
}

inline SphereData sphere_data(const WeaklyConicalEnd& end, double rho) {
  if (rho < end.R_inner * (1 - 1e-12)) throw domain_error("sphere_data: rho below R_inner");
  auto e = end.at(rho);
  SphereData s;
  s.area = end.link.volume() * std::pow(e.W, 0.5 * (end.n - 1));
  s.H = (end.n - 1) * e.G * e.dW / (2 * e.W);
  s.grad_r = e.G;
  s.gap_dr_N = std::fabs(e.G - 1);
  s.gap_dr_X = std::fabs(e.G - 1 / e.G);
  s.gap_N_X = std::fabs(1 - 1 / e.G);
  return s;
}

}  // namespace conelab

#endif
