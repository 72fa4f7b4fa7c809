#ifndef CONELAB_OPERATORS_HPP
#define CONELAB_OPERATORS_HPP

#include <cmath>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "conelab/core.hpp"
#include "conelab/geometry.hpp"

namespace conelab {

enum class OpSign { minus, plus };

// L_m = Delta -+ (r/2) d_r + (m/r) d_r
struct DriftOperator {
  OpSign sign = OpSign::minus;
  double m = 0;
  double drift_sign() const { return sign == OpSign::minus ? -1.0 : 1.0; }
  std::string describe() const {
    std::ostringstream os;
    os << (sign == OpSign::minus ? "L_" : "L+_") << m;
    return os.str();
  }
};

struct EigenContext {
  DriftOperator op;
  double lambda = 0;
};

// denominators of the almost-eigenfunction residual; never inferred
enum class ResidualConvention {
  inverse_square,     // r^-2 (|u| + |grad u|)
  inverse_linear,     // r^-1 (|u| + |grad u|)
  twisted,            // r^-1 (|u| + r^-1 |grad u|)
  expander,           // r^-2 (|u| + r^-1 |grad u|)
};

inline const char* convention_name(ResidualConvention c) {
  switch (c) {
    case ResidualConvention::inverse_square: return "r^-2(|u|+|grad u|)";
    case ResidualConvention::inverse_linear: return "r^-1(|u|+|grad u|)";
    case ResidualConvention::twisted: return "r^-1(|u|+r^-1|grad u|)";
    case ResidualConvention::expander: return "r^-2(|u|+r^-1|grad u|)";
  }
  return "?";
}

// ------------------------------------------------------------ profiles

// c r^mu
class PowerProfile final : public RadialProfile {
 public:
  explicit PowerProfile(double mu, double c = 1.0) : mu_(mu), c_(c) {}
  Jet jet(double r) const override {
    if (!(r > 0)) throw domain_error("PowerProfile: r must be positive");
    double s = c_ >= 0 ? 1.0 : -1.0;
    return {s, s * mu_ / r, s * mu_ * (mu_ - 1) / (r * r), (c_ == 0 ? 0.0 : std::log(std::fabs(c_))) + mu_ * std::log(r)};
  }
  double r_lo() const override { return 0.0; }

 private:
  double mu_, c_;
};

// sum_i c_i r^{p_i} e^{-sigma_i r}; used for Poincare test functions
class ExpPolyProfile final : public RadialProfile {
 public:
  struct Term {
    double c, sigma, p;
  };
  explicit ExpPolyProfile(std::vector<Term> terms) : terms_(std::move(terms)) {}
  Jet jet(double r) const override {
    if (!(r > 0)) throw domain_error("ExpPolyProfile: r must be positive");
    double top = -kInf;
    for (auto& t : terms_)
      if (t.c != 0) top = std::max(top, std::log(std::fabs(t.c)) - t.sigma * r + t.p * std::log(r));
    if (!std::isfinite(top)) return {};
    Jet j;
    j.log_scale = top;
    for (auto& t : terms_) {
      if (t.c == 0) continue;
      double e = t.c * std::exp(-t.sigma * r + t.p * std::log(r) - top);
      double g = -t.sigma + t.p / r;
      j.f += e;
      j.d1 += e * g;
      j.d2 += e * (g * g - t.p / (r * r));
    }
    return j;
  }
  const std::vector<Term>& terms() const { return terms_; }

 private:
  std::vector<Term> terms_;
};

class FunctionProfile final : public RadialProfile {
 public:
  FunctionProfile(std::function<Jet(double)> fn, double lo = 0.0, double hi = kInf)
      : fn_(std::move(fn)), lo_(lo), hi_(hi) {}
  Jet jet(double r) const override {
    if (!contains(r)) throw domain_error("FunctionProfile: r outside domain");
    return fn_(r);
  }
  double r_lo() const override { return lo_; }
  double r_hi() const override { return hi_; }

 private:
  std::function<Jet(double)> fn_;
  double lo_, hi_;
};

enum class TransformKind { power, gauss_twist, inverse_gauss_twist };

inline const char* transform_name(TransformKind k) {
  switch (k) {
    case TransformKind::power: return "power";
    case TransformKind::gauss_twist: return "gauss_twist";
    case TransformKind::inverse_gauss_twist: return "inverse_gauss_twist";
  }
  return "?";
}

// base * exp(a ln r + b r^2). Nested transforms fold their phases so that
// Phi_mu Psi_mu = r^{2 mu} holds exactly, not up to cancellation of r^2/4.
class TransformedProfile final : public RadialProfile {
 public:
  TransformedProfile(ProfilePtr base, TransformKind kind, double mu) : base_(std::move(base)) {
    switch (kind) {
      case TransformKind::power: a_ = 2 * mu; break;
      case TransformKind::gauss_twist: a_ = mu; b_ = -0.25; break;
      case TransformKind::inverse_gauss_twist: a_ = mu; b_ = 0.25; break;
    }
    if (auto inner = std::dynamic_pointer_cast<const TransformedProfile>(base_)) {
      a_ += inner->a_;
      b_ += inner->b_;
      base_ = inner->base_;
    }
  }
  Jet jet(double r) const override {
    Jet j = base_->jet(r);
    return j.times_exp(a_ * std::log(r) + b_ * r * r, a_ / r + 2 * b_ * r, -a_ / (r * r) + 2 * b_);
  }
  double r_lo() const override { return base_->r_lo(); }
  double r_hi() const override { return base_->r_hi(); }
  double log_power() const { return a_; }
  double gauss_coeff() const { return b_; }

 private:
  ProfilePtr base_;
  double a_ = 0, b_ = 0;
};

// ------------------------------------------------------------ u = f a

struct SeparatedFunction {
  EndPtr end;
  LinkMode mode;
  ProfilePtr profile;
  EigenContext ctx;

  Jet jet(double r) const {
    if (!profile->contains(r)) {
      std::ostringstream os;
      os << "SeparatedFunction: r=" << r << " outside profile domain [" << profile->r_lo() << ", " << profile->r_hi()
         << "]";
      throw domain_error(os.str());
    }
    return profile->jet(r);
  }
  // |grad u|^2 per unit ||a||^2, in units of exp(2 log_scale)
  double grad2_mant(const Jet& j, double r) const {
    auto e = end->at(r);
    return e.G * e.G * j.d1 * j.d1 + j.f * j.f * mode.mu / e.W;
  }
  // d_r u = <grad r, grad u> = G^2 f'
  double dr_mant(const Jet& j, double r) const {
    auto e = end->at(r);
    return e.G * e.G * j.d1;
  }
};

inline SeparatedFunction separated(EndPtr end, LinkMode mode, ProfilePtr f, EigenContext ctx = {}) {
  return {std::move(end), mode, std::move(f), ctx};
}

// (L u)/a in units of exp(j.log_scale)
inline double apply_operator_mant(const DriftOperator& op, const SeparatedFunction& u, const Jet& j, double r) {
  auto e = u.end->at(r);
  int n = u.end->n;
  double G2 = e.G * e.G;
  double drift = e.G * e.dG + (n - 1) * G2 * e.dW / (2 * e.W) + (op.drift_sign() * r / 2 + op.m / r) * G2;
  return G2 * j.d2 + drift * j.d1 - u.mode.mu * j.f / e.W;
}

inline LogScaled apply_operator(const DriftOperator& op, const SeparatedFunction& u, double r) {
  Jet j = u.jet(r);
  return {apply_operator_mant(op, u, j, r), j.log_scale};
}

// |(L + lambda) u| / weight(|u|, |grad u|) at r
inline double residual_ratio(const SeparatedFunction& u, const DriftOperator& op, double lambda,
                             ResidualConvention conv, double r) {
  Jet j = u.jet(r).tidy();
  double num = std::fabs(apply_operator_mant(op, u, j, r) + lambda * j.f);
  double a = std::fabs(j.f), g = std::sqrt(u.grad2_mant(j, r));
  double den = 0;
  switch (conv) {
    case ResidualConvention::inverse_square: den = (a + g) / (r * r); break;
    case ResidualConvention::inverse_linear: den = (a + g) / r; break;
    case ResidualConvention::twisted: den = (a + g / r) / r; break;
    case ResidualConvention::expander: den = (a + g / r) / (r * r); break;
  }
  if (num == 0) return 0;
  if (den == 0) return kInf;
  return num / den;
}

struct AlmostEigenCertificate {
  double M = 0;
  double lambda = 0;
  DriftOperator op;
  ResidualConvention convention = ResidualConvention::inverse_square;
  double R = 0, R_max = 0;
  double argmax = 0;
  double growth_exponent = 0;  // slope of ln(ratio) against ln r over the outer half
  bool pass = false;
  std::vector<double> r, ratio;
  std::string diagnostic;
};

inline AlmostEigenCertificate certify_almost_eigen(const SeparatedFunction& u, const DriftOperator& op, double lambda,
                                                   double R, double R_max, ResidualConvention conv,
                                                   int samples = 200) {
  if (!(R_max > R) || !(R > 0)) throw domain_error("certify_almost_eigen: bad region");
  if (!u.profile->contains(R) || !u.profile->contains(R_max))
    throw domain_error("certify_almost_eigen: region outside profile domain");
  AlmostEigenCertificate c;
  c.lambda = lambda;
  c.op = op;
  c.convention = conv;
  c.R = R;
  c.R_max = R_max;
  auto grid = geometric_grid(R, R_max, samples);
  for (double r : grid) {
    double q = residual_ratio(u, op, lambda, conv, r);
    c.r.push_back(r);
    c.ratio.push_back(q);
    if (!(q <= c.M)) {
      c.M = q;
      c.argmax = r;
    }
  }
  // least-squares slope over the outer half
  std::size_t h = grid.size() / 2;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int cnt = 0;
  for (std::size_t i = h; i < grid.size(); ++i) {
    if (!(c.ratio[i] > 0) || !std::isfinite(c.ratio[i])) continue;
    double x = std::log(grid[i]), y = std::log(c.ratio[i]);
    sx += x; sy += y; sxx += x * x; sxy += x * y;
    ++cnt;
  }
  if (cnt > 2) c.growth_exponent = (cnt * sxy - sx * sy) / (cnt * sxx - sx * sx);
  // tiny residuals are solver noise; their slope carries no information
  bool bounded = c.growth_exponent <= 0.25 || c.M < 1e-6;
  c.pass = std::isfinite(c.M) && bounded;
  std::ostringstream os;
  os << "M=" << c.M << " at r=" << c.argmax << " (" << convention_name(conv) << "), growth exponent "
     << c.growth_exponent;
  if (!c.pass) os << ": residual profile diverges";
  c.diagnostic = os.str();
  return c;
}

// ------------------------------------------------------------ transforms

struct TransformSpec {
  TransformKind kind = TransformKind::power;
  double mu = 0;
};

// residual convention under which the transformed equation holds
inline ResidualConvention natural_convention(TransformKind k) {
  switch (k) {
    case TransformKind::power: return ResidualConvention::inverse_square;
    case TransformKind::gauss_twist: return ResidualConvention::twisted;
    case TransformKind::inverse_gauss_twist: return ResidualConvention::inverse_square;
  }
  return ResidualConvention::inverse_square;
}

inline SeparatedFunction transform(const SeparatedFunction& u, TransformSpec t) {
  SeparatedFunction v = u;
  v.profile = std::make_shared<TransformedProfile>(u.profile, t.kind, t.mu);
  int n = u.end->n;
  double m = u.ctx.op.m, lam = u.ctx.lambda, mu = t.mu;
  switch (t.kind) {
    case TransformKind::power:
      // the drift of r^{2mu} contributes -+mu depending on the sign of r/2
      v.ctx = {{u.ctx.op.sign, m - 4 * mu}, u.ctx.op.sign == OpSign::minus ? lam + mu : lam - mu};
      break;
    case TransformKind::gauss_twist:
      if (u.ctx.op.sign != OpSign::minus) throw domain_error("transform: gauss_twist expects an L_m eigen-context");
      v.ctx = {{OpSign::plus, m - 2 * mu}, 0.5 * (n + m + 2 * lam - mu)};
      break;
    case TransformKind::inverse_gauss_twist:
      if (u.ctx.op.sign != OpSign::plus)
        throw domain_error("transform: inverse_gauss_twist expects an L+_m eigen-context");
      v.ctx = {{OpSign::minus, m - 2 * mu}, 0.5 * (-n - m + 2 * lam + mu)};
      break;
  }
  return v;
}

}  // namespace conelab

#endif
