#ifndef CONELAB_CORE_HPP
#define CONELAB_CORE_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>

namespace conelab {

inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr double kPi = 3.14159265358979323846;

// Error taxonomy. The CLI maps these onto exit codes.
struct domain_error : std::domain_error {
  using std::domain_error::domain_error;
};

struct numerical_failure : std::runtime_error {
  double estimate = std::numeric_limits<double>::quiet_NaN();
  double error_bound = std::numeric_limits<double>::quiet_NaN();
  double location = std::numeric_limits<double>::quiet_NaN();
  explicit numerical_failure(const std::string& what) : std::runtime_error(what) {}
  numerical_failure(const std::string& what, double est, double err)
      : std::runtime_error(what), estimate(est), error_bound(err) {}
};

struct config_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Raised when a model cannot be certified; carries the offending radius.
struct certification_error : std::runtime_error {
  double radius;
  std::string quantity;
  certification_error(const std::string& what, double r, std::string q)
      : std::runtime_error(what), radius(r), quantity(std::move(q)) {}
};

// x = mant * exp(log_scale). Keeps Gaussian-weighted quantities representable
// far past the range where exp(+-r^2/4) over/underflows.
struct LogScaled {
  double mant = 0.0;
  double log_scale = 0.0;

  LogScaled() = default;
  LogScaled(double m, double ls) : mant(m), log_scale(ls) { normalize(); }
  static LogScaled from_value(double v) { return {v, 0.0}; }
  static LogScaled from_log(double logv, double sign = 1.0) { return {sign, logv}; }

  void normalize() {
    if (mant == 0.0 || !std::isfinite(mant)) {
      if (mant == 0.0) log_scale = 0.0;
      return;
    }
    double a = std::fabs(mant);
    log_scale += std::log(a);
    mant = mant > 0 ? 1.0 : -1.0;
  }
  bool is_zero() const { return mant == 0.0; }
  double sign() const { return mant > 0 ? 1.0 : (mant < 0 ? -1.0 : 0.0); }
  // log|x|; -inf for zero
  double log_abs() const {
    if (mant == 0.0) return -kInf;
    return log_scale + std::log(std::fabs(mant));
  }
  double value() const { return mant == 0.0 ? 0.0 : mant * std::exp(log_scale); }

  friend LogScaled operator*(LogScaled a, LogScaled b) {
    return {a.mant * b.mant, a.log_scale + b.log_scale};
  }
  friend LogScaled operator/(LogScaled a, LogScaled b) {
    if (b.mant == 0.0) throw domain_error("LogScaled: division by zero");
    return {a.mant / b.mant, a.log_scale - b.log_scale};
  }
  friend LogScaled operator*(LogScaled a, double s) { return {a.mant * s, a.log_scale}; }
  friend LogScaled operator*(double s, LogScaled a) { return a * s; }
  friend LogScaled operator+(LogScaled a, LogScaled b) {
    if (a.mant == 0.0) return b;
    if (b.mant == 0.0) return a;
    if (a.log_scale < b.log_scale) std::swap(a, b);
    return {a.mant + b.mant * std::exp(b.log_scale - a.log_scale), a.log_scale};
  }
  LogScaled operator-() const { return {-mant, log_scale}; }
  friend LogScaled operator-(LogScaled a, LogScaled b) { return a + (-b); }
  // a/b as a plain double (finite whenever the ratio is)
  friend double ratio(LogScaled a, LogScaled b) {
    if (b.mant == 0.0) throw domain_error("LogScaled: ratio with zero denominator");
    if (a.mant == 0.0) return 0.0;
    return (a.mant / b.mant) * std::exp(a.log_scale - b.log_scale);
  }
};

// Radial profile value with derivatives, all multiplied by exp(log_scale).
struct Jet {
  double f = 0.0, d1 = 0.0, d2 = 0.0;
  double log_scale = 0.0;

  LogScaled value() const { return {f, log_scale}; }
  LogScaled deriv() const { return {d1, log_scale}; }
  LogScaled deriv2() const { return {d2, log_scale}; }
  // multiply by exp(phi) where phi' = p1, phi'' = p2
  Jet times_exp(double phi, double p1, double p2) const {
    Jet j;
    j.f = f;
    j.d1 = d1 + p1 * f;
    j.d2 = d2 + 2.0 * p1 * d1 + (p2 + p1 * p1) * f;
    j.log_scale = log_scale + phi;
    return j;
  }
  // rescale mantissas so max(|f|,|d1|,|d2|) ~ 1
  Jet tidy() const {
    double a = std::max({std::fabs(f), std::fabs(d1), std::fabs(d2)});
    if (a == 0.0 || !std::isfinite(a)) return *this;
    Jet j{f / a, d1 / a, d2 / a, log_scale + std::log(a)};
    return j;
  }
};

// f(r) on a radial interval; derivatives always available.
class RadialProfile {
 public:
  virtual ~RadialProfile() = default;
  virtual Jet jet(double r) const = 0;
  virtual double r_lo() const { return 0.0; }
  virtual double r_hi() const { return kInf; }
  bool contains(double r) const { return r >= r_lo() * (1 - 1e-12) && r <= r_hi() * (1 + 1e-12); }
};
using ProfilePtr = std::shared_ptr<const RadialProfile>;

// Graph function u(rho) over the exterior of a ball in R^n.
struct GraphJet {
  double u = 0, du = 0, ddu = 0;
};

class GraphProfile {
 public:
  virtual ~GraphProfile() = default;
  virtual GraphJet at(double rho) const = 0;
  virtual double rho_lo() const = 0;
  virtual double rho_hi() const = 0;
};
using GraphPtr = std::shared_ptr<const GraphProfile>;

}  // namespace conelab

#endif
