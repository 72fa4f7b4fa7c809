#ifndef CONELAB_FREQUENCY_HPP
#define CONELAB_FREQUENCY_HPP

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "conelab/core.hpp"
#include "conelab/geometry.hpp"
#include "conelab/operators.hpp"
#include "conelab/weights.hpp"

namespace conelab {

// Phi_m pairs with L_m, Psi_m with L_m^+.
struct FrequencyOptions {
  double m = 0;
  OpSign sign = OpSign::minus;
  QuadratureSpec quad{};

  DriftOperator op() const { return {sign, m}; }
  double sigma() const { return sign == OpSign::minus ? -1.0 : 1.0; }
  WeightSpec weight() const { return sign == OpSign::minus ? gaussian(m) : inverse_gaussian(m); }
  double log_weight(double r) const { return weight().log_eval(r); }
};

// plain-text rendering of a log-scaled value, e.g. 1.25e-1380
inline std::string format_logscaled(const LogScaled& v, int digits = 12) {
  if (v.is_zero()) return "0";
  double l10 = v.log_abs() / std::log(10.0);
  if (!std::isfinite(l10)) return v.sign() < 0 ? "-inf" : "inf";
  double e = std::floor(l10);
  double mant = std::pow(10.0, l10 - e);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, mant);
  if (std::atof(buf) >= 10.0) {
    e += 1;
    std::snprintf(buf, sizeof buf, "%.*f", digits, mant / 10.0);
  }
  std::ostringstream os;
  os << (v.sign() < 0 ? "-" : "") << buf << "e" << static_cast<long long>(e);
  return os.str();
}

inline std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

// ------------------------------------------------------------ boundary

struct BoundaryValues {
  LogScaled B, F;
  double N = 0;  // rho F / B, 0 where B vanishes
};

// B = int_S u^2 |grad r|,  F = -int_S u d_r u / |grad r|
inline BoundaryValues boundary_quantities(const SeparatedFunction& u, double rho) {
  Jet j = u.jet(rho).tidy();
  auto e = u.end->at(rho);
  double ls = 2 * j.log_scale + u.end->log_area_factor(rho);
  BoundaryValues b;
  b.B = LogScaled(j.f * j.f * u.mode.norm2 * e.G, ls);
  b.F = LogScaled(-j.f * j.d1 * u.mode.norm2 * e.G, ls);
  b.N = b.B.is_zero() ? 0.0 : rho * ratio(b.F, b.B);
  return b;
}

// int_S u^2, no gradient factor
inline LogScaled surface_l2(const SeparatedFunction& u, double rho) {
  Jet j = u.jet(rho).tidy();
  return {j.f * j.f * u.mode.norm2, 2 * j.log_scale + u.end->log_area_factor(rho)};
}

// ------------------------------------------------------------ bulk

// kernel value per unit ||a||^2, in units of exp(2 jet.log_scale)
using BulkKernel = std::function<double(const Jet&, double, const EndGeometry&)>;

enum class TailKind { gaussian, algebraic };

// int_a^b kernel * exp(logw) dmu via co-area: dmu = W^{(n-1)/2} / |grad r| dr dtheta.
inline RadialIntegral bulk_integral(const SeparatedFunction& u, double a, double b, const BulkKernel& k,
                                    const std::function<double(double)>& logw, const QuadratureSpec& q = {},
                                    TailKind tail = TailKind::gaussian, double ref_log = -kInf) {
  if (!u.profile->contains(a)) throw domain_error("bulk_integral: lower limit outside profile domain");
  if (std::isinf(b) && std::isfinite(u.profile->r_hi()))
    throw domain_error("bulk_integral: profile does not extend to infinity");
  if (!std::isinf(b) && !u.profile->contains(b)) throw domain_error("bulk_integral: upper limit outside profile domain");
  auto gl = [&](double r) -> LogScaled {
    Jet j = u.profile->jet(r).tidy();
    auto e = u.end->at(r);
    double v = k(j, r, e) * u.mode.norm2 / e.G;
    return {v, 2 * j.log_scale + u.end->log_area_factor(r) + logw(r)};
  };
  if (std::isinf(b) && tail == TailKind::algebraic) return integrate_algebraic_tail_logscaled(gl, a, q);
  return integrate_logscaled(gl, a, b, q, ref_log);
}

namespace kernels {

inline BulkKernel dirichlet(const SeparatedFunction& u) {
  double mu = u.mode.mu;
  return [mu](const Jet& j, double, const EndGeometry& e) { return e.G * e.G * j.d1 * j.d1 + mu * j.f * j.f / e.W; };
}
inline BulkKernel square() {
  return [](const Jet& j, double, const EndGeometry&) { return j.f * j.f; };
}
// u (L + shift) u
inline BulkKernel u_Lu(const SeparatedFunction& u, DriftOperator op, double shift = 0.0) {
  return [u, op, shift](const Jet& j, double r, const EndGeometry&) {
    return j.f * (apply_operator_mant(op, u, j, r) + shift * j.f);
  };
}
// (X.u + c u) L u with X.u = r f'
inline BulkKernel Xu_Lu(const SeparatedFunction& u, DriftOperator op, double c = 0.0) {
  return [u, op, c](const Jet& j, double r, const EndGeometry&) {
    return (r * j.d1 + c * j.f) * apply_operator_mant(op, u, j, r);
  };
}

}  // namespace kernels

struct BulkValues {
  LogScaled D_hat, L_hat;
  LogScaled L_hat_shifted;  // int u (L + lambda) u, lambda from u.ctx
  double rel_error = 0;
};

inline LogScaled D_hat_at(const SeparatedFunction& u, double rho, const FrequencyOptions& o) {
  return bulk_integral(u, rho, kInf, kernels::dirichlet(u), [&](double r) { return o.log_weight(r); }, o.quad).value;
}

// log-size against which cancelling integrands (u Lu, X.u Lu) are resolved:
// the larger of D_hat and B_hat
inline double scale_log(const SeparatedFunction& u, double rho, const FrequencyOptions& o, const LogScaled& D) {
  double b = boundary_quantities(u, rho).B.log_abs() + o.log_weight(rho);
  return std::max(D.log_abs(), b);
}

// Growth of f like the non-integrable branch surfaces as domain_error from
// the quadrature's divergence detector.
inline BulkValues bulk_quantities(const SeparatedFunction& u, double rho, const FrequencyOptions& o = {}) {
  auto lw = [&](double r) { return o.log_weight(r); };
  BulkValues v;
  auto d = bulk_integral(u, rho, kInf, kernels::dirichlet(u), lw, o.quad);
  double ref = scale_log(u, rho, o, d.value);
  auto l = bulk_integral(u, rho, kInf, kernels::u_Lu(u, o.op()), lw, o.quad, TailKind::gaussian, ref);
  auto ls = bulk_integral(u, rho, kInf, kernels::u_Lu(u, o.op(), u.ctx.lambda), lw, o.quad, TailKind::gaussian, ref);
  v.D_hat = d.value;
  v.L_hat = l.value;
  v.L_hat_shifted = ls.value;
  v.rel_error = std::max(d.rel_error, l.rel_error);
  return v;
}

// ------------------------------------------------------------ trace

struct FrequencyTrace {
  std::vector<double> rho;
  std::vector<LogScaled> B, F, D_hat, L_hat, B_hat, F_hat;
  std::vector<double> N, N_hat, Xi;
  double m = 0;
  OpSign sign = OpSign::minus;
  bool trivial = false;
  double trivial_at = 0;
  bool lemma_consistent = true;  // B = 0 somewhere only if u vanishes on the tail
  std::string verdict;

  static constexpr const char* csv_header = "rho,B,F,D_hat,L_hat,N,N_hat,Xi";

  void write_csv(std::ostream& os) const {
    os << csv_header << "\n";
    for (std::size_t i = 0; i < rho.size(); ++i) {
      os << format_double(rho[i]) << "," << format_logscaled(B[i]) << "," << format_logscaled(F[i]) << ","
         << format_logscaled(D_hat[i]) << "," << format_logscaled(L_hat[i]) << "," << format_double(N[i]) << ","
         << format_double(N_hat[i]) << "," << format_double(Xi[i]) << "\n";
    }
  }
};

inline constexpr double kTrivialRatio = 1e-30;

inline FrequencyTrace frequency_trace(const SeparatedFunction& u, const std::vector<double>& grid,
                                      const FrequencyOptions& o = {}) {
  if (grid.empty()) throw domain_error("frequency_trace: empty grid");
  FrequencyTrace t;
  t.m = o.m;
  t.sign = o.sign;
  t.rho = grid;
  std::vector<BoundaryValues> bd;
  double top = -kInf;
  for (double r : grid) {
    bd.push_back(boundary_quantities(u, r));
    top = std::max(top, bd.back().B.log_abs());
  }
  // triviality: B below 1e-30 max B anywhere on the grid
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!std::isfinite(top) || bd[i].B.log_abs() < top + std::log(kTrivialRatio)) {
      t.trivial = true;
      t.trivial_at = grid[i];
      break;
    }
  }
  if (t.trivial) {
    // the lemma: B(rho0) = 0 forces u = 0 beyond rho0
    double hi = std::isfinite(u.profile->r_hi()) ? u.profile->r_hi() : 8 * t.trivial_at;
    bool vanishes = true;
    for (double r : geometric_grid(t.trivial_at, std::max(hi, t.trivial_at * (1 + 1e-9)), 64)) {
      Jet j = u.profile->jet(std::min(r, hi));
      if (j.f != 0.0 && j.log_scale + std::log(std::fabs(j.f)) > top + std::log(kTrivialRatio)) vanishes = false;
    }
    t.lemma_consistent = vanishes;
    std::ostringstream os;
    os << "B vanishes at rho=" << t.trivial_at << "; "
       << (vanishes ? "u vanishes on the tail: trivial" : "u does not vanish on the tail: contradicts triviality lemma");
    t.verdict = os.str();
    for (std::size_t i = 0; i < grid.size(); ++i) {
      t.B.push_back(bd[i].B);
      t.F.push_back(bd[i].F);
      t.D_hat.push_back({});
      t.L_hat.push_back({});
      t.B_hat.push_back({});
      t.F_hat.push_back({});
      t.N.push_back(0);
      t.N_hat.push_back(0);
      t.Xi.push_back(0);
    }
    return t;
  }
  for (std::size_t i = 0; i < grid.size(); ++i) {
    double r = grid[i];
    auto bv = bulk_quantities(u, r, o);
    LogScaled w = LogScaled::from_log(o.log_weight(r));
    t.B.push_back(bd[i].B);
    t.F.push_back(bd[i].F);
    t.D_hat.push_back(bv.D_hat);
    t.L_hat.push_back(bv.L_hat);
    t.B_hat.push_back(bd[i].B * w);
    t.F_hat.push_back(bd[i].F * w);
    t.N.push_back(bd[i].N);
    double nh = r * ratio(bv.D_hat, t.B_hat.back());
    t.N_hat.push_back(nh);
    t.Xi.push_back(r * r * nh);
  }
  t.verdict = "B > 0 on the grid";
  return t;
}

// ------------------------------------------------------------ xi

struct XiEstimate {
  double xi_hat = 0;
  double spread = 0;               // max deviation of the late Richardson values
  double correction_exponent = 0;  // p in Xi - xi ~ rho^{-p}
  double rho_minus1 = std::numeric_limits<double>::quiet_NaN();
  bool rho_minus1_found = false;
  double K2 = 0;  // |rho^2 N - xi| beyond rho_minus1
  std::vector<double> richardson;
  std::string trend;
};

// Assumes Xi = xi + c rho^{-2} + ...; pairs of neighbours eliminate c.
inline XiEstimate extract_xi(const FrequencyTrace& t, double converge_tol = 0.05) {
  XiEstimate x;
  std::size_t N = t.rho.size();
  if (N < 6) throw domain_error("extract_xi: need at least 6 samples");
  if (t.rho.back() / t.rho.front() < 8.0 * (1 - 1e-9)) throw domain_error("extract_xi: trace must span a factor 8 in rho");
  if (t.trivial) {
    x.trend = "trivial u";
    return x;
  }
  for (std::size_t i = 0; i + 1 < N; ++i) {
    double a2 = t.rho[i] * t.rho[i], b2 = t.rho[i + 1] * t.rho[i + 1];
    x.richardson.push_back((b2 * t.Xi[i + 1] - a2 * t.Xi[i]) / (b2 - a2));
  }
  std::size_t k = std::max<std::size_t>(3, x.richardson.size() / 3);
  std::vector<double> late(x.richardson.end() - k, x.richardson.end());
  std::vector<double> sorted = late;
  std::sort(sorted.begin(), sorted.end());
  x.xi_hat = sorted[sorted.size() / 2];
  for (double v : late) x.spread = std::max(x.spread, std::fabs(v - x.xi_hat));
  double scale = std::max(std::fabs(x.xi_hat), 1.0);

  // correction exponent from the early two thirds
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int cnt = 0;
  for (std::size_t i = 0; i < (2 * N) / 3; ++i) {
    double d = std::fabs(t.Xi[i] - x.xi_hat);
    if (!(d > 1e-10 * scale)) continue;
    double lx = std::log(t.rho[i]), ly = std::log(d);
    sx += lx; sy += ly; sxx += lx * lx; sxy += lx * ly;
    ++cnt;
  }
  if (cnt > 2) x.correction_exponent = -(cnt * sxy - sx * sy) / (cnt * sxx - sx * sx);

  // rho_{-1}: from here on N_hat <= rho^{-2} max(2 xi, 1)
  double cap = std::max(2 * x.xi_hat, 1.0);
  std::size_t first = N;
  for (std::size_t i = N; i-- > 0;) {
    if (t.N_hat[i] <= cap / (t.rho[i] * t.rho[i])) first = i;
    else break;
  }
  if (first < N) {
    x.rho_minus1_found = true;
    x.rho_minus1 = t.rho[first];
    for (std::size_t i = first; i < N; ++i)
      x.K2 = std::max(x.K2, std::fabs(t.rho[i] * t.rho[i] * t.N[i] - x.xi_hat));
  }
  std::ostringstream os;
  os << "Xi from " << t.Xi.front() << " (rho=" << t.rho.front() << ") to " << t.Xi.back() << " (rho=" << t.rho.back()
     << "), Richardson spread " << x.spread << ", correction exponent " << x.correction_exponent;
  x.trend = os.str();
  if (!(x.spread <= converge_tol * scale)) {
    numerical_failure e("extract_xi: Xi does not converge: " + x.trend, x.xi_hat, x.spread);
    e.location = t.rho.back();
    throw e;
  }
  return x;
}

// ------------------------------------------------------------ L_hat bracket

// smallest K2 with |L_hat| <= rho^{-2}/8 (D_hat + K2 rho^{-1} B_hat) at each rho
struct LHatBracket {
  std::vector<double> rho, K2;
  double K2_sup = 0;
  double growth = 0;  // log-slope of K2 over the second half
  bool holds = false;
  std::string detail;
};

inline LHatBracket lhat_bracket(const FrequencyTrace& t, double from = 20) {
  LHatBracket b;
  if (t.trivial) {
    b.holds = true;
    b.detail = "trivial u";
    return b;
  }
  for (std::size_t i = 0; i < t.rho.size(); ++i) {
    double r = t.rho[i];
    if (r < from) continue;
    double need = 8 * r * r * std::fabs(ratio(t.L_hat[i], t.B_hat[i])) - ratio(t.D_hat[i], t.B_hat[i]);
    b.rho.push_back(r);
    b.K2.push_back(std::max(0.0, need * r));
  }
  if (b.rho.size() < 2) throw domain_error("lhat_bracket: need two samples beyond the start radius");
  b.K2_sup = *std::max_element(b.K2.begin(), b.K2.end());
  std::size_t h = b.rho.size() / 2, N = b.rho.size();
  if (b.K2[h] > 0 && b.K2[N - 1] > 0) b.growth = std::log(b.K2[N - 1] / b.K2[h]) / std::log(b.rho[N - 1] / b.rho[h]);
  b.holds = std::isfinite(b.K2_sup) && b.growth < 0.05;
  std::ostringstream os;
  os << "K2 needed: sup " << b.K2_sup << " on [" << b.rho.front() << ", " << b.rho.back() << "], growth " << b.growth;
  b.detail = os.str();
  return b;
}

// ------------------------------------------------------------ identities

// d/dx q through d/dx log|q|; falls back to a plain difference near a sign change
inline LogScaled log_central_diff(const std::function<LogScaled(double)>& q, double x, double h, const LogScaled& qx) {
  LogScaled p = q(x + h), mn = q(x - h);
  bool stable = !p.is_zero() && !mn.is_zero() && !qx.is_zero() && p.sign() == mn.sign() && p.sign() == qx.sign();
  if (!stable) return (p - mn) * (0.5 / h);
  return qx * ((p.log_abs() - mn.log_abs()) * (0.5 / h));
}

// |lhs - sum(terms)| / max(|lhs|, |term_i|)
inline double rel_residual(const LogScaled& lhs, const std::vector<LogScaled>& terms) {
  LogScaled sum;
  double scale = lhs.log_abs();
  for (const auto& t : terms) {
    sum = sum + t;
    scale = std::max(scale, t.log_abs());
  }
  if (!std::isfinite(scale)) return 0.0;
  return std::exp((lhs - sum).log_abs() - scale);
}

struct IdentityReport {
  double rho = 0, h = 0;
  bool exact_model = false;
  double parts_rel = 0;    // F_hat = D_hat + L_hat
  double B_prime_rel = 0;  // B' = (n-1)/rho B - 2F
  double D_prime_rel = 0;  // weighted Rellich-Necas formula for D_hat'
  double N_prime_rel = 0;  // N_hat' formula
  LogScaled B_prime_fd, D_prime_fd;
  double N_prime_fd = 0, N_prime_rhs = 0;
  LogScaled term_XLu, term_flux, term_D, term_tD;  // the four pieces of D_hat'
  std::string detail;
};

inline constexpr double kIdentityTol = 1e-6;

// int_rho^inf t D_hat(t) dt by nested quadrature
inline LogScaled tD_integral(const SeparatedFunction& u, double rho, const FrequencyOptions& inner,
                             const QuadratureSpec& outer) {
  auto gl = [&](double t) { return D_hat_at(u, t, inner) * t; };
  return integrate_logscaled(gl, rho, kInf, outer).value;
}

inline IdentityReport check_identities(const SeparatedFunction& u, double rho, const FrequencyOptions& o = {},
                                       double h_rel = 1e-3) {
  if (!(h_rel > 0) || h_rel > 0.1) throw domain_error("check_identities: h must be small relative to rho");
  IdentityReport rep;
  rep.rho = rho;
  rep.h = h_rel * rho;
  rep.exact_model = u.end->kind() == EndKind::exact_cone;
  double h = rep.h;
  int n = u.end->n;
  double s = o.sigma();
  FrequencyOptions in = o;
  in.quad.rel_tol = std::min(o.quad.rel_tol, 1e-12);
  QuadratureSpec outer = o.quad;
  outer.rel_tol = std::min(o.quad.rel_tol, 1e-10);
  auto lw = [&](double r) { return in.log_weight(r); };
  LogScaled w = LogScaled::from_log(in.log_weight(rho));

  auto bd = boundary_quantities(u, rho);
  auto D = bulk_integral(u, rho, kInf, kernels::dirichlet(u), lw, in.quad).value;
  double ref = scale_log(u, rho, in, D);
  auto L = bulk_integral(u, rho, kInf, kernels::u_Lu(u, in.op()), lw, in.quad, TailKind::gaussian, ref).value;

  // F_hat = D_hat + L_hat
  rep.parts_rel = rel_residual(bd.F * w, {D, L});

  // B'
  auto Bq = [&](double x) { return boundary_quantities(u, x).B; };
  rep.B_prime_fd = log_central_diff(Bq, rho, h, bd.B);
  rep.B_prime_rel = rel_residual(rep.B_prime_fd, {bd.B * ((n - 1) / rho), bd.F * -2.0});

  // D_hat'
  auto Dq = [&](double x) { return D_hat_at(u, x, in); };
  rep.D_prime_fd = log_central_diff(Dq, rho, h, D);
  Jet j = u.jet(rho).tidy();
  auto e = u.end->at(rho);
  double lsurf = 2 * j.log_scale + u.end->log_area_factor(rho) + in.log_weight(rho);
  double xref = ref + std::log(rho);
  LogScaled XLu =
      bulk_integral(u, rho, kInf, kernels::Xu_Lu(u, in.op()), lw, in.quad, TailKind::gaussian, xref).value;
  LogScaled tD = tD_integral(u, rho, in, outer);
  rep.term_XLu = XLu * (-2.0 / rho);
  rep.term_flux = LogScaled(-2.0 * e.G * j.d1 * j.d1 * u.mode.norm2, lsurf);
  rep.term_D = D * ((n + o.m - 2) / rho + s * rho / 2);
  rep.term_tD = tD * (s / rho);
  rep.D_prime_rel = rel_residual(rep.D_prime_fd, {rep.term_XLu, rep.term_flux, rep.term_D, rep.term_tD});

  // N_hat'
  LogScaled Bh = bd.B * w;
  if (!Bh.is_zero()) {
    auto Nq = [&](double x) {
      LogScaled bx = boundary_quantities(u, x).B * LogScaled::from_log(in.log_weight(x));
      return D_hat_at(u, x, in) * x / bx;
    };
    LogScaled Nh = D * rho / Bh;
    LogScaled dN = log_central_diff(Nq, rho, h, Nh);
    double Nf = bd.N;
    LogScaled S1 =
        bulk_integral(u, rho, kInf, kernels::Xu_Lu(u, in.op(), Nf), lw, in.quad, TailKind::gaussian, xref).value *
        -2.0;
    LogScaled S2 = tD * s;
    double c = rho * j.d1 + Nf * j.f;
    LogScaled S3(-2.0 / rho * e.G * c * c * u.mode.norm2, lsurf);
    rep.N_prime_fd = dN.value();
    rep.N_prime_rhs = ratio(S1 + S2 + S3, Bh);
    rep.N_prime_rel = rel_residual(dN, {S1 / Bh, S2 / Bh, S3 / Bh});
  }
  std::ostringstream os;
  os << "rho=" << rho << " h=" << h << ": parts " << rep.parts_rel << ", B' " << rep.B_prime_rel << ", D_hat' "
     << rep.D_prime_rel << ", N_hat' " << rep.N_prime_rel << (rep.exact_model ? " (exact cone)" : " (O-terms present)");
  rep.detail = os.str();
  return rep;
}

// ------------------------------------------------------------ inequalities

struct PoincareCheck {
  double R = 0;
  LogScaled lhs, rhs;
  double ratio = 0;  // lhs / rhs
  bool holds = false;
};

// int_{E_R} u^2 Phi_m <= 32/R^2 D_hat(R) + 16/R B_hat(R)
inline PoincareCheck poincare_check(const SeparatedFunction& u, double R, const FrequencyOptions& o = {}) {
  auto lw = [&](double r) { return o.log_weight(r); };
  PoincareCheck c;
  c.R = R;
  c.lhs = bulk_integral(u, R, kInf, kernels::square(), lw, o.quad).value;
  LogScaled D = bulk_integral(u, R, kInf, kernels::dirichlet(u), lw, o.quad).value;
  LogScaled Bh = boundary_quantities(u, R).B * LogScaled::from_log(o.log_weight(R));
  c.rhs = D * (32.0 / (R * R)) + Bh * (16.0 / R);
  if (c.rhs.is_zero()) {
    c.ratio = c.lhs.is_zero() ? 0.0 : kInf;
  } else {
    c.ratio = ratio(c.lhs, c.rhs);
  }
  c.holds = c.ratio <= 1.0;
  return c;
}

// c e^{-sigma r} r^p terms: 1 to 3 of them, c in [-1, 1], sigma in [0, 1],
// p in [-2, 2]; the link mode is drawn uniformly from the link table.
struct TestFunctionSpec {
  std::vector<ExpPolyProfile::Term> terms;
  int mode_index = 0;
  std::string describe() const {
    std::ostringstream os;
    os << "mode " << mode_index << ":";
    for (auto& t : terms) os << " " << t.c << "*exp(-" << t.sigma << " r)*r^" << t.p;
    return os.str();
  }
};

inline TestFunctionSpec random_test_function(std::mt19937_64& rng, const LinkSpec& link) {
  if (link.modes.empty()) throw domain_error("random_test_function: link has no modes");
  std::uniform_int_distribution<int> nterms(1, 3);
  std::uniform_int_distribution<std::size_t> pick(0, link.modes.size() - 1);
  std::uniform_real_distribution<double> uc(-1.0, 1.0), us(0.0, 1.0), up(-2.0, 2.0);
  TestFunctionSpec s;
  int k = nterms(rng);
  for (int i = 0; i < k; ++i) {
    double c = uc(rng);
    if (c == 0) c = 0.5;
    double sig = us(rng);
    double p = up(rng);
    s.terms.push_back({c, sig, p});
  }
  s.mode_index = link.modes[pick(rng)].index;
  return s;
}

inline SeparatedFunction realize(const TestFunctionSpec& s, EndPtr end) {
  LinkMode mode = end->link.mode(s.mode_index);
  return separated(std::move(end), mode, std::make_shared<ExpPolyProfile>(s.terms));
}

struct HarnackCheck {
  double R = 0;
  double N_plus = 0, N_min = 0;
  bool hypothesis = false;  // -1 <= N on [R, R+2]
  std::vector<double> tau, lower, value, upper;
  bool holds = false;
};

// (1 - 2 N+ tau/R) B(R) <= B(R+tau) <= (1 + 2(n+3) tau/R) B(R)
inline HarnackCheck harnack_check(const SeparatedFunction& u, double R, const std::vector<double>& taus = {1.0, 2.0},
                                  int samples = 81) {
  HarnackCheck c;
  c.R = R;
  c.N_plus = 0;
  c.N_min = kInf;
  for (int i = 0; i < samples; ++i) {
    double r = R + 2.0 * i / (samples - 1);
    double N = boundary_quantities(u, r).N;
    c.N_plus = std::max(c.N_plus, N);
    c.N_min = std::min(c.N_min, N);
  }
  c.hypothesis = c.N_min >= -1.0;
  int n = u.end->n;
  LogScaled B0 = boundary_quantities(u, R).B;
  c.holds = !B0.is_zero();
  for (double t : taus) {
    if (t < 0 || t > 2) throw domain_error("harnack_check: tau must lie in [0, 2]");
    double v = B0.is_zero() ? 0.0 : ratio(boundary_quantities(u, R + t).B, B0);
    double lo = 1 - 2 * c.N_plus * t / R, hi = 1 + 2.0 * (n + 3) * t / R;
    c.tau.push_back(t);
    c.lower.push_back(lo);
    c.value.push_back(v);
    c.upper.push_back(hi);
    if (!(lo <= v && v <= hi)) c.holds = false;
  }
  return c;
}

// ------------------------------------------------------------ tails

// Richardson limit of g(rho) assuming g = L + c rho^{-2} + ...
inline double rho2_limit(const std::function<double(double)>& g, double far) {
  double a = far / 2, b = far;
  double ga = g(a), gb = g(b);
  return (b * b * gb - a * a * ga) / (b * b - a * a);
}

inline double far_radius(const SeparatedFunction& u) {
  double hi = u.profile->r_hi();
  return std::isfinite(hi) ? hi : 1e3;
}

struct TailRow {
  double R = 0;
  double lhs_first = 0, lhs_second = 0;
  double K_first = 0;   // lhs_first R^{n+4 lambda} / int_{S_R} u^2
  double K_second = 0;  // lhs_second R^2 / alpha^2
};

struct TailDisplays {
  double lambda = 0;  // degree 2 lambda
  double lead = 0;    // lim f / r^{2 lambda}
  double alpha2 = 0;  // lim rho^{1-n-4 lambda} int_S u^2
  std::vector<TailRow> rows;
  double variation_first = 0, variation_second = 0;
  bool zero_trace = false;
  bool stable_first = false, stable_second = false;
  bool pass = false;
  std::string diagnostic;
};

inline constexpr double kTailStability = 0.2;

// Both displays of the asymptotic-homogeneity theorems, with the degree-2 lambda
// leading term A = lead r^{2 lambda} a.
inline TailDisplays tail_displays(const SeparatedFunction& u, double lambda, const std::vector<double>& Rs,
                                  const QuadratureSpec& q_in = {}) {
  if (Rs.empty()) throw domain_error("tail_displays: empty R list");
  // constants are only compared at the 1% level
  QuadratureSpec q = q_in;
  q.rel_tol = std::max(q.rel_tol, 1e-8);
  TailDisplays t;
  t.lambda = lambda;
  int n = u.end->n;
  double d = 2 * lambda;
  double far = far_radius(u);
  auto surf = [&](double r) {
    return std::exp(surface_l2(u, r).log_abs() + (1 - n - 4 * lambda) * std::log(r)) * surface_l2(u, r).sign();
  };
  t.alpha2 = rho2_limit(surf, far);
  t.lead = rho2_limit([&](double r) { return u.profile->jet(r).value().value() * std::pow(r, -d); }, far);
  double ref = surf(Rs.front());
  t.zero_trace = !(std::fabs(t.alpha2) > 1e-10 * std::fabs(ref));
  double mu = u.mode.mu, lead = t.lead;
  BulkKernel k1 = [=](const Jet& j, double r, const EndGeometry& e) {
    double g2 = e.G * e.G * j.d1 * j.d1 + mu * j.f * j.f / e.W;
    double rad = e.G * e.G * j.d1 - d * j.f / r;
    return j.f * j.f + r * r * g2 + r * r * r * r * rad * rad;
  };
  BulkKernel k2 = [=](const Jet& j, double r, const EndGeometry& e) {
    double g2 = e.G * e.G * j.d1 * j.d1 + mu * j.f * j.f / e.W;
    double rad = e.G * e.G * j.d1 - d * j.f / r;
    double A = lead == 0 ? 0.0 : lead * std::exp(d * std::log(r) - j.log_scale);
    double diff = j.f - A;
    return j.f * j.f + r * r * (diff * diff + g2) + r * r * r * r * rad * rad;
  };
  double e1 = -1.0 - n - 4 * lambda, e2 = -2.0 - n - 4 * lambda;
  std::vector<double> K1, K2;
  for (double R : Rs) {
    TailRow row;
    row.R = R;
    row.lhs_first =
        bulk_integral(u, R, kInf, k1, [=](double r) { return e1 * std::log(r); }, q, TailKind::algebraic).value.value();
    row.lhs_second =
        bulk_integral(u, R, kInf, k2, [=](double r) { return e2 * std::log(r); }, q, TailKind::algebraic).value.value();
    double sR = surface_l2(u, R).value();
    row.K_first = sR > 0 ? row.lhs_first * std::pow(R, n + 4 * lambda) / sR : kInf;
    row.K_second = t.zero_trace ? (row.lhs_second > 0 ? kInf : 0.0) : row.lhs_second * R * R / t.alpha2;
    K1.push_back(row.K_first);
    K2.push_back(row.K_second);
    t.rows.push_back(row);
  }
  auto variation = [](const std::vector<double>& v) {
    double lo = *std::min_element(v.begin(), v.end()), hi = *std::max_element(v.begin(), v.end());
    if (!std::isfinite(hi)) return kInf;
    return hi > 0 ? (hi - lo) / hi : 0.0;
  };
  t.variation_first = variation(K1);
  t.variation_second = variation(K2);
  t.stable_first = t.variation_first < kTailStability;
  t.stable_second = t.variation_second < kTailStability;
  t.pass = t.stable_first && t.stable_second;
  std::ostringstream os;
  os << "alpha^2=" << t.alpha2 << " lead=" << t.lead << "; K_first variation " << t.variation_first
     << ", K_second variation " << t.variation_second;
  if (t.zero_trace) os << "; trace vanishes" << (t.rows.front().lhs_second > 0 ? " but u does not: rigidity fails" : "");
  t.diagnostic = os.str();
  return t;
}

// ------------------------------------------------------------ Psi-weighted

// int_{A_{s,t}} r^{-1} phi^2 Psi_m <= 32/t^3 D_check + 8/s^2 Psi_m(s) int_{S_s} |grad r| phi^2
inline PoincareCheck psi_poincare_check(const SeparatedFunction& u, double m, double t, double s,
                                        const QuadratureSpec& q = {}) {
  if (!(s > t)) throw domain_error("psi_poincare_check: need s > t");
  WeightSpec w = inverse_gaussian(m);
  PoincareCheck c;
  c.R = t;
  c.lhs = bulk_integral(
              u, t, s, kernels::square(), [&](double r) { return w.log_eval(r) - std::log(r); }, q)
              .value;
  LogScaled Dc = bulk_integral(u, t, s, kernels::dirichlet(u), [&](double r) { return w.log_eval(r); }, q).value;
  LogScaled Bs = boundary_quantities(u, s).B * LogScaled::from_log(w.log_eval(s));
  c.rhs = Dc * (32.0 / (t * t * t)) + Bs * (8.0 / (s * s));
  c.ratio = c.rhs.is_zero() ? (c.lhs.is_zero() ? 0.0 : kInf) : ratio(c.lhs, c.rhs);
  c.holds = c.ratio <= 1.0;
  return c;
}

struct FluxMonotonicity {
  double M = 0;                 // residual constant of |L+_m u| <= M r^{-1}(|u| + |grad u|)
  double K10 = 0;               // 16 M
  double K_measured = 0;        // smallest K making the inequality hold on the grid
  double worst_r1 = 0, worst_r2 = 0;
  bool holds = false;
};

// Psi_m(r1) F(r1) - Psi_m(r2) F(r2) >= -K/r2^2 Psi_m(r2) B(r2) for r2 > r1 on the grid
inline FluxMonotonicity flux_monotonicity(const SeparatedFunction& u, double m, const std::vector<double>& grid,
                                          double M) {
  FluxMonotonicity f;
  f.M = M;
  f.K10 = 16 * M;
  WeightSpec w = inverse_gaussian(m);
  std::vector<LogScaled> PF, PB;
  for (double r : grid) {
    auto b = boundary_quantities(u, r);
    LogScaled wr = LogScaled::from_log(w.log_eval(r));
    PF.push_back(b.F * wr);
    PB.push_back(b.B * wr);
  }
  f.holds = true;
  for (std::size_t i = 0; i < grid.size(); ++i)
    for (std::size_t j = i + 1; j < grid.size(); ++j) {
      if (PB[j].is_zero()) continue;
      LogScaled diff = PF[i] - PF[j];
      double need = -ratio(diff, PB[j]) * grid[j] * grid[j];
      // quadrature-free, so only roundoff in the boundary data
      double noise = 1e-9 * (std::exp(PF[i].log_abs() - PB[j].log_abs()) + std::exp(PF[j].log_abs() - PB[j].log_abs())) *
                     grid[j] * grid[j];
      if (need > f.K_measured) {
        f.K_measured = need;
        f.worst_r1 = grid[i];
        f.worst_r2 = grid[j];
      }
      if (need > f.K10 + noise) f.holds = false;
    }
  return f;
}

struct DecayHypothesis {
  double lambda = 0;
  std::vector<double> rho, scaled;  // B rho^{4 lambda - n + 1}
  double log_slope = 0;
  bool holds = false;  // scaled B decays
};

inline DecayHypothesis decay_hypothesis(const SeparatedFunction& u, double lambda, const std::vector<double>& grid) {
  DecayHypothesis d;
  d.lambda = lambda;
  int n = u.end->n;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int cnt = 0;
  for (double r : grid) {
    LogScaled B = boundary_quantities(u, r).B;
    double l = B.log_abs() + (4 * lambda - n + 1) * std::log(r);
    d.rho.push_back(r);
    d.scaled.push_back(std::exp(l));
    if (std::isfinite(l)) {
      double x = std::log(r);
      sx += x; sy += l; sxx += x * x; sxy += x * l;
      ++cnt;
    }
  }
  if (cnt > 2) d.log_slope = (cnt * sxy - sx * sy) / (cnt * sxx - sx * sx);
  bool decreasing = true;
  for (std::size_t i = 1; i < d.scaled.size(); ++i)
    if (d.scaled[i] > d.scaled[i - 1] * (1 + 1e-9)) decreasing = false;
  d.holds = decreasing && d.log_slope < 0;
  return d;
}

// int_{E_R} (1 + r^2) u^2 Psi_m'; nullopt when the quadrature detects divergence
inline std::optional<LogScaled> psi_integrability(const SeparatedFunction& u, double R, double m_prime,
                                                  const QuadratureSpec& q = {}) {
  WeightSpec w = inverse_gaussian(m_prime);
  try {
    auto k = [](const Jet& j, double r, const EndGeometry&) { return (1 + r * r) * j.f * j.f; };
    return bulk_integral(u, R, kInf, k, [&](double r) { return w.log_eval(r); }, q).value;
  } catch (const domain_error&) {
    return std::nullopt;
  }
}

// ------------------------------------------------------------ report

struct Verdict {
  std::string check;
  std::string anchor;
  bool pass = false;
  std::string detail;
};

struct InequalityParams {
  double lambda = 0;
  std::vector<double> poincare_R{10, 15, 20};
  double harnack_R = 20;
  std::vector<double> harnack_tau{1, 2};
  std::vector<double> tail_R{10, 20, 40};
  FrequencyOptions freq{};
};

struct TailEstimateReport {
  std::vector<PoincareCheck> poincare;
  HarnackCheck harnack;
  TailDisplays tails;
  double smallest_poincare_R = std::numeric_limits<double>::quiet_NaN();
  std::vector<Verdict> verdicts;
  bool pass = false;
};

inline TailEstimateReport verify_inequalities(const SeparatedFunction& u, const InequalityParams& p = {}) {
  TailEstimateReport rep;
  bool all = true;
  for (double R : p.poincare_R) {
    rep.poincare.push_back(poincare_check(u, R, p.freq));
    if (rep.poincare.back().holds && std::isnan(rep.smallest_poincare_R)) rep.smallest_poincare_R = R;
  }
  bool pc = std::all_of(rep.poincare.begin(), rep.poincare.end(), [](auto& c) { return c.holds; });
  {
    std::ostringstream os;
    os << "max ratio ";
    double mx = 0;
    for (auto& c : rep.poincare) mx = std::max(mx, c.ratio);
    os << mx;
    rep.verdicts.push_back({"poincare", "weighted-poincare", pc, os.str()});
  }
  rep.harnack = harnack_check(u, p.harnack_R, p.harnack_tau);
  {
    std::ostringstream os;
    os << "N+=" << rep.harnack.N_plus << " N_min=" << rep.harnack.N_min;
    rep.verdicts.push_back({"harnack", "harnack-bracket", rep.harnack.holds && rep.harnack.hypothesis, os.str()});
  }
  rep.tails = tail_displays(u, p.lambda, p.tail_R, p.freq.quad);
  rep.verdicts.push_back({"tail-first", "homogeneity-tail-first", rep.tails.stable_first, rep.tails.diagnostic});
  rep.verdicts.push_back({"tail-second", "homogeneity-tail-second", rep.tails.stable_second, rep.tails.diagnostic});
  for (auto& v : rep.verdicts) all = all && v.pass;
  rep.pass = all;
  return rep;
}

}  // namespace conelab

#endif
