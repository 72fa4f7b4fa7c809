#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "conelab/frequency.hpp"
#include "conelab/radial.hpp"

using namespace conelab;

namespace {

SeparatedFunction constant_one(int n) {
  auto e = exact_cone(n);
  return separated(e, e->link.constant_mode(), std::make_shared<PowerProfile>(0.0));
}

struct SlowMode {
  EndPtr end;
  LinkMode mode;
  ProfilePtr profile;
  SeparatedFunction u;
};

SlowMode slow_mode(int n, int l, double m) {
  auto e = exact_cone(n);
  auto mode = e->link.mode(l);
  auto ode = radial_coefficients(e, m, 0.0, mode.mu, OpSign::minus);
  auto p = seeded_profile(ode, Branch::slow, 100, 5);
  return {e, mode, p, separated(e, mode, p, ode.context())};
}

}  // namespace

TEST(FormatTest, LogScaledRendering) {
  EXPECT_EQ(format_logscaled(LogScaled::from_value(0.0)), "0");
  EXPECT_EQ(format_logscaled(LogScaled::from_value(1256.637061436), 12), "1.256637061436e3");
  EXPECT_EQ(format_logscaled(LogScaled::from_value(-0.125), 3), "-1.250e-1");
  // far below double range
  auto tiny = LogScaled::from_log(-3000 * std::log(10.0));
  EXPECT_EQ(format_logscaled(tiny, 3), "1.000e-3000");
}

TEST(BoundaryTest, ConstantFunction) {
  auto one = constant_one(3);
  auto b = boundary_quantities(one, 5);
  EXPECT_NEAR(b.B.value(), 100 * kPi, 1e-10);
  EXPECT_EQ(b.F.value(), 0.0);
  EXPECT_EQ(b.N, 0.0);
  auto bv = bulk_quantities(one, 5);
  EXPECT_EQ(bv.D_hat.value(), 0.0);
  EXPECT_NEAR(bv.L_hat.value(), 0.0, 1e-300);
}

TEST(BoundaryTest, LinearRadialHasFrequencyMinusOne) {
  auto e = exact_cone(3);
  auto ur = separated(e, e->link.constant_mode(), std::make_shared<PowerProfile>(1.0));
  for (double r : {2.0, 7.0, 30.0}) EXPECT_NEAR(boundary_quantities(ur, r).N, -1.0, 1e-13);
}

TEST(FrequencyTest, XiMatchesTwiceMu) {
  for (int n : {2, 3})
    for (int l : {1, 2})
      for (double m : {-2.0, 0.0, 2.0}) {
        auto s = slow_mode(n, l, m);
        FrequencyOptions o;
        o.m = m;
        auto tr = frequency_trace(s.u, ratio_grid(10, 80, 1.05), o);
        auto x = extract_xi(tr);
        EXPECT_NEAR(x.xi_hat, 2 * s.mode.mu, 0.01 * 2 * s.mode.mu) << "n=" << n << " l=" << l << " m=" << m;
        EXPECT_TRUE(x.rho_minus1_found);
      }
}

TEST(FrequencyTest, ConstantHasZeroXi) {
  auto tr = frequency_trace(constant_one(3), ratio_grid(10, 80, 1.05));
  EXPECT_FALSE(tr.trivial);
  EXPECT_NEAR(extract_xi(tr).xi_hat, 0.0, 1e-10);
}

TEST(FrequencyTest, ZeroFunctionIsTrivial) {
  auto e = exact_cone(3);
  auto zero = separated(e, e->link.constant_mode(), std::make_shared<ExpPolyProfile>(std::vector<ExpPolyProfile::Term>{}));
  auto tr = frequency_trace(zero, {10, 20});
  EXPECT_TRUE(tr.trivial);
  EXPECT_NE(tr.verdict.find("trivial"), std::string::npos);
}

TEST(FrequencyTest, ScaleInvariance) {
  auto s = slow_mode(3, 1, 0);
  auto t1 = frequency_trace(s.u, {10, 20});
  for (double c : {1e-8, 1e8}) {
    auto p = s.profile;
    auto ps = std::make_shared<FunctionProfile>(
        [p, c](double r) {
          Jet j = p->jet(r);
          j.log_scale += std::log(c);
          return j;
        },
        p->r_lo(), kInf);
    auto us = separated(s.end, s.mode, ps, s.u.ctx);
    auto t2 = frequency_trace(us, {10, 20});
    for (int i = 0; i < 2; ++i) {
      EXPECT_NEAR(t1.N[i], t2.N[i], 1e-12 * std::fabs(t1.N[i]));
      EXPECT_NEAR(t1.N_hat[i], t2.N_hat[i], 1e-9 * std::fabs(t1.N_hat[i]));
    }
  }
}

TEST(FrequencyTest, CsvLayout) {
  auto tr = frequency_trace(constant_one(2), {10, 20, 40});
  std::ostringstream os;
  tr.write_csv(os);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "rho,B,F,D_hat,L_hat,N,N_hat,Xi");
  int rows = 0;
  while (std::getline(is, line))
    if (!line.empty()) ++rows;
  EXPECT_EQ(rows, 3);
}

TEST(FrequencyTest, GaussianBranchRejected) {
  auto e = exact_cone(3);
  auto mode = e->link.mode(1);
  auto ode = radial_coefficients(e, 0, 0.0, mode.mu, OpSign::minus);
  auto pg = seeded_profile(ode, Branch::gaussian, 20, 5);
  auto ug = separated(e, mode, pg, ode.context());
  EXPECT_THROW(bulk_quantities(ug, 10), domain_error);
}

TEST(IdentityTest, ResidualsSmallOnExactModes) {
  for (int n : {2, 3})
    for (double m : {0.0, 2.0}) {
      auto s = slow_mode(n, 1, m);
      FrequencyOptions o;
      o.m = m;
      auto id = check_identities(s.u, 10, o);
      EXPECT_LT(id.parts_rel, kIdentityTol) << id.detail;
      EXPECT_LT(id.B_prime_rel, kIdentityTol) << id.detail;
      EXPECT_LT(id.D_prime_rel, kIdentityTol) << id.detail;
      EXPECT_LT(id.N_prime_rel, kIdentityTol) << id.detail;
    }
}

TEST(InequalityTest, PoincareRandomFunctions) {
  std::mt19937_64 rng(42);
  int violations = 0;
  for (int n : {2, 3})
    for (double m : {-2.0, 0.0, 2.0})
      for (double R : {10.0, 20.0})
        for (int k = 0; k < 8; ++k) {
          auto e = exact_cone(n);
          auto spec = random_test_function(rng, e->link);
          FrequencyOptions o;
          o.m = m;
          auto c = poincare_check(realize(spec, e), R, o);
          if (!c.holds) {
            ++violations;
            ADD_FAILURE() << spec.describe() << " R=" << R << " ratio=" << c.ratio;
          }
        }
  EXPECT_EQ(violations, 0);
}

TEST(InequalityTest, HarnackAndTailsOnSlowMode) {
  auto s = slow_mode(3, 1, 0);
  InequalityParams ip;
  auto rep = verify_inequalities(s.u, ip);
  EXPECT_TRUE(rep.harnack.holds);
  EXPECT_TRUE(rep.tails.stable_first) << rep.tails.diagnostic;
  EXPECT_TRUE(rep.tails.stable_second) << rep.tails.diagnostic;
  EXPECT_NEAR(rep.tails.alpha2, s.mode.norm2, 0.01 * s.mode.norm2);
  for (auto& v : rep.verdicts) EXPECT_TRUE(v.pass) << v.check << ": " << v.detail;
}

TEST(PsiTest, ExpanderDecayingMode) {
  for (int n : {2, 3}) {
    auto e = exact_cone(n);
    auto mode = e->link.constant_mode();
    double lam = -0.5;
    auto ode = radial_coefficients(e, 0, lam, 0, OpSign::plus);
    auto p = seeded_profile(ode, Branch::gaussian, 30, 5);
    auto u = separated(e, mode, p, ode.context());
    EXPECT_TRUE(decay_hypothesis(u, lam, ratio_grid(10, 80, 1.05)).holds);
    for (double mp : {-2.0, 0.0, 2.0}) EXPECT_TRUE(psi_integrability(u, 10, mp).has_value());

    auto uh = transform(u, {TransformKind::power, lam});
    auto c = certify_almost_eigen(uh, {OpSign::plus, 0.0}, 0.0, 10, 40, ResidualConvention::inverse_linear);
    EXPECT_TRUE(c.pass);
    auto fm = flux_monotonicity(uh, 0.0, ratio_grid(10, 40, 1.1), c.M);
    EXPECT_TRUE(fm.holds);
    EXPECT_LE(psi_poincare_check(uh, 0.0, 10, 20).ratio, 1.0);

    auto u2 = separated(e, mode, std::make_shared<TransformedProfile>(p, TransformKind::inverse_gauss_twist, n - 2 * lam),
                        ode.context());
    auto td = tail_displays(u2, 0.0, {40, 80, 160});
    EXPECT_TRUE(td.pass) << td.diagnostic;
  }
}

TEST(PsiTest, PoincareRandomAnnulus) {
  std::mt19937_64 rng(7);
  for (int n : {2, 3})
    for (double m : {-2.0, 0.0, 2.0})
      for (int k = 0; k < 6; ++k) {
        auto e = exact_cone(n);
        auto spec = random_test_function(rng, e->link);
        auto c = psi_poincare_check(realize(spec, e), m, 15, 30);
        EXPECT_TRUE(c.holds) << spec.describe() << " ratio=" << c.ratio;
      }
}
