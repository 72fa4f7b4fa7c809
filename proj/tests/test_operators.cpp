#include <gtest/gtest.h>

#include <cmath>

#include "conelab/operators.hpp"

using namespace conelab;

namespace {
SeparatedFunction radial(EndPtr e, ProfilePtr f, EigenContext c = {}) {
  return separated(e, e->link.constant_mode(), std::move(f), c);
}
}  // namespace

TEST(ApplyOperatorTest, ConstantIsHarmonic) {
  auto e = exact_cone(3);
  auto u = radial(e, std::make_shared<PowerProfile>(0.0));
  for (double r : {1.0, 5.0, 30.0}) EXPECT_EQ(apply_operator({OpSign::minus, 0}, u, r).value(), 0.0);
}

TEST(ApplyOperatorTest, PowerClosedForm) {
  for (int n : {2, 3, 5})
    for (double m : {-2.0, 0.0, 1.5})
      for (double mu : {-3.0, 0.5, 2.0}) {
        auto e = exact_cone(n);
        auto u = radial(e, std::make_shared<PowerProfile>(mu));
        for (double r : {1.5, 7.0, 40.0}) {
          double exact = -0.5 * mu * std::pow(r, mu) + mu * (mu + n + m - 2) * std::pow(r, mu - 2);
          double got = apply_operator({OpSign::minus, m}, u, r).value();
          EXPECT_NEAR(got, exact, 1e-12 * (std::fabs(exact) + std::pow(r, mu)));
          double exact_plus = 0.5 * mu * std::pow(r, mu) + mu * (mu + n + m - 2) * std::pow(r, mu - 2);
          EXPECT_NEAR(apply_operator({OpSign::plus, m}, u, r).value(), exact_plus,
                      1e-12 * (std::fabs(exact_plus) + std::pow(r, mu)));
        }
      }
}

TEST(ApplyOperatorTest, InverseGaussianWeightExact) {
  // L_m Psi_mu - (mu+n+m)/2 Psi_mu = mu(mu+n+m-2) r^-2 Psi_mu
  for (int n : {2, 3})
    for (double m : {-2.0, 0.0, 2.0})
      for (double mu : {-1.0, 0.5, 3.0}) {
        auto e = exact_cone(n);
        auto psi = std::make_shared<TransformedProfile>(std::make_shared<PowerProfile>(0.0),
                                                        TransformKind::inverse_gauss_twist, mu);
        auto u = radial(e, psi);
        for (double r : {2.0, 10.0, 60.0}) {
          Jet j = u.jet(r);
          double lhs = apply_operator_mant({OpSign::minus, m}, u, j, r) - 0.5 * (mu + n + m) * j.f;
          double rhs = mu * (mu + n + m - 2) / (r * r) * j.f;
          EXPECT_NEAR(lhs, rhs, 1e-13 * r * r * std::fabs(j.f));
        }
      }
}

TEST(ApplyOperatorTest, GaussianWeightPlusOperatorBounded) {
  auto e = exact_cone(3);
  for (double m : {0.0, 1.0})
    for (double mu : {-2.0, 1.0}) {
      auto phi =
          std::make_shared<TransformedProfile>(std::make_shared<PowerProfile>(0.0), TransformKind::gauss_twist, mu);
      auto u = radial(e, phi);
      double prev = -1;
      for (double r : {10.0, 20.0, 40.0, 80.0}) {
        Jet j = u.jet(r);
        double v = r * r * std::fabs(apply_operator_mant({OpSign::plus, m}, u, j, r) + 0.5 * (mu + 3 + m) * j.f) /
                   std::fabs(j.f);
        EXPECT_LT(v, 50.0);
        if (prev > 0) EXPECT_NEAR(v, prev, 0.1 * prev + 1e-9);
        prev = v;
      }
    }
}

TEST(ApplyOperatorTest, WarpedCoefficients) {
  double delta = 0.3;
  auto e = perturbed_cone(3, delta, 2.0);
  auto mode = e->link.mode(1);
  auto u = separated(e, mode, std::make_shared<PowerProfile>(1.0));
  double r = 4.0, h = r * r + delta;
  double expect = 2 * (2 * r) / (2 * h) - r / 2 - mode.mu * r / h;
  EXPECT_NEAR(apply_operator({OpSign::minus, 0}, u, r).value(), expect, 1e-14);
}

TEST(ApplyOperatorTest, OutsideDomainThrows) {
  auto e = exact_cone(3);
  auto f = std::make_shared<FunctionProfile>([](double) { return Jet{1, 0, 0, 0}; }, 2.0, 5.0);
  auto u = radial(e, f);
  EXPECT_THROW(apply_operator({}, u, 6.0), conelab::domain_error);
}

TEST(CertifyTest, ConstantHasZeroResidual) {
  auto e = exact_cone(3);
  auto u = radial(e, std::make_shared<PowerProfile>(0.0));
  auto c = certify_almost_eigen(u, {OpSign::minus, 0}, 0.0, 10, 40, ResidualConvention::inverse_square);
  EXPECT_EQ(c.M, 0.0);
  EXPECT_TRUE(c.pass);
}

TEST(CertifyTest, LinearFunctionClosedForm) {
  for (int n : {2, 3, 4}) {
    auto e = exact_cone(n, 1.0, 100.0);
    auto u = radial(e, std::make_shared<PowerProfile>(1.0));
    auto c = certify_almost_eigen(u, {OpSign::minus, 0}, 0.5, 10, 40, ResidualConvention::inverse_square);
    EXPECT_TRUE(c.pass);
    EXPECT_NEAR(c.M, (n - 1) * 40.0 / 41.0, 1e-10);
    EXPECT_NEAR(c.M, n - 1, 10.0 / 10);
  }
}

TEST(CertifyTest, DivergingResidualFails) {
  auto e = exact_cone(3, 1.0, 100.0);
  // r^2 is not an almost eigenfunction for eigenvalue 1/2
  auto u = radial(e, std::make_shared<PowerProfile>(2.0));
  auto c = certify_almost_eigen(u, {OpSign::minus, 0}, 0.5, 10, 40, ResidualConvention::inverse_square);
  EXPECT_FALSE(c.pass);
  EXPECT_NEAR(c.growth_exponent, 2.0, 0.1);
}

TEST(TransformTest, PowerExample) {
  auto e = exact_cone(3, 1.0, 100.0);
  auto u = radial(e, std::make_shared<PowerProfile>(1.0), {{OpSign::minus, 0}, 0.5});
  auto v = transform(u, {TransformKind::power, 1.0});
  EXPECT_EQ(v.ctx.op.m, -4.0);
  EXPECT_EQ(v.ctx.lambda, 1.5);
  EXPECT_NEAR(v.jet(3.0).value().value(), 27.0, 1e-12);
  auto c = certify_almost_eigen(v, v.ctx.op, v.ctx.lambda, 10, 40, ResidualConvention::inverse_square);
  EXPECT_TRUE(c.pass);
  EXPECT_TRUE(std::isfinite(c.M));
}

TEST(TransformTest, PowerToHarmonic) {
  auto e = exact_cone(3, 1.0, 100.0);
  double lam = 0.5;
  auto u = radial(e, std::make_shared<PowerProfile>(1.0), {{OpSign::minus, 0}, lam});
  auto v = transform(u, {TransformKind::power, -lam});
  EXPECT_EQ(v.ctx.op.m, 4 * lam);
  EXPECT_EQ(v.ctx.lambda, 0.0);
  auto c = certify_almost_eigen(v, v.ctx.op, 0.0, 10, 40, natural_convention(TransformKind::power));
  EXPECT_TRUE(c.pass);
}

TEST(TransformTest, TwistCompositionIsPower) {
  auto e = exact_cone(3, 1.0, 100.0);
  auto u = radial(e, std::make_shared<PowerProfile>(1.0), {{OpSign::minus, 0}, 0.5});
  for (double mu : {-1.0, -0.5, 0.5, 1.0}) {
    auto a = transform(transform(u, {TransformKind::gauss_twist, mu}), {TransformKind::inverse_gauss_twist, mu});
    auto b = transform(u, {TransformKind::power, mu});
    EXPECT_DOUBLE_EQ(a.ctx.lambda, b.ctx.lambda);
    EXPECT_DOUBLE_EQ(a.ctx.op.m, b.ctx.op.m);
    EXPECT_EQ(a.ctx.op.sign, b.ctx.op.sign);
    for (double r : {2.0, 17.0, 55.0}) {
      Jet ja = a.jet(r), jb = b.jet(r);
      EXPECT_NEAR(ja.value().log_abs(), jb.value().log_abs(), 1e-12 * r * r);
      double scale = std::exp(ja.log_scale);
      EXPECT_NEAR(ja.f, jb.f, 1e-15);
      EXPECT_NEAR(ja.d1 * scale, jb.d1 * std::exp(jb.log_scale), 1e-14 * scale);
      EXPECT_NEAR(ja.d2 * scale, jb.d2 * std::exp(jb.log_scale), 1e-14 * scale);
    }
  }
}

TEST(TransformTest, PowerRoundTrip) {
  auto e = exact_cone(2);
  auto base = std::make_shared<ExpPolyProfile>(std::vector<ExpPolyProfile::Term>{{1.0, 0.3, 2.0}, {-0.5, 0.1, 0.0}});
  auto u = radial(e, base);
  auto v = transform(transform(u, {TransformKind::power, 0.7}), {TransformKind::power, -0.7});
  for (double r : {1.0, 3.3, 9.0}) {
    Jet a = u.jet(r), b = v.jet(r);
    EXPECT_NEAR(a.value().value(), b.value().value(), 1e-14);
    EXPECT_NEAR(a.deriv().value(), b.deriv().value(), 1e-14);
    EXPECT_NEAR(a.deriv2().value(), b.deriv2().value(), 1e-13);
  }
}

TEST(TransformTest, RecertificationAllKinds) {
  for (int n : {2, 3}) {
    auto e = exact_cone(n, 1.0, 100.0);
    // u = r for L_0 + 1/2, and the plus-side power r^-n-1 (eigenvalue (n+1)/2)
    auto u = radial(e, std::make_shared<PowerProfile>(1.0), {{OpSign::minus, 0}, 0.5});
    auto w = radial(e, std::make_shared<PowerProfile>(-n - 1.0), {{OpSign::plus, 0}, 0.5 * (n + 1)});
    for (double mu : {-1.0, -0.5, 0.5, 1.0}) {
      for (auto k : {TransformKind::power, TransformKind::gauss_twist}) {
        auto v = transform(u, {k, mu});
        auto c = certify_almost_eigen(v, v.ctx.op, v.ctx.lambda, 10, 40, natural_convention(k));
        EXPECT_TRUE(c.pass) << transform_name(k) << " mu=" << mu << " " << c.diagnostic;
      }
      auto wp = transform(w, {TransformKind::power, mu});
      auto cp = certify_almost_eigen(wp, wp.ctx.op, wp.ctx.lambda, 10, 40, natural_convention(TransformKind::power));
      EXPECT_TRUE(cp.pass) << "plus-side power mu=" << mu << " " << cp.diagnostic;
      auto v = transform(w, {TransformKind::inverse_gauss_twist, mu});
      auto c = certify_almost_eigen(v, v.ctx.op, v.ctx.lambda, 10, 40,
                                    natural_convention(TransformKind::inverse_gauss_twist));
      EXPECT_TRUE(c.pass) << "inverse mu=" << mu << " " << c.diagnostic;
    }
  }
}

TEST(TransformTest, ContextChecks) {
  auto e = exact_cone(3);
  auto u = radial(e, std::make_shared<PowerProfile>(1.0), {{OpSign::plus, 0}, 0.5});
  EXPECT_THROW(transform(u, {TransformKind::gauss_twist, 1.0}), conelab::domain_error);
}
