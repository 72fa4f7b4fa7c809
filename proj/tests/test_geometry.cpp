#include <gtest/gtest.h>

#include <cmath>

#include "conelab/geometry.hpp"

using namespace conelab;

TEST(LinkTest, RayleighQuotientConsistency) {
  for (int n : {2, 3, 4})
    for (double c : {1.0, 0.7}) {
      auto L = LinkSpec::round(n, c, {0, 1, 2, 3});
      for (auto& m : L.modes) {
        if (m.index == 0) {
          EXPECT_EQ(m.mu, 0.0);
          continue;
        }
        EXPECT_NEAR(m.grad_norm2 / m.norm2, m.mu, 1e-14);
        EXPECT_NEAR(m.mu, m.index * (m.index + n - 2) / (c * c), 1e-12);
      }
    }
  EXPECT_NEAR(LinkSpec::round(3).constant_mode().norm2, 4 * kPi, 1e-14);
  EXPECT_NEAR(LinkSpec::round(2).constant_mode().norm2, 2 * kPi, 1e-14);
}

TEST(LinkTest, HarmonicNormsOnTwoSphere) {
  // ||P_2||^2 on the unit sphere = 4 pi / 5
  EXPECT_NEAR(LinkSpec::round(3).harmonic(2).norm2, 4 * kPi / 5, 1e-14);
}

TEST(BuildEndTest, ExactConeHasZeroLambda) {
  auto e = exact_cone(3);
  EXPECT_EQ(e->Lambda(), 0.0);
  EXPECT_TRUE(e->cert.pass);
  auto rep = certify_weakly_conical(*e, geometric_grid(1, 50, 200));
  EXPECT_EQ(rep.sup_grad, 0.0);
  EXPECT_EQ(rep.sup_hess, 0.0);
  EXPECT_TRUE(rep.pass);
}

TEST(BuildEndTest, PerturbedConeLambdaMatchesClosedForm) {
  auto e = perturbed_cone(3, 0.1);
  double oracle = 2 * std::sqrt(2.0) * 0.1;
  EXPECT_NEAR(e->Lambda() / oracle, 1.0, 0.05);
  EXPECT_TRUE(e->cert.pass);
  EXPECT_EQ(e->cert.sup_grad, 0.0);
  EXPECT_NEAR(e->cert.refined_sup_hess / oracle, 1.0, 0.05);
  // Hessian gap is -2 delta g_L: radial part vanishes
  auto gap = e->hessian_gap(4.0);
  EXPECT_NEAR(gap.radial, 0.0, 1e-15);
  EXPECT_NEAR(gap.tangential, -2 * 0.1 / (16 + 0.1), 1e-14);
}

TEST(BuildEndTest, PowerWarpCertifies) {
  EndDescription d;
  d.kind = EndKind::perturbed_cone;
  d.warp = WarpForm::power;
  d.s = 3.0;
  d.delta = 0.2;
  d.R_inner = 2.0;
  auto e = build_end(d);
  EXPECT_TRUE(e->cert.pass);
  EXPECT_GT(e->Lambda(), 0.0);
  EXPECT_THROW(PerturbedCone(0.1, WarpForm::power, 1.0), conelab::domain_error);
}

TEST(BuildEndTest, LargePerturbationFailsAtInnerRadius) {
  EndDescription d;
  d.kind = EndKind::perturbed_cone;
  d.delta = 2.0;
  d.R_inner = 1.5;
  try {
    build_end(d);
    FAIL() << "expected certification failure";
  } catch (const certification_error& err) {
    EXPECT_DOUBLE_EQ(err.radius, 1.5);
    EXPECT_NE(err.quantity.find("Hessian"), std::string::npos);
  }
  auto rep = build_end_unchecked(d).cert;
  EXPECT_FALSE(rep.pass);
  EXPECT_GT(rep.Lambda / (1.5 * 1.5), 0.5);
}

TEST(BuildEndTest, RejectsShortGrid) {
  auto e = exact_cone(3);
  EXPECT_THROW(certify_weakly_conical(*e, geometric_grid(1, 2, 50)), conelab::domain_error);
}

TEST(BuildEndTest, LambdaMonotoneInInnerRadius) {
  double prev = kInf;
  // additive and power warps: sup attained at the outer end or the inner end
  for (double R : {1.5, 2.0, 4.0, 8.0}) {
    EndDescription d;
    d.kind = EndKind::perturbed_cone;
    d.warp = WarpForm::power;
    d.s = 3.0;
    d.delta = 0.3;
    d.R_inner = R;
    d.R_max = 40;
    auto e = build_end(d);
    EXPECT_LE(e->Lambda(), prev * (1 + 1e-12));
    prev = e->Lambda();
    d.warp = WarpForm::additive;
    EXPECT_LE(build_end(d)->Lambda(), perturbed_cone(3, 0.3, 1.5, 40)->Lambda() * (1 + 1e-12));
  }
}

TEST(SphereDataTest, ExactCone) {
  auto e = exact_cone(3);
  auto s = sphere_data(*e, 5.0);
  EXPECT_NEAR(s.area, 100 * kPi, 1e-12);
  EXPECT_NEAR(s.H, 0.4, 1e-15);
  EXPECT_EQ(s.grad_r, 1.0);
  EXPECT_EQ(s.gap_dr_N, 0.0);
  EXPECT_EQ(s.gap_N_X, 0.0);
  EXPECT_THROW(sphere_data(*e, 0.5), conelab::domain_error);
}

TEST(SphereDataTest, PerturbedConeMeanCurvature) {
  double delta = 0.1;
  auto e = perturbed_cone(3, delta);
  for (double rho : {2.0, 5.0, 7.5}) {
    auto s = sphere_data(*e, rho);
    double h = rho * rho + delta;
    EXPECT_NEAR(s.H, 2 * (2 * rho) / (2 * h), 1e-15);
    EXPECT_LE(std::fabs(s.H - 2 / rho), 2 * delta / std::pow(rho, 3) * 2);
    EXPECT_NEAR(s.area, 4 * kPi * h, 1e-12);
  }
}

TEST(SphereDataTest, VectorFieldGapsWithinLambdaBounds) {
  EndDescription d;
  d.kind = EndKind::perturbed_cone;
  d.warp = WarpForm::power;
  d.s = 2.5;
  d.delta = 0.5;
  d.R_inner = 3;
  auto e = build_end(d);
  for (double r : geometric_grid(3, 24, 100)) {
    auto s = sphere_data(*e, r);
    double L = e->Lambda() * std::pow(r, -4);
    EXPECT_LE(s.gap_dr_N, 2 * L + 1e-300);
    EXPECT_LE(s.gap_dr_X, 6 * L + 1e-300);
    EXPECT_LE(s.gap_N_X, 4 * L + 1e-300);
  }
}

namespace {
// a graph with exactly known geometry: the cone u = s rho
struct ConeGraph : GraphProfile {
  double s;
  explicit ConeGraph(double s_) : s(s_) {}
  GraphJet at(double rho) const override { return {s * rho, s, 0.0}; }
  double rho_lo() const override { return 1.0; }
  double rho_hi() const override { return 100.0; }
};
}  // namespace

TEST(SelfSimilarEndTest, ConeGraphIsExactCone) {
  EndDescription d;
  d.kind = EndKind::selfsimilar;
  d.graph = std::make_shared<ConeGraph>(1.0);
  d.slope = 1.0;
  d.R_inner = 2.0;
  d.R_max = 50.0;
  auto e = build_end(d);
  EXPECT_NEAR(e->link.radius, 1 / std::sqrt(2.0), 1e-15);
  for (double r : {2.0, 7.0, 31.0}) {
    auto g = e->at(r);
    EXPECT_NEAR(g.G, 1.0, 1e-14);
    EXPECT_NEAR(g.W, r * r, 1e-10 * r * r);
    EXPECT_NEAR(g.dW, 2 * r, 1e-10 * r);
  }
  EXPECT_LT(e->Lambda(), 1e-8);
}
