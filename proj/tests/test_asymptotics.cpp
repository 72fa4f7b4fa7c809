#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "conelab/asymptotics.hpp"
#include "conelab/radial.hpp"
#include "conelab/selfsimilar.hpp"

using namespace conelab;

namespace {

EndPtr expander_end() {
  auto g = solve_selfsimilar_inner(SelfSimilarKind::expander, 2, 1, 0.5, 0.5, 50);
  EndDescription d;
  d.kind = EndKind::selfsimilar;
  d.n = 2;
  d.graph = g;
  d.slope = g->asymptotic_slope(50);
  d.R_inner = 2;
  return build_end(d);
}

SeparatedFunction slow(EndPtr end, int l, double lambda) {
  auto mode = end->link.mode(l);
  auto ode = radial_coefficients(end, 0, lambda, mode.mu, OpSign::minus);
  auto p = seeded_profile(ode, Branch::slow, 100, 5);
  return separated(end, mode, p, ode.context());
}

}  // namespace

TEST(FlowTest, ExactConeScalesRadius) {
  auto e = exact_cone(3);
  auto f = flow_X(e, 2.5, 4.0);
  EXPECT_EQ(f.r, 10.0);
  EXPECT_FALSE(f.integrated);
  EXPECT_THROW(flow_X(e, 2.5, 0.5), domain_error);
}

TEST(FlowTest, ExpanderEndIntegratedFlow) {
  auto e = expander_end();
  for (double r0 : {3.0, 5.0})
    for (double tau : {1.5, 3.0}) {
      auto f = flow_X(e, r0, tau);
      EXPECT_TRUE(f.integrated);
      EXPECT_LT(f.consistency, 1e-8);
    }
  auto a = flow_X(e, 3, 2);
  auto b = flow_X(e, a.r, 1.5);
  auto c = flow_X(e, 3, 3);
  EXPECT_NEAR(b.r, c.r, 1e-10 * c.r);
  EXPECT_THROW(flow_X(e, 3, 100), domain_error);
}

TEST(LinkMetricTest, ExactConeConstant) {
  auto rep = link_metric(exact_cone(3), geometric_grid(1, 10, 19));
  for (auto& r : rep.rows) EXPECT_EQ(r.scale, 1.0);
  EXPECT_TRUE(rep.pass);
}

TEST(LinkMetricTest, PerturbedConeClosedFormAndShape) {
  double delta = 0.2;
  for (int n : {2, 3}) {
    auto e = perturbed_cone(n, delta, 2.0);
    auto rep = link_metric(e, geometric_grid(1, 10, 19));
    double RL = rep.R_L;
    for (auto& r : rep.rows) EXPECT_NEAR(r.scale, 1 + delta / (r.tau * r.tau * RL * RL), 1e-14);
    EXPECT_GE(rep.r_squared, 0.99);
    EXPECT_TRUE(rep.bound_holds) << rep.diagnostic;
    // ln(1 + 2 delta x / R_L^2) has slope 2 delta / R_L^2 at x = 0
    EXPECT_NEAR(rep.lambda_fit, 2 * delta / (RL * RL), 0.1 * 2 * delta / (RL * RL));
  }
}

TEST(LinkMetricTest, CsvHeader) {
  auto rep = link_metric(perturbed_cone(2, 0.2, 2.0), {1, 2, 4});
  std::ostringstream os;
  write_link_metric_csv(os, rep);
  EXPECT_EQ(os.str().substr(0, os.str().find('\n')), "tau_or_R,scale_or_L2gap,bound");
}

TEST(TraceTest, SlowBranchDegreeZero) {
  for (auto end : {exact_cone(3), perturbed_cone(3, 0.2, 2.0)}) {
    auto u = slow(end, 1, 0.0);
    auto t = trace_at_infinity(u, 0);
    EXPECT_FALSE(t.zero);
    EXPECT_NEAR(t.coefficient, 1.0, 1e-8);
    EXPECT_NEAR(t.alpha2, u.mode.norm2, 1e-6 * u.mode.norm2);
    EXPECT_NEAR(t.rate, 2.0, 0.1);
    // agrees with the surface-integral limit
    auto td = tail_displays(u, 0.0, {10, 20});
    EXPECT_NEAR(t.alpha2, td.alpha2, 0.01 * td.alpha2);
  }
}

TEST(TraceTest, DegreeConsistency) {
  auto u = slow(exact_cone(3), 1, 0.0);
  auto hi = trace_at_infinity(u, 1);
  EXPECT_TRUE(hi.zero);
  EXPECT_NEAR(hi.measured_degree, 0.0, 0.01);
  EXPECT_THROW(trace_at_infinity(u, -0.5), precondition_error);
  EXPECT_THROW(trace_at_infinity(u, -1), precondition_error);
}

TEST(TraceTest, LinearBranchDegreeOne) {
  auto u = slow(exact_cone(3), 1, 0.5);
  auto t = trace_at_infinity(u, 1);
  EXPECT_FALSE(t.zero);
  EXPECT_NEAR(t.coefficient, 1.0, 1e-10);
  EXPECT_NEAR(t.measured_degree, 1.0, 1e-6);
  EXPECT_THROW(trace_at_infinity(u, 0.5), precondition_error);
}

TEST(TraceTest, GaussianDecayHasZeroTrace) {
  auto end = exact_cone(2);
  auto ode = radial_coefficients(end, 0, -0.5, 0, OpSign::plus);
  auto p = seeded_profile(ode, Branch::gaussian, 30, 5);
  auto u = separated(end, end->link.constant_mode(), p, ode.context());
  auto t = trace_at_infinity(u, 0);
  EXPECT_TRUE(t.zero);
  EXPECT_EQ(t.alpha2, 0.0);
}

TEST(TraceTest, Idempotence) {
  auto end = exact_cone(3);
  auto u = separated(end, end->link.mode(1),
                     std::make_shared<ExpPolyProfile>(std::vector<ExpPolyProfile::Term>{{2.5, 0.0, 0.0}}));
  auto t = trace_at_infinity(u, 0);
  EXPECT_NEAR(t.coefficient, 2.5, 1e-14);
  EXPECT_TRUE(t.exact);
}

TEST(HomogeneityBoundTest, TrivialCaseIsZero) {
  auto end = exact_cone(3);
  for (int idx : {0, 1}) {
    auto u = separated(end, end->link.mode(idx), std::make_shared<PowerProfile>(0.0));
    auto rep = verify_homogeneity_bound(u, {10, 20, 40});
    EXPECT_TRUE(rep.trivial);
    EXPECT_TRUE(rep.holds);
    for (auto& r : rep.rows) EXPECT_EQ(r.lhs, 0.0);
  }
}

TEST(HomogeneityBoundTest, SlowBranchWellInsideBound) {
  for (auto end : {exact_cone(3), perturbed_cone(3, 0.2, 2.0)}) {
    auto u = slow(end, 1, 0.0);
    auto rep = verify_homogeneity_bound(u, {10, 20, 40});
    EXPECT_TRUE(rep.holds) << rep.diagnostic;
    EXPECT_LT(rep.measured_constant, 1.0);
    std::ostringstream os;
    write_homogeneity_csv(os, rep);
    EXPECT_EQ(os.str().substr(0, os.str().find('\n')), "tau_or_R,scale_or_L2gap,bound");
  }
}
