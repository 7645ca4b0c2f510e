#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "ecpricing/signature_lp.hpp"

using namespace ecpricing;

namespace {

TimeGrid grid(std::size_t T) { return TimeGrid{T, 1.0}; }

void expect_strong_duality(const ConstraintBlock& b, const SignatureSolution& s, double tol = 1e-6) {
  EXPECT_NEAR(s.dual_objective(b), s.objective, tol * std::max(1.0, std::abs(s.objective))) << b.id;
  for (double mu : s.bound_duals) EXPECT_GE(mu, 0.0);
}

}  // namespace

TEST(FlexBaseload, NoWindowPinsProfile) {
  FlexBaseloadSpec spec{{1.0, 2.0, 0.5}, {}, 0.0, 3.0};
  const auto b = build_flex_baseload(spec, grid(3));
  EXPECT_EQ(b.variables.size(), 6u);
  const std::vector<double> x{5.0, 1.0, 3.0};
  const auto s = solve_signature_lp(b, x);
  for (std::size_t t = 0; t < 3; ++t) EXPECT_NEAR(s.profile[t], spec.baseload[t], 1e-9);
  expect_strong_duality(b, s);
}

TEST(FlexBaseload, ThreePeriodToyMatchesVertexEnumeration) {
  FlexBaseloadSpec spec{{1.0, 1.0, 1.0}, {0, 1, 2}, 0.0, 2.0};
  const auto b = build_flex_baseload(spec, grid(3));
  const std::vector<double> x{3.0, 1.0, 2.0};

  // Vertices of {l in [0,2]^3, sum l = 3}: two coordinates at a bound, the third free.
  double best = INFINITY;
  std::vector<double> best_l;
  for (int free = 0; free < 3; ++free)
    for (double a : {0.0, 2.0})
      for (double c : {0.0, 2.0}) {
        std::vector<double> l(3);
        int k = 0;
        for (int i = 0; i < 3; ++i)
          if (i != free) l[i] = (k++ == 0) ? a : c;
        l[free] = 3.0 - std::accumulate(l.begin(), l.end(), 0.0);
        if (l[free] < 0.0 || l[free] > 2.0) continue;
        const double cost = x[0] * l[0] + x[1] * l[1] + x[2] * l[2];
        if (cost < best) best = cost, best_l = l;
      }
  ASSERT_NEAR(best, 4.0, 1e-12);

  const auto s = solve_signature_lp(b, x);
  EXPECT_NEAR(s.objective, 4.0, 1e-9);
  for (std::size_t t = 0; t < 3; ++t) EXPECT_NEAR(s.profile[t], best_l[t], 1e-9);
  EXPECT_EQ(best_l, (std::vector<double>{0.0, 2.0, 1.0}));
  expect_strong_duality(b, s);
}

TEST(FlexBaseload, FlatPricesGiveBaseloadCost) {
  FlexBaseloadSpec spec{{0.3, 0.7, 0.4, 0.6}, {1, 2}, 0.1, 1.0};
  const auto b = build_flex_baseload(spec, grid(4));
  const std::vector<double> x(4, 1.7);
  const auto s = solve_signature_lp(b, x);
  EXPECT_NEAR(s.objective, 1.7 * 2.0, 1e-9);
}

TEST(FlexBaseload, BoundsNotContainingBaseloadThrow) {
  FlexBaseloadSpec spec{{1.0, 3.0}, {0, 1}, 0.0, 2.0};
  EXPECT_THROW(build_flex_baseload(spec, grid(2)), InfeasibleSpec);
  spec.flex_window = {5};
  spec.load_max = 4.0;
  EXPECT_THROW(build_flex_baseload(spec, grid(2)), InvalidArgument);
}

TEST(Pv, FixedProfile) {
  const auto b = build_pv({{0.0, 1.0, 2.0}}, grid(3));
  const auto s = solve_signature_lp(b, std::vector<double>{1.0, 1.0, 1.0});
  EXPECT_NEAR(s.objective, -3.0, 1e-12);
  EXPECT_EQ(s.profile, (std::vector<double>{-0.0, -1.0, -2.0}));
  expect_strong_duality(b, s);

  const auto z = solve_signature_lp(build_pv({{0.0, 0.0}}, grid(2)), std::vector<double>{4.0, -1.0});
  EXPECT_EQ(z.profile, (std::vector<double>{0.0, 0.0}));
}

TEST(Pv, LengthMismatchThrows) { EXPECT_THROW(build_pv({{1.0}}, grid(2)), InvalidArgument); }

TEST(Battery, TwoPeriodToyMatchesEnumeration) {
  BatterySpec spec{1.0, -1.0, 0.0, 2.0, 1.0};
  const auto b = build_battery(spec, grid(2));
  const std::vector<double> x{2.0, 1.0};
  // Extreme patterns b in {-1, 1}^2 that return to E0.
  double best = INFINITY;
  for (double b0 : {-1.0, 0.0, 1.0})
    for (double b1 : {-1.0, 0.0, 1.0}) {
      const double e0 = 1.0 + b0, e1 = e0 + b1;
      if (e0 < 0 || e0 > 2 || std::abs(e1 - 1.0) > 1e-12) continue;
      best = std::min(best, x[0] * b0 + x[1] * b1);
    }
  ASSERT_EQ(best, -1.0);
  const auto s = solve_signature_lp(b, x);
  EXPECT_NEAR(s.objective, -1.0, 1e-9);
  EXPECT_NEAR(s.profile[0], -1.0, 1e-9);
  EXPECT_NEAR(s.profile[1], 1.0, 1e-9);
  expect_strong_duality(b, s);
}

TEST(Battery, FrozenAndFlat) {
  const auto frozen = build_battery({0.0, 0.0, 0.0, 2.0, 1.0}, grid(4));
  const auto s = solve_signature_lp(frozen, std::vector<double>{1.0, 3.0, 2.0, 5.0});
  for (double p : s.profile) EXPECT_NEAR(p, 0.0, 1e-12);

  const auto b = build_battery({2.0, -2.0, 0.0, 5.0, 2.0}, grid(6));
  const auto f = solve_signature_lp(b, std::vector<double>(6, 0.8));
  EXPECT_NEAR(f.objective, 0.0, 1e-9);
  EXPECT_NEAR(std::accumulate(f.profile.begin(), f.profile.end(), 0.0), 0.0, 1e-9);
}

TEST(Battery, InvalidSpecThrows) {
  EXPECT_THROW(build_battery({1.0, 0.5, 0.0, 2.0, 1.0}, grid(2)), InfeasibleSpec);
  EXPECT_THROW(build_battery({1.0, -1.0, 0.0, 2.0, 3.0}, grid(2)), InfeasibleSpec);
}

TEST(HeatPump, TwoPeriodToyClosedForm) {
  // loss = dt/(RC) = 0.5, gain = dt*cop/C = 1. tau_1 = 15 + q_1 must lie in
  // [19, 21]; the terminal condition gives q_2 = 7.5 - q_1/2, so the cost
  // q_1 + 2 q_2 = 15 for every feasible q_1.
  HeatPumpSpec spec{2.0, 1.0, 2.0, 20.0, 19.0, 21.0, 6.0};
  const std::vector<double> tex{10.0, 10.0};
  const auto b = build_heatpump(spec, grid(2), tex, 10.0);
  const auto s = solve_signature_lp(b, std::vector<double>{1.0, 2.0});
  EXPECT_NEAR(s.objective, 15.0, 1e-9);
  EXPECT_GE(s.profile[0], 4.0 - 1e-9);
  EXPECT_LE(s.profile[0], 6.0 + 1e-9);
  EXPECT_NEAR(s.profile[1], 7.5 - s.profile[0] / 2.0, 1e-9);
  expect_strong_duality(b, s);
}

TEST(HeatPump, TooWeakForColdDayThrows) {
  HeatPumpSpec spec{2.0, 1.0, 2.0, 20.0, 19.0, 21.0, 3.0};
  const std::vector<double> tex{10.0, 10.0};
  EXPECT_THROW(build_heatpump(spec, grid(2), tex, 10.0), InfeasibleSpec);
}

TEST(HeatPump, EquilibriumNeedsNoPower) {
  HeatPumpSpec spec{3.0, 5.0, 2.0, 20.0, 20.0, 20.0, 2.0};
  const std::vector<double> tex(4, 20.0);
  const auto b = build_heatpump(spec, grid(4), tex, 20.0);
  const auto s = solve_signature_lp(b, std::vector<double>{1.0, 2.0, 3.0, 4.0});
  for (double p : s.profile) EXPECT_NEAR(p, 0.0, 1e-9);
}

TEST(HeatPump, HigherCopNeverCostsMore) {
  const std::vector<double> tex{2.0, 0.0, -1.0, 3.0, 5.0, 4.0};
  const std::vector<double> x{1.0, 0.5, 2.0, 1.5, 0.7, 1.1};
  double prev = INFINITY;
  for (double cop : {2.0, 2.5, 3.0, 4.0}) {
    const auto b = build_heatpump({cop, 5.0, 2.0, 20.0, 19.0, 21.0, 4.0}, grid(6), tex, 5.0);
    const auto s = solve_signature_lp(b, x);
    EXPECT_LE(s.objective, prev + 1e-9);
    prev = s.objective;
    expect_strong_duality(b, s);
  }
}

TEST(Ev, RechargesInCheapestPluggedPeriod) {
  EvSpec spec{1.0, 0.0, 0.0, 2.0, 1.0, {1, 0, 1}, 1.0};
  const auto b = build_ev(spec, grid(3));
  const auto s = solve_signature_lp(b, std::vector<double>{1.0, 0.1, 2.0});
  // v_0 + v_2 = 1 with s_0 = 1 + v_0 <= 2; cheapest is all in period 0.
  EXPECT_NEAR(s.objective, 1.0, 1e-9);
  EXPECT_NEAR(s.profile[0], 1.0, 1e-9);
  EXPECT_NEAR(s.profile[1], 0.0, 1e-9);
  EXPECT_NEAR(s.profile[2], 0.0, 1e-9);
  expect_strong_duality(b, s);
}

TEST(Ev, NeverConnectedIsIdle) {
  const auto b = build_ev({2.0, -2.0, 0.0, 4.0, 2.0, {0, 0, 0}, 0.0}, grid(3));
  const auto s = solve_signature_lp(b, std::vector<double>{1.0, 2.0, 3.0});
  for (double p : s.profile) EXPECT_NEAR(p, 0.0, 1e-12);
}

TEST(Ev, NetEnergyEqualsDriveDrain) {
  const auto b = build_ev({3.0, -3.0, 2.0, 20.0, 10.0, {1, 1, 0, 0, 0, 1, 1, 1}, 1.5}, grid(8));
  const auto s = solve_signature_lp(b, std::vector<double>{2.0, 1.0, 5.0, 5.0, 5.0, 0.5, 3.0, 2.5});
  EXPECT_NEAR(std::accumulate(s.profile.begin(), s.profile.end(), 0.0), 4.5, 1e-9);
  expect_strong_duality(b, s);
}

TEST(Ev, UnrechargeableDriveThrows) {
  EXPECT_THROW(build_ev({1.0, 0.0, 0.0, 10.0, 5.0, {1, 0, 0, 0}, 2.0}, grid(4)), InfeasibleSpec);
}

TEST(SignatureLp, PriceScalingLeavesObjectiveProportional) {
  const auto b = build_battery({2.0, -2.0, 0.0, 5.0, 2.0}, grid(5));
  const std::vector<double> x{0.3, 1.2, 0.8, 2.0, 0.1};
  const auto s1 = solve_signature_lp(b, x);
  std::vector<double> x3(x);
  for (double& v : x3) v *= 3.0;
  const auto s3 = solve_signature_lp(b, x3);
  EXPECT_NEAR(s3.objective, 3.0 * s1.objective, 1e-8);
}

TEST(SignatureLp, RandomPricesSatisfyStrongDuality) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 3.0);
  const std::size_t T = 24;
  std::vector<double> tex(T), pv(T), base(T);
  for (std::size_t t = 0; t < T; ++t) {
    tex[t] = 5.0 + 4.0 * std::sin(t / 4.0);
    pv[t] = std::max(0.0, std::sin((double(t) - 6.0) / 12.0 * 3.14159));
    base[t] = 0.3 + 0.2 * std::cos(t / 3.0);
  }
  std::vector<int> plug(T, 1);
  for (std::size_t t = 8; t < 17; ++t) plug[t] = 0;
  std::vector<std::size_t> window{17, 18, 19, 20, 21};
  const std::vector<ConstraintBlock> blocks{
      build_flex_baseload({base, window, 0.0, 1.5}, grid(T)),
      build_pv({pv}, grid(T)),
      build_battery({5.0, -5.0, 1.0, 10.0, 5.0}, grid(T)),
      build_heatpump({3.0, 5.0, 2.0, 20.0, 19.0, 21.0, 4.0}, grid(T), tex, 9.0),
      build_ev({7.0, 0.0, 5.0, 40.0, 25.0, plug, 1.0}, grid(T)),
  };
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> x(T);
    for (double& v : x) v = u(rng);
    for (const auto& b : blocks) expect_strong_duality(b, solve_signature_lp(b, x));
  }
}

TEST(SignatureLp, WrongPriceLengthThrows) {
  const auto b = build_pv({{1.0, 1.0}}, grid(2));
  EXPECT_THROW(solve_signature_lp(b, std::vector<double>{1.0}), InvalidArgument);
}
