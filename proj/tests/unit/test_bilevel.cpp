#include <gtest/gtest.h>

#include <random>

#include "ecpricing/bilevel/bips.hpp"
#include "ecpricing/environment.hpp"

using namespace ecpricing;
using namespace ecpricing::bilevel;

namespace {

CommunityEconomics flat_econ(std::size_t T, std::size_t N, std::vector<double> spot, double outside = 100.0) {
  CommunityEconomics e;
  e.spot_price = std::move(spot);
  e.import_tariff.assign(T, 0.0);
  e.export_tariff.assign(T, 0.0);
  e.violation_penalty.assign(T, 50.0);
  e.capacity_limit.assign(T, INFINITY);
  e.outside_cost.assign(N, outside);
  return e;
}

ExogenousDay test_day(std::uint64_t seed = 3) {
  auto days = synth_exogenous(1, 2, seed);
  return days[0];
}

}  // namespace

TEST(Kkt, EmbeddingReproducesDirectLpOnCatalogue) {
  const auto day = test_day();
  const auto blocks = build_catalogue(CatalogueConfig{}, day.baseload[0], day);
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> price(0.0, 5.0);
  for (const auto& b : blocks)
    for (int rep = 0; rep < 3; ++rep) {
      std::vector<double> x(24);
      for (double& v : x) v = price(rng);
      const auto direct = solve_signature_lp(b, x);
      const auto c = check_kkt_embedding(b, x);
      ASSERT_EQ(c.status, milp::SolveStatus::optimal) << b.id;
      EXPECT_NEAR(c.embedded, direct.objective, 1e-5 * std::max(1.0, std::abs(direct.objective))) << b.id;
      EXPECT_NEAR(c.dual_objective, c.embedded, 1e-5 * std::max(1.0, std::abs(c.embedded))) << b.id;
      EXPECT_LE(c.max_complementarity, 1e-5) << b.id;
      EXPECT_TRUE(c.audit.passed()) << b.id;
    }
}

TEST(Kkt, PairsCarryExactBoundWidths) {
  const auto b = build_battery(BatterySpec{2.0, -2.0, 1.0, 5.0, 3.0}, TimeGrid{4, 1.0});
  milp::MilpModel m;
  std::vector<VarId> x;
  for (int t = 0; t < 4; ++t) x.push_back(m.add_variable("x" + std::to_string(t), 1.0, 1.0));
  const auto kb = derive_kkt(b, x, m, "b.");
  for (const auto& p : kb.pairs) {
    ASSERT_TRUE(std::isfinite(p.primal_big_m));
    EXPECT_GT(p.primal_big_m, 0.0);
    EXPECT_LE(p.primal_big_m, 4.0 + 1e-12);  // widest range: charge rate or energy band
  }
}

TEST(Kkt, TinyDualBigMIsCaughtByAudit) {
  const auto day = test_day();
  const auto blocks = build_catalogue(CatalogueConfig{}, day.baseload[0], day);
  std::vector<double> x(24);
  for (int t = 0; t < 24; ++t) x[t] = 1.0 + 2.0 * (t % 3);
  BigMPolicy tight;
  tight.dual = 0.05;
  const auto c = check_kkt_embedding(blocks[4], x, tight, {}, milp::default_backend(), 0);  // battery
  // Either the multipliers are cut off entirely or they press against M.
  if (c.status == milp::SolveStatus::optimal) EXPECT_FALSE(c.audit.passed());
  else EXPECT_EQ(c.status, milp::SolveStatus::infeasible);

  // doubling recovers the exact embedding
  const auto d = check_kkt_embedding(blocks[4], x, tight, {}, milp::default_backend(), 20);
  ASSERT_EQ(d.status, milp::SolveStatus::optimal);
  EXPECT_TRUE(d.audit.passed());
  EXPECT_GT(d.doublings, 0);
  EXPECT_NEAR(d.embedded, solve_signature_lp(blocks[4], x).objective, 1e-6);
}

TEST(Bips, FixedLoadOnlyNeedsPaymentsBetweenCostAndOutside) {
  const TimeGrid g{3, 1.0};
  BipsInstance inst;
  inst.blocks = {{build_flex_baseload({{1.0, 2.0, 1.0}, {}, 0.0, 3.0}, g)}};
  inst.weights = {{1.0}};
  inst.econ = flat_econ(3, 1, {1.0, 1.0, 1.0}, 10.0);
  const auto s = solve_bips(inst);
  EXPECT_NEAR(s.community_cost, 4.0, 1e-7);
  EXPECT_GE(s.payments[0], 4.0 - 1e-6);
  EXPECT_LE(s.payments[0], 10.0 + 1e-6);
  EXPECT_NEAR(s.payments[0], s.payments_primal[0], 1e-5);

  inst.econ.outside_cost = {3.0};  // IR below the cost: no budget-balanced price exists
  EXPECT_THROW(solve_bips(inst), InfeasibleBips);
}

TEST(Bips, PricesSteerFlexibleLoadToCheapPeriod) {
  // Two units of load may sit in either period; the cheap one costs 1.
  const TimeGrid g{2, 1.0};
  BipsInstance inst;
  inst.blocks = {{build_flex_baseload({{1.0, 1.0}, {0, 1}, 0.0, 2.0}, g)}};
  inst.weights = {{1.0}};
  inst.econ = flat_econ(2, 1, {1.0, 2.0}, 10.0);
  for (bool coop : {true, false}) {
    BipsSolveOptions o;
    o.cooperative_start = coop;
    const auto s = solve_bips(inst, o);
    EXPECT_NEAR(s.community_cost, 2.0, 1e-6);
    EXPECT_NEAR(s.expected_response[0][0], 2.0, 1e-6);
    EXPECT_NEAR(s.expected_response[0][1], 0.0, 1e-6);
    EXPECT_GE(s.payments[0], 2.0 - 1e-6);
    EXPECT_NEAR(s.payments[0], s.payments_primal[0], 1e-5);
    EXPECT_LE(s.max_lower_level_gap, 1e-5);
    if (coop) {
      EXPECT_TRUE(s.certified_by_bound);
      EXPECT_NEAR(s.lower_bound, 2.0, 1e-9);
    }
  }
}

TEST(Bips, CapacityLimitIsPricedIn) {
  // Load prefers the cheap period but only 1.5 fits under the limit there.
  const TimeGrid g{2, 1.0};
  BipsInstance inst;
  inst.blocks = {{build_flex_baseload({{1.0, 1.0}, {0, 1}, 0.0, 2.0}, g)}};
  inst.weights = {{1.0}};
  inst.econ = flat_econ(2, 1, {1.0, 1.2}, 10.0);
  inst.econ.capacity_limit = {1.5, 1.5};
  const auto s = solve_bips(inst);
  EXPECT_NEAR(s.community_cost, 1.5 * 1.0 + 0.5 * 1.2, 1e-6);
  EXPECT_NEAR(s.excess[0], 0.0, 1e-7);
}

TEST(Bips, MatchesBranchAndBoundOnSmallCommunities) {
  const auto day = test_day(9);
  const auto all0 = build_catalogue(CatalogueConfig{}, day.baseload[0], day);
  const auto all1 = build_catalogue(CatalogueConfig{}, day.baseload[1], day);
  BipsInstance inst;
  inst.blocks = {{all0[0], all0[3], all0[4]}, {all1[1], all1[5]}};
  inst.weights = {{1.0, 1.5, 1.0}, {1.0, 1.0}};
  inst.econ = flat_econ(24, 2, day.spot_price);
  for (auto& v : inst.econ.import_tariff) v = 0.5;
  for (auto& v : inst.econ.export_tariff) v = 0.05;
  inst.econ.capacity_limit.assign(24, 3.0);
  inst.econ.outside_cost = {
      standalone_cost(inst.blocks[0], inst.weights[0], inst.econ, 20.0),
      standalone_cost(inst.blocks[1], inst.weights[1], inst.econ, 20.0)};

  const auto fast = solve_bips(inst);
  BipsSolveOptions o;
  o.cooperative_start = false;
  o.solver.time_limit = 300;
  const auto slow = solve_bips(inst, o);
  EXPECT_NEAR(fast.community_cost, slow.community_cost, 1e-5 * std::max(1.0, std::abs(slow.community_cost)));
  EXPECT_GE(fast.community_cost, fast.lower_bound - 1e-6);
  for (std::size_t n = 0; n < 2; ++n) {
    EXPECT_NEAR(fast.payments[n], fast.payments_primal[n], 1e-5);
    EXPECT_LE(fast.payments[n], inst.econ.outside_cost[n] + 1e-6);
  }
  EXPECT_GE(fast.payments[0] + fast.payments[1], fast.community_cost - 1e-5);
  EXPECT_TRUE(fast.bigm_audit.passed());
}

TEST(Bips, MarginalCostsAreRetailBelowCapacity) {
  const TimeGrid g{3, 1.0};
  BipsInstance inst;
  inst.blocks = {{build_flex_baseload({{1.0, 1.0, 1.0}, {}, 0.0, 2.0}, g)}};
  inst.weights = {{1.0}};
  inst.econ = flat_econ(3, 1, {1.0, 2.0, 3.0});
  for (auto& v : inst.econ.import_tariff) v = 0.5;
  const auto cm = assemble_cooperative(inst);
  const auto cs = milp::solve(cm.model);
  ASSERT_EQ(cs.status, milp::SolveStatus::optimal);
  const auto pi = marginal_costs(cm, cs, 3);
  EXPECT_NEAR(pi[0], 1.5, 1e-9);
  EXPECT_NEAR(pi[1], 2.5, 1e-9);
  EXPECT_NEAR(pi[2], 3.5, 1e-9);
}

TEST(Bips, StandaloneCostOfFixedLoad) {
  const TimeGrid g{2, 1.0};
  const std::vector<ConstraintBlock> blocks{build_flex_baseload({{1.0, 2.0}, {}, 0.0, 3.0}, g), build_pv({{0.0, 3.0}}, g)};
  auto econ = flat_econ(2, 1, {1.0, 1.0});
  econ.import_tariff = {0.5, 0.5};
  econ.export_tariff = {0.1, 0.1};
  // net = {1, -1}: 1 * 1.5 - 1 * 0.9 + fee
  EXPECT_NEAR(standalone_cost(blocks, std::vector<double>{1.0, 1.0}, econ, 20.0), 20.6, 1e-9);
  EXPECT_NEAR(standalone_cost(blocks, std::vector<double>{1.0, 0.0}, econ, 0.0), 4.5, 1e-9);
}

TEST(Bips, InstanceValidation) {
  BipsInstance inst;
  EXPECT_THROW(inst.validate(), InvalidArgument);
  const TimeGrid g{2, 1.0};
  inst.blocks = {{build_pv({{0.0, 1.0}}, g)}};
  inst.weights = {{NAN}};
  inst.econ = flat_econ(2, 1, {1.0, 1.0});
  EXPECT_THROW(inst.validate(), InvalidArgument);
  inst.weights = {{1.0}};
  inst.econ.violation_penalty = {0.5, 0.5};
  EXPECT_THROW(inst.validate(), InvalidArgument);
}
