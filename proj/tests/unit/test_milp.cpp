#include <gtest/gtest.h>

#include <filesystem>
#include <numeric>
#include <random>

#include "ecpricing/milp/solver.hpp"

using namespace ecpricing;
using namespace ecpricing::milp;

namespace {

// Random knapsack-like MILP with a continuous slack, small enough to enumerate.
struct SmallMilp {
  MilpModel model;
  std::vector<double> value, weight;
  double capacity = 0.0;
};

SmallMilp random_small_milp(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> u(1.0, 10.0);
  SmallMilp s;
  LinearExpr obj, cap;
  std::vector<VarId> z;
  for (int i = 0; i < n; ++i) {
    s.value.push_back(u(rng));
    s.weight.push_back(u(rng));
    z.push_back(s.model.add_binary("z[" + std::to_string(i) + "]"));
    obj.add(z.back(), -s.value.back());
    cap.add(z.back(), s.weight.back());
  }
  s.capacity = 0.4 * std::accumulate(s.weight.begin(), s.weight.end(), 0.0);
  // continuous filler worth 0.5 per unit of unused capacity
  const VarId fill = s.model.add_variable("fill", 0.0, INFINITY);
  cap.add(fill, 1.0);
  obj.add(fill, -0.5);
  s.model.add_constraint("cap", cap, Sense::le, s.capacity);
  s.model.set_objective(obj);
  s.model.seal();
  return s;
}

double enumerate(const SmallMilp& s) {
  const std::size_t n = s.value.size();
  double best = INFINITY;
  for (unsigned mask = 0; mask < (1u << n); ++mask) {
    double v = 0.0, w = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      if (mask >> i & 1u) v += s.value[i], w += s.weight[i];
    if (w > s.capacity) continue;
    best = std::min(best, -v - 0.5 * (s.capacity - w));
  }
  return best;
}

}  // namespace

TEST(Milp, TrivialLp) {
  MilpModel m;
  const auto x = m.add_variable("x", 0.0, 4.0);
  const auto y = m.add_variable("y", 1.0, INFINITY);
  m.add_constraint("c", LinearExpr(x).add(y, 1.0), Sense::ge, 3.0);
  m.set_objective(LinearExpr(x, 1.0).add(y, 2.0));
  m.seal();
  const auto s = solve(m);
  ASSERT_EQ(s.status, SolveStatus::optimal);
  EXPECT_NEAR(s.objective_value, 4.0, 1e-9);
  EXPECT_NEAR(s.values[x.index], 2.0, 1e-9);
  EXPECT_NEAR(s.values[y.index], 1.0, 1e-9);
  EXPECT_EQ(s.gap, 0.0);
}

TEST(Milp, DualsFollowReducedCostConvention) {
  // reduced cost = c - A^T y
  MilpModel m;
  const auto x = m.add_variable("x", 0.0, INFINITY);
  const auto y = m.add_variable("y", 0.0, INFINITY);
  m.add_constraint("r1", LinearExpr(x).add(y, 2.0), Sense::ge, 4.0);
  m.add_constraint("r2", LinearExpr(x, 3.0).add(y, 1.0), Sense::ge, 6.0);
  m.set_objective(LinearExpr(x, 1.0).add(y, 1.0));
  m.seal();
  const auto s = solve(m);
  ASSERT_EQ(s.status, SolveStatus::optimal);
  ASSERT_EQ(s.row_duals.size(), 2u);
  const double c[2] = {1.0, 1.0};
  const double A[2][2] = {{1.0, 2.0}, {3.0, 1.0}};
  for (int j = 0; j < 2; ++j) {
    const double rc = c[j] - A[0][j] * s.row_duals[0] - A[1][j] * s.row_duals[1];
    EXPECT_NEAR(s.col_duals[j], rc, 1e-9);
  }
  // vertex x = 1.6, y = 1.2 with duals 0.4, 0.2
  EXPECT_NEAR(s.row_duals[0], 0.4, 1e-9);
  EXPECT_NEAR(s.row_duals[1], 0.2, 1e-9);
  EXPECT_NEAR(s.objective_value, 4.0 * 0.4 + 6.0 * 0.2, 1e-9);
}

TEST(Milp, RandomSmallMilpsMatchEnumeration) {
  std::mt19937_64 rng(11);
  for (int rep = 0; rep < 20; ++rep) {
    const auto s = random_small_milp(rng, 8);
    const auto sol = solve(s.model);
    ASSERT_EQ(sol.status, SolveStatus::optimal);
    EXPECT_NEAR(sol.objective_value, enumerate(s), 1e-6) << "rep " << rep;
  }
}

TEST(Milp, InfeasibleAndUnbounded) {
  MilpModel a;
  const auto x = a.add_variable("x", 0.0, 1.0);
  a.add_constraint("c", LinearExpr(x), Sense::ge, 2.0);
  a.set_objective(LinearExpr(x));
  a.seal();
  EXPECT_EQ(solve(a).status, SolveStatus::infeasible);

  MilpModel b;
  const auto z = b.add_binary("z");
  b.add_constraint("c1", LinearExpr(z), Sense::ge, 0.4);
  b.add_constraint("c2", LinearExpr(z), Sense::le, 0.6);
  b.set_objective(LinearExpr(z));
  b.seal();
  EXPECT_EQ(solve(b).status, SolveStatus::infeasible);

  MilpModel c;
  const auto y = c.add_variable("y", -INFINITY, INFINITY);
  c.set_objective(LinearExpr(y));
  c.seal();
  EXPECT_EQ(solve(c).status, SolveStatus::unbounded);
}

TEST(Milp, StartIsAcceptedAndDoesNotChangeOptimum) {
  std::mt19937_64 rng(5);
  const auto s = random_small_milp(rng, 10);
  std::vector<double> start(s.model.variables().size(), 0.0);
  start.back() = s.capacity;  // all binaries off, filler fills the capacity
  ASSERT_LE(s.model.max_violation(start), 1e-12);
  const auto a = solve(s.model, {}, default_backend(), &start);
  const auto b = solve(s.model);
  ASSERT_EQ(a.status, SolveStatus::optimal);
  EXPECT_NEAR(a.objective_value, b.objective_value, 1e-9);
}

TEST(Milp, FixedBinariesGiveLp) {
  std::mt19937_64 rng(3);
  const auto s = random_small_milp(rng, 6);
  const auto full = solve(s.model);
  const auto lp = s.model.with_fixed_binaries(full.values);
  EXPECT_EQ(lp.num_binaries(), 0u);
  const auto r = solve(lp);
  ASSERT_EQ(r.status, SolveStatus::optimal);
  EXPECT_NEAR(r.objective_value, full.objective_value, 1e-9);
  EXPECT_FALSE(r.row_duals.empty());
}

TEST(Milp, ModelRejectsBadInput) {
  MilpModel m;
  const auto x = m.add_variable("x", 0.0, 1.0);
  EXPECT_THROW(m.add_variable("x", 0.0, 1.0), InvalidArgument);
  EXPECT_THROW(m.add_variable("y", 2.0, 1.0), InvalidArgument);
  EXPECT_THROW(m.add_variable("w", NAN, 1.0), InvalidArgument);
  EXPECT_THROW(m.add_constraint("c", LinearExpr(VarId{7}), Sense::le, 1.0), InvalidArgument);
  EXPECT_THROW(m.add_constraint("c", LinearExpr(x, INFINITY), Sense::le, 1.0), InvalidArgument);
  m.set_objective(LinearExpr(x));
  m.seal();
  EXPECT_THROW(m.add_variable("v", 0.0, 1.0), InvalidArgument);
  EXPECT_THROW(m.set_bounds(x, 0.0, 2.0), InvalidArgument);
  auto open = m.reopened();
  EXPECT_NO_THROW(open.set_bounds(x, 0.0, 2.0));
}

TEST(Milp, UnknownBackendIsConfigError) {
  EXPECT_NO_THROW(backend_by_name("highs"));
  EXPECT_THROW(backend_by_name("cplex"), ConfigError);
}

TEST(LpFormat, NamesAreSanitized) {
  EXPECT_EQ(detail::lp_name("x[0][3]"), "x.0.3");
  EXPECT_NE(detail::lp_name("1abc").front(), '1');
}

TEST(LpFormat, RoundTripThroughBackendParser) {
  std::mt19937_64 rng(17);
  const auto dir = std::filesystem::temp_directory_path() / "ecpricing_lp_roundtrip";
  std::filesystem::create_directories(dir);
  for (int rep = 0; rep < 10; ++rep) {
    auto s = random_small_milp(rng, 7);
    const auto path = (dir / ("m" + std::to_string(rep) + ".lp")).string();
    write_lp_file(s.model, path);
    const auto direct = solve(s.model);
    const auto parsed = default_backend().solve_file(path, {});
    ASSERT_EQ(parsed.status, SolveStatus::optimal);
    EXPECT_NEAR(parsed.objective_value, direct.objective_value, 1e-7);
  }
  // exported text is deterministic
  std::mt19937_64 a(1), b(1);
  EXPECT_EQ(export_lp(random_small_milp(a, 5).model), export_lp(random_small_milp(b, 5).model));
  std::filesystem::remove_all(dir);
}

TEST(Milp, DiagnosticsExportOnlyWhenConfigured) {
  MilpModel m;
  const auto x = m.add_variable("x", 0.0, 1.0);
  m.set_objective(LinearExpr(x));
  m.seal();
  EXPECT_EQ(export_diagnostics(m, {}, "t"), "");
  SolveOptions o;
  o.diagnostics_dir = (std::filesystem::temp_directory_path() / "ecpricing_diag").string();
  const auto p = export_diagnostics(m, o, "t");
  EXPECT_TRUE(std::filesystem::exists(p));
  std::filesystem::remove_all(o.diagnostics_dir);
}
