#pragma once

// Direct solve of one signature LP: minimize sum_t price_t * p_t over the
// block's feasible set. Returns the primal profile and labelled duals.

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "ecpricing/milp/solver.hpp"
#include "ecpricing/signatures.hpp"

namespace ecpricing {

struct SignatureSolution {
  std::vector<double> profile;      // import/export per period (kWh)
  std::vector<double> primal;       // every block variable
  double objective = 0.0;           // DKK
  std::vector<double> equality_duals;  // lambda, aligned with block.equalities
  std::vector<double> bound_duals;     // mu >= 0, aligned with block.inequalities

  /// Dual objective: b'lambda + sum_lower value*mu - sum_upper value*mu.
  double dual_objective(const ConstraintBlock& block) const {
    double d = 0.0;
    for (std::size_t i = 0; i < block.equalities.size(); ++i) d += block.equalities[i].rhs * equality_duals[i];
    for (std::size_t i = 0; i < block.inequalities.size(); ++i) {
      const auto& row = block.inequalities[i];
      d += (row.side == BoundSide::lower ? row.value : -row.value) * bound_duals[i];
    }
    return d;
  }
};

/// Build the LP of a block at fixed prices as a (continuous) MilpModel.
inline milp::MilpModel signature_lp_model(const ConstraintBlock& block, std::span<const double> prices) {
  milp::MilpModel m;
  std::vector<milp::VarId> v;
  v.reserve(block.variables.size());
  for (std::size_t j = 0; j < block.variables.size(); ++j) {
    const auto [lo, hi] = block.variable_bounds(j);
    v.push_back(m.add_variable(block.variables[j], lo, hi));
  }
  for (const auto& row : block.equalities) {
    milp::LinearExpr e;
    for (const auto& t : row.terms) e.add(v[t.var], t.coef);
    m.add_constraint(row.name, e, milp::Sense::eq, row.rhs);
  }
  milp::LinearExpr obj;
  for (std::size_t t = 0; t < block.horizon(); ++t) obj.add(v[block.link[t]], prices[t]);
  m.set_objective(obj);
  m.seal();
  return m;
}

inline SignatureSolution solve_signature_lp(const ConstraintBlock& block, std::span<const double> prices,
                                            const milp::SolveOptions& options = {},
                                            const milp::Backend& backend = milp::default_backend()) {
  block.validate();
  if (prices.size() != block.horizon())
    throw InvalidArgument(block.id + ": price vector has length " + std::to_string(prices.size()) + ", expected " +
                          std::to_string(block.horizon()));
  for (double x : prices)
    if (!std::isfinite(x)) throw InvalidArgument(block.id + ": non-finite price");

  const milp::MilpModel model = signature_lp_model(block, prices);
  const milp::MilpSolution sol = milp::solve(model, options, backend);
  if (sol.status == milp::SolveStatus::infeasible)
    throw InfeasibleSpec(block.id, "signature LP is infeasible");
  if (sol.status == milp::SolveStatus::unbounded) throw SolverError(block.id + ": signature LP is unbounded");
  if (sol.status != milp::SolveStatus::optimal)
    throw SolverError(block.id + ": signature LP ended with status " + std::string(milp::to_string(sol.status)),
                      milp::export_diagnostics(model, options, "signature_lp"));
  if (sol.row_duals.size() != block.equalities.size() || sol.col_duals.size() != block.variables.size())
    throw SolverError(block.id + ": backend returned no duals");

  SignatureSolution out;
  out.primal = sol.values;
  out.profile.resize(block.horizon());
  for (std::size_t t = 0; t < block.horizon(); ++t) out.profile[t] = sol.values[block.link[t]];
  out.objective = 0.0;
  for (std::size_t t = 0; t < block.horizon(); ++t) out.objective += prices[t] * out.profile[t];
  out.equality_duals = sol.row_duals;

  // Reduced cost z_j = c_j - A_j' lambda splits into mu_lo - mu_hi. Attach
  // the positive part to the lower-bound row and the negative part to the
  // upper-bound row of the same variable.
  out.bound_duals.assign(block.inequalities.size(), 0.0);
  std::vector<int> lower_row(block.variables.size(), -1), upper_row(block.variables.size(), -1);
  for (std::size_t i = 0; i < block.inequalities.size(); ++i) {
    const auto& row = block.inequalities[i];
    const auto [lo, hi] = block.variable_bounds(row.var);
    const bool binding = row.side == BoundSide::lower ? row.value == lo : row.value == hi;
    if (!binding) continue;
    (row.side == BoundSide::lower ? lower_row : upper_row)[row.var] = static_cast<int>(i);
  }
  for (std::size_t j = 0; j < block.variables.size(); ++j) {
    const double z = sol.col_duals[j];
    if (z > 0 && lower_row[j] >= 0) out.bound_duals[lower_row[j]] = z;
    else if (z < 0 && upper_row[j] >= 0) out.bound_duals[upper_row[j]] = -z;
  }
  return out;
}

}  // namespace ecpricing
