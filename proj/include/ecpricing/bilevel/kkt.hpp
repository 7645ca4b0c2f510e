#pragma once

// KKT embedding of a signature LP into an upper-level MILP.
//
// Convention for  min c'v  s.t.  A v = b,  v_j >= l_j (mu_lo),  v_j <= u_j (mu_hi):
//   stationarity   c - A'lambda - mu_lo + mu_hi = 0
//   dual objective b'lambda + l'mu_lo - u'mu_hi
// where c_j is the upper-level price variable on the link variable of each
// period and zero elsewhere.

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ecpricing/milp/model.hpp"
#include "ecpricing/signatures.hpp"

namespace ecpricing::bilevel {

using milp::LinearExpr;
using milp::MilpModel;
using milp::VarId;

struct ComplementarityPair {
  std::size_t inequality;  // index into ConstraintBlock::inequalities
  VarId dual;              // mu >= 0
  VarId primal;            // the bounded variable
  BoundSide side;
  double bound;
  double primal_big_m;     // +inf when no finite bound width is known
};

/// How the multiplier of one bound row is represented in the model.
struct BoundDual {
  enum class Kind {
    paired,        // mu >= 0 with a complementarity pair
    nonneg,        // mu >= 0; slack is identically zero, no pair needed
    zero,          // slack is a positive constant, so mu = 0
    merged_lower,  // fixed variable: free multiplier nu, mu_lo = max(nu, 0)
    merged_upper   // fixed variable: mu_hi = max(-nu, 0)
  };
  Kind kind = Kind::zero;
  VarId var{};
};

struct KktBlock {
  std::string id;
  std::vector<VarId> primal;          // one per block variable
  std::vector<VarId> link;            // primal variable of each period
  std::vector<VarId> equality_duals;  // lambda per equality row
  std::vector<BoundDual> bound_duals; // per inequality row
  std::vector<ComplementarityPair> pairs;
  std::size_t eliminated_pairs = 0;
  LinearExpr dual_objective;
  std::vector<VarId> binaries;  // filled by bigm_linearize

  double mu_value(std::size_t inequality, std::span<const double> values) const {
    const auto& d = bound_duals.at(inequality);
    switch (d.kind) {
      case BoundDual::Kind::paired:
      case BoundDual::Kind::nonneg: return values[d.var.index];
      case BoundDual::Kind::zero: return 0.0;
      case BoundDual::Kind::merged_lower: return std::max(values[d.var.index], 0.0);
      case BoundDual::Kind::merged_upper: return std::max(-values[d.var.index], 0.0);
    }
    return 0.0;
  }
};

/// Add primal variables, original rows, dual variables and stationarity rows
/// of `block` to `model`. `price_vars` are the upper-level price variables,
/// one per period. Complementarity is recorded as pairs, not yet linearized.
inline KktBlock derive_kkt(const ConstraintBlock& block, std::span<const VarId> price_vars, MilpModel& model,
                           const std::string& prefix) {
  block.validate();
  const std::size_t T = block.horizon();
  if (price_vars.size() != T) throw InvalidArgument(block.id + ": price symbol count does not match horizon");

  KktBlock kkt;
  kkt.id = block.id;
  const std::size_t nv = block.variables.size();

  // Variables pinned by a single-variable equality row.
  std::vector<std::optional<double>> pinned(nv);
  for (const auto& row : block.equalities)
    if (row.terms.size() == 1 && row.terms[0].coef != 0.0) pinned[row.terms[0].var] = row.rhs / row.terms[0].coef;

  for (std::size_t j = 0; j < nv; ++j) {
    const auto [lo, hi] = block.variable_bounds(j);
    kkt.primal.push_back(model.add_variable(prefix + block.variables[j], lo, hi));
  }
  for (auto v : block.link) kkt.link.push_back(kkt.primal[v]);

  for (const auto& row : block.equalities) {
    LinearExpr e;
    for (const auto& t : row.terms) e.add(kkt.primal[t.var], t.coef);
    model.add_constraint(prefix + row.name, e, milp::Sense::eq, row.rhs);
    kkt.equality_duals.push_back(model.add_variable("lam." + prefix + row.name, -INFINITY, INFINITY));
    kkt.dual_objective.add(kkt.equality_duals.back(), row.rhs);
  }

  // Stationarity: start with c_j - A'lambda.
  std::vector<LinearExpr> stationarity(nv);
  for (std::size_t t = 0; t < T; ++t) stationarity[block.link[t]].add(price_vars[t], 1.0);
  for (std::size_t i = 0; i < block.equalities.size(); ++i)
    for (const auto& term : block.equalities[i].terms) stationarity[term.var].add(kkt.equality_duals[i], -term.coef);

  kkt.bound_duals.resize(block.inequalities.size());
  std::vector<std::optional<VarId>> merged(nv);
  for (std::size_t i = 0; i < block.inequalities.size(); ++i) {
    const auto& row = block.inequalities[i];
    const auto [lo, hi] = block.variable_bounds(row.var);
    const double sign = row.side == BoundSide::lower ? 1.0 : -1.0;  // + value*mu_lo, - value*mu_hi
    auto& rep = kkt.bound_duals[i];

    if (lo == hi) {
      // Fixed variable: the two bound rows act as one equality with a free multiplier.
      if (!merged[row.var]) {
        merged[row.var] = model.add_variable("nu." + prefix + block.variables[row.var], -INFINITY, INFINITY);
        stationarity[row.var].add(*merged[row.var], -1.0);
        kkt.dual_objective.add(*merged[row.var], lo);
      }
      rep = {row.side == BoundSide::lower ? BoundDual::Kind::merged_lower : BoundDual::Kind::merged_upper,
             *merged[row.var]};
      ++kkt.eliminated_pairs;
      continue;
    }

    if (pinned[row.var]) {
      const double slack = sign * (*pinned[row.var] - row.value);
      if (slack > 1e-9) {
        rep = {BoundDual::Kind::zero, {}};
        ++kkt.eliminated_pairs;
        continue;
      }
      rep = {BoundDual::Kind::nonneg, model.add_variable("mu." + prefix + row.name, 0.0, INFINITY)};
      ++kkt.eliminated_pairs;
    } else {
      rep = {BoundDual::Kind::paired, model.add_variable("mu." + prefix + row.name, 0.0, INFINITY)};
      const double width = row.side == BoundSide::lower ? hi - row.value : row.value - lo;
      kkt.pairs.push_back({i, rep.var, kkt.primal[row.var], row.side, row.value,
                           std::isfinite(width) ? width : INFINITY});
    }
    stationarity[row.var].add(rep.var, -sign);
    kkt.dual_objective.add(rep.var, sign * row.value);
  }

  for (std::size_t j = 0; j < nv; ++j)
    model.add_constraint("stat." + prefix + block.variables[j], stationarity[j], milp::Sense::eq, 0.0);
  return kkt;
}

/// Big-M values for the complementarity linearization. Bound-derived primal
/// values are exact; the fallbacks are doubled when an audit trips.
struct BigMPolicy {
  double dual = 1e4;
  std::optional<double> primal_fallback = 1e4;

  BigMPolicy doubled() const {
    BigMPolicy p = *this;
    p.dual *= 2.0;
    if (p.primal_fallback) *p.primal_fallback *= 2.0;
    return p;
  }
};

/// mu <= M_dual * z and slack <= M_primal * (1 - z) for every pair. Returns
/// the number of binaries added.
inline std::size_t bigm_linearize(KktBlock& kkt, const BigMPolicy& policy, MilpModel& model,
                                  const std::string& prefix) {
  std::size_t added = 0;
  for (auto& rep : kkt.bound_duals)
    if (rep.kind == BoundDual::Kind::nonneg) model.set_bounds(rep.var, 0.0, policy.dual);
  for (const auto& pair : kkt.pairs) {
    double m_primal = pair.primal_big_m;
    if (!std::isfinite(m_primal)) {
      if (!policy.primal_fallback)
        throw InvalidArgument(kkt.id + ": unbounded slack on a complementarity pair and no big-M override");
      m_primal = *policy.primal_fallback;
    }
    const std::string name = model.variable(pair.dual).name.substr(3);  // strip "mu."
    const VarId z = model.add_binary("z." + name);
    kkt.binaries.push_back(z);
    model.set_bounds(pair.dual, 0.0, policy.dual);
    LinearExpr dual_side;
    dual_side.add(pair.dual, 1.0).add(z, -policy.dual);
    model.add_constraint("cd." + name, dual_side, milp::Sense::le, 0.0);
    // slack = v - l (lower) or u - v (upper)
    LinearExpr primal_side;
    if (pair.side == BoundSide::lower) primal_side.add(pair.primal, 1.0).add_constant(-pair.bound);
    else primal_side.add(pair.primal, -1.0).add_constant(pair.bound);
    primal_side.add(z, m_primal);
    model.add_constraint("cp." + name, primal_side, milp::Sense::le, m_primal);
    ++added;
  }
  (void)prefix;
  return added;
}

/// Slack of a pair at a solution.
inline double pair_slack(const ComplementarityPair& p, std::span<const double> values) {
  const double v = values[p.primal.index];
  return p.side == BoundSide::lower ? v - p.bound : p.bound - v;
}

struct BigMAuditResult {
  std::size_t near_dual = 0;    // multipliers within 1% of M_dual
  std::size_t near_primal = 0;  // slacks within 1% of a fallback M_primal
  double max_dual_ratio = 0.0;
  bool passed() const noexcept { return near_dual == 0 && near_primal == 0; }
};

/// Flags multipliers and fallback-bounded slacks that sit within 1% of their
/// big-M, meaning the bound may be cutting off better solutions.
inline BigMAuditResult audit_bigm(const KktBlock& kkt, const BigMPolicy& policy, std::span<const double> values) {
  BigMAuditResult r;
  auto check_dual = [&](VarId v) {
    const double ratio = std::abs(values[v.index]) / policy.dual;
    r.max_dual_ratio = std::max(r.max_dual_ratio, ratio);
    if (ratio >= 0.99) ++r.near_dual;
  };
  for (const auto& rep : kkt.bound_duals)
    if (rep.kind == BoundDual::Kind::paired || rep.kind == BoundDual::Kind::nonneg) check_dual(rep.var);
  for (const auto& p : kkt.pairs)
    if (!std::isfinite(p.primal_big_m) && policy.primal_fallback && pair_slack(p, values) >= 0.99 * *policy.primal_fallback)
      ++r.near_primal;
  return r;
}

inline BigMAuditResult& operator+=(BigMAuditResult& a, const BigMAuditResult& b) {
  a.near_dual += b.near_dual;
  a.near_primal += b.near_primal;
  a.max_dual_ratio = std::max(a.max_dual_ratio, b.max_dual_ratio);
  return a;
}

/// Strong-duality payment of one prosumer: sum_k weight_k * dual objective_k.
/// Equals sum_t x_t y_t at lower-level optimality.
inline LinearExpr payment_expression(std::span<const KktBlock> blocks, std::span<const double> weights) {
  if (blocks.size() != weights.size()) throw InvalidArgument("payment_expression: one weight per signature required");
  LinearExpr e;
  for (std::size_t k = 0; k < blocks.size(); ++k) e.add(blocks[k].dual_objective, weights[k]);
  return e;
}

}  // namespace ecpricing::bilevel
