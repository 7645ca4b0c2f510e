#pragma once

// Single-level price-setting MILP: community cost minimization over
// per-prosumer prices, with every signature LP replaced by its KKT system and
// payments written through strong duality.

#include <chrono>
#include <cmath>
#include <optional>
#include <algorithm>
#include <string>
#include <vector>

#include "ecpricing/bilevel/kkt.hpp"
#include "ecpricing/milp/solver.hpp"
#include "ecpricing/signature_lp.hpp"

namespace ecpricing::bilevel {

/// The price-setting problem has no feasible price schedule.
class InfeasibleBips : public Error {
 public:
  using Error::Error;
};

struct CommunityEconomics {
  std::vector<double> spot_price;         // DKK/kWh
  std::vector<double> import_tariff;      // DKK/kWh
  std::vector<double> export_tariff;      // DKK/kWh
  std::vector<double> violation_penalty;  // DKK/kWh
  std::vector<double> capacity_limit;     // kWh, +inf for none
  std::vector<double> outside_cost;       // DKK per prosumer
  double price_cap = 10.0;                // DKK/kWh
  double connection_factor = 10.0;        // import/export bound as multiple of the capacity limit

  std::size_t horizon() const noexcept { return spot_price.size(); }

  void validate(std::size_t horizon, std::size_t prosumers) const {
    auto need = [&](const std::vector<double>& v, const char* what) {
      if (v.size() != horizon)
        throw InvalidArgument(std::string("economics: ") + what + " has length " + std::to_string(v.size()) +
                              ", expected " + std::to_string(horizon));
    };
    need(spot_price, "spot_price");
    need(import_tariff, "import_tariff");
    need(export_tariff, "export_tariff");
    need(violation_penalty, "violation_penalty");
    need(capacity_limit, "capacity_limit");
    if (outside_cost.size() != prosumers) throw InvalidArgument("economics: one outside cost per prosumer required");
    double retail_max = 0.0;
    for (std::size_t t = 0; t < horizon; ++t) {
      if (!(spot_price[t] >= 0.0) || !std::isfinite(spot_price[t]))
        throw InvalidArgument("economics: spot price must be finite and >= 0");
      if (!std::isfinite(import_tariff[t]) || !std::isfinite(export_tariff[t]) || !std::isfinite(violation_penalty[t]))
        throw InvalidArgument("economics: tariffs and penalty must be finite");
      if (!(capacity_limit[t] >= 0.0)) throw InvalidArgument("economics: capacity limit must be >= 0");
      retail_max = std::max(retail_max, spot_price[t] + import_tariff[t]);
    }
    for (double a : violation_penalty)
      if (!(a > retail_max)) throw InvalidArgument("economics: violation penalty must exceed the highest retail price");
    for (double c : outside_cost)
      if (!std::isfinite(c)) throw InvalidArgument("economics: non-finite outside cost");
    if (!(price_cap > 0.0) || !std::isfinite(price_cap)) throw InvalidArgument("economics: price_cap must be positive");
    if (!(connection_factor > 0.0)) throw InvalidArgument("economics: connection_factor must be positive");
  }

  /// Community cost of a net load per period, with imports, exports and
  /// excess implied by the sign and size of the net load.
  double cost_of_net_load(std::span<const double> net) const {
    double c = 0.0;
    for (std::size_t t = 0; t < net.size(); ++t) {
      const double im = std::max(net[t], 0.0), ex = std::max(-net[t], 0.0);
      const double pen = std::isfinite(capacity_limit[t]) ? std::max(im - capacity_limit[t], 0.0) : 0.0;
      c += im * (spot_price[t] + import_tariff[t]) - ex * (spot_price[t] - export_tariff[t]) + violation_penalty[t] * pen;
    }
    return c;
  }
};

/// One day's price-setting instance. Blocks and weights are indexed
/// [prosumer][signature].
struct BipsInstance {
  std::vector<std::vector<ConstraintBlock>> blocks;
  std::vector<std::vector<double>> weights;
  CommunityEconomics econ;

  std::size_t prosumers() const noexcept { return blocks.size(); }
  std::size_t horizon() const noexcept { return econ.horizon(); }

  void validate() const {
    if (blocks.empty()) throw InvalidArgument("bips: no prosumers");
    if (weights.size() != blocks.size()) throw InvalidArgument("bips: weight rows do not match prosumers");
    for (std::size_t n = 0; n < blocks.size(); ++n) {
      if (weights[n].size() != blocks[n].size())
        throw InvalidArgument("bips: prosumer " + std::to_string(n) + " has mismatched weights and signatures");
      for (double w : weights[n])
        if (!std::isfinite(w)) throw InvalidArgument("bips: non-finite weight for prosumer " + std::to_string(n));
      for (const auto& b : blocks[n])
        if (b.horizon() != horizon()) throw InvalidArgument("bips: block " + b.id + " has the wrong horizon");
    }
    econ.validate(horizon(), prosumers());
  }
};

struct CommunityVars {
  std::vector<VarId> p_im, p_ex, p_pen;
  LinearExpr cost;
};

/// Connection-point variables, balance against the net load, excess over the
/// capacity limit, and the community cost expression.
inline CommunityVars add_community_rows(milp::MilpModel& m, const CommunityEconomics& econ,
                                        const std::vector<LinearExpr>& net_load) {
  CommunityVars cv;
  for (std::size_t t = 0; t < econ.horizon(); ++t) {
    const std::string s = "[" + std::to_string(t) + "]";
    const double limit = econ.capacity_limit[t];
    const double hi = std::isfinite(limit) ? limit * econ.connection_factor : INFINITY;
    cv.p_im.push_back(m.add_variable("p_im" + s, 0.0, hi));
    cv.p_ex.push_back(m.add_variable("p_ex" + s, 0.0, hi));
    cv.p_pen.push_back(m.add_variable("p_pen" + s, 0.0, std::isfinite(limit) ? hi : 0.0));
    LinearExpr bal;
    bal.add(cv.p_im[t], 1.0).add(cv.p_ex[t], -1.0).add(net_load[t], -1.0);
    m.add_constraint("balance" + s, bal, milp::Sense::eq, 0.0);
    if (std::isfinite(limit)) {
      LinearExpr ex;
      ex.add(cv.p_pen[t], 1.0).add(cv.p_im[t], -1.0);
      m.add_constraint("excess" + s, ex, milp::Sense::ge, -limit);
    }
    cv.cost.add(cv.p_im[t], econ.spot_price[t] + econ.import_tariff[t]);
    cv.cost.add(cv.p_ex[t], -(econ.spot_price[t] - econ.export_tariff[t]));
    cv.cost.add(cv.p_pen[t], econ.violation_penalty[t]);
  }
  return cv;
}

struct BipsModel {
  milp::MilpModel model;
  std::vector<std::vector<VarId>> x, y;                 // [n][t]
  std::vector<VarId> p_im, p_ex, p_pen;                 // [t]
  std::vector<std::vector<std::optional<KktBlock>>> kkt;  // [n][k], empty when the weight is zero
  std::vector<LinearExpr> payments;                     // dual-side payment per prosumer
  LinearExpr community_cost;
  BigMPolicy policy;
  std::size_t binaries = 0;
  std::size_t eliminated_pairs = 0;
};

inline std::string block_prefix(std::size_t n, std::size_t k) {
  return "n" + std::to_string(n) + ".k" + std::to_string(k) + ".";
}

/// Build the single-level MILP. Signatures with weight exactly zero do not
/// affect the response or the payment and are left out.
inline BipsModel assemble_bips(const BipsInstance& inst, const BigMPolicy& policy = {}) {
  inst.validate();
  const std::size_t N = inst.prosumers(), T = inst.horizon();
  const auto& econ = inst.econ;
  BipsModel bm;
  bm.policy = policy;
  auto& m = bm.model;

  bm.x.assign(N, {});
  bm.y.assign(N, {});
  bm.kkt.assign(N, {});
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t t = 0; t < T; ++t)
      bm.x[n].push_back(m.add_variable("x[" + std::to_string(n) + "][" + std::to_string(t) + "]", 0.0, econ.price_cap));
  for (std::size_t n = 0; n < N; ++n) {
    std::vector<LinearExpr> response(T);
    LinearExpr payment;
    for (std::size_t k = 0; k < inst.blocks[n].size(); ++k) {
      const double w = inst.weights[n][k];
      bm.kkt[n].emplace_back();
      if (w == 0.0) continue;
      const std::string prefix = block_prefix(n, k);
      KktBlock kb;
      try {
        kb = derive_kkt(inst.blocks[n][k], bm.x[n], m, prefix);
      } catch (const InfeasibleSpec& e) {
        throw InfeasibleSpec("prosumer " + std::to_string(n) + "/" + e.block_id(), e.what());
      }
      bm.binaries += bigm_linearize(kb, policy, m, prefix);
      bm.eliminated_pairs += kb.eliminated_pairs;
      for (std::size_t t = 0; t < T; ++t) response[t].add(kb.link[t], w);
      payment.add(kb.dual_objective, w);
      bm.kkt[n][k] = std::move(kb);
    }
    for (std::size_t t = 0; t < T; ++t) {
      bm.y[n].push_back(m.add_variable("y[" + std::to_string(n) + "][" + std::to_string(t) + "]", -INFINITY, INFINITY));
      m.add_constraint("response[" + std::to_string(n) + "][" + std::to_string(t) + "]",
                       LinearExpr(bm.y[n][t]) - response[t], milp::Sense::eq, 0.0);
    }
    m.add_constraint("ir[" + std::to_string(n) + "]", payment, milp::Sense::le, econ.outside_cost[n]);
    bm.payments.push_back(std::move(payment));
  }

  std::vector<LinearExpr> net(T);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t t = 0; t < T; ++t) net[t].add(bm.y[n][t], 1.0);
  auto cv = add_community_rows(m, econ, net);
  bm.p_im = std::move(cv.p_im);
  bm.p_ex = std::move(cv.p_ex);
  bm.p_pen = std::move(cv.p_pen);
  bm.community_cost = std::move(cv.cost);
  LinearExpr ra;
  for (const auto& p : bm.payments) ra += p;
  ra -= bm.community_cost;
  m.add_constraint("ra", ra, milp::Sense::ge, 0.0);
  m.set_objective(bm.community_cost);
  m.seal();
  return bm;
}


/// Relaxation in which the manager dispatches every signature directly:
/// lower-level optimality, individual rationality and revenue adequacy are
/// dropped. Its optimum is a lower bound on the price-setting problem.
struct CooperativeModel {
  milp::MilpModel model;
  std::vector<std::vector<std::vector<VarId>>> primal;  // [n][k][j], empty when the weight is zero
};

namespace detail {

/// Copy of one signature's primal variables and equality rows into `m`.
inline std::vector<VarId> add_block_primal(milp::MilpModel& m, const ConstraintBlock& b, const std::string& prefix) {
  std::vector<VarId> v;
  for (std::size_t j = 0; j < b.variables.size(); ++j) {
    const auto [lo, hi] = b.variable_bounds(j);
    v.push_back(m.add_variable(prefix + b.variables[j], lo, hi));
  }
  for (const auto& row : b.equalities) {
    LinearExpr e;
    for (const auto& t : row.terms) e.add(v[t.var], t.coef);
    m.add_constraint(prefix + row.name, e, milp::Sense::eq, row.rhs);
  }
  return v;
}

}  // namespace detail

inline CooperativeModel assemble_cooperative(const BipsInstance& inst) {
  inst.validate();
  const std::size_t N = inst.prosumers(), T = inst.horizon();
  CooperativeModel cm;
  auto& m = cm.model;
  std::vector<LinearExpr> net(T);
  cm.primal.assign(N, {});
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t k = 0; k < inst.blocks[n].size(); ++k) {
      cm.primal[n].emplace_back();
      const double w = inst.weights[n][k];
      if (w == 0.0) continue;
      const auto& b = inst.blocks[n][k];
      cm.primal[n][k] = detail::add_block_primal(m, b, block_prefix(n, k));
      for (std::size_t t = 0; t < T; ++t) net[t].add(cm.primal[n][k][b.link[t]], w);
    }
  m.set_objective(add_community_rows(m, inst.econ, net).cost);
  m.seal();
  return cm;
}

/// Marginal cost of net load per period in a solved cooperative relaxation
/// (duals of the balance rows).
inline std::vector<double> marginal_costs(const CooperativeModel& cm, const milp::MilpSolution& sol, std::size_t T) {
  std::vector<double> pi(T, 0.0);
  const auto& rows = cm.model.constraints();
  if (sol.row_duals.size() != rows.size()) return pi;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& name = rows[i].name;
    if (name.rfind("balance[", 0) != 0) continue;
    pi[std::stoul(name.substr(8))] = sol.row_duals[i];
  }
  return pi;
}

/// Candidate schedule derived from the cooperative relaxation. Every prosumer
/// is either priced along the relaxation's marginal costs, scaled by its own
/// factor, or priced at zero, where every feasible profile is optimal for it.
/// For positive weights the marginal-cost direction keeps the cooperative
/// dispatch optimal, so the candidate reaches the bound whenever the revenue
/// it can raise covers the cost. Solved as a small MILP (one binary per
/// prosumer). Returns the primal variable map and values, or nothing.
struct MarginalCandidate {
  milp::MilpModel model;
  std::vector<std::vector<std::vector<VarId>>> primal;  // [n][k][j]
  std::vector<double> values;
  std::vector<std::vector<double>> prices;  // [n][t]
  double cost = INFINITY;
};

inline std::optional<MarginalCandidate> marginal_candidate(const BipsInstance& inst, std::span<const double> marginal,
                                                           const milp::SolveOptions& options,
                                                           const milp::Backend& backend) {
  const std::size_t N = inst.prosumers(), T = inst.horizon();
  std::vector<double> dir(T);
  double top = 0.0;
  for (std::size_t t = 0; t < T; ++t) top = std::max(top, dir[t] = std::clamp(marginal[t], 0.0, inst.econ.price_cap));
  const double cmax = top > 0.0 ? inst.econ.price_cap / top : 0.0;
  std::vector<double> neg(T);
  for (std::size_t t = 0; t < T; ++t) neg[t] = -dir[t];

  MarginalCandidate mc;
  auto& m = mc.model;
  std::vector<LinearExpr> net(T);
  std::vector<VarId> scale, free_flag;
  std::vector<double> revenue(N, 0.0);
  mc.primal.assign(N, {});
  for (std::size_t n = 0; n < N; ++n) {
    const std::string sn = "[" + std::to_string(n) + "]";
    scale.push_back(m.add_variable("c" + sn, 0.0, cmax));
    free_flag.push_back(m.add_binary("free" + sn));
    m.add_constraint("price_or_free" + sn, LinearExpr(scale[n]).add(free_flag[n], cmax), milp::Sense::le, cmax);
    for (std::size_t k = 0; k < inst.blocks[n].size(); ++k) {
      mc.primal[n].emplace_back();
      const double w = inst.weights[n][k];
      if (w == 0.0) continue;
      const auto& b = inst.blocks[n][k];
      const std::string prefix = block_prefix(n, k);
      auto& v = mc.primal[n][k] = detail::add_block_primal(m, b, prefix);
      const double lo = solve_signature_lp(b, dir, options, backend).objective;
      const double hi = -solve_signature_lp(b, neg, options, backend).objective;
      revenue[n] += w * lo;
      LinearExpr face;
      for (std::size_t t = 0; t < T; ++t) {
        face.add(v[b.link[t]], dir[t]);
        net[t].add(v[b.link[t]], w);
      }
      face.add(free_flag[n], -(hi - lo));
      m.add_constraint(prefix + "face", face, milp::Sense::le, lo + 1e-9 * std::max(1.0, std::abs(lo)));
    }
  }
  const auto cv = add_community_rows(m, inst.econ, net);
  LinearExpr ra = LinearExpr() - cv.cost;
  for (std::size_t n = 0; n < N; ++n) {
    m.add_constraint("ir[" + std::to_string(n) + "]", LinearExpr(scale[n], revenue[n]), milp::Sense::le,
                     inst.econ.outside_cost[n]);
    ra.add(scale[n], revenue[n]);
  }
  m.add_constraint("ra", ra, milp::Sense::ge, 0.0);
  m.set_objective(cv.cost);
  m.seal();
  const auto sol = milp::solve(m, options, backend);
  if (sol.status != milp::SolveStatus::optimal) return std::nullopt;
  mc.values = sol.values;
  mc.cost = sol.objective_value;
  for (std::size_t n = 0; n < N; ++n) {
    mc.prices.emplace_back(T);
    const double c = sol.values[free_flag[n].index] > 0.5 ? 0.0 : sol.values[scale[n].index];
    for (std::size_t t = 0; t < T; ++t) mc.prices[n][t] = c * dir[t];
  }
  return mc;
}

/// Binary assignment that mirrors the active bounds of a given dispatch:
/// z = 1 (multiplier free, slack zero) where the bound is tight.
inline std::vector<double> active_set_pattern(const BipsModel& bm,
                                              const std::vector<std::vector<std::vector<VarId>>>& primal,
                                              std::span<const double> values, double tol = 1e-5) {
  std::vector<double> z(bm.model.variables().size(), 0.0);
  for (std::size_t n = 0; n < bm.kkt.size(); ++n)
    for (std::size_t k = 0; k < bm.kkt[n].size(); ++k) {
      const auto& kb = bm.kkt[n][k];
      if (!kb) continue;
      for (std::size_t i = 0; i < kb->pairs.size(); ++i) {
        const auto& p = kb->pairs[i];
        // The pair's primal variable sits at the same position in both models.
        std::size_t j = 0;
        while (kb->primal[j] != p.primal) ++j;
        const double v = values[primal[n][k][j].index];
        const double slack = p.side == BoundSide::lower ? v - p.bound : p.bound - v;
        z[kb->binaries[i].index] = slack <= tol * std::max(1.0, std::abs(p.bound)) ? 1.0 : 0.0;
      }
    }
  return z;
}

inline std::vector<double> active_set_pattern(const BipsModel& bm, const CooperativeModel& cm,
                                              std::span<const double> coop_values, double tol = 1e-5) {
  return active_set_pattern(bm, cm.primal, coop_values, tol);
}

struct BipsSolveOptions {
  milp::SolveOptions solver;
  BigMPolicy policy;
  int max_doublings = 4;
  bool polish = true;            // re-solve the LP with binaries fixed for exact complementarity
  bool cooperative_start = true; // try the active set of the cooperative dispatch before branching
  double audit_tolerance = 1e-5;
  // A fixed-pattern candidate within this relative distance of the
  // cooperative bound is accepted without branching. NaN: the solver's
  // mip_rel_gap.
  double accept_gap = NAN;
  // On a time or node limit, return the best incumbent (its gap is reported)
  // instead of failing.
  bool accept_incumbent = false;
};

struct BipsSolution {
  std::vector<std::vector<double>> prices;             // [n][t]
  std::vector<double> import, export_, excess;         // [t]
  std::vector<std::vector<double>> expected_response;  // [n][t]
  std::vector<std::vector<std::vector<double>>> profiles;  // [n][k][t], empty for skipped signatures
  double community_cost = 0.0;
  std::vector<double> payments;          // from duals
  std::vector<double> payments_primal;   // sum_t x y
  double mip_gap = 0.0;
  double lower_bound = -INFINITY;        // cooperative relaxation value
  bool certified_by_bound = false;       // optimum proven by the cooperative bound, no branching needed
  std::size_t binaries = 0;
  std::size_t eliminated_pairs = 0;
  int doublings = 0;
  BigMPolicy policy;
  BigMAuditResult bigm_audit;
  double max_complementarity = 0.0;
  double max_strong_duality_gap = 0.0;   // relative, per block
  double max_lower_level_gap = 0.0;      // relative, MILP vs direct LP re-solve
  double solve_seconds = 0.0;
  bool polished = false;
  // Direct signature LP optima at the returned prices, from the lower-level
  // audit. Objective is NaN and the profile empty for skipped signatures.
  std::vector<std::vector<double>> direct_objectives;              // [n][k]
  std::vector<std::vector<std::vector<double>>> direct_profiles;  // [n][k][t]
};

/// Largest |dual-objective payment - sum_t x*y| over prosumers.
inline double max_payment_gap(const BipsSolution& s) {
  double g = 0.0;
  for (std::size_t n = 0; n < s.payments.size() && n < s.payments_primal.size(); ++n)
    g = std::max(g, std::abs(s.payments[n] - s.payments_primal[n]));
  return g;
}

namespace detail {

inline double rel_gap(double a, double b) { return std::abs(a - b) / std::max(1.0, std::max(std::abs(a), std::abs(b))); }

inline BipsSolution extract(const BipsInstance& inst, const BipsModel& bm, std::span<const double> v) {
  const std::size_t N = inst.prosumers(), T = inst.horizon();
  BipsSolution s;
  s.prices.assign(N, std::vector<double>(T));
  s.expected_response.assign(N, std::vector<double>(T));
  s.profiles.assign(N, {});
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t t = 0; t < T; ++t) {
      s.prices[n][t] = v[bm.x[n][t].index];
      s.expected_response[n][t] = v[bm.y[n][t].index];
    }
    for (const auto& kb : bm.kkt[n]) {
      s.profiles[n].emplace_back();
      if (!kb) continue;
      for (auto id : kb->link) s.profiles[n].back().push_back(v[id.index]);
    }
    s.payments.push_back(bm.payments[n].evaluate(v));
    double primal = 0.0;
    for (std::size_t t = 0; t < T; ++t) primal += s.prices[n][t] * s.expected_response[n][t];
    s.payments_primal.push_back(primal);
  }
  for (std::size_t t = 0; t < T; ++t) {
    s.import.push_back(v[bm.p_im[t].index]);
    s.export_.push_back(v[bm.p_ex[t].index]);
    s.excess.push_back(v[bm.p_pen[t].index]);
  }
  s.community_cost = bm.community_cost.evaluate(v);
  s.binaries = bm.binaries;
  s.eliminated_pairs = bm.eliminated_pairs;
  s.policy = bm.policy;

  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t k = 0; k < bm.kkt[n].size(); ++k) {
      const auto& kb = bm.kkt[n][k];
      if (!kb) continue;
      s.bigm_audit += audit_bigm(*kb, bm.policy, v);
      for (const auto& p : kb->pairs)
        s.max_complementarity = std::max(s.max_complementarity, v[p.dual.index] * std::max(pair_slack(p, v), 0.0));
      double primal = 0.0;
      for (std::size_t t = 0; t < T; ++t) primal += s.prices[n][t] * v[kb->link[t].index];
      s.max_strong_duality_gap = std::max(s.max_strong_duality_gap, rel_gap(primal, kb->dual_objective.evaluate(v)));
    }
  return s;
}

}  // namespace detail

/// Assemble, solve and audit one instance. The big-M values are doubled and
/// the instance re-solved while the audit flags a multiplier or slack near
/// its bound.
inline BipsSolution solve_bips(const BipsInstance& inst, const BipsSolveOptions& opts = {},
                               const milp::Backend& backend = milp::default_backend()) {
  const auto start = std::chrono::steady_clock::now();
  BigMPolicy policy = opts.policy;
  for (int round = 0;; ++round) {
    const BipsModel bm = assemble_bips(inst, policy);
    std::vector<double> values, candidate;
    double gap = 0.0, bound = -INFINITY;
    bool certified = false, polished = false;

    if (opts.cooperative_start && bm.binaries > 0) {
      const CooperativeModel cm = assemble_cooperative(inst);
      const milp::MilpSolution cs = milp::solve(cm.model, opts.solver, backend);
      if (cs.status == milp::SolveStatus::optimal) {
        bound = cs.objective_value;
        double best = INFINITY;
        auto try_pattern = [&](std::vector<double> z) {
          const milp::MilpSolution ps = milp::solve(bm.model.with_fixed_binaries(z), opts.solver, backend);
          if (ps.status != milp::SolveStatus::optimal || ps.objective_value >= best) return;
          best = ps.objective_value;
          candidate = ps.values;
          const double g = (ps.objective_value - bound) / std::max(1.0, std::abs(ps.objective_value));
          if (g <= (std::isnan(opts.accept_gap) ? opts.solver.mip_rel_gap : opts.accept_gap)) {
            values = ps.values;
            gap = std::max(g, 0.0);
            certified = polished = true;
          }
        };
        try_pattern(active_set_pattern(bm, cm, cs.values));
        if (!certified) {
          const auto pi = marginal_costs(cm, cs, inst.horizon());
          if (const auto mc = marginal_candidate(inst, pi, opts.solver, backend))
            try_pattern(active_set_pattern(bm, mc->primal, mc->values));
        }
      }
    }

    if (!certified) {
      const milp::MilpSolution sol =
          milp::solve(bm.model, opts.solver, backend, candidate.empty() ? nullptr : &candidate);
      if (sol.status == milp::SolveStatus::infeasible) {
        // Too small an M can cut off every KKT point; only call it IR/RA
        // infeasibility once M has been doubled out.
        if (round < opts.max_doublings) {
          policy = policy.doubled();
          continue;
        }
        throw InfeasibleBips("price-setting problem is infeasible (individual rationality or revenue adequacy cannot hold)");
      }
      const bool incumbent = opts.accept_incumbent && sol.status == milp::SolveStatus::limit_reached &&
                             sol.values.size() == bm.model.variables().size() &&
                             bm.model.max_violation(sol.values) <= 1e-5;
      if (sol.status != milp::SolveStatus::optimal && !incumbent)
        throw SolverError("price-setting MILP ended with status " + std::string(milp::to_string(sol.status)),
                          milp::export_diagnostics(bm.model, opts.solver, "bips"));
      values = sol.values;
      gap = sol.gap;
      if (opts.polish && bm.binaries > 0) {
        const milp::MilpModel lp = bm.model.with_fixed_binaries(values);
        const milp::MilpSolution ps = milp::solve(lp, opts.solver, backend);
        if (ps.status == milp::SolveStatus::optimal &&
            ps.objective_value <= sol.objective_value + opts.audit_tolerance * std::max(1.0, std::abs(sol.objective_value))) {
          values = ps.values;
          polished = true;
        }
      }
    }

    BipsSolution s = detail::extract(inst, bm, values);
    s.mip_gap = gap;
    s.lower_bound = bound;
    s.certified_by_bound = certified;
    s.doublings = round;
    s.polished = polished;
    if (!s.bigm_audit.passed()) {
      if (round >= opts.max_doublings)
        throw AuditError("big-M audit still failing after " + std::to_string(round) + " doublings",
                         milp::export_diagnostics(bm.model, opts.solver, "bigm_audit"));
      policy = policy.doubled();
      continue;
    }

    // Lower-level optimality: each embedded profile must be optimal for the
    // signature LP at the posted prices.
    s.direct_objectives.assign(inst.prosumers(), {});
    s.direct_profiles.assign(inst.prosumers(), {});
    for (std::size_t n = 0; n < inst.prosumers(); ++n)
      for (std::size_t k = 0; k < inst.blocks[n].size(); ++k) {
        s.direct_objectives[n].push_back(NAN);
        s.direct_profiles[n].emplace_back();
        if (!bm.kkt[n][k]) continue;
        const auto direct = solve_signature_lp(inst.blocks[n][k], s.prices[n], opts.solver, backend);
        s.direct_objectives[n][k] = direct.objective;
        s.direct_profiles[n][k] = direct.profile;
        double embedded = 0.0;
        for (std::size_t t = 0; t < inst.horizon(); ++t) embedded += s.prices[n][t] * s.profiles[n][k][t];
        const double gap = detail::rel_gap(embedded, direct.objective);
        s.max_lower_level_gap = std::max(s.max_lower_level_gap, gap);
        if (gap > opts.audit_tolerance)
          throw AuditError("lower-level audit failed for prosumer " + std::to_string(n) + " signature " +
                               inst.blocks[n][k].id + ": embedded " + std::to_string(embedded) + " vs direct " +
                               std::to_string(direct.objective),
                           milp::export_diagnostics(bm.model, opts.solver, "lower_level_audit"));
      }
    s.solve_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return s;
  }
}

/// One signature's KKT system at fixed prices. The embedded cost is pushed
/// upward, so any KKT-feasible point that is not LP-optimal would show.
struct KktEmbeddingCheck {
  double embedded = NAN;        // x'p at the worst KKT-feasible point
  double dual_objective = NAN;  // strong-duality payment at that point
  double max_complementarity = 0.0;
  BigMAuditResult audit;
  BigMPolicy policy;            // after doubling
  int doublings = 0;
  milp::SolveStatus status = milp::SolveStatus::error;
};

/// At fixed prices the lower level is a feasible LP, so an infeasible
/// embedding means M cut off its multipliers; M is doubled like in solve_bips.
inline KktEmbeddingCheck check_kkt_embedding(const ConstraintBlock& block, std::span<const double> prices,
                                             BigMPolicy policy = {}, const milp::SolveOptions& options = {},
                                             const milp::Backend& backend = milp::default_backend(),
                                             int max_doublings = 4) {
  KktEmbeddingCheck c;
  for (int round = 0;; ++round) {
    milp::MilpModel m;
    std::vector<VarId> x;
    for (std::size_t t = 0; t < prices.size(); ++t)
      x.push_back(m.add_variable("x[" + std::to_string(t) + "]", prices[t], prices[t]));
    KktBlock kb = derive_kkt(block, x, m, "b.");
    bigm_linearize(kb, policy, m, "b.");
    LinearExpr obj;
    for (std::size_t t = 0; t < prices.size(); ++t) obj.add(kb.link[t], -prices[t]);
    m.set_objective(obj);
    m.seal();
    const auto sol = milp::solve(m, options, backend);
    c = KktEmbeddingCheck{};
    c.status = sol.status;
    c.policy = policy;
    c.doublings = round;
    if (sol.status == milp::SolveStatus::optimal) {
      c.embedded = -sol.objective_value;
      c.dual_objective = kb.dual_objective.evaluate(sol.values);
      for (const auto& p : kb.pairs)
        c.max_complementarity =
            std::max(c.max_complementarity, sol.values[p.dual.index] * std::max(pair_slack(p, sol.values), 0.0));
      c.audit = audit_bigm(kb, policy, sol.values);
    }
    const bool retry = sol.status == milp::SolveStatus::infeasible ||
                       (sol.status == milp::SolveStatus::optimal && !c.audit.passed());
    if (!retry || round >= max_doublings) return c;
    policy = policy.doubled();
  }
}

/// Stand-alone daily bill of a prosumer outside the community: its response
/// to the retail price, billed with the import tariff on net imports and the
/// export tariff on net exports, plus a fixed daily fee.
inline double standalone_cost(std::span<const ConstraintBlock> blocks, std::span<const double> weights,
                              const CommunityEconomics& econ, double daily_fee,
                              const milp::SolveOptions& options = {},
                              const milp::Backend& backend = milp::default_backend()) {
  const std::size_t T = econ.horizon();
  std::vector<double> retail(T), net(T, 0.0);
  for (std::size_t t = 0; t < T; ++t) retail[t] = econ.spot_price[t] + econ.import_tariff[t];
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    if (weights[k] == 0.0) continue;
    const auto sol = solve_signature_lp(blocks[k], retail, options, backend);
    for (std::size_t t = 0; t < T; ++t) net[t] += weights[k] * sol.profile[t];
  }
  double c = daily_fee;
  for (std::size_t t = 0; t < T; ++t)
    c += std::max(net[t], 0.0) * retail[t] - std::max(-net[t], 0.0) * (econ.spot_price[t] - econ.export_tariff[t]);
  return c;
}

}  // namespace ecpricing::bilevel
