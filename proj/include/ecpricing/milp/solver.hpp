#pragma once

// Backend contract for MILP solves plus the HiGHS implementation. Every
// optimal answer is re-audited in-process against the model rows.

#include <Highs.h>

#include <atomic>
#include <cmath>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "ecpricing/milp/lp_format.hpp"
#include "ecpricing/milp/model.hpp"

namespace ecpricing::milp {

enum class SolveStatus { optimal, infeasible, unbounded, limit_reached, error };

constexpr std::string_view to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::optimal: return "optimal";
    case SolveStatus::infeasible: return "infeasible";
    case SolveStatus::unbounded: return "unbounded";
    case SolveStatus::limit_reached: return "limit-reached";
    case SolveStatus::error: return "error";
  }
  return "?";
}

struct SolveOptions {
  double time_limit = 120.0;      // seconds
  double mip_rel_gap = 1e-6;
  int seed = 0;
  int threads = 1;
  double feasibility_tolerance = 1e-9;
  double audit_tolerance = 1e-6;
  std::string diagnostics_dir;    // where failing models are exported; empty = no export
  bool verbose = false;           // backend log to stdout
};

struct MilpSolution {
  SolveStatus status = SolveStatus::error;
  std::vector<double> values;
  double objective_value = NAN;
  double gap = NAN;  // relative MIP gap; 0 for pure LPs
  std::vector<double> row_duals;  // LPs only
  std::vector<double> col_duals;  // LPs only (reduced costs)
};

class Backend {
 public:
  virtual ~Backend() = default;
  virtual std::string name() const = 0;
  virtual std::string version() const = 0;
  /// `start`, when given, is a feasible assignment offered as the first incumbent.
  virtual MilpSolution solve(const MilpModel& model, const SolveOptions& options,
                             const std::vector<double>* start = nullptr) const = 0;
  /// Read an LP-format file with the backend's own parser and solve it.
  virtual MilpSolution solve_file(const std::string& path, const SolveOptions& options) const = 0;
};

class HighsBackend final : public Backend {
 public:
  std::string name() const override { return "highs"; }
  std::string version() const override {
    return std::to_string(highsVersionMajor()) + "." + std::to_string(highsVersionMinor()) + "." +
           std::to_string(highsVersionPatch());
  }

  MilpSolution solve(const MilpModel& model, const SolveOptions& options,
                     const std::vector<double>* start = nullptr) const override {
    Highs highs;
    configure(highs, options);
    HighsModel hm;
    HighsLp& lp = hm.lp_;
    const auto& vars = model.variables();
    const auto& rows = model.constraints();
    lp.num_col_ = static_cast<HighsInt>(vars.size());
    lp.num_row_ = static_cast<HighsInt>(rows.size());
    lp.sense_ = ObjSense::kMinimize;
    lp.offset_ = model.objective().constant();
    lp.col_cost_.assign(vars.size(), 0.0);
    for (const auto& t : model.objective().terms()) lp.col_cost_[t.var.index] += t.coef;
    bool has_integer = false;
    lp.integrality_.assign(vars.size(), HighsVarType::kContinuous);
    for (std::size_t j = 0; j < vars.size(); ++j) {
      lp.col_lower_.push_back(std::isinf(vars[j].lower) ? -kHighsInf : vars[j].lower);
      lp.col_upper_.push_back(std::isinf(vars[j].upper) ? kHighsInf : vars[j].upper);
      if (vars[j].kind == VarKind::binary) {
        lp.integrality_[j] = HighsVarType::kInteger;
        has_integer = true;
      }
    }
    if (!has_integer) lp.integrality_.clear();
    // Column-wise matrix assembly.
    std::vector<HighsInt> count(vars.size() + 1, 0);
    for (const auto& r : rows)
      for (const auto& t : r.terms) ++count[t.var.index + 1];
    for (std::size_t j = 0; j < vars.size(); ++j) count[j + 1] += count[j];
    auto& a = lp.a_matrix_;
    a.format_ = MatrixFormat::kColwise;
    a.num_col_ = lp.num_col_;
    a.num_row_ = lp.num_row_;
    a.start_ = count;
    a.index_.resize(count.back());
    a.value_.resize(count.back());
    std::vector<HighsInt> next(count.begin(), count.end() - 1);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto& r = rows[i];
      for (const auto& t : r.terms) {
        const HighsInt k = next[t.var.index]++;
        a.index_[k] = static_cast<HighsInt>(i);
        a.value_[k] = t.coef;
      }
      lp.row_lower_.push_back(r.sense == Sense::le ? -kHighsInf : r.rhs);
      lp.row_upper_.push_back(r.sense == Sense::ge ? kHighsInf : r.rhs);
    }
    if (highs.passModel(std::move(hm)) == HighsStatus::kError) {
      MilpSolution s;
      s.status = SolveStatus::error;
      return s;
    }
    if (start && start->size() == vars.size()) {
      HighsSolution hs;
      hs.col_value = *start;
      hs.value_valid = true;
      highs.setSolution(hs);
    }
    return run(highs, has_integer);
  }

  MilpSolution solve_file(const std::string& path, const SolveOptions& options) const override {
    Highs highs;
    configure(highs, options);
    if (highs.readModel(path) == HighsStatus::kError) {
      MilpSolution s;
      s.status = SolveStatus::error;
      return s;
    }
    const auto& lp = highs.getLp();
    const bool has_integer = !lp.integrality_.empty();
    return run(highs, has_integer);
  }

 private:
  static void configure(Highs& highs, const SolveOptions& o) {
    highs.setOptionValue("output_flag", o.verbose);
    highs.setOptionValue("time_limit", o.time_limit);
    highs.setOptionValue("mip_rel_gap", o.mip_rel_gap);
    highs.setOptionValue("mip_abs_gap", 1e-9);
    highs.setOptionValue("random_seed", static_cast<HighsInt>(o.seed));
    highs.setOptionValue("threads", static_cast<HighsInt>(o.threads));
    highs.setOptionValue("primal_feasibility_tolerance", o.feasibility_tolerance);
    highs.setOptionValue("dual_feasibility_tolerance", o.feasibility_tolerance);
    highs.setOptionValue("mip_feasibility_tolerance", o.feasibility_tolerance);
  }

  static MilpSolution run(Highs& highs, bool has_integer) {
    MilpSolution out;
    if (highs.run() == HighsStatus::kError) {
      out.status = SolveStatus::error;
      return out;
    }
    auto status = highs.getModelStatus();
    if (status == HighsModelStatus::kUnboundedOrInfeasible) {
      // Presolve cannot tell the two apart; ask the simplex directly.
      highs.setOptionValue("presolve", "off");
      highs.run();
      status = highs.getModelStatus();
    }
    switch (status) {
      case HighsModelStatus::kOptimal: out.status = SolveStatus::optimal; break;
      case HighsModelStatus::kInfeasible: out.status = SolveStatus::infeasible; break;
      case HighsModelStatus::kUnbounded: out.status = SolveStatus::unbounded; break;
      case HighsModelStatus::kUnboundedOrInfeasible: out.status = SolveStatus::infeasible; break;
      case HighsModelStatus::kModelEmpty: out.status = SolveStatus::optimal; break;
      case HighsModelStatus::kTimeLimit:
      case HighsModelStatus::kIterationLimit:
      case HighsModelStatus::kSolutionLimit:
      case HighsModelStatus::kInterrupt:
      case HighsModelStatus::kMemoryLimit:
      case HighsModelStatus::kObjectiveBound:
      case HighsModelStatus::kObjectiveTarget: out.status = SolveStatus::limit_reached; break;
      default: out.status = SolveStatus::error; break;
    }
    const auto& info = highs.getInfo();
    const auto& sol = highs.getSolution();
    if (sol.value_valid) out.values = sol.col_value;
    if (status == HighsModelStatus::kModelEmpty) {
      out.values.assign(highs.getLp().num_col_, 0.0);
      for (HighsInt j = 0; j < highs.getLp().num_col_; ++j) {
        const double lo = highs.getLp().col_lower_[j], hi = highs.getLp().col_upper_[j];
        const double c = highs.getLp().col_cost_[j];
        out.values[j] = c >= 0 ? (std::isfinite(lo) ? lo : std::min(0.0, hi)) : hi;
      }
    }
    out.objective_value = info.objective_function_value;
    if (has_integer) {
      out.gap = info.mip_gap;
      if (out.status == SolveStatus::optimal && !(out.gap <= 1.0)) out.gap = 0.0;
    } else {
      out.gap = 0.0;
      if (sol.dual_valid) {
        out.row_duals = sol.row_dual;
        out.col_duals = sol.col_dual;
      }
    }
    return out;
  }
};

inline const Backend& default_backend() {
  static const HighsBackend backend;
  return backend;
}

/// Look up a backend by configuration key.
inline const Backend& backend_by_name(std::string_view name) {
  if (name.empty() || name == "highs") return default_backend();
  throw ConfigError("unknown MILP backend '" + std::string(name) + "' (available: highs)");
}

/// Write the model to the diagnostics directory and return the path, or an
/// empty string when no directory is configured.
inline std::string export_diagnostics(const MilpModel& model, const SolveOptions& options, std::string_view tag) {
  if (options.diagnostics_dir.empty()) return {};
  static std::atomic<unsigned> counter{0};
  std::filesystem::create_directories(options.diagnostics_dir);
  const auto path = std::filesystem::path(options.diagnostics_dir) /
                    (std::string(tag) + "_" + std::to_string(counter++) + ".lp");
  write_lp_file(model, path.string());
  return path.string();
}

/// Solve through the backend. Optimal answers are audited row by row; backend
/// errors are raised with the exported model path.
inline MilpSolution solve(const MilpModel& model, const SolveOptions& options = {},
                          const Backend& backend = default_backend(), const std::vector<double>* start = nullptr) {
  model.validate();
  MilpSolution sol = backend.solve(model, options, start);
  if (sol.status == SolveStatus::error)
    throw SolverError("backend '" + backend.name() + "' failed", export_diagnostics(model, options, "backend_error"));
  if (sol.status == SolveStatus::optimal) {
    if (sol.values.size() != model.variables().size())
      throw SolverError("backend returned a solution of the wrong size", export_diagnostics(model, options, "bad_size"));
    const double viol = model.max_violation(sol.values);
    if (viol > options.audit_tolerance)
      throw AuditError("optimal solution violates the model by " + std::to_string(viol),
                       export_diagnostics(model, options, "audit_failure"));
  }
  return sol;
}

}  // namespace ecpricing::milp
