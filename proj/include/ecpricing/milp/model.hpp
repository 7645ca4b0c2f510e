#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ecpricing/errors.hpp"

namespace ecpricing::milp {

enum class VarKind { continuous, binary };
enum class Sense { le, eq, ge };

struct VarId {
  std::size_t index = 0;
  friend bool operator==(VarId, VarId) = default;
};

struct Term {
  VarId var;
  double coef;
};

/// Sparse affine expression sum_i coef_i * var_i + constant.
class LinearExpr {
 public:
  LinearExpr() = default;
  explicit LinearExpr(double constant) : constant_(constant) {}
  LinearExpr(VarId v, double coef = 1.0) { add(v, coef); }  // NOLINT: implicit by intent

  LinearExpr& add(VarId v, double coef) {
    if (coef != 0.0) terms_.push_back({v, coef});
    return *this;
  }
  LinearExpr& add(const LinearExpr& other, double scale = 1.0) {
    if (scale == 0.0) return *this;
    for (const auto& t : other.terms_) add(t.var, scale * t.coef);
    constant_ += scale * other.constant_;
    return *this;
  }
  LinearExpr& add_constant(double c) {
    constant_ += c;
    return *this;
  }
  LinearExpr& operator+=(const LinearExpr& o) { return add(o, 1.0); }
  LinearExpr& operator-=(const LinearExpr& o) { return add(o, -1.0); }

  const std::vector<Term>& terms() const noexcept { return terms_; }
  double constant() const noexcept { return constant_; }

  /// Merge duplicate variables and drop zero coefficients.
  LinearExpr compacted() const {
    std::vector<Term> sorted = terms_;
    std::sort(sorted.begin(), sorted.end(), [](const Term& a, const Term& b) { return a.var.index < b.var.index; });
    LinearExpr out(constant_);
    for (std::size_t i = 0; i < sorted.size();) {
      double c = 0.0;
      std::size_t j = i;
      for (; j < sorted.size() && sorted[j].var == sorted[i].var; ++j) c += sorted[j].coef;
      if (c != 0.0) out.terms_.push_back({sorted[i].var, c});
      i = j;
    }
    return out;
  }

  double evaluate(std::span<const double> values) const {
    double v = constant_;
    for (const auto& t : terms_) v += t.coef * values[t.var.index];
    return v;
  }

 private:
  std::vector<Term> terms_;
  double constant_ = 0.0;
};

inline LinearExpr operator+(LinearExpr a, const LinearExpr& b) { return a += b; }
inline LinearExpr operator-(LinearExpr a, const LinearExpr& b) { return a -= b; }
inline LinearExpr operator*(double s, const LinearExpr& e) { return LinearExpr().add(e, s); }

struct Variable {
  std::string name;
  double lower = 0.0;
  double upper = INFINITY;
  VarKind kind = VarKind::continuous;
};

struct Constraint {
  std::string name;
  std::vector<Term> terms;  // compacted, constant folded into rhs
  Sense sense = Sense::le;
  double rhs = 0.0;
};

/// Solver-agnostic MILP. Always a minimization. Append-only until sealed.
class MilpModel {
 public:
  VarId add_variable(std::string name, double lower, double upper, VarKind kind = VarKind::continuous) {
    require_open();
    if (std::isnan(lower) || std::isnan(upper)) throw InvalidArgument("variable " + name + ": NaN bound");
    if (lower > upper) throw InvalidArgument("variable " + name + ": lower bound exceeds upper bound");
    if (kind == VarKind::binary) {
      lower = std::max(lower, 0.0);
      upper = std::min(upper, 1.0);
    }
    if (!names_.emplace(name, variables_.size()).second) throw InvalidArgument("duplicate variable name " + name);
    variables_.push_back({std::move(name), lower, upper, kind});
    return VarId{variables_.size() - 1};
  }

  VarId add_binary(std::string name) { return add_variable(std::move(name), 0.0, 1.0, VarKind::binary); }

  void add_constraint(std::string name, const LinearExpr& expr, Sense sense, double rhs) {
    require_open();
    const LinearExpr e = expr.compacted();
    for (const auto& t : e.terms()) {
      if (t.var.index >= variables_.size()) throw InvalidArgument("constraint " + name + " references unknown variable");
      if (!std::isfinite(t.coef)) throw InvalidArgument("constraint " + name + ": non-finite coefficient");
    }
    const double r = rhs - e.constant();
    if (!std::isfinite(r)) throw InvalidArgument("constraint " + name + ": non-finite right-hand side");
    constraints_.push_back({std::move(name), e.terms(), sense, r});
  }

  void set_objective(const LinearExpr& expr) {
    require_open();
    objective_ = expr.compacted();
    for (const auto& t : objective_.terms())
      if (t.var.index >= variables_.size() || !std::isfinite(t.coef))
        throw InvalidArgument("objective references unknown variable or non-finite coefficient");
  }

  void set_bounds(VarId v, double lower, double upper) {
    require_open();
    variables_.at(v.index).lower = lower;
    variables_.at(v.index).upper = upper;
  }

  /// Freeze the model; further modification throws.
  void seal() {
    validate();
    sealed_ = true;
  }
  bool sealed() const noexcept { return sealed_; }

  /// Modifiable copy of a sealed model.
  MilpModel reopened() const {
    MilpModel m = *this;
    m.sealed_ = false;
    return m;
  }

  void validate() const {
    for (const auto& v : variables_) {
      if (v.kind == VarKind::binary && (v.lower < 0.0 || v.upper > 1.0))
        throw InvalidArgument("binary variable " + v.name + " has bounds outside [0,1]");
      if (v.lower > v.upper) throw InvalidArgument("variable " + v.name + " has empty bounds");
    }
    for (const auto& c : constraints_)
      for (const auto& t : c.terms)
        if (t.var.index >= variables_.size()) throw InvalidArgument("constraint " + c.name + " references unknown variable");
  }

  const std::vector<Variable>& variables() const noexcept { return variables_; }
  const std::vector<Constraint>& constraints() const noexcept { return constraints_; }
  const LinearExpr& objective() const noexcept { return objective_; }
  const Variable& variable(VarId v) const { return variables_.at(v.index); }

  /// Copy in which every binary is fixed at its rounded value and relaxed to
  /// a continuous variable, leaving an LP over the remaining variables.
  MilpModel with_fixed_binaries(std::span<const double> values) const {
    if (values.size() != variables_.size()) throw InvalidArgument("value vector length does not match model");
    MilpModel m = *this;
    for (std::size_t j = 0; j < m.variables_.size(); ++j) {
      auto& v = m.variables_[j];
      if (v.kind != VarKind::binary) continue;
      v.lower = v.upper = std::clamp(std::round(values[j]), 0.0, 1.0);
      v.kind = VarKind::continuous;
    }
    return m;
  }

  std::size_t num_binaries() const {
    return static_cast<std::size_t>(std::count_if(variables_.begin(), variables_.end(),
                                                  [](const Variable& v) { return v.kind == VarKind::binary; }));
  }

  /// Worst absolute violation over bounds, integrality and rows, each row
  /// violation scaled by max(1, |rhs|).
  double max_violation(std::span<const double> values) const {
    if (values.size() != variables_.size()) throw InvalidArgument("value vector length does not match model");
    double worst = 0.0;
    for (std::size_t j = 0; j < variables_.size(); ++j) {
      const auto& v = variables_[j];
      const double x = values[j];
      worst = std::max({worst, v.lower - x, x - v.upper});
      if (v.kind == VarKind::binary) worst = std::max(worst, std::abs(x - std::round(x)));
    }
    for (const auto& c : constraints_) {
      double lhs = 0.0;
      for (const auto& t : c.terms) lhs += t.coef * values[t.var.index];
      const double scale = std::max(1.0, std::abs(c.rhs));
      double viol = 0.0;
      switch (c.sense) {
        case Sense::le: viol = lhs - c.rhs; break;
        case Sense::ge: viol = c.rhs - lhs; break;
        case Sense::eq: viol = std::abs(lhs - c.rhs); break;
      }
      worst = std::max(worst, viol / scale);
    }
    return worst;
  }

 private:
  void require_open() const {
    if (sealed_) throw InvalidArgument("model is sealed");
  }

  std::vector<Variable> variables_;
  std::vector<Constraint> constraints_;
  LinearExpr objective_;
  std::unordered_map<std::string, std::size_t> names_;
  bool sealed_ = false;
};

}  // namespace ecpricing::milp
