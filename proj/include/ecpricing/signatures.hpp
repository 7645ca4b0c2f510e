#pragma once

// Lower-level signature models. Each signature is a small LP whose feasible
// set is described declaratively by a ConstraintBlock: equality rows carry a
// lambda label, single-variable bound rows carry a mu label. The blocks are
// consumed both by the direct LP solver (signature_lp.hpp) and by the KKT
// reformulation (bilevel/kkt.hpp).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ecpricing/errors.hpp"

namespace ecpricing {

struct TimeGrid {
  std::size_t horizon = 24;
  double period_duration = 1.0;  // hours

  void validate() const {
    if (horizon < 1) throw InvalidArgument("TimeGrid: horizon must be >= 1");
    if (!(period_duration > 0.0) || !std::isfinite(period_duration))
      throw InvalidArgument("TimeGrid: period_duration must be positive");
  }
};

enum class SignatureKind { flex_baseload, pv, battery, heat_pump, ev };

constexpr std::string_view to_string(SignatureKind kind) {
  switch (kind) {
    case SignatureKind::flex_baseload: return "flex_baseload";
    case SignatureKind::pv: return "pv";
    case SignatureKind::battery: return "battery";
    case SignatureKind::heat_pump: return "heat_pump";
    case SignatureKind::ev: return "ev";
  }
  return "?";
}

/// Dual variable families, one per constraint group of the signature LPs.
enum class DualLabel {
  lambda1, lambda2, lambda3,            // flexible baseload
  lambda4,                              // PV
  lambda5, lambda6, lambda7,            // battery
  lambda8, lambda9, lambda10,           // heat pump
  lambda11, lambda12, lambda13,         // EV
  mu_L, mu_B, mu_E, mu_TCL, mu_tau, mu_EV, mu_S
};

constexpr std::string_view to_string(DualLabel label) {
  constexpr std::string_view names[] = {
      "lambda1", "lambda2", "lambda3", "lambda4", "lambda5", "lambda6", "lambda7",
      "lambda8", "lambda9", "lambda10", "lambda11", "lambda12", "lambda13",
      "mu_L", "mu_B", "mu_E", "mu_TCL", "mu_tau", "mu_EV", "mu_S"};
  return names[static_cast<int>(label)];
}

constexpr bool is_equality_label(DualLabel label) {
  return static_cast<int>(label) <= static_cast<int>(DualLabel::lambda13);
}

// ---------------------------------------------------------------------------
// Parameter sets
// ---------------------------------------------------------------------------

struct FlexBaseloadSpec {
  std::vector<double> baseload;          // kWh per period
  std::vector<std::size_t> flex_window;  // periods where load may shift
  double load_min = 0.0;                 // kWh
  double load_max = 0.0;                 // kWh
};

struct PvSpec {
  std::vector<double> reference_production;  // kWh per period for 1 kW installed
};

struct BatterySpec {
  double charge_max = 0.0;     // kW, >= 0
  double discharge_max = 0.0;  // kW, <= 0
  double energy_min = 0.0;     // kWh
  double energy_max = 0.0;     // kWh
  double energy_init = 0.0;    // kWh
};

struct HeatPumpSpec {
  double cop = 3.0;
  double thermal_resistance = 5.0;  // degC/kW
  double thermal_capacity = 2.0;    // kWh/degC
  double temp_init = 20.0;          // degC
  double temp_min = 19.0;           // degC
  double temp_max = 21.0;           // degC
  double power_max = 3.0;           // kW
};

struct EvSpec {
  double charge_max = 0.0;     // kW, >= 0
  double discharge_max = 0.0;  // kW, <= 0
  double soc_min = 0.0;        // kWh
  double soc_max = 0.0;        // kWh
  double soc_init = 0.0;       // kWh
  std::vector<int> plugged_in; // 1 = connected, per period
  double drive_power = 0.0;    // kWh drained per absent hour
};

// ---------------------------------------------------------------------------
// Constraint block
// ---------------------------------------------------------------------------

enum class BoundSide { lower, upper };

struct LinearTerm {
  std::size_t var;
  double coef;
};

struct EqualityRow {
  std::string name;
  std::vector<LinearTerm> terms;
  double rhs = 0.0;
  DualLabel label;
};

/// Single-variable inequality `var >= value` (lower) or `var <= value` (upper).
struct BoundRow {
  std::string name;
  std::size_t var;
  BoundSide side;
  double value;
  DualLabel label;
};

struct ConstraintBlock {
  std::string id;
  SignatureKind kind = SignatureKind::pv;
  double period_duration = 1.0;
  std::vector<std::string> variables;  // all continuous, free unless bounded by a BoundRow
  std::vector<EqualityRow> equalities;
  std::vector<BoundRow> inequalities;
  std::vector<std::size_t> link;  // import/export variable of each period

  std::size_t horizon() const noexcept { return link.size(); }

  /// Structural checks: indices in range, finite coefficients, label families.
  void validate() const {
    auto bad = [&](const std::string& what) { throw InvalidArgument(id + ": " + what); };
    for (const auto& row : equalities) {
      if (!is_equality_label(row.label)) bad("equality row " + row.name + " carries a mu label");
      if (!std::isfinite(row.rhs)) bad("non-finite rhs in " + row.name);
      for (const auto& t : row.terms) {
        if (t.var >= variables.size()) bad("variable index out of range in " + row.name);
        if (!std::isfinite(t.coef)) bad("non-finite coefficient in " + row.name);
      }
    }
    for (const auto& row : inequalities) {
      if (is_equality_label(row.label)) bad("bound row " + row.name + " carries a lambda label");
      if (row.var >= variables.size()) bad("variable index out of range in " + row.name);
      if (!std::isfinite(row.value)) bad("non-finite bound in " + row.name);
    }
    for (auto v : link)
      if (v >= variables.size()) bad("link variable out of range");
  }

  /// Finite lower/upper bound on a variable implied by its bound rows.
  std::pair<double, double> variable_bounds(std::size_t var) const {
    double lo = -INFINITY, hi = INFINITY;
    for (const auto& row : inequalities) {
      if (row.var != var) continue;
      if (row.side == BoundSide::lower) lo = std::max(lo, row.value);
      else hi = std::min(hi, row.value);
    }
    return {lo, hi};
  }
};

namespace detail {

inline std::size_t add_var(ConstraintBlock& b, std::string name) {
  b.variables.push_back(std::move(name));
  return b.variables.size() - 1;
}

inline std::string idx(std::string_view base, std::size_t t) {
  return std::string(base) + "[" + std::to_string(t) + "]";
}

inline void check_length(const ConstraintBlock& b, std::size_t got, std::size_t want,
                         std::string_view what) {
  if (got != want)
    throw InvalidArgument(b.id + ": " + std::string(what) + " has length " + std::to_string(got) +
                          ", expected " + std::to_string(want));
}

/// Exact reachability screen for a scalar linear state
///   s_t = a * s_{t-1} + u_t + c_t,  u_t in [u_lo_t, u_hi_t],  s_t in [s_lo, s_hi],
/// with s_{-1} = s_init and terminal requirement s_{T-1} = s_end.
/// Forward interval propagation is exact for one-dimensional convex dynamics.
inline std::optional<std::size_t> first_unreachable_period(double a, double s_init, double s_end,
                                                           std::span<const double> u_lo,
                                                           std::span<const double> u_hi,
                                                           std::span<const double> c,
                                                           double s_lo, double s_hi,
                                                           double tol = 1e-9) {
  double lo = s_init, hi = s_init;
  for (std::size_t t = 0; t < u_lo.size(); ++t) {
    const double p = a * lo, q = a * hi;
    double nlo = std::min(p, q) + u_lo[t] + c[t];
    double nhi = std::max(p, q) + u_hi[t] + c[t];
    nlo = std::max(nlo, s_lo);
    nhi = std::min(nhi, s_hi);
    if (nlo > nhi + tol) return t;
    lo = nlo;
    hi = nhi;
  }
  if (s_end < lo - tol || s_end > hi + tol) return u_lo.size();
  return std::nullopt;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Builders
// ---------------------------------------------------------------------------

/// Flexible baseload: p_t = l_t; l_t pinned to the forecast outside the flex
/// window; energy inside the window conserved; l_t within [load_min, load_max].
inline ConstraintBlock build_flex_baseload(const FlexBaseloadSpec& spec, const TimeGrid& grid,
                                           std::string id = "flex_baseload") {
  grid.validate();
  ConstraintBlock b;
  b.id = std::move(id);
  b.kind = SignatureKind::flex_baseload;
  b.period_duration = grid.period_duration;
  const std::size_t T = grid.horizon;
  detail::check_length(b, spec.baseload.size(), T, "baseload");

  std::vector<bool> flexible(T, false);
  for (auto t : spec.flex_window) {
    if (t >= T) throw InvalidArgument(b.id + ": flex window period " + std::to_string(t) + " out of range");
    flexible[t] = true;
  }
  const auto [mn, mx] = std::minmax_element(spec.baseload.begin(), spec.baseload.end());
  if (spec.load_min < 0.0 || spec.load_min > *mn + 1e-12 || spec.load_max < *mx - 1e-12)
    throw InfeasibleSpec(b.id, "load bounds [" + std::to_string(spec.load_min) + ", " +
                                   std::to_string(spec.load_max) + "] do not contain the baseload");

  for (std::size_t t = 0; t < T; ++t) b.link.push_back(detail::add_var(b, detail::idx("p", t)));
  std::vector<std::size_t> l(T);
  for (std::size_t t = 0; t < T; ++t) l[t] = detail::add_var(b, detail::idx("l", t));

  for (std::size_t t = 0; t < T; ++t)
    b.equalities.push_back({detail::idx("balance", t), {{b.link[t], -1.0}, {l[t], 1.0}}, 0.0,
                            DualLabel::lambda1});
  for (std::size_t t = 0; t < T; ++t)
    if (!flexible[t])
      b.equalities.push_back({detail::idx("pinned", t), {{l[t], 1.0}}, spec.baseload[t], DualLabel::lambda2});
  if (!spec.flex_window.empty()) {
    EqualityRow row{"window_energy", {}, 0.0, DualLabel::lambda3};
    for (std::size_t t = 0; t < T; ++t)
      if (flexible[t]) {
        row.terms.push_back({l[t], 1.0});
        row.rhs += spec.baseload[t];
      }
    b.equalities.push_back(std::move(row));
  }
  for (std::size_t t = 0; t < T; ++t) {
    b.inequalities.push_back({detail::idx("load_lo", t), l[t], BoundSide::lower, spec.load_min, DualLabel::mu_L});
    b.inequalities.push_back({detail::idx("load_hi", t), l[t], BoundSide::upper, spec.load_max, DualLabel::mu_L});
  }
  return b;
}

/// PV: the import/export profile is the (negated) production, no freedom.
inline ConstraintBlock build_pv(const PvSpec& spec, const TimeGrid& grid, std::string id = "pv") {
  grid.validate();
  ConstraintBlock b;
  b.id = std::move(id);
  b.kind = SignatureKind::pv;
  b.period_duration = grid.period_duration;
  detail::check_length(b, spec.reference_production.size(), grid.horizon, "reference_production");
  for (double v : spec.reference_production)
    if (!(v >= 0.0) || !std::isfinite(v)) throw InvalidArgument(b.id + ": PV production must be finite and >= 0");
  for (std::size_t t = 0; t < grid.horizon; ++t) {
    b.link.push_back(detail::add_var(b, detail::idx("p", t)));
    b.equalities.push_back({detail::idx("production", t), {{b.link[t], -1.0}}, spec.reference_production[t],
                            DualLabel::lambda4});
  }
  return b;
}

/// Home battery: lossless state-of-energy recursion, cyclic over the day.
inline ConstraintBlock build_battery(const BatterySpec& spec, const TimeGrid& grid,
                                     std::string id = "battery") {
  grid.validate();
  ConstraintBlock b;
  b.id = std::move(id);
  b.kind = SignatureKind::battery;
  b.period_duration = grid.period_duration;
  const std::size_t T = grid.horizon;
  const double dt = grid.period_duration;
  if (!(spec.discharge_max <= 0.0 && spec.charge_max >= 0.0))
    throw InfeasibleSpec(b.id, "power bounds must satisfy discharge_max <= 0 <= charge_max");
  if (!(spec.energy_min <= spec.energy_init && spec.energy_init <= spec.energy_max))
    throw InfeasibleSpec(b.id, "initial energy outside [energy_min, energy_max]");

  for (std::size_t t = 0; t < T; ++t) b.link.push_back(detail::add_var(b, detail::idx("p", t)));
  std::vector<std::size_t> pw(T), e(T);
  for (std::size_t t = 0; t < T; ++t) pw[t] = detail::add_var(b, detail::idx("b", t));
  for (std::size_t t = 0; t < T; ++t) e[t] = detail::add_var(b, detail::idx("e", t));

  for (std::size_t t = 0; t < T; ++t)
    b.equalities.push_back({detail::idx("balance", t), {{b.link[t], -1.0}, {pw[t], dt}}, 0.0, DualLabel::lambda5});
  for (std::size_t t = 0; t < T; ++t) {
    EqualityRow row{detail::idx("energy", t), {{e[t], -1.0}, {pw[t], dt}}, 0.0, DualLabel::lambda6};
    if (t == 0) row.rhs = -spec.energy_init;
    else row.terms.push_back({e[t - 1], 1.0});
    b.equalities.push_back(std::move(row));
  }
  b.equalities.push_back({"terminal_energy", {{e[T - 1], 1.0}}, spec.energy_init, DualLabel::lambda7});
  for (std::size_t t = 0; t < T; ++t) {
    b.inequalities.push_back({detail::idx("power_lo", t), pw[t], BoundSide::lower, spec.discharge_max, DualLabel::mu_B});
    b.inequalities.push_back({detail::idx("power_hi", t), pw[t], BoundSide::upper, spec.charge_max, DualLabel::mu_B});
  }
  for (std::size_t t = 0; t < T; ++t) {
    b.inequalities.push_back({detail::idx("energy_lo", t), e[t], BoundSide::lower, spec.energy_min, DualLabel::mu_E});
    b.inequalities.push_back({detail::idx("energy_hi", t), e[t], BoundSide::upper, spec.energy_max, DualLabel::mu_E});
  }
  return b;
}

/// Heat pump as a first-order thermal model; indoor temperature returns to
/// its initial value at the end of the day.
inline ConstraintBlock build_heatpump(const HeatPumpSpec& spec, const TimeGrid& grid,
                                      std::span<const double> outdoor_temp, double outdoor_temp_peak,
                                      std::string id = "heat_pump") {
  grid.validate();
  ConstraintBlock b;
  b.id = std::move(id);
  b.kind = SignatureKind::heat_pump;
  b.period_duration = grid.period_duration;
  const std::size_t T = grid.horizon;
  const double dt = grid.period_duration;
  detail::check_length(b, outdoor_temp.size(), T, "outdoor_temp");
  if (!(spec.cop > 0 && spec.thermal_resistance > 0 && spec.thermal_capacity > 0 && spec.power_max >= 0))
    throw InvalidArgument(b.id + ": cop, R, C must be positive and power_max non-negative");
  if (!(spec.temp_min <= spec.temp_init && spec.temp_init <= spec.temp_max))
    throw InfeasibleSpec(b.id, "initial temperature outside the comfort band");

  const double loss = dt / (spec.thermal_resistance * spec.thermal_capacity);
  const double gain = dt * spec.cop / spec.thermal_capacity;
  const double temp_hi = std::max(spec.temp_max, outdoor_temp_peak);

  // Heat input per period ranges over [0, gain * power_max]; disturbance loss * tex_t.
  {
    std::vector<double> ulo(T, 0.0), uhi(T, gain * spec.power_max), c(T);
    for (std::size_t t = 0; t < T; ++t) c[t] = loss * outdoor_temp[t];
    if (auto bad = detail::first_unreachable_period(1.0 - loss, spec.temp_init, spec.temp_init, ulo, uhi, c,
                                                    spec.temp_min, temp_hi))
      throw InfeasibleSpec(b.id, *bad == T ? "indoor temperature cannot return to its initial value"
                                           : "comfort band unreachable in period " + std::to_string(*bad) +
                                                 " (power_max too small for the outdoor temperature?)");
  }

  for (std::size_t t = 0; t < T; ++t) b.link.push_back(detail::add_var(b, detail::idx("p", t)));
  std::vector<std::size_t> q(T), tau(T);
  for (std::size_t t = 0; t < T; ++t) q[t] = detail::add_var(b, detail::idx("p_tcl", t));
  for (std::size_t t = 0; t < T; ++t) tau[t] = detail::add_var(b, detail::idx("tau", t));

  for (std::size_t t = 0; t < T; ++t)
    b.equalities.push_back({detail::idx("balance", t), {{b.link[t], -1.0}, {q[t], dt}}, 0.0, DualLabel::lambda8});
  for (std::size_t t = 0; t < T; ++t) {
    EqualityRow row{detail::idx("thermal", t), {{tau[t], 1.0}, {q[t], -gain}}, loss * outdoor_temp[t],
                    DualLabel::lambda9};
    if (t == 0) row.rhs += (1.0 - loss) * spec.temp_init;
    else row.terms.push_back({tau[t - 1], -(1.0 - loss)});
    b.equalities.push_back(std::move(row));
  }
  b.equalities.push_back({"terminal_temp", {{tau[T - 1], 1.0}}, spec.temp_init, DualLabel::lambda10});
  for (std::size_t t = 0; t < T; ++t) {
    b.inequalities.push_back({detail::idx("power_lo", t), q[t], BoundSide::lower, 0.0, DualLabel::mu_TCL});
    b.inequalities.push_back({detail::idx("power_hi", t), q[t], BoundSide::upper, spec.power_max, DualLabel::mu_TCL});
  }
  for (std::size_t t = 0; t < T; ++t) {
    b.inequalities.push_back({detail::idx("temp_lo", t), tau[t], BoundSide::lower, spec.temp_min, DualLabel::mu_tau});
    b.inequalities.push_back({detail::idx("temp_hi", t), tau[t], BoundSide::upper, temp_hi, DualLabel::mu_tau});
  }
  return b;
}

/// Electric vehicle: like the battery, but power is gated by availability and
/// the state of charge drains while the car is away.
inline ConstraintBlock build_ev(const EvSpec& spec, const TimeGrid& grid, std::string id = "ev") {
  grid.validate();
  ConstraintBlock b;
  b.id = std::move(id);
  b.kind = SignatureKind::ev;
  b.period_duration = grid.period_duration;
  const std::size_t T = grid.horizon;
  const double dt = grid.period_duration;
  detail::check_length(b, spec.plugged_in.size(), T, "plugged_in");
  if (!(spec.discharge_max <= 0.0 && spec.charge_max >= 0.0))
    throw InfeasibleSpec(b.id, "power bounds must satisfy discharge_max <= 0 <= charge_max");
  if (!(spec.soc_min <= spec.soc_init && spec.soc_init <= spec.soc_max))
    throw InfeasibleSpec(b.id, "initial state of charge outside [soc_min, soc_max]");
  if (spec.drive_power < 0.0) throw InvalidArgument(b.id + ": drive_power must be >= 0");
  for (int u : spec.plugged_in)
    if (u != 0 && u != 1) throw InvalidArgument(b.id + ": plugged_in must be 0/1");

  {
    std::vector<double> ulo(T), uhi(T), c(T);
    for (std::size_t t = 0; t < T; ++t) {
      ulo[t] = dt * spec.plugged_in[t] * spec.discharge_max;
      uhi[t] = dt * spec.plugged_in[t] * spec.charge_max;
      c[t] = -spec.drive_power * dt * (1 - spec.plugged_in[t]);
    }
    if (auto bad = detail::first_unreachable_period(1.0, spec.soc_init, spec.soc_init, ulo, uhi, c, spec.soc_min,
                                                    spec.soc_max))
      throw InfeasibleSpec(b.id, *bad == T ? "drive energy cannot be recharged within the plugged-in periods"
                                           : "state of charge leaves its bounds in period " + std::to_string(*bad));
  }

  for (std::size_t t = 0; t < T; ++t) b.link.push_back(detail::add_var(b, detail::idx("p", t)));
  std::vector<std::size_t> v(T), s(T);
  for (std::size_t t = 0; t < T; ++t) v[t] = detail::add_var(b, detail::idx("ev", t));
  for (std::size_t t = 0; t < T; ++t) s[t] = detail::add_var(b, detail::idx("s", t));

  for (std::size_t t = 0; t < T; ++t)
    b.equalities.push_back({detail::idx("balance", t), {{b.link[t], -1.0}, {v[t], dt}}, 0.0, DualLabel::lambda11});
  for (std::size_t t = 0; t < T; ++t) {
    const double drain = spec.drive_power * dt * (1 - spec.plugged_in[t]);
    EqualityRow row{detail::idx("soc", t), {{s[t], 1.0}, {v[t], -dt}}, -drain, DualLabel::lambda12};
    if (t == 0) row.rhs += spec.soc_init;
    else row.terms.push_back({s[t - 1], -1.0});
    b.equalities.push_back(std::move(row));
  }
  b.equalities.push_back({"terminal_soc", {{s[T - 1], 1.0}}, spec.soc_init, DualLabel::lambda13});
  for (std::size_t t = 0; t < T; ++t) {
    const double u = spec.plugged_in[t];
    b.inequalities.push_back({detail::idx("power_lo", t), v[t], BoundSide::lower, u * spec.discharge_max, DualLabel::mu_EV});
    b.inequalities.push_back({detail::idx("power_hi", t), v[t], BoundSide::upper, u * spec.charge_max, DualLabel::mu_EV});
  }
  for (std::size_t t = 0; t < T; ++t) {
    b.inequalities.push_back({detail::idx("soc_lo", t), s[t], BoundSide::lower, spec.soc_min, DualLabel::mu_S});
    b.inequalities.push_back({detail::idx("soc_hi", t), s[t], BoundSide::upper, spec.soc_max, DualLabel::mu_S});
  }
  return b;
}

}  // namespace ecpricing
