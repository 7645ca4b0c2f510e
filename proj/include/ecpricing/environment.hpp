#pragma once

// Simulated ground truth: the ten-signature catalogue, hidden true weights per
// prosumer, and noisy responses to posted prices.

#include <algorithm>
#include <array>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ecpricing/data.hpp"
#include "ecpricing/signature_lp.hpp"

namespace ecpricing {

/// Asset parameters shared by every prosumer. Defaults are desk-scale
/// household values.
struct CatalogueConfig {
  std::array<std::array<std::size_t, 2>, 3> flex_windows{{{6, 10}, {10, 17}, {17, 22}}};  // [start, end) hours
  double load_max_factor = 2.0;  // load_max = factor * peak baseload
  BatterySpec battery{5.0, -5.0, 1.0, 10.0, 5.5};
  HeatPumpSpec heat_pump{3.0, 10.0, 10.0, 20.0, 19.0, 21.0, 3.0};
  std::array<std::array<double, 2>, 2> heat_pump_bands{{{19.0, 21.0}, {16.0, 24.0}}};
  EvSpec ev{7.0, -7.0, 10.0, 50.0, 30.0, {}, 1.5};
  // Hours during which the car is away, per driving pattern.
  std::vector<std::vector<std::array<std::size_t, 2>>> ev_absent{{{8, 19}}, {{6, 15}, {19, 22}}, {{7, 10}, {16, 20}}};
};

inline constexpr std::size_t kCatalogueSize = 10;
inline constexpr std::size_t kPvSignature = 3;
inline constexpr std::size_t kBatterySignature = 4;
inline constexpr std::array<std::size_t, 3> kBaseloadSignatures{0, 1, 2};
inline constexpr std::array<std::size_t, 2> kHeatPumpSignatures{5, 6};
inline constexpr std::array<std::size_t, 3> kEvSignatures{7, 8, 9};

inline const std::array<std::string, kCatalogueSize>& signature_names() {
  static const std::array<std::string, kCatalogueSize> names{
      "baseload_morning", "baseload_daytime", "baseload_evening", "pv",          "battery",
      "heat_pump_narrow", "heat_pump_wide",   "ev_workday",       "ev_split",    "ev_errands"};
  return names;
}

/// The ten signature blocks of one prosumer for one day.
inline std::vector<ConstraintBlock> build_catalogue(const CatalogueConfig& cfg, const std::vector<double>& baseload,
                                                    const ExogenousDay& day) {
  const TimeGrid grid{day.horizon(), 1.0};
  const auto& names = signature_names();
  std::vector<ConstraintBlock> out;
  const double peak = *std::max_element(baseload.begin(), baseload.end());
  for (std::size_t i = 0; i < 3; ++i) {
    FlexBaseloadSpec s{baseload, {}, 0.0, cfg.load_max_factor * peak};
    for (std::size_t t = cfg.flex_windows[i][0]; t < cfg.flex_windows[i][1] && t < grid.horizon; ++t)
      s.flex_window.push_back(t);
    out.push_back(build_flex_baseload(s, grid, names[i]));
  }
  out.push_back(build_pv({day.pv_reference}, grid, names[3]));
  out.push_back(build_battery(cfg.battery, grid, names[4]));
  for (std::size_t i = 0; i < 2; ++i) {
    HeatPumpSpec hp = cfg.heat_pump;
    hp.temp_min = cfg.heat_pump_bands[i][0];
    hp.temp_max = cfg.heat_pump_bands[i][1];
    out.push_back(build_heatpump(hp, grid, day.outdoor_temp, day.outdoor_temp_peak, names[5 + i]));
  }
  for (std::size_t i = 0; i < 3; ++i) {
    EvSpec ev = cfg.ev;
    ev.plugged_in.assign(grid.horizon, 1);
    for (const auto& [a, b] : cfg.ev_absent[i])
      for (std::size_t t = a; t < b && t < grid.horizon; ++t) ev.plugged_in[t] = 0;
    out.push_back(build_ev(ev, grid, names[7 + i]));
  }
  return out;
}

/// Ownership and size distribution used to draw true weights.
struct CommunityConfig {
  double battery_probability = 0.5;
  double heat_pump_probability = 0.7;
  double ev_probability = 0.7;
  double pv_probability = 0.6;  // otherwise no PV
  double pv_min = 0.5, pv_max = 3.0;
  double noise_fraction = 0.02;  // sigma as a fraction of peak baseload
};

struct TrueCommunity {
  std::vector<std::vector<double>> weights;  // [n][k]
  std::vector<double> noise_std;             // kWh per period, per prosumer
  std::vector<bool> enabled = std::vector<bool>(kCatalogueSize, true);  // catalogue toggles

  std::size_t prosumers() const noexcept { return weights.size(); }

  bool all_enabled(auto idx) const {
    return std::all_of(idx.begin(), idx.end(), [&](std::size_t k) { return bool(enabled[k]); });
  }

  void validate() const {
    for (std::size_t n = 0; n < weights.size(); ++n) {
      const auto& w = weights[n];
      auto bad = [&](const std::string& what) { throw InvalidArgument("prosumer " + std::to_string(n) + ": " + what); };
      if (w.size() != kCatalogueSize) bad("expected 10 weights");
      double base = 0.0;
      for (auto k : kBaseloadSignatures) {
        if (w[k] < 0.0) bad("negative baseload weight");
        base += w[k];
      }
      if (all_enabled(kBaseloadSignatures) && std::abs(base - 1.0) > 1e-9) bad("baseload weights must sum to 1");
      for (std::size_t k = 0; k < w.size(); ++k)
        if (!enabled[k] && w[k] != 0.0) bad("disabled signature " + std::to_string(k) + " has nonzero weight");
      if (w[kPvSignature] < 0.0 || w[kPvSignature] > 3.0) bad("PV weight outside [0, 3]");
      if (w[kBatterySignature] != 0.0 && w[kBatterySignature] != 1.0) bad("battery weight must be 0 or 1");
      auto one_hot_or_zero = [&](auto idx, const char* what) {
        int ones = 0;
        for (auto k : idx) {
          if (w[k] != 0.0 && w[k] != 1.0) bad(std::string(what) + " weights must be 0 or 1");
          ones += w[k] == 1.0;
        }
        if (ones > 1) bad(std::string(what) + " weights must be one-hot or all zero");
      };
      one_hot_or_zero(kHeatPumpSignatures, "heat pump");
      one_hot_or_zero(kEvSignatures, "EV");
    }
    if (enabled.size() != kCatalogueSize) throw InvalidArgument("community: expected 10 catalogue toggles");
    if (noise_std.size() != weights.size()) throw InvalidArgument("community: one noise level per prosumer required");
    for (double s : noise_std)
      if (!(s >= 0.0)) throw InvalidArgument("community: noise must be >= 0");
  }
};

/// Draw a community. Baseload weights are Dirichlet(1,1,1); assets follow the
/// ownership probabilities; noise is a fraction of each prosumer's peak load.
inline TrueCommunity make_community(std::size_t prosumers, std::uint64_t seed, const CommunityConfig& cfg,
                                    const std::vector<std::vector<double>>& baseload,
                                    const std::vector<bool>& enabled = std::vector<bool>(kCatalogueSize, true)) {
  if (prosumers == 0) throw InvalidArgument("make_community: need at least one prosumer");
  if (baseload.size() < prosumers) throw InvalidArgument("make_community: fewer baseload profiles than prosumers");
  std::mt19937_64 rng(seed);
  std::exponential_distribution<double> gamma1(1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  if (enabled.size() != kCatalogueSize) throw InvalidArgument("make_community: expected 10 catalogue toggles");
  TrueCommunity c;
  c.enabled = enabled;
  for (std::size_t n = 0; n < prosumers; ++n) {
    std::vector<double> w(kCatalogueSize, 0.0);
    double s = 0.0;
    for (auto k : kBaseloadSignatures) s += (w[k] = gamma1(rng));
    for (auto k : kBaseloadSignatures) w[k] /= s;
    w[kBaseloadSignatures[2]] = 1.0 - w[kBaseloadSignatures[0]] - w[kBaseloadSignatures[1]];
    if (u(rng) < cfg.pv_probability) w[kPvSignature] = cfg.pv_min + (cfg.pv_max - cfg.pv_min) * u(rng);
    if (u(rng) < cfg.battery_probability) w[kBatterySignature] = 1.0;
    if (u(rng) < cfg.heat_pump_probability)
      w[kHeatPumpSignatures[std::min<std::size_t>(1, std::size_t(u(rng) * 2))]] = 1.0;
    if (u(rng) < cfg.ev_probability) w[kEvSignatures[std::min<std::size_t>(2, std::size_t(u(rng) * 3))]] = 1.0;
    for (std::size_t k = 0; k < kCatalogueSize; ++k)
      if (!enabled[k]) w[k] = 0.0;
    c.weights.push_back(std::move(w));
    c.noise_std.push_back(cfg.noise_fraction * *std::max_element(baseload[n].begin(), baseload[n].end()));
  }
  c.validate();
  return c;
}

/// Change heat-pump and EV preferences of round(fraction * N) prosumers picked
/// at random: an owned asset moves to a different one-hot position, an absent
/// one is acquired at a random position. Returns the affected prosumers.
inline std::vector<std::size_t> flip_weights(TrueCommunity& c, double fraction, std::uint64_t seed) {
  if (fraction < 0.0 || fraction > 1.0) throw InvalidArgument("flip fraction must lie in [0, 1]");
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order(c.prosumers());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  order.resize(static_cast<std::size_t>(std::llround(fraction * double(c.prosumers()))));
  std::sort(order.begin(), order.end());
  auto flip = [&](std::vector<double>& w, auto idx) {
    std::vector<std::size_t> options;
    for (auto k : idx)
      if (w[k] != 1.0 && c.enabled[k]) options.push_back(k);
    if (options.empty()) return;
    for (auto k : idx) w[k] = 0.0;
    w[options[std::uniform_int_distribution<std::size_t>(0, options.size() - 1)(rng)]] = 1.0;
  };
  for (auto n : order) {
    flip(c.weights[n], kHeatPumpSignatures);
    flip(c.weights[n], kEvSignatures);
  }
  c.validate();
  return order;
}

/// Per-signature profiles a prosumer actually follows at the posted prices.
/// A recommended profile is followed when it is optimal for the signature LP
/// at those prices; otherwise the LP's own optimum is used. Result is [k][t].
/// `known_optima` may carry (objective, profile) pairs already solved at the
/// same prices; entries with a NaN objective are solved here.
inline std::vector<std::vector<double>> realized_profiles(
    const std::vector<ConstraintBlock>& blocks, std::span<const double> prices,
    const std::vector<std::vector<double>>& recommended, const milp::SolveOptions& opts = {},
    double tie_tolerance = 1e-6, const std::vector<double>* known_objectives = nullptr,
    const std::vector<std::vector<double>>* known_profiles = nullptr) {
  std::vector<std::vector<double>> out;
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    double objective;
    std::vector<double> profile;
    if (known_objectives && known_profiles && k < known_objectives->size() && std::isfinite((*known_objectives)[k]) &&
        (*known_profiles)[k].size() == prices.size()) {
      objective = (*known_objectives)[k];
      profile = (*known_profiles)[k];
    } else {
      auto sol = solve_signature_lp(blocks[k], prices, opts);
      objective = sol.objective;
      profile = std::move(sol.profile);
    }
    if (k < recommended.size() && recommended[k].size() == prices.size()) {
      double cost = 0.0;
      for (std::size_t t = 0; t < prices.size(); ++t) cost += prices[t] * recommended[k][t];
      if (cost <= objective + tie_tolerance * std::max(1.0, std::abs(objective))) {
        out.push_back(recommended[k]);
        continue;
      }
    }
    out.push_back(std::move(profile));
  }
  return out;
}

/// Noise-free response: sum_k theta_k * profile_k.
inline std::vector<double> expected_response(const std::vector<std::vector<double>>& profiles,
                                             std::span<const double> weights) {
  if (profiles.size() != weights.size()) throw InvalidArgument("expected_response: one weight per profile required");
  std::vector<double> y(profiles.empty() ? 0 : profiles[0].size(), 0.0);
  for (std::size_t k = 0; k < profiles.size(); ++k)
    for (std::size_t t = 0; t < y.size(); ++t) y[t] += weights[k] * profiles[k][t];
  return y;
}

/// Observed response: expected response plus i.i.d. Gaussian noise per period.
template <class Rng>
std::vector<double> true_response(const std::vector<std::vector<double>>& profiles, std::span<const double> weights,
                                  double noise_std, Rng& rng) {
  auto y = expected_response(profiles, weights);
  if (noise_std > 0.0) {
    std::normal_distribution<double> eps(0.0, noise_std);
    for (double& v : y) v += eps(rng);
  }
  return y;
}

inline nlohmann::json to_json(const TrueCommunity& c) {
  return {{"weights", c.weights}, {"noise_std", c.noise_std}, {"signatures", signature_names()}, {"enabled", c.enabled}};
}

inline TrueCommunity community_from_json(const nlohmann::json& j) {
  TrueCommunity c;
  c.weights = j.at("weights").get<std::vector<std::vector<double>>>();
  c.noise_std = j.at("noise_std").get<std::vector<double>>();
  if (j.contains("enabled")) c.enabled = j.at("enabled").get<std::vector<bool>>();
  c.validate();
  return c;
}

}  // namespace ecpricing
