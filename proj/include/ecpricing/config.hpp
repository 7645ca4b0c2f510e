#pragma once

// Experiment configuration: one JSON file, every knob with a default.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "ecpricing/bilevel/bips.hpp"
#include "ecpricing/environment.hpp"
#include "ecpricing/learner.hpp"

namespace ecpricing {

struct EconomicsConfig {
  double import_tariff = 0.5;      // DKK/kWh on top of spot
  double export_tariff = 0.05;     // DKK/kWh deducted from spot
  double violation_penalty = 10.0; // DKK/kWh over the limit
  double capacity_limit = 15.0;    // kWh per period at the connection point
  double price_cap = 10.0;         // DKK/kWh
  double connection_factor = 10.0;
  double standalone_fee = 20.0;    // DKK/day a prosumer pays outside the community
};

struct ShiftConfig {
  bool enabled = false;    // inject a preference flip
  int day = 60;            // 1-based day on which the flip takes effect
  double fraction = 0.4;
  bool reset = true;       // reset beliefs when drift is detected
  double tolerance = 0.25; // kWh RMS
  int window = 3;
  bool require_settled = true;
};

struct DataConfig {
  std::string source = "synthetic";  // synthetic | csv
  int year = 2023;
  std::string price, temperature, pv, baseload;  // csv paths
};

struct Seeds {
  std::uint64_t community = 7;
  std::uint64_t data = 42;
  std::uint64_t learner = 1000;
  std::uint64_t flip = 99;
};

struct ExperimentConfig {
  std::string name = "desk";
  std::size_t prosumers = 5;
  std::size_t horizon = 24;
  int days = 120;
  int runs = 5;
  std::vector<std::string> signatures;  // enabled catalogue entries, empty = all
  Seeds seeds;
  EconomicsConfig economics;
  PriorConfig prior;
  CommunityConfig community;
  std::vector<std::vector<double>> true_weights;  // optional explicit ground truth
  CatalogueConfig catalogue;
  ShiftConfig shift;
  DataConfig data;
  std::string backend = "highs";
  milp::SolveOptions solver;
  int max_doublings = 4;
  int resample_limit = 3;  // fresh draws after an infeasible sampled instance
  double sampled_gap = 1e-3;  // acceptance gap for price-setting with sampled weights
  int threads = 1;         // runs executed concurrently
  std::vector<int> snapshot_days{1, 5, 25, 100};
  int plateau_window = 25;
  int violation_window = 20;
  std::string output_dir = "results";

  std::vector<bool> enabled_mask() const {
    std::vector<bool> m(kCatalogueSize, signatures.empty());
    for (const auto& s : signatures)
      for (std::size_t k = 0; k < kCatalogueSize; ++k)
        if (signature_names()[k] == s) m[k] = true;
    return m;
  }
  std::vector<std::size_t> enabled_indices() const {
    std::vector<std::size_t> idx;
    const auto m = enabled_mask();
    for (std::size_t k = 0; k < m.size(); ++k)
      if (m[k]) idx.push_back(k);
    return idx;
  }
};

namespace detail {

inline void check_keys(const nlohmann::json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!ok.count(it.key())) throw ConfigError(where + ": unknown key '" + it.key() + "'");
}

template <class T>
void read(const nlohmann::json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  if constexpr (std::is_unsigned_v<T>)
    if (j.at(key).is_number() && j.at(key).template get<double>() < 0.0)
      throw ConfigError(where + "." + key + " must not be negative");
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

inline std::string resolve(const std::string& path, const std::filesystem::path& base) {
  if (path.empty()) return path;
  std::filesystem::path p(path);
  return p.is_absolute() ? p.string() : (base / p).lexically_normal().string();
}

}  // namespace detail

inline void validate(const ExperimentConfig& c) {
  auto fail = [](const std::string& what) { throw ConfigError(what); };
  if (c.prosumers < 1) fail("prosumers must be >= 1");
  if (c.days < 1) fail("days must be >= 1");
  if (c.runs < 1) fail("runs must be >= 1");
  if (c.horizon != 24) fail("horizon must be 24 (the catalogue windows are hourly)");
  if (c.threads < 1) fail("threads must be >= 1");
  if (c.max_doublings < 0) fail("max_doublings must be >= 0");
  if (c.resample_limit < 0) fail("resample_limit must be >= 0");
  if (!(c.sampled_gap >= 0.0)) fail("sampled_gap must be >= 0");
  for (const auto& s : c.signatures) {
    const auto& names = signature_names();
    if (std::find(names.begin(), names.end(), s) == names.end()) fail("unknown signature '" + s + "'");
  }
  if (c.enabled_indices().empty()) fail("catalogue: at least one signature must be enabled");
  const auto& e = c.economics;
  if (!(e.capacity_limit >= 0.0)) fail("economics.capacity_limit must be >= 0");
  if (!(e.price_cap > 0.0)) fail("economics.price_cap must be > 0");
  if (!(e.connection_factor > 0.0)) fail("economics.connection_factor must be > 0");
  if (!std::isfinite(e.import_tariff) || !std::isfinite(e.export_tariff) || !std::isfinite(e.violation_penalty) ||
      !std::isfinite(e.standalone_fee))
    fail("economics: tariffs, penalty and fee must be finite");
  if (!(c.prior.std > 0.0)) fail("prior.std must be > 0");
  if (!(c.prior.pv_scale > 0.0)) fail("prior.pv_scale must be > 0");
  if (!(c.community.noise_fraction >= 0.0)) fail("community.noise_fraction must be >= 0");
  if (c.shift.enabled && (c.shift.day < 1 || c.shift.day > c.days)) fail("shift.day must lie within the run");
  if (c.shift.fraction < 0.0 || c.shift.fraction > 1.0) fail("shift.fraction must lie in [0, 1]");
  if (c.shift.window < 1) fail("shift.window must be >= 1");
  if (!(c.shift.tolerance >= 0.0)) fail("shift.tolerance must be >= 0");
  if (!c.true_weights.empty() && c.true_weights.size() != c.prosumers)
    fail("community.weights must have one row per prosumer");
  if (c.data.source == "csv") {
    for (const auto* p : {&c.data.price, &c.data.temperature, &c.data.pv, &c.data.baseload}) {
      if (p->empty()) fail("data: csv source needs price, temperature, pv and baseload paths");
      if (!std::filesystem::exists(*p)) fail("data: file not found: " + *p);
    }
  } else if (c.data.source != "synthetic") {
    fail("data.source must be 'synthetic' or 'csv'");
  }
  if (c.solver.time_limit <= 0.0) fail("solver.time_limit must be > 0");
  if (c.solver.mip_rel_gap < 0.0) fail("solver.mip_rel_gap must be >= 0");
  if (c.plateau_window < 1 || c.violation_window < 1) fail("report windows must be >= 1");
}

/// Parse a configuration object. Relative paths resolve against `base`.
inline ExperimentConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base = ".") {
  using detail::read;
  ExperimentConfig c;
  detail::check_keys(j, "config",
                     {"name", "prosumers", "horizon", "days", "runs", "seeds", "economics", "prior", "community",
                      "catalogue", "shift", "data", "solver", "report", "output_dir", "threads"});
  read(j, "name", c.name, "config");
  read(j, "prosumers", c.prosumers, "config");
  read(j, "horizon", c.horizon, "config");
  read(j, "days", c.days, "config");
  read(j, "runs", c.runs, "config");
  read(j, "threads", c.threads, "config");
  read(j, "output_dir", c.output_dir, "config");
  if (j.contains("seeds")) {
    const auto& s = j["seeds"];
    detail::check_keys(s, "seeds", {"community", "data", "learner", "flip"});
    read(s, "community", c.seeds.community, "seeds");
    read(s, "data", c.seeds.data, "seeds");
    read(s, "learner", c.seeds.learner, "seeds");
    read(s, "flip", c.seeds.flip, "seeds");
  }
  if (j.contains("economics")) {
    const auto& e = j["economics"];
    detail::check_keys(e, "economics",
                       {"import_tariff", "export_tariff", "violation_penalty", "capacity_limit", "price_cap",
                        "connection_factor", "standalone_fee"});
    read(e, "import_tariff", c.economics.import_tariff, "economics");
    read(e, "export_tariff", c.economics.export_tariff, "economics");
    read(e, "violation_penalty", c.economics.violation_penalty, "economics");
    if (e.contains("capacity_limit") && e["capacity_limit"].is_null())
      c.economics.capacity_limit = INFINITY;
    else
      read(e, "capacity_limit", c.economics.capacity_limit, "economics");
    read(e, "price_cap", c.economics.price_cap, "economics");
    read(e, "connection_factor", c.economics.connection_factor, "economics");
    read(e, "standalone_fee", c.economics.standalone_fee, "economics");
  }
  if (j.contains("prior")) {
    const auto& p = j["prior"];
    detail::check_keys(p, "prior", {"mean", "std", "pv_scale"});
    read(p, "mean", c.prior.mean, "prior");
    read(p, "std", c.prior.std, "prior");
    read(p, "pv_scale", c.prior.pv_scale, "prior");
  }
  if (j.contains("community")) {
    const auto& p = j["community"];
    detail::check_keys(p, "community",
                       {"battery_probability", "heat_pump_probability", "ev_probability", "pv_probability", "pv_min",
                        "pv_max", "noise_fraction", "weights"});
    read(p, "battery_probability", c.community.battery_probability, "community");
    read(p, "heat_pump_probability", c.community.heat_pump_probability, "community");
    read(p, "ev_probability", c.community.ev_probability, "community");
    read(p, "pv_probability", c.community.pv_probability, "community");
    read(p, "pv_min", c.community.pv_min, "community");
    read(p, "pv_max", c.community.pv_max, "community");
    read(p, "noise_fraction", c.community.noise_fraction, "community");
    read(p, "weights", c.true_weights, "community");
  }
  if (j.contains("catalogue")) {
    const auto& p = j["catalogue"];
    detail::check_keys(p, "catalogue", {"signatures", "load_max_factor", "battery", "heat_pump", "ev"});
    read(p, "signatures", c.signatures, "catalogue");
    read(p, "load_max_factor", c.catalogue.load_max_factor, "catalogue");
    if (p.contains("battery")) {
      const auto& b = p["battery"];
      detail::check_keys(b, "catalogue.battery", {"charge_max", "discharge_max", "energy_min", "energy_max", "energy_init"});
      auto& s = c.catalogue.battery;
      read(b, "charge_max", s.charge_max, "battery");
      read(b, "discharge_max", s.discharge_max, "battery");
      read(b, "energy_min", s.energy_min, "battery");
      read(b, "energy_max", s.energy_max, "battery");
      read(b, "energy_init", s.energy_init, "battery");
    }
    if (p.contains("heat_pump")) {
      const auto& b = p["heat_pump"];
      detail::check_keys(b, "catalogue.heat_pump",
                         {"cop", "thermal_resistance", "thermal_capacity", "temp_init", "power_max"});
      auto& s = c.catalogue.heat_pump;
      read(b, "cop", s.cop, "heat_pump");
      read(b, "thermal_resistance", s.thermal_resistance, "heat_pump");
      read(b, "thermal_capacity", s.thermal_capacity, "heat_pump");
      read(b, "temp_init", s.temp_init, "heat_pump");
      read(b, "power_max", s.power_max, "heat_pump");
    }
    if (p.contains("ev")) {
      const auto& b = p["ev"];
      detail::check_keys(b, "catalogue.ev",
                         {"charge_max", "discharge_max", "soc_min", "soc_max", "soc_init", "drive_power"});
      auto& s = c.catalogue.ev;
      read(b, "charge_max", s.charge_max, "ev");
      read(b, "discharge_max", s.discharge_max, "ev");
      read(b, "soc_min", s.soc_min, "ev");
      read(b, "soc_max", s.soc_max, "ev");
      read(b, "soc_init", s.soc_init, "ev");
      read(b, "drive_power", s.drive_power, "ev");
    }
  }
  if (j.contains("shift")) {
    const auto& p = j["shift"];
    detail::check_keys(p, "shift", {"enabled", "day", "fraction", "reset", "tolerance", "window", "require_settled"});
    read(p, "enabled", c.shift.enabled, "shift");
    read(p, "day", c.shift.day, "shift");
    read(p, "fraction", c.shift.fraction, "shift");
    read(p, "reset", c.shift.reset, "shift");
    read(p, "tolerance", c.shift.tolerance, "shift");
    read(p, "window", c.shift.window, "shift");
    read(p, "require_settled", c.shift.require_settled, "shift");
  }
  if (j.contains("data")) {
    const auto& p = j["data"];
    detail::check_keys(p, "data", {"source", "year", "price", "temperature", "pv", "baseload"});
    read(p, "source", c.data.source, "data");
    read(p, "year", c.data.year, "data");
    read(p, "price", c.data.price, "data");
    read(p, "temperature", c.data.temperature, "data");
    read(p, "pv", c.data.pv, "data");
    read(p, "baseload", c.data.baseload, "data");
    for (auto* s : {&c.data.price, &c.data.temperature, &c.data.pv, &c.data.baseload}) *s = detail::resolve(*s, base);
  }
  if (j.contains("solver")) {
    const auto& p = j["solver"];
    detail::check_keys(p, "solver",
                       {"backend", "time_limit", "mip_rel_gap", "seed", "threads", "max_doublings", "resample_limit",
                        "sampled_gap", "diagnostics_dir"});
    read(p, "backend", c.backend, "solver");
    read(p, "time_limit", c.solver.time_limit, "solver");
    read(p, "mip_rel_gap", c.solver.mip_rel_gap, "solver");
    read(p, "seed", c.solver.seed, "solver");
    read(p, "threads", c.solver.threads, "solver");
    read(p, "max_doublings", c.max_doublings, "solver");
    read(p, "resample_limit", c.resample_limit, "solver");
    read(p, "sampled_gap", c.sampled_gap, "solver");
    read(p, "diagnostics_dir", c.solver.diagnostics_dir, "solver");
  }
  if (j.contains("report")) {
    const auto& p = j["report"];
    detail::check_keys(p, "report", {"snapshot_days", "plateau_window", "violation_window"});
    read(p, "snapshot_days", c.snapshot_days, "report");
    read(p, "plateau_window", c.plateau_window, "report");
    read(p, "violation_window", c.violation_window, "report");
  }
  return c;
}

/// Environment overrides: ECPRICING_BACKEND selects the solver backend,
/// ECPRICING_THREADS the number of concurrent runs.
inline void apply_env_overrides(ExperimentConfig& c) {
  if (const char* b = std::getenv("ECPRICING_BACKEND"); b && *b) c.backend = b;
  if (const char* t = std::getenv("ECPRICING_THREADS"); t && *t) {
    char* end = nullptr;
    const long v = std::strtol(t, &end, 10);
    if (end == t || *end != '\0' || v < 1) throw ConfigError(std::string("ECPRICING_THREADS must be a positive integer, got '") + t + "'");
    c.threads = static_cast<int>(v);
  }
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  auto c = parse_config(j, std::filesystem::absolute(path).parent_path());
  apply_env_overrides(c);
  validate(c);
  return c;
}

/// Fully expanded configuration, defaults included. Output directory and
/// concurrency are left out: they do not affect results.
inline nlohmann::json to_json(const ExperimentConfig& c) {
  const auto& e = c.economics;
  const auto& cat = c.catalogue;
  nlohmann::json j;
  j["name"] = c.name;
  j["prosumers"] = c.prosumers;
  j["horizon"] = c.horizon;
  j["days"] = c.days;
  j["runs"] = c.runs;
  j["seeds"] = {{"community", c.seeds.community}, {"data", c.seeds.data}, {"learner", c.seeds.learner}, {"flip", c.seeds.flip}};
  j["economics"] = {{"import_tariff", e.import_tariff},
                    {"export_tariff", e.export_tariff},
                    {"violation_penalty", e.violation_penalty},
                    {"capacity_limit", std::isfinite(e.capacity_limit) ? nlohmann::json(e.capacity_limit) : nlohmann::json()},
                    {"price_cap", e.price_cap},
                    {"connection_factor", e.connection_factor},
                    {"standalone_fee", e.standalone_fee}};
  j["prior"] = {{"mean", c.prior.mean}, {"std", c.prior.std}, {"pv_scale", c.prior.pv_scale}};
  j["community"] = {{"battery_probability", c.community.battery_probability},
                    {"heat_pump_probability", c.community.heat_pump_probability},
                    {"ev_probability", c.community.ev_probability},
                    {"pv_probability", c.community.pv_probability},
                    {"pv_min", c.community.pv_min},
                    {"pv_max", c.community.pv_max},
                    {"noise_fraction", c.community.noise_fraction}};
  if (!c.true_weights.empty()) j["community"]["weights"] = c.true_weights;
  std::vector<std::string> sigs;
  for (auto k : c.enabled_indices()) sigs.push_back(signature_names()[k]);
  j["catalogue"] = {
      {"signatures", sigs},
      {"load_max_factor", cat.load_max_factor},
      {"battery",
       {{"charge_max", cat.battery.charge_max}, {"discharge_max", cat.battery.discharge_max},
        {"energy_min", cat.battery.energy_min}, {"energy_max", cat.battery.energy_max},
        {"energy_init", cat.battery.energy_init}}},
      {"heat_pump",
       {{"cop", cat.heat_pump.cop}, {"thermal_resistance", cat.heat_pump.thermal_resistance},
        {"thermal_capacity", cat.heat_pump.thermal_capacity}, {"temp_init", cat.heat_pump.temp_init},
        {"power_max", cat.heat_pump.power_max}}},
      {"ev",
       {{"charge_max", cat.ev.charge_max}, {"discharge_max", cat.ev.discharge_max}, {"soc_min", cat.ev.soc_min},
        {"soc_max", cat.ev.soc_max}, {"soc_init", cat.ev.soc_init}, {"drive_power", cat.ev.drive_power}}}};
  j["shift"] = {{"enabled", c.shift.enabled},     {"day", c.shift.day},         {"fraction", c.shift.fraction},
                {"reset", c.shift.reset},         {"tolerance", c.shift.tolerance}, {"window", c.shift.window},
                {"require_settled", c.shift.require_settled}};
  j["data"] = {{"source", c.data.source}, {"year", c.data.year}};
  if (c.data.source == "csv")
    for (auto [k, v] : {std::pair{"price", &c.data.price}, std::pair{"temperature", &c.data.temperature},
                        std::pair{"pv", &c.data.pv}, std::pair{"baseload", &c.data.baseload}})
      j["data"][k] = *v;
  j["solver"] = {{"backend", c.backend},
                 {"time_limit", c.solver.time_limit},
                 {"mip_rel_gap", c.solver.mip_rel_gap},
                 {"seed", c.solver.seed},
                 {"threads", c.solver.threads},
                 {"max_doublings", c.max_doublings},
                 {"resample_limit", c.resample_limit},
                 {"sampled_gap", c.sampled_gap}};
  j["report"] = {{"snapshot_days", c.snapshot_days},
                 {"plateau_window", c.plateau_window},
                 {"violation_window", c.violation_window}};
  return j;
}

inline std::string sha256_hex(std::string_view data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw Error("sha256 digest failed");
  std::ostringstream os;
  for (unsigned i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
  return os.str();
}

inline std::string file_sha256(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return sha256_hex(ss.str());
}

inline std::string config_hash(const ExperimentConfig& c) { return sha256_hex(to_json(c).dump()); }

}  // namespace ecpricing
