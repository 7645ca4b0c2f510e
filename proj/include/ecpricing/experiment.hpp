#pragma once

// Learning loop over days and runs, result files, manifest, replay and
// report.

#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "ecpricing/bilevel/bips.hpp"
#include "ecpricing/config.hpp"
#include "ecpricing/data.hpp"
#include "ecpricing/environment.hpp"
#include "ecpricing/learner.hpp"
#include "ecpricing/metrics.hpp"
#include "ecpricing/plots.hpp"

namespace ecpricing {

inline constexpr const char* kVersion = "0.1.0";

/// The two replay outcomes that are not a plain success.
class ReplayMismatch : public Error {
 public:
  using Error::Error;
};
class NonComparable : public Error {
 public:
  using Error::Error;
};

/// Data, ground truth and caches shared by every run of an experiment.
struct ExperimentContext {
  ExperimentConfig config;
  std::vector<ExogenousDay> days;
  TrueCommunity community;
  std::optional<TrueCommunity> shifted;  // ground truth from the flip day on
  std::vector<std::size_t> shifted_prosumers;
  std::vector<std::size_t> enabled;      // catalogue indices in use
  std::vector<double> learner_noise;     // per prosumer, from public baseload
  const milp::Backend* backend = nullptr;
  metrics::ClairvoyantCache clairvoyant;
};

inline std::unique_ptr<ExperimentContext> make_context(const ExperimentConfig& cfg) {
  validate(cfg);
  auto ctx = std::make_unique<ExperimentContext>();
  ctx->config = cfg;
  try {
    ctx->backend = &milp::backend_by_name(cfg.backend);
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  if (cfg.data.source == "csv") {
    ctx->days = load_exogenous(cfg.data.price, cfg.data.temperature, cfg.data.pv, cfg.data.baseload);
    if (ctx->days.size() < std::size_t(cfg.days))
      throw ConfigError("data covers " + std::to_string(ctx->days.size()) + " days, config asks for " +
                        std::to_string(cfg.days));
    ctx->days.resize(cfg.days);
    if (ctx->days[0].baseload.size() < cfg.prosumers)
      throw ConfigError("baseload file has fewer prosumer columns than configured prosumers");
  } else {
    ctx->days = synth_exogenous(cfg.days, cfg.prosumers, cfg.seeds.data, cfg.data.year);
  }
  for (auto& d : ctx->days) d.baseload.resize(cfg.prosumers);
  const auto& baseload = ctx->days[0].baseload;
  const auto mask = cfg.enabled_mask();
  ctx->enabled = cfg.enabled_indices();
  if (cfg.true_weights.empty()) {
    ctx->community = make_community(cfg.prosumers, cfg.seeds.community, cfg.community, baseload, mask);
  } else {
    ctx->community.weights = cfg.true_weights;
    ctx->community.enabled = mask;
    for (std::size_t n = 0; n < cfg.prosumers; ++n)
      ctx->community.noise_std.push_back(cfg.community.noise_fraction *
                                         *std::max_element(baseload[n].begin(), baseload[n].end()));
    try {
      ctx->community.validate();
    } catch (const InvalidArgument& e) {
      throw ConfigError(std::string("community.weights: ") + e.what());
    }
  }
  for (std::size_t n = 0; n < cfg.prosumers; ++n)
    ctx->learner_noise.push_back(cfg.community.noise_fraction *
                                 *std::max_element(baseload[n].begin(), baseload[n].end()));
  if (cfg.shift.enabled) {
    ctx->shifted = ctx->community;
    ctx->shifted_prosumers = flip_weights(*ctx->shifted, cfg.shift.fraction, cfg.seeds.flip);
  }
  return ctx;
}

namespace detail {

inline std::string community_key(const TrueCommunity& c) { return sha256_hex(ecpricing::to_json(c).dump()).substr(0, 16); }

inline bilevel::CommunityEconomics day_economics(const ExperimentConfig& cfg, const ExogenousDay& day) {
  const std::size_t T = day.horizon();
  const auto& e = cfg.economics;
  bilevel::CommunityEconomics econ;
  econ.spot_price = day.spot_price;
  econ.import_tariff.assign(T, e.import_tariff);
  econ.export_tariff.assign(T, e.export_tariff);
  econ.violation_penalty.assign(T, e.violation_penalty);
  econ.capacity_limit.assign(T, e.capacity_limit);
  econ.price_cap = e.price_cap;
  econ.connection_factor = e.connection_factor;
  return econ;
}

inline std::vector<double> select(const std::vector<double>& full, const std::vector<std::size_t>& idx) {
  std::vector<double> out;
  for (auto k : idx) out.push_back(full[k]);
  return out;
}

inline bilevel::BipsSolveOptions bips_options(const ExperimentConfig& cfg) {
  bilevel::BipsSolveOptions o;
  o.solver = cfg.solver;
  o.max_doublings = cfg.max_doublings;
  return o;
}

/// Sampled weights carry noise (including small negative weights) that keeps
/// the cooperative bound out of reach, so these solves stop at a looser gap.
inline bilevel::BipsSolveOptions sampled_options(const ExperimentConfig& cfg) {
  auto o = bips_options(cfg);
  o.accept_gap = cfg.sampled_gap;
  o.accept_incumbent = true;
  return o;
}

/// Price-setting instance for one day with the given weights; outside costs
/// are the stand-alone bills under the same weights.
inline bilevel::BipsInstance make_instance(const ExperimentContext& ctx, const ExogenousDay& day,
                                           const std::vector<std::vector<ConstraintBlock>>& blocks,
                                           const std::vector<std::vector<double>>& weights) {
  bilevel::BipsInstance inst;
  inst.blocks = blocks;
  inst.weights = weights;
  inst.econ = day_economics(ctx.config, day);
  for (std::size_t n = 0; n < blocks.size(); ++n)
    inst.econ.outside_cost.push_back(bilevel::standalone_cost(blocks[n], weights[n], inst.econ,
                                                              ctx.config.economics.standalone_fee, ctx.config.solver,
                                                              *ctx.backend));
  return inst;
}

/// Independent generator per (seed, run, purpose).
inline std::mt19937_64 stream(std::uint64_t seed, int run, unsigned purpose) {
  std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32), std::uint32_t(run), std::uint32_t(purpose)};
  return std::mt19937_64(seq);
}

inline std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream out(p);
  if (!out) throw Error("cannot write " + p.string());
  return out;
}

}  // namespace detail

struct RunResult {
  int run = 0;
  bool ok = true;
  std::string error;
  std::string error_kind;  // config | solver | infeasible | other
  int failed_day = 0;
  std::vector<metrics::RegretRecord> regret;
  int resamples = 0;
  std::vector<std::pair<int, std::size_t>> resets;  // (day, prosumer)
};

/// One learning run. Writes run_<r>/ files under `out_dir`.
inline RunResult run_learning(ExperimentContext& ctx, int run, const std::filesystem::path& out_dir) {
  const auto& cfg = ctx.config;
  const std::size_t N = cfg.prosumers, K = ctx.enabled.size();
  const auto opts = detail::bips_options(cfg);
  const auto sampled_opts = detail::sampled_options(cfg);
  const auto dir = out_dir / ("run_" + std::to_string(run));
  std::filesystem::create_directories(dir);

  RunResult res;
  res.run = run;
  auto f_regret = detail::open_out(dir / "regret.csv");
  auto f_viol = detail::open_out(dir / "violation.csv");
  auto f_belief = detail::open_out(dir / "beliefs.csv");
  auto f_err = detail::open_out(dir / "posterior_error.csv");
  auto f_price = detail::open_out(dir / "prices.csv");
  auto f_event = detail::open_out(dir / "events.csv");
  auto f_solve = detail::open_out(dir / "solves.csv");
  f_regret << "day,sampled_cost,clairvoyant_cost,regret,cumulative\n";
  f_viol << "day,t,violation,clairvoyant_violation,net_load\n";
  f_belief << "day,prosumer,signature,mean,variance\n";
  f_err << "day,prosumer,signature,abs_error,covariance_trace\n";
  f_price << "day,prosumer,t,price\n";
  f_event << "day,event,detail\n";
  f_solve << "day,seconds,gap_to_bound,certified,mip_gap,doublings,payment_gap,bigm_ok,max_dual_ratio,"
             "clairvoyant_payment_gap,clairvoyant_bigm_ok\n";

  // Signature positions within the enabled catalogue.
  PriorConfig prior = cfg.prior;
  prior.pv_signatures.clear();
  for (std::size_t i = 0; i < K; ++i)
    if (ctx.enabled[i] == kPvSignature) prior.pv_signatures.push_back(i);

  std::mt19937_64 sample_rng = detail::stream(cfg.seeds.learner, run, 1);
  std::mt19937_64 noise_rng = detail::stream(cfg.seeds.learner, run, 2);

  std::vector<WeightBelief> beliefs(N, init_prior(K, prior));
  std::vector<ShiftDetector> detectors;
  const bool detect = cfg.shift.enabled && cfg.shift.reset;
  for (std::size_t n = 0; n < N; ++n)
    detectors.emplace_back(cfg.shift.tolerance, cfg.shift.window, cfg.shift.require_settled);
  metrics::RegretTracker tracker;

  int day_no = 0;
  try {
    for (std::size_t d = 0; d < ctx.days.size(); ++d) {
      day_no = int(d) + 1;
      const auto& day = ctx.days[d];
      const bool after_flip = ctx.shifted && day_no >= cfg.shift.day;
      const TrueCommunity& truth = after_flip ? *ctx.shifted : ctx.community;
      if (ctx.shifted && day_no == cfg.shift.day) {
        std::string who;
        for (auto n : ctx.shifted_prosumers) who += (who.empty() ? "" : " ") + std::to_string(n);
        f_event << day_no << ",flip," << who << '\n';
      }

      std::vector<std::vector<ConstraintBlock>> blocks(N);
      std::vector<std::vector<double>> theta_true(N);
      for (std::size_t n = 0; n < N; ++n) {
        auto all = build_catalogue(cfg.catalogue, day.baseload[n], day);
        for (auto k : ctx.enabled) blocks[n].push_back(std::move(all[k]));
        theta_true[n] = detail::select(truth.weights[n], ctx.enabled);
      }

      // Regret baseline with the true weights.
      const auto cv = ctx.clairvoyant.get(day_no, detail::community_key(truth), [&] {
        return metrics::clairvoyant(detail::make_instance(ctx, day, blocks, theta_true), opts, *ctx.backend);
      });

      // Price setting with sampled weights. An infeasible draw is replaced
      // by a fresh one, up to the configured limit.
      bilevel::BipsSolution sol;
      for (int attempt = 0;; ++attempt) {
        std::vector<std::vector<double>> theta(N);
        for (std::size_t n = 0; n < N; ++n) {
          const Eigen::VectorXd s = sample_weights(beliefs[n], sample_rng);
          theta[n].assign(s.data(), s.data() + s.size());
        }
        try {
          sol = bilevel::solve_bips(detail::make_instance(ctx, day, blocks, theta), sampled_opts, *ctx.backend);
          break;
        } catch (const bilevel::InfeasibleBips&) {
          if (attempt >= cfg.resample_limit) throw;
          ++res.resamples;
          f_event << day_no << ",resample," << attempt + 1 << '\n';
        }
      }

      f_solve << day_no << ',' << csv::format(sol.solve_seconds) << ','
              << csv::format((sol.community_cost - sol.lower_bound) / std::max(1.0, std::abs(sol.community_cost))) << ','
              << int(sol.certified_by_bound) << ',' << csv::format(sol.mip_gap) << ',' << sol.doublings << ','
              << csv::format(bilevel::max_payment_gap(sol)) << ',' << int(sol.bigm_audit.passed()) << ','
              << csv::format(sol.bigm_audit.max_dual_ratio) << ',' << csv::format(cv.payment_gap) << ','
              << int(cv.audit.passed()) << std::endl;

      // Prosumers respond to the posted prices.
      std::vector<std::vector<std::vector<double>>> P(N);
      std::vector<std::vector<double>> y_expected(N), y_observed(N);
      for (std::size_t n = 0; n < N; ++n) {
        P[n] = realized_profiles(blocks[n], sol.prices[n], sol.profiles[n], cfg.solver, 1e-6,
                                 &sol.direct_objectives[n], &sol.direct_profiles[n]);
        y_expected[n] = expected_response(P[n], theta_true[n]);
        y_observed[n] = y_expected[n];
        std::normal_distribution<double> eps(0.0, truth.noise_std[n]);
        if (truth.noise_std[n] > 0.0)
          for (double& v : y_observed[n]) v += eps(noise_rng);
      }
      const auto econ = detail::day_economics(cfg, day);
      const double realized = metrics::realized_cost(econ, y_expected);
      const auto& rec = tracker.add(day_no, realized, cv.cost);
      res.regret.push_back(rec);
      f_regret << day_no << ',' << csv::format(rec.sampled_cost) << ',' << csv::format(rec.clairvoyant_cost) << ','
               << csv::format(rec.regret) << ',' << csv::format(rec.cumulative) << '\n';
      const auto viol = metrics::violation_series(y_expected, econ.capacity_limit);
      const auto net = metrics::net_load(y_expected);
      for (std::size_t t = 0; t < viol.size(); ++t)
        f_viol << day_no << ',' << t << ',' << csv::format(viol[t]) << ',' << csv::format(cv.violation[t]) << ','
               << csv::format(net[t]) << '\n';
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t t = 0; t < sol.prices[n].size(); ++t)
          f_price << day_no << ',' << n << ',' << t << ',' << csv::format(sol.prices[n][t]) << '\n';

      // Learning from the observed responses only.
      for (std::size_t n = 0; n < N; ++n) {
        const std::size_t T = y_observed[n].size();
        Eigen::MatrixXd Pm(T, K);
        for (std::size_t k = 0; k < K; ++k)
          for (std::size_t t = 0; t < T; ++t) Pm(Eigen::Index(t), Eigen::Index(k)) = P[n][k][t];
        const Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(y_observed[n].data(), Eigen::Index(T));
        if (detect && detectors[n].observe(Pm * beliefs[n].mean, y)) {
          beliefs[n] = reset_prior(beliefs[n], prior);
          res.resets.emplace_back(day_no, n);
          f_event << day_no << ",reset," << n << '\n';
        }
        beliefs[n] = update_posterior(beliefs[n], Pm, y, NoiseModel{ctx.learner_noise[n]});
        write_belief_rows(f_belief, day_no, n, beliefs[n]);
        const auto err = metrics::posterior_error(beliefs[n], theta_true[n]);
        for (std::size_t k = 0; k < K; ++k)
          f_err << day_no << ',' << n << ',' << ctx.enabled[k] << ',' << csv::format(err.abs_error[k]) << ','
                << csv::format(err.covariance_trace) << '\n';
      }
    }
  } catch (const Error& e) {
    res.ok = false;
    res.failed_day = day_no;
    res.error = "day " + std::to_string(day_no) + ": " + e.what();
    res.error_kind = dynamic_cast<const ConfigError*>(&e)            ? "config"
                     : dynamic_cast<const bilevel::InfeasibleBips*>(&e) ? "infeasible"
                     : dynamic_cast<const SolverError*>(&e)          ? "solver"
                                                                     : "other";
    f_event << day_no << ",error," << '"' << e.what() << '"' << '\n';
  }
  return res;
}

// ---------------------------------------------------------------------------
// Reports

struct RunSummary {
  int run = 0;
  bool ok = true;
  std::vector<double> daily_regret, cumulative;
  std::vector<double> violation_energy, clairvoyant_violation_energy;  // per day
  std::map<std::string, int> first_day_below;     // group -> first day with mean error < threshold, 0 = never
  std::vector<double> final_error;                // per enabled signature, mean over prosumers at the last day
  int resets = 0;
};

struct ExperimentSummary {
  std::string name;
  int days = 0;
  int runs_ok = 0, runs_failed = 0;
  std::vector<std::size_t> enabled;
  std::vector<RunSummary> runs;
  metrics::Band cumulative;       // across successful runs
  double min_daily_regret = 0.0;
  double plateau_growth = 0.0;    // mean cumulative regret growth over the trailing window, fraction of total
  double post_event_growth = NAN; // same, measured from the flip day
  double day1_violation = 0.0, final_violation = 0.0, clairvoyant_day1_violation = 0.0;
  bool violation_ok = true;
  nlohmann::json checks;
  bool passed = true;
};

inline const std::map<std::string, std::vector<std::size_t>>& signature_groups() {
  static const std::map<std::string, std::vector<std::size_t>> g{
      {"baseload", {0, 1, 2}}, {"pv", {3}}, {"battery", {4}}, {"heat_pump", {5, 6}}, {"ev", {7, 8, 9}}};
  return g;
}

/// Read a results directory and evaluate the run-level checks: non-negative
/// daily regret, cumulative regret plateau and violation decay.
inline ExperimentSummary summarize(const std::filesystem::path& dir, double error_threshold = 0.05) {
  std::ifstream min(dir / "manifest.json");
  if (!min) throw ConfigError("no manifest.json in " + dir.string());
  nlohmann::json manifest;
  try {
    min >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("manifest.json: " + std::string(e.what()));
  }
  const ExperimentConfig cfg = parse_config(manifest.at("config"));
  ExperimentSummary s;
  s.name = cfg.name;
  s.days = cfg.days;
  s.enabled = cfg.enabled_indices();
  std::vector<std::vector<double>> cum;
  s.min_daily_regret = INFINITY;
  for (const auto& r : manifest.at("runs")) {
    RunSummary rs;
    rs.run = r.at("run").get<int>();
    rs.ok = r.at("status").get<std::string>() == "ok";
    rs.resets = r.value("resets", 0);
    if (!rs.ok) {
      ++s.runs_failed;
      s.runs.push_back(rs);
      continue;
    }
    ++s.runs_ok;
    const auto rd = dir / ("run_" + std::to_string(rs.run));
    const auto reg = csv::read((rd / "regret.csv").string());
    for (std::size_t i = 0; i < reg.rows.size(); ++i) {
      rs.daily_regret.push_back(csv::parse_double(reg, i, reg.column("regret")));
      rs.cumulative.push_back(csv::parse_double(reg, i, reg.column("cumulative")));
      s.min_daily_regret = std::min(s.min_daily_regret, rs.daily_regret.back());
    }
    const auto vi = csv::read((rd / "violation.csv").string());
    rs.violation_energy.assign(cfg.days, 0.0);
    rs.clairvoyant_violation_energy.assign(cfg.days, 0.0);
    for (std::size_t i = 0; i < vi.rows.size(); ++i) {
      const int d = int(csv::parse_double(vi, i, 0)) - 1;
      rs.violation_energy.at(d) += csv::parse_double(vi, i, vi.column("violation"));
      rs.clairvoyant_violation_energy.at(d) += csv::parse_double(vi, i, vi.column("clairvoyant_violation"));
    }
    // Mean absolute error per (day, signature) over prosumers.
    const auto pe = csv::read((rd / "posterior_error.csv").string());
    std::map<std::pair<int, std::size_t>, std::pair<double, int>> acc;
    for (std::size_t i = 0; i < pe.rows.size(); ++i) {
      auto& a = acc[{int(csv::parse_double(pe, i, 0)), std::size_t(csv::parse_double(pe, i, 2))}];
      a.first += csv::parse_double(pe, i, pe.column("abs_error"));
      ++a.second;
    }
    for (const auto& [group, members] : signature_groups()) {
      std::vector<std::size_t> present;
      for (auto k : members)
        if (std::find(s.enabled.begin(), s.enabled.end(), k) != s.enabled.end()) present.push_back(k);
      if (present.empty()) continue;
      int first = 0;
      for (int d = 1; d <= cfg.days && !first; ++d) {
        double e = 0.0;
        int c = 0;
        for (auto k : present)
          if (auto it = acc.find({d, k}); it != acc.end()) e += it->second.first, c += it->second.second;
        if (c > 0 && e / c < error_threshold) first = d;
      }
      rs.first_day_below[group] = first;
    }
    for (auto k : s.enabled) {
      const auto it = acc.find({cfg.days, k});
      rs.final_error.push_back(it == acc.end() ? NAN : it->second.first / it->second.second);
    }
    cum.push_back(rs.cumulative);
    s.runs.push_back(std::move(rs));
  }
  if (s.runs_ok == 0) {
    s.passed = false;
    s.checks["runs"] = {{"pass", false}, {"detail", "no successful runs"}};
    return s;
  }
  s.cumulative = metrics::aggregate(cum);
  const std::size_t window = std::min<std::size_t>(cfg.plateau_window, s.cumulative.mean.size() - 1);
  s.plateau_growth = window > 0 ? metrics::plateau_growth(s.cumulative.mean, window) : 0.0;
  if (cfg.shift.enabled && cfg.shift.day > 1) {
    std::vector<double> post;
    const double base = s.cumulative.mean[cfg.shift.day - 2];
    for (std::size_t i = cfg.shift.day - 1; i < s.cumulative.mean.size(); ++i) post.push_back(s.cumulative.mean[i] - base);
    if (post.size() > window && window > 0) s.post_event_growth = metrics::plateau_growth(post, window);
  }
  // Violation: mean over runs of day-1 energy vs mean daily energy in the final window.
  const std::size_t vw = std::min<std::size_t>(cfg.violation_window, std::size_t(cfg.days));
  for (const auto& rs : s.runs) {
    if (!rs.ok) continue;
    s.day1_violation += rs.violation_energy[0] / s.runs_ok;
    s.clairvoyant_day1_violation += rs.clairvoyant_violation_energy[0] / s.runs_ok;
    double tail = 0.0;
    for (std::size_t d = rs.violation_energy.size() - vw; d < rs.violation_energy.size(); ++d) tail += rs.violation_energy[d];
    s.final_violation += tail / double(vw) / s.runs_ok;
  }
  if (s.day1_violation > 0.0)
    s.violation_ok = s.final_violation <= 0.01 * s.day1_violation;
  else
    s.violation_ok = s.clairvoyant_day1_violation == 0.0;

  const bool regret_ok = s.min_daily_regret >= -1e-4;
  const bool plateau_ok = s.plateau_growth < 0.05;
  s.checks["regret_nonnegative"] = {{"pass", regret_ok}, {"min_daily_regret", s.min_daily_regret}};
  s.checks["regret_plateau"] = {{"pass", plateau_ok}, {"growth", s.plateau_growth}, {"window", window}};
  s.checks["violation_decay"] = {{"pass", s.violation_ok},
                                 {"day1", s.day1_violation},
                                 {"final_mean", s.final_violation},
                                 {"clairvoyant_day1", s.clairvoyant_day1_violation}};
  s.passed = regret_ok && plateau_ok && s.violation_ok && s.runs_failed == 0;
  if (!std::isnan(s.post_event_growth)) {
    const bool ok = s.post_event_growth < 0.05;
    s.checks["post_event_plateau"] = {{"pass", ok}, {"growth", s.post_event_growth}};
    s.passed = s.passed && ok;
  }
  s.checks["runs"] = {{"pass", s.runs_failed == 0}, {"ok", s.runs_ok}, {"failed", s.runs_failed}};
  return s;
}

inline nlohmann::json to_json(const ExperimentSummary& s) {
  nlohmann::json runs = nlohmann::json::array();
  for (const auto& r : s.runs) {
    nlohmann::json j{{"run", r.run}, {"ok", r.ok}, {"resets", r.resets}};
    if (r.ok) {
      j["cumulative_regret"] = r.cumulative.back();
      j["first_day_error_below_0.05"] = r.first_day_below;
      j["final_mean_abs_error"] = r.final_error;
    }
    runs.push_back(j);
  }
  return {{"name", s.name},
          {"days", s.days},
          {"runs_ok", s.runs_ok},
          {"runs_failed", s.runs_failed},
          {"enabled_signatures", s.enabled},
          {"mean_cumulative_regret", s.cumulative.mean.empty() ? 0.0 : s.cumulative.mean.back()},
          {"checks", s.checks},
          {"passed", s.passed},
          {"runs", runs}};
}

/// Aggregate files and plots for a results directory.
inline ExperimentSummary write_report(const std::filesystem::path& dir) {
  auto s = summarize(dir);
  std::filesystem::create_directories(dir / "plots");
  if (!s.cumulative.mean.empty()) {
    auto out = detail::open_out(dir / "regret_summary.csv");
    out << "day,mean,q05,q95\n";
    for (std::size_t i = 0; i < s.cumulative.mean.size(); ++i)
      out << i + 1 << ',' << csv::format(s.cumulative.mean[i]) << ',' << csv::format(s.cumulative.q05[i]) << ','
          << csv::format(s.cumulative.q95[i]) << '\n';
    std::ifstream min(dir / "manifest.json");
    nlohmann::json manifest;
    min >> manifest;
    const auto cfg = parse_config(manifest.at("config"));
    plots::band_chart((dir / "plots" / "cumulative_regret.svg").string(), "Cumulative regret (mean, 5-95% band)",
                      s.cumulative.mean, s.cumulative.q05, s.cumulative.q95, "DKK",
                      cfg.shift.enabled ? double(cfg.shift.day) : NAN);

    // Violation heatmap of the first successful run, days x hours.
    for (const auto& r : s.runs) {
      if (!r.ok) continue;
      const auto vi = csv::read((dir / ("run_" + std::to_string(r.run)) / "violation.csv").string());
      std::vector<std::vector<double>> grid(cfg.days, std::vector<double>(cfg.horizon, 0.0));
      for (std::size_t i = 0; i < vi.rows.size(); ++i)
        grid.at(std::size_t(csv::parse_double(vi, i, 0)) - 1).at(std::size_t(csv::parse_double(vi, i, 1))) =
            csv::parse_double(vi, i, 2);
      plots::heatmap((dir / "plots" / "violation.svg").string(),
                     "Capacity violation, run " + std::to_string(r.run), grid, "kWh");

      // Posterior mean minus truth at snapshot days, all prosumers.
      const auto pe = csv::read((dir / ("run_" + std::to_string(r.run)) / "posterior_error.csv").string());
      std::vector<plots::BoxGroup> groups;
      for (int day : cfg.snapshot_days) {
        if (day < 1 || day > cfg.days) continue;
        for (std::size_t k = 0; k < s.enabled.size(); ++k) {
          plots::BoxGroup g{"d" + std::to_string(day) + " " + signature_names()[s.enabled[k]], {}};
          for (std::size_t i = 0; i < pe.rows.size(); ++i)
            if (int(csv::parse_double(pe, i, 0)) == day && std::size_t(csv::parse_double(pe, i, 2)) == s.enabled[k])
              g.values.push_back(csv::parse_double(pe, i, 3));
          groups.push_back(std::move(g));
        }
      }
      plots::boxplot((dir / "plots" / "posterior_error.svg").string(),
                     "Absolute posterior error at snapshot days, run " + std::to_string(r.run), groups, "|mean - truth|");
      break;
    }
  }
  auto out = detail::open_out(dir / "summary.json");
  out << to_json(s).dump(2) << '\n';
  return s;
}

// ---------------------------------------------------------------------------
// Experiment, manifest, replay

struct ExperimentResult {
  std::filesystem::path dir;
  std::vector<RunResult> runs;
  ExperimentSummary summary;
  bool any_failed() const {
    return std::any_of(runs.begin(), runs.end(), [](const RunResult& r) { return !r.ok; });
  }
};

inline ExperimentResult run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out_dir,
                                       std::ostream* log = nullptr) {
  auto ctx = make_context(cfg);
  std::filesystem::create_directories(out_dir);
  {
    auto out = detail::open_out(out_dir / "community.json");
    nlohmann::json j{{"initial", to_json(ctx->community)}};
    if (ctx->shifted) j["after_flip"] = to_json(*ctx->shifted), j["flipped_prosumers"] = ctx->shifted_prosumers;
    out << j.dump(2) << '\n';
  }

  ExperimentResult result;
  result.dir = out_dir;
  result.runs.resize(cfg.runs);
  std::atomic<int> next{0};
  std::mutex log_mutex;
  auto worker = [&] {
    for (int r; (r = next++) < cfg.runs;) {
      result.runs[r] = run_learning(*ctx, r, out_dir);
      if (log) {
        std::lock_guard lock(log_mutex);
        const auto& rr = result.runs[r];
        *log << "run " << r << ": "
             << (rr.ok ? "ok, cumulative regret " + csv::format(rr.regret.back().cumulative) : "FAILED " + rr.error)
             << '\n';
      }
    }
  };
  const int workers = std::min(cfg.threads, cfg.runs);
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < workers; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  const auto& backend = *ctx->backend;
  nlohmann::json manifest;
  manifest["tool"] = {{"name", "ecpricing"}, {"version", kVersion}};
  manifest["config"] = to_json(cfg);
  manifest["config_hash"] = config_hash(cfg);
  manifest["seeds"] = manifest["config"]["seeds"];
  manifest["solver_seed"] = cfg.solver.seed;
  manifest["backend"] = {{"name", backend.name()}, {"version", backend.version()}};
  manifest["runs"] = nlohmann::json::array();
  for (const auto& r : result.runs) {
    nlohmann::json j{{"run", r.run}, {"status", r.ok ? "ok" : "failed"}, {"resamples", r.resamples},
                     {"resets", r.resets.size()}};
    if (!r.ok) j["error"] = r.error, j["error_kind"] = r.error_kind, j["failed_day"] = r.failed_day;
    const auto reg = out_dir / ("run_" + std::to_string(r.run)) / "regret.csv";
    j["regret_sha256"] = file_sha256(reg.string());
    manifest["runs"].push_back(j);
  }
  {
    auto out = detail::open_out(out_dir / "manifest.json");
    out << manifest.dump(2) << '\n';
  }
  result.summary = write_report(out_dir);
  return result;
}

struct ReplayReport {
  std::filesystem::path dir;
  std::vector<int> identical, differing;
  bool ok() const { return differing.empty(); }
};

/// Re-run the experiment recorded in a manifest and compare regret series
/// byte for byte.
inline ReplayReport replay(const std::filesystem::path& manifest_path, const std::filesystem::path& out_dir,
                           std::optional<int> solver_seed = std::nullopt, std::optional<std::string> backend = std::nullopt,
                           std::ostream* log = nullptr) {
  std::ifstream in(manifest_path);
  if (!in) throw ConfigError("cannot open manifest " + manifest_path.string());
  nlohmann::json m;
  try {
    in >> m;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("manifest: " + std::string(e.what()));
  }
  for (const char* key : {"config", "config_hash", "backend", "runs", "solver_seed"})
    if (!m.contains(key)) throw ConfigError(std::string("manifest: missing '") + key + "'");
  if (sha256_hex(m["config"].dump()) != m["config_hash"].get<std::string>())
    throw ConfigError("manifest: config hash does not match the recorded configuration (tampered or corrupted)");
  ExperimentConfig cfg = parse_config(m["config"]);
  if (m["solver_seed"].get<int>() != cfg.solver.seed)
    throw ConfigError("manifest: solver seed disagrees with the recorded configuration");
  if (config_hash(cfg) != m["config_hash"].get<std::string>())
    throw ConfigError("manifest: configuration does not round-trip to the recorded hash");

  if (backend) cfg.backend = *backend;
  if (solver_seed && *solver_seed != cfg.solver.seed)
    throw NonComparable("solver seed " + std::to_string(*solver_seed) + " differs from the recorded seed " +
                        std::to_string(cfg.solver.seed) + "; results would not be comparable");
  const milp::Backend* b;
  try {
    b = &milp::backend_by_name(cfg.backend);
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  const auto& rec = m["backend"];
  if (rec.at("name").get<std::string>() != b->name() || rec.at("version").get<std::string>() != b->version())
    throw NonComparable("recorded backend " + rec.at("name").get<std::string>() + " " +
                        rec.at("version").get<std::string>() + " differs from available " + b->name() + " " +
                        b->version());

  auto result = run_experiment(cfg, out_dir, log);
  ReplayReport rep;
  rep.dir = out_dir;
  for (const auto& r : m["runs"]) {
    const int run = r.at("run").get<int>();
    const auto path = out_dir / ("run_" + std::to_string(run)) / "regret.csv";
    const bool same = std::filesystem::exists(path) && file_sha256(path.string()) == r.at("regret_sha256").get<std::string>();
    (same ? rep.identical : rep.differing).push_back(run);
  }
  return rep;
}

}  // namespace ecpricing
