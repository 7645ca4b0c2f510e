#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "ecpricing/config.hpp"
#include "ecpricing/metrics.hpp"

using namespace ecpricing;
using nlohmann::json;

namespace {

json minimal() { return json{{"name", "t"}, {"prosumers", 2}, {"days", 3}, {"runs", 1}}; }

}  // namespace

TEST(Config, DefaultsAndOverrides) {
  const auto c = parse_config(minimal());
  EXPECT_EQ(c.prosumers, 2u);
  EXPECT_EQ(c.horizon, 24u);
  EXPECT_EQ(c.economics.capacity_limit, 15.0);
  EXPECT_EQ(c.backend, "highs");
  EXPECT_EQ(c.enabled_indices().size(), 10u);

  auto j = minimal();
  j["economics"] = {{"capacity_limit", nullptr}, {"import_tariff", 0.3}};
  j["catalogue"] = {{"signatures", {"baseload_morning", "baseload_daytime", "baseload_evening", "pv", "battery"}}};
  j["solver"] = {{"mip_rel_gap", 1e-4}, {"sampled_gap", 0.01}};
  const auto d = parse_config(j);
  EXPECT_TRUE(std::isinf(d.economics.capacity_limit));
  EXPECT_EQ(d.economics.import_tariff, 0.3);
  EXPECT_EQ(d.enabled_indices().size(), 5u);
  EXPECT_EQ(d.solver.mip_rel_gap, 1e-4);
  EXPECT_EQ(d.sampled_gap, 0.01);
}

TEST(Config, StrictKeysAndRanges) {
  auto parse = [](const json& j) { validate(parse_config(j)); };
  auto bad = minimal();
  bad["prosumer"] = 3;
  EXPECT_THROW(parse(bad), ConfigError);
  bad = minimal();
  bad["economics"] = {{"import_tarif", 0.5}};
  EXPECT_THROW(parse(bad), ConfigError);
  bad = minimal();
  bad["prosumers"] = 0;
  EXPECT_THROW(parse(bad), ConfigError);
  bad["prosumers"] = -1;  // must not wrap around to a huge count
  EXPECT_THROW(parse(bad), ConfigError);
  bad = minimal();
  bad["prior"] = {{"std", -0.1}};
  EXPECT_THROW(parse(bad), ConfigError);
  bad = minimal();
  bad["catalogue"] = {{"signatures", {"pv", "jetpack"}}};
  EXPECT_THROW(parse(bad), ConfigError);
  bad = minimal();
  bad["days"] = "many";
  EXPECT_THROW(parse(bad), ConfigError);
  bad = minimal();
  bad["shift"] = {{"enabled", true}, {"day", 10}};  // after the last day
  EXPECT_THROW(parse(bad), ConfigError);
}

TEST(Config, HashIsCanonicalAndIgnoresExecutionSettings) {
  auto a = parse_config(minimal());
  auto b = parse_config(minimal());
  b.threads = 8;
  b.output_dir = "elsewhere";
  EXPECT_EQ(config_hash(a), config_hash(b));
  b.seeds.learner += 1;
  EXPECT_NE(config_hash(a), config_hash(b));
  // round trip through the canonical form
  EXPECT_EQ(config_hash(parse_config(to_json(a))), config_hash(a));
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Config, EnvironmentOverrides) {
  auto c = parse_config(minimal());
  ::setenv("ECPRICING_BACKEND", "other", 1);
  ::setenv("ECPRICING_THREADS", "3", 1);
  apply_env_overrides(c);
  EXPECT_EQ(c.backend, "other");
  EXPECT_EQ(c.threads, 3);
  ::setenv("ECPRICING_THREADS", "zero", 1);
  EXPECT_THROW(apply_env_overrides(c), ConfigError);
  ::unsetenv("ECPRICING_BACKEND");
  ::unsetenv("ECPRICING_THREADS");
}

TEST(Config, LoadResolvesRelativeDataPaths) {
  const auto dir = std::filesystem::temp_directory_path() / "ecpricing_cfg";
  std::filesystem::create_directories(dir);
  auto j = minimal();
  j["data"] = {{"source", "csv"}, {"price", "p.csv"}, {"temperature", "t.csv"}, {"pv", "v.csv"}, {"baseload", "b.csv"}};
  for (const char* f : {"p.csv", "t.csv", "v.csv", "b.csv"}) std::ofstream(dir / f) << "timestamp\n";
  std::ofstream(dir / "c.json") << j.dump();
  const auto c = load_config((dir / "c.json").string());
  EXPECT_EQ(std::filesystem::path(c.data.price), dir / "p.csv");
  std::ofstream(dir / "broken.json") << "{ not json";
  EXPECT_THROW(load_config((dir / "broken.json").string()), ConfigError);
  EXPECT_THROW(load_config((dir / "absent.json").string()), ConfigError);
  std::filesystem::remove_all(dir);
}

TEST(Metrics, NetLoadCostAndViolation) {
  bilevel::CommunityEconomics e;
  e.spot_price = {1.0, 1.0};
  e.import_tariff = {0.5, 0.5};
  e.export_tariff = {0.1, 0.1};
  e.violation_penalty = {10.0, 10.0};
  e.capacity_limit = {2.0, 2.0};
  e.outside_cost = {0.0, 0.0};
  const std::vector<std::vector<double>> y{{2.0, -1.0}, {1.0, 0.5}};
  EXPECT_EQ(metrics::net_load(y), (std::vector<double>{3.0, -0.5}));
  // 3 * 1.5 + 1 * 10 - 0.5 * 0.9
  EXPECT_NEAR(metrics::realized_cost(e, y), 4.5 + 10.0 - 0.45, 1e-12);
  EXPECT_EQ(metrics::violation_series(y, e.capacity_limit), (std::vector<double>{1.0, 0.0}));
  const std::vector<double> none{INFINITY, INFINITY};
  EXPECT_EQ(metrics::violation_series(y, none), (std::vector<double>{0.0, 0.0}));
}

TEST(Metrics, RegretTracker) {
  metrics::RegretTracker r;
  r.add(1, 10.0, 8.0);
  r.add(2, 9.0, 9.00005);
  EXPECT_NEAR(r.records().back().cumulative, 2.0 - 0.00005, 1e-12);
  EXPECT_TRUE(r.within_tolerance());
  r.add(3, 1.0, 2.0);
  EXPECT_FALSE(r.within_tolerance());
  EXPECT_DOUBLE_EQ(r.min_regret(), -1.0);
}

TEST(Metrics, PosteriorError) {
  WeightBelief b{Eigen::Vector2d(0.5, 1.0), Eigen::Matrix2d::Identity() * 0.01};
  const auto e = metrics::posterior_error(b, std::vector<double>{0.4, 1.2});
  EXPECT_NEAR(e.abs_error[0], 0.1, 1e-12);
  EXPECT_NEAR(e.abs_error[1], 0.2, 1e-12);
  EXPECT_NEAR(e.covariance_trace, 0.02, 1e-12);
}

TEST(Metrics, QuantilesAggregateAndPlateau) {
  EXPECT_DOUBLE_EQ(metrics::quantile({4.0, 1.0, 3.0, 2.0}, 0.5), 2.5);
  EXPECT_DOUBLE_EQ(metrics::quantile({1.0, 2.0}, 0.05), 1.05);
  const auto band = metrics::aggregate({{1.0, 2.0}, {3.0, 6.0}});
  EXPECT_EQ(band.mean, (std::vector<double>{2.0, 4.0}));
  EXPECT_DOUBLE_EQ(band.q95[1], 5.8);
  EXPECT_THROW(metrics::aggregate({{1.0}, {1.0, 2.0}}), InvalidArgument);
  EXPECT_DOUBLE_EQ(metrics::plateau_growth({1.0, 5.0, 9.0, 10.0}, 1), 0.1);
  EXPECT_DOUBLE_EQ(metrics::plateau_growth({0.0, 0.0}, 1), 0.0);
  EXPECT_THROW(metrics::plateau_growth({1.0}, 1), InvalidArgument);
}

TEST(Metrics, ClairvoyantCacheComputesOnce) {
  metrics::ClairvoyantCache cache;
  int calls = 0;
  auto compute = [&] {
    ++calls;
    return metrics::ClairvoyantResult{1.0, {}, {}};
  };
  cache.get(1, "a", compute);
  cache.get(1, "a", compute);
  cache.get(2, "a", compute);
  cache.get(1, "b", compute);
  EXPECT_EQ(calls, 3);
  EXPECT_EQ(cache.size(), 3u);
}
