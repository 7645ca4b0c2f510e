#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sys/wait.h>

#include "ecpricing/experiment.hpp"

using namespace ecpricing;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("ecpricing_exp_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

json tiny() {
  return json{{"name", "tiny"},
              {"prosumers", 2},
              {"days", 3},
              {"runs", 2},
              {"seeds", {{"community", 3}, {"data", 5}, {"learner", 11}, {"flip", 1}}},
              {"report", {{"plateau_window", 2}, {"violation_window", 1}, {"snapshot_days", {1, 3}}}}};
}

// parse + validate, as load_config does for files
ExperimentConfig load_from(const json& j) {
  auto c = parse_config(j);
  validate(c);
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

int cli(const std::string& args) {
  const std::string cmd = std::string(ECPRICING_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// One shared tiny experiment for the replay checks.
const fs::path& recorded() {
  static const fs::path dir = [] {
    auto d = scratch("recorded");
    run_experiment(load_from(tiny()), d);
    return d;
  }();
  return dir;
}

}  // namespace

TEST(Experiment, WritesSeriesManifestAndReport) {
  const auto& dir = recorded();
  for (const char* f : {"manifest.json", "community.json", "summary.json"}) EXPECT_TRUE(fs::exists(dir / f)) << f;
  for (const char* f : {"regret.csv", "solves.csv"}) EXPECT_TRUE(fs::exists(dir / "run_1" / f)) << f;
  const auto m = json::parse(slurp(dir / "manifest.json"));
  ASSERT_EQ(m["runs"].size(), 2u);
  for (const auto& r : m["runs"]) {
    EXPECT_EQ(r["status"], "ok");
    EXPECT_EQ(r["regret_sha256"].get<std::string>().size(), 64u);
  }
  EXPECT_EQ(m["backend"]["name"], "highs");
  // regret is one row per day after the header
  const auto regret = slurp(dir / "run_0" / "regret.csv");
  EXPECT_EQ(std::count(regret.begin(), regret.end(), '\n'), 4);
}

TEST(Experiment, RunsAreIndependentOfThreadCount) {
  auto cfg = load_from(tiny());
  cfg.threads = 2;
  const auto d = scratch("threads");
  run_experiment(cfg, d);
  for (const char* run : {"run_0", "run_1"})
    EXPECT_EQ(slurp(d / run / "regret.csv"), slurp(recorded() / run / "regret.csv")) << run;
}

TEST(Replay, ReproducesRegretByteForByte) {
  const auto rep = replay(recorded() / "manifest.json", scratch("replay"));
  EXPECT_TRUE(rep.ok());
  EXPECT_EQ(rep.identical.size(), 2u);
}

TEST(Replay, RejectsTamperedOrIncomparableManifests) {
  const auto m = json::parse(slurp(recorded() / "manifest.json"));
  const auto d = scratch("tamper");
  auto tampered = m;
  tampered["config"]["days"] = 2;
  std::ofstream(d / "tampered.json") << tampered.dump();
  EXPECT_THROW(replay(d / "tampered.json", d / "out"), ConfigError);

  auto other_backend = m;
  other_backend["backend"]["version"] = "0.0.0";
  std::ofstream(d / "backend.json") << other_backend.dump();
  EXPECT_THROW(replay(d / "backend.json", d / "out"), NonComparable);

  EXPECT_THROW(replay(recorded() / "manifest.json", d / "out", 7), NonComparable);
  EXPECT_THROW(replay(d / "absent.json", d / "out"), ConfigError);
}

TEST(Summary, FailedRunIsReportedNotHidden) {
  const auto d = scratch("failed");
  fs::copy(recorded(), d, fs::copy_options::recursive | fs::copy_options::overwrite_existing);
  auto m = json::parse(slurp(d / "manifest.json"));
  m["runs"][1]["status"] = "failed";
  std::ofstream(d / "manifest.json") << m.dump();
  const auto s = summarize(d);
  EXPECT_EQ(s.runs_failed, 1);
  EXPECT_FALSE(s.passed);
}

TEST(Cli, ExitCodesSeparateFailureKinds) {
  const auto d = scratch("cli");
  std::ofstream(d / "good.json") << tiny().dump();
  auto bad = tiny();
  bad["prosumers"] = -1;
  std::ofstream(d / "bad.json") << bad.dump();
  auto unknown_backend = tiny();
  unknown_backend["solver"] = {{"backend", "nonesuch"}};
  std::ofstream(d / "backend.json") << unknown_backend.dump();

  EXPECT_EQ(cli("validate " + (d / "good.json").string()), 0);
  EXPECT_EQ(cli("validate " + (d / "bad.json").string()), 2);
  EXPECT_EQ(cli("validate " + (d / "backend.json").string()), 2);
  EXPECT_EQ(cli("run -q " + (d / "bad.json").string() + " -o " + (d / "x").string()), 2);
  EXPECT_EQ(cli("frobnicate"), 1);
  EXPECT_EQ(cli("run -q --days 2 --runs 1 " + (d / "good.json").string() + " -o " + (d / "r").string()), 0);
  EXPECT_EQ(cli("replay -q " + (d / "r" / "manifest.json").string()), 0);
  EXPECT_EQ(cli("replay -q --solver-seed 9 " + (d / "r" / "manifest.json").string()), 5);
  // two days are too few for the violation to decay: the checks fail
  EXPECT_EQ(cli("report " + (d / "r").string()), 4);
  EXPECT_EQ(cli("run -q --check --days 2 --runs 1 " + (d / "good.json").string() + " -o " + (d / "c").string()), 4);
  // the backend override from the environment reaches the solver lookup
  const std::string cmd = "ECPRICING_BACKEND=nonesuch " + std::string(ECPRICING_CLI) + " validate " +
                          (d / "good.json").string() + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  EXPECT_EQ(WEXITSTATUS(status), 2);
}
