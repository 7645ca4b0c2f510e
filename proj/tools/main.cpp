// ecpricing command-line front end.
//
// Exit codes: 0 success, 1 usage or unexpected error, 2 configuration error,
// 3 solver failure, 4 acceptance failure (checks failed or replay differs),
// 5 replay not comparable (backend, version or solver seed differ).

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "ecpricing/experiment.hpp"

namespace {

enum Exit { kOk = 0, kUsage = 1, kConfig = 2, kSolver = 3, kAcceptance = 4, kNonComparable = 5 };

int run_exit_code(const ecpricing::ExperimentResult& r) {
  for (const auto& run : r.runs)
    if (!run.ok && run.error_kind == "config") return kConfig;
  for (const auto& run : r.runs)
    if (!run.ok) return kSolver;
  return kOk;
}

void print_summary(const ecpricing::ExperimentSummary& s) {
  std::cout << "experiment " << s.name << ": " << s.runs_ok << " run(s) ok, " << s.runs_failed << " failed\n";
  if (!s.cumulative.mean.empty())
    std::cout << "mean cumulative regret after " << s.cumulative.mean.size()
              << " days: " << s.cumulative.mean.back() << " DKK\n";
  for (auto it = s.checks.begin(); it != s.checks.end(); ++it)
    std::cout << (it.value().value("pass", false) ? "  ok    " : "  FAIL  ") << it.key() << ' ' << it.value().dump()
              << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  using namespace ecpricing;
  CLI::App app{"Dynamic pricing for energy communities: bilevel price setting with Thompson-sampling learning"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  std::string config_path, manifest_path, results_dir, out_dir;
  std::optional<int> days, runs, solver_seed;
  std::optional<std::string> backend;
  bool check = false, quiet = false;

  auto* run = app.add_subcommand("run", "run the experiment described by a config file");
  run->add_option("config", config_path, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("-o,--out", out_dir, "results directory (default: output_dir from the config)");
  run->add_option("--days", days, "override the number of days");
  run->add_option("--runs", runs, "override the number of runs");
  run->add_flag("--check", check, "exit with code 4 when the report checks fail");
  run->add_flag("-q,--quiet", quiet, "no per-run progress");

  auto* rep = app.add_subcommand("replay", "re-run a recorded experiment and compare regret series");
  rep->add_option("manifest", manifest_path, "manifest.json of a previous run")->required()->check(CLI::ExistingFile);
  rep->add_option("-o,--out", out_dir, "where to write the replay (default: <results>/replay)");
  rep->add_option("--solver-seed", solver_seed, "solver seed for the replay");
  rep->add_option("--backend", backend, "solver backend for the replay");
  rep->add_flag("-q,--quiet", quiet, "no per-run progress");

  auto* val = app.add_subcommand("validate", "check a config file without running it");
  val->add_option("config", config_path, "experiment config (JSON)")->required()->check(CLI::ExistingFile);

  auto* report = app.add_subcommand("report", "summarize a results directory and regenerate plots");
  report->add_option("results", results_dir, "results directory")->required()->check(CLI::ExistingDirectory);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  try {
    if (*val) {
      const auto cfg = load_config(config_path);
      make_context(cfg);  // loads data and draws the community
      std::cout << "config ok: " << cfg.name << ", " << cfg.prosumers << " prosumers, " << cfg.days << " days, "
                << cfg.runs << " runs, backend " << cfg.backend << "\nconfig hash " << config_hash(cfg) << '\n';
      return kOk;
    }
    if (*run) {
      auto cfg = load_config(config_path);
      if (days) cfg.days = *days;
      if (runs) cfg.runs = *runs;
      validate(cfg);
      const std::filesystem::path out = out_dir.empty() ? cfg.output_dir : out_dir;
      const auto result = run_experiment(cfg, out, quiet ? nullptr : &std::cout);
      print_summary(result.summary);
      std::cout << "results in " << out.string() << '\n';
      if (const int code = run_exit_code(result); code != kOk) {
        for (const auto& r : result.runs)
          if (!r.ok) std::cerr << "run " << r.run << " failed: " << r.error << '\n';
        return code;
      }
      return check && !result.summary.passed ? kAcceptance : kOk;
    }
    if (*rep) {
      const auto mpath = std::filesystem::path(manifest_path);
      const auto out = out_dir.empty() ? mpath.parent_path() / "replay" : std::filesystem::path(out_dir);
      const auto r = replay(mpath, out, solver_seed, backend, quiet ? nullptr : &std::cout);
      for (int i : r.identical) std::cout << "run " << i << ": regret series identical\n";
      for (int i : r.differing) std::cout << "run " << i << ": regret series DIFFERS\n";
      return r.ok() ? kOk : kAcceptance;
    }
    if (*report) {
      const auto s = write_report(results_dir);
      print_summary(s);
      return s.passed ? kOk : kAcceptance;
    }
  } catch (const NonComparable& e) {
    std::cerr << "not comparable: " << e.what() << '\n';
    return kNonComparable;
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kConfig;
  } catch (const SolverError& e) {
    std::cerr << "solver failure: " << e.what() << '\n';
    return kSolver;
  } catch (const bilevel::InfeasibleBips& e) {
    std::cerr << "solver failure: " << e.what() << '\n';
    return kSolver;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  }
  return kUsage;
}
