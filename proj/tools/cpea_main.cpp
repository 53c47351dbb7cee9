#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <string>

#include <CLI11.hpp>

#include "cpea/experiment.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Collaborative expert-prediction experiment runner"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_override;
  std::size_t jobs = 1;
  std::uint64_t seed_value = 0;

  CLI::App* run = app.add_subcommand("run", "Execute a config's scenario grid");
  run->add_option("--config", config_path, "JSON experiment config")
      ->required()
      ->check(CLI::ExistingFile);
  run->add_option("--out", out_override, "Output directory (overrides config)");
  run->add_option("--jobs", jobs, "Parallel replica workers")
      ->check(CLI::PositiveNumber);
  CLI::Option* seed_opt = run->add_option(
      "--seed-override", seed_value, "Replace the config's seed list with one seed");

  std::string report_dir;
  CLI::App* report =
      app.add_subcommand("report", "Aggregate summaries into a CSV table");
  report->add_option("dir", report_dir, "Directory holding summaries.jsonl")
      ->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      cpea::ExperimentConfig cfg = cpea::load_config(config_path);
      if (!out_override.empty()) cfg.out_dir = out_override;
      if (seed_opt->count() > 0) {
        cfg.seeds = {seed_value};
        for (cpea::ScenarioSpec& s : cfg.scenarios) s.seeds = {seed_value};
      }
      const cpea::RunOutcome outcome = cpea::run_config(cfg, jobs);
      std::printf("replicas: %zu\n", outcome.results.size());
      for (const cpea::InequalityOutcome& q : outcome.inequalities)
        std::printf("[%s] %s: %s\n", q.pass ? "PASS" : "FAIL", q.name.c_str(),
                    q.detail.c_str());
      if (!outcome.ok) {
        for (const cpea::InequalityOutcome& q : outcome.inequalities)
          if (!q.pass)
            std::fprintf(stderr, "failed inequality: %s\n", q.name.c_str());
        return 1;
      }
      return 0;
    }
    const std::string csv = cpea::make_report(report_dir);
    std::fputs(csv.c_str(), stdout);
    std::ofstream file(std::filesystem::path(report_dir) / "report.csv",
                       std::ios::binary);
    if (!file) throw std::runtime_error("report: cannot write report.csv");
    file << csv;
    return 0;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
