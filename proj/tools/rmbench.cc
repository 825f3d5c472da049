// rmbench: run scorer-selection experiments and compare their results.
//
//   rmbench run --config <path> [--seed-override N] [--out DIR]
//   rmbench report <dirs...> [--csv FILE]
//   rmbench export-state <run-dir> <file>
//   rmbench resume --config <path> --bandit <file> [--seed-override N] [--out DIR]

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rmb/config.h"
#include "rmb/errors.h"
#include "rmb/harness.h"
#include "rmb/pipeline.h"

namespace {

struct RunOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string bandit;
};

void add_run_options(CLI::App* cmd, RunOptions& o) {
  cmd->add_option("--config", o.config, "experiment configuration file")->required();
  cmd->add_option("--seed-override", o.seed, "run this single seed instead of the configured list");
  cmd->add_option("--out", o.out, "output directory (overrides experiment.out_dir)");
}

int execute(const RunOptions& o, bool resume) {
  rmb::ExperimentConfig config = rmb::parse_config(o.config);
  if (o.seed) config.seeds = {*o.seed};
  if (!o.out.empty()) config.out_dir = o.out;
  std::optional<rmb::BanditState> initial;
  if (resume) initial = rmb::load_bandit(o.bandit);
  const rmb::ExperimentResult result = rmb::run_experiment(config, initial);
  for (const rmb::RunSummary& r : result.runs) {
    std::cout << r.run_id << ": gold " << r.mean_gold_quality << ", regret " << r.final_regret << ", scorer calls "
              << r.scorer_calls << "\n";
  }
  for (const rmb::RunFailure& f : result.failures) {
    std::cerr << "seed " << f.seed << " failed: " << f.message << "\n";
  }
  std::cout << "results in " << config.out_dir.string() << "\n";
  return result.ok() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive reward-scorer selection experiments"};
  app.require_subcommand(1);

  RunOptions run_opts;
  CLI::App* run = app.add_subcommand("run", "run an experiment");
  add_run_options(run, run_opts);

  RunOptions resume_opts;
  CLI::App* resume = app.add_subcommand("resume", "run an experiment starting from a saved bandit state");
  add_run_options(resume, resume_opts);
  resume->add_option("--bandit", resume_opts.bandit, "bandit state file")->required();

  std::vector<std::string> report_dirs;
  std::string report_csv;
  CLI::App* rep = app.add_subcommand("report", "compare finished experiments");
  rep->add_option("dirs", report_dirs, "experiment directories")->required();
  rep->add_option("--csv", report_csv, "also write the table as CSV");

  std::string export_dir, export_file;
  CLI::App* exp = app.add_subcommand("export-state", "copy the bandit state of a finished run");
  exp->add_option("run-dir", export_dir, "seed directory or single-seed experiment directory")->required();
  exp->add_option("file", export_file, "destination file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return execute(run_opts, false);
    if (*resume) return execute(resume_opts, true);
    if (*rep) {
      std::vector<std::filesystem::path> dirs(report_dirs.begin(), report_dirs.end());
      const rmb::Report r = rmb::report(dirs);
      std::cout << r.text;
      if (!report_csv.empty()) {
        std::ofstream out(report_csv, std::ios::binary | std::ios::trunc);
        if (!(out << r.csv)) throw rmb::Error("io error", "cannot write " + report_csv);
      }
      return 0;
    }
    if (*exp) {
      rmb::export_state(export_dir, export_file);
      return 0;
    }
  } catch (const rmb::Error& e) {
    std::cerr << "rmbench: " << e.kind() << ": " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "rmbench: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
