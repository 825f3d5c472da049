#pragma once

// Experiment orchestration: one run per seed, per-run artifacts on disk, an
// aggregate summary, and comparison reports over finished experiments.
//
// Layout of an experiment directory:
//
//   config.toml          resolved configuration
//   summary.json         aggregate over seeds
//   seed-<N>/trace.csv   one row per step
//   seed-<N>/summary.json
//   seed-<N>/bandit.json bandit strategies only
//   seed-<N>/.failed     present when the run raised an error
//
// avg_single runs one best_fixed sub-run per scorer inside seed-<N>/<id>/ and
// reports their mean in seed-<N>/summary.json.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rmb/bandit.h"
#include "rmb/config.h"
#include "rmb/trace.h"

namespace rmb {

inline constexpr std::string_view kTraceSchema = "rmb-trace v1";
inline constexpr std::string_view kSummarySchema = "rmb-summary";
inline constexpr int kSummaryVersion = 1;

struct RunSummary {
  std::string run_id;
  std::uint64_t seed = 0;
  std::size_t steps = 0;
  std::size_t total_pairs = 0;
  std::size_t scorer_calls = 0;
  double total_raw_loss = 0.0;
  std::vector<std::size_t> arm_counts;  // steps per chosen arm
  std::size_t ensemble_steps = 0;
  double final_regret = 0.0;
  double initial_gold_quality = 0.0;
  double mean_gold_quality = 0.0;
  double held_out_margin = 0.0;
  std::vector<std::vector<double>> utilization;  // categories x arms

  friend bool operator==(const RunSummary&, const RunSummary&) = default;
};

struct RunFailure {
  std::uint64_t seed = 0;
  std::string message;
};

struct ExperimentResult {
  std::vector<RunSummary> runs;  // sorted by seed
  std::vector<RunFailure> failures;
  bool ok() const { return failures.empty(); }
};

// CSV with the header comment and fixed column order:
// run_id, seed, iteration, step, chosen, raw_loss, normalized_reward, pairs,
// scorer_calls, cat_<c>..., weight_<k>..., diag_<k>...
std::string trace_csv(const TrainTrace& trace, const std::string& run_id, std::uint64_t seed);

// Totals recomputed from a trace CSV document; throws ReportError on schema
// mismatch.
struct TraceTotals {
  std::size_t rows = 0;
  std::size_t pairs = 0;
  std::size_t scorer_calls = 0;
  double raw_loss = 0.0;
  std::vector<std::size_t> arm_counts;
  std::size_t ensemble_rows = 0;
};
TraceTotals trace_totals(std::string_view csv, std::size_t arm_count);

std::string summary_json(const RunSummary& summary, const ExperimentConfig& config);
RunSummary parse_summary_json(std::string_view document);

// Runs every seed of `config` and writes the directory layout above. Failed
// seeds are recorded in the result instead of thrown. `initial_bandit`, when
// given, seeds every bandit run (cold start).
ExperimentResult run_experiment(const ExperimentConfig& config,
                                const std::optional<BanditState>& initial_bandit = std::nullopt);

// One run without touching the filesystem. `trace` receives the step trace
// (for avg_single, the trace of the last sub-run).
RunSummary run_single(const ExperimentConfig& config, std::uint64_t seed,
                      const std::optional<BanditState>& initial_bandit = std::nullopt,
                      TrainTrace* trace = nullptr, std::optional<BanditState>* final_bandit = nullptr);

struct Report {
  std::string text;
  std::string csv;
};

// Reads finished experiment directories and tabulates strategy, runs, final
// regret, gold quality, scorer invocations and mean utilisation. Throws
// ReportError for empty or incomplete directories and incompatible schemas.
Report report(const std::vector<std::filesystem::path>& experiment_dirs);

// Copies the bandit state of a finished run to `destination`. `run_dir` is a
// seed directory or an experiment directory holding exactly one seed.
void export_state(const std::filesystem::path& run_dir, const std::filesystem::path& destination);

}  // namespace rmb
