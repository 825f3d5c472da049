#pragma once

// Experiment configuration files.
//
// The format is a strict subset of TOML:
//
//   # comment
//   [section]
//   key = 42 | 0.5 | true | "text" | [1, 2.5, 3]
//
// Sections are `experiment`, `environment`, `training`, `bandit` and one
// `scorer.<id>` per scorer, in pool order. Keys are lowercase identifiers.
// Unknown sections or keys, duplicates, missing required keys and type
// mismatches raise ParseError with the key and line number. Integer literals
// are accepted where a real is expected.
//
// Required: experiment.strategy, experiment.seeds, experiment.out_dir and at
// least one scorer section with `affinity` and `noise_sigma`. Everything else
// defaults to the values in the structs below.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "rmb/env.h"
#include "rmb/pipeline.h"
#include "rmb/scorers.h"

namespace rmb {

enum class RunMode { kTrain, kBestOfN };
std::string_view to_string(RunMode mode);
RunMode run_mode_from_string(std::string_view text);

struct ExperimentConfig {
  StrategyTag strategy = StrategyTag::kLaserLinUcb;
  RunMode mode = RunMode::kTrain;
  std::vector<std::uint64_t> seeds;
  std::filesystem::path out_dir;
  std::size_t threads = 1;
  double utilization_window = 0.25;  // final fraction of steps
  double injected_noise = 0.0;       // added to every scorer

  EnvironmentConfig environment;
  TrainConfig training;
  std::vector<ScorerSpec> scorers;

  // Scorer pool after noise injection.
  ScorerPool pool() const;

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

ExperimentConfig parse_config(const std::filesystem::path& path);
// `source` names the input in error messages.
ExperimentConfig parse_config_text(std::string_view text, std::string_view source = "<config>");

// Fully resolved configuration in the file format; parses back to an equal
// config.
std::string format_config(const ExperimentConfig& config);

// Semantic checks beyond the grammar (ranges, pool shape, mode/strategy
// combinations). Throws ConfigError.
void validate_config(const ExperimentConfig& config);

}  // namespace rmb
