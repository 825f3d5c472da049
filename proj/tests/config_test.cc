#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>

#include "rmb/config.h"
#include "rmb/errors.h"

using namespace rmb;

namespace {

const char* kMinimal = R"(# smallest valid experiment
[experiment]
strategy = "laser_linucb"
seeds = [1, 2]
out_dir = "out/min"

[scorer.a]
affinity = [0.9, 0.2, 0.1, 0.0]
noise_sigma = 0.1
)";

std::string parse_error(const std::string& text) {
  try {
    parse_config_text(text, "test.toml");
  } catch (const ParseError& e) {
    return e.what();
  }
  return "";
}

bool contains(const std::string& haystack, const std::string& needle) {
  return haystack.find(needle) != std::string::npos;
}

}  // namespace

TEST_CASE("parse_config_text: minimal config takes every default") {
  const ExperimentConfig c = parse_config_text(kMinimal);
  CHECK(c.strategy == StrategyTag::kLaserLinUcb);
  CHECK(c.mode == RunMode::kTrain);
  CHECK(c.seeds == std::vector<std::uint64_t>{1, 2});
  CHECK(c.out_dir == "out/min");
  CHECK(c.threads == 1);
  CHECK(c.utilization_window == 0.25);
  CHECK(c.environment == EnvironmentConfig{});
  TrainConfig expected_training;
  CHECK(c.training == expected_training);
  REQUIRE(c.scorers.size() == 1);
  CHECK(c.scorers[0] == ScorerSpec{"a", {0.9, 0.2, 0.1, 0.0}, 0.1, 0.0});
  CHECK_NOTHROW(validate_config(c));
}

TEST_CASE("parse_config_text: every section and value type") {
  const ExperimentConfig c = parse_config_text(R"(
[experiment]
strategy = "laser_exp3"   # trailing comment
mode = "best_of_n"
seeds = [3]
out_dir = "x \"quoted\""
threads = 2
injected_noise = 0.3

[environment]
categories = 2
dim = 4
gold_sharpness = 2
world_seed = 11
dataset_label = "second"

[training]
iterations = 1
loss_mode = "dpo"
batch_sampling = "mixed"
z_normalize_scores = true
fixed_arm = 1

[bandit]
gamma = 0.2

[scorer.first]
affinity = [1, 0.5]
noise_sigma = 0

[scorer.second]
affinity = [0.1, 0.9]
noise_sigma = 0.2
bias = -0.5
)");
  CHECK(c.strategy == StrategyTag::kLaserExp3);
  CHECK(c.mode == RunMode::kBestOfN);
  CHECK(c.out_dir == "x \"quoted\"");
  CHECK(c.threads == 2);
  CHECK(c.environment.gold_sharpness == 2.0);
  CHECK(c.environment.world_seed == 11u);
  CHECK(c.environment.dataset_label == "second");
  CHECK(c.training.loss_mode == LossMode::kDpo);
  CHECK(c.training.batch_sampling == BatchSampling::kMixed);
  CHECK(c.training.z_normalize_scores);
  CHECK(c.training.fixed_arm == 1u);
  CHECK(c.training.bandit.gamma == 0.2);
  CHECK(c.training.bandit.algorithm == BanditAlgorithm::kExp3);
  REQUIRE(c.scorers.size() == 2);
  CHECK(c.scorers[0].id == "first");
  CHECK(c.scorers[1].bias == -0.5);
  const ScorerPool pool = c.pool();
  CHECK(pool[0].injected_sigma == 0.3);
  CHECK(pool[1].noise_sigma == 0.2);
  CHECK_NOTHROW(validate_config(c));
}

TEST_CASE("parse_config_text: a misspelled key is reported by name and line") {
  std::string text = kMinimal;
  text += "bais = 0.2\n";
  const std::string err = parse_error(text);
  CHECK(contains(err, "test.toml:10"));
  CHECK(contains(err, "unknown key 'scorer.a.bais'"));
  text = kMinimal;
  text.replace(text.find("out_dir"), 7, "outdir");
  CHECK(contains(parse_error(text), "missing required key 'experiment.out_dir'"));
  text = kMinimal;
  text += "[training]\nsteps = 3\n";
  CHECK(contains(parse_error(text), "test.toml:11: unknown key 'training.steps'"));
}

TEST_CASE("parse_config_text: type mismatches name the key") {
  std::string text = kMinimal;
  text += "[training]\nbatch_size = 2.5\n";
  CHECK(contains(parse_error(text), "training.batch_size' expects an integer"));
  text = kMinimal;
  text += "[training]\nz_normalize_scores = 1\n";
  CHECK(contains(parse_error(text), "expects a boolean"));
  text = kMinimal;
  text += "[training]\nbeta = \"big\"\n";
  CHECK(contains(parse_error(text), "training.beta' expects a number"));
}

TEST_CASE("parse_config_text: missing required keys and sections") {
  CHECK(contains(parse_error("[experiment]\nseeds = [1]\nout_dir = \"o\"\n[scorer.a]\naffinity = [1]\nnoise_sigma = 0\n"),
                 "missing required key 'experiment.strategy'"));
  CHECK(contains(parse_error("[experiment]\nstrategy = \"random\"\nseeds = [1]\nout_dir = \"o\"\n"),
                 "at least one [scorer.<id>] section"));
  CHECK(contains(parse_error("[experiment]\nstrategy = \"random\"\nseeds = [1]\nout_dir = \"o\"\n[scorer.a]\n"
                             "affinity = [1]\n"),
                 "missing required key 'scorer.a.noise_sigma'"));
}

TEST_CASE("parse_config_text: grammar errors") {
  CHECK(contains(parse_error("[nonsense]\n"), "test.toml:1"));
  CHECK(contains(parse_error("[experiment]\n[experiment]\n"), "test.toml:2"));
  CHECK(contains(parse_error("key = 1\n"), "outside of any section"));
  CHECK(contains(parse_error("[experiment]\nstrategy \"x\"\n"), "expected 'key = value'"));
  CHECK(contains(parse_error("[experiment]\nthreads = 1\nthreads = 2\n"), "duplicate key 'experiment.threads'"));
  CHECK(contains(parse_error("[experiment]\nout_dir = \"open\n"), "test.toml:2"));
  CHECK_FALSE(parse_error("[experiment]\nthreads = 1 2\n").empty());
  CHECK_FALSE(parse_error("[experiment]\nseeds = [1, -2]\n").empty());
}

TEST_CASE("parse_config_text: unknown enum values") {
  std::string text = kMinimal;
  text.replace(text.find("laser_linucb"), 12, "laser_ucb");
  CHECK(contains(parse_error(text), "experiment.strategy"));
  text = kMinimal;
  text += "[training]\nloss_mode = \"hinge\"\n";
  CHECK(contains(parse_error(text), "training.loss_mode"));
}

TEST_CASE("format_config: round trip reproduces the configuration and text") {
  ExperimentConfig c = parse_config_text(kMinimal);
  c.environment.world_seed = 4;
  c.training.fixed_arm = 0;
  c.training.learning_rate = 0.1 + 0.2;  // not representable in short decimal
  c.injected_noise = 0.25;
  const std::string text = format_config(c);
  const ExperimentConfig back = parse_config_text(text);
  CHECK(back == c);
  CHECK(format_config(back) == text);
}

TEST_CASE("parse_config: reads files and reports missing ones") {
  const auto path = std::filesystem::temp_directory_path() / "rmb-config-test.toml";
  {
    std::ofstream out(path);
    out << kMinimal;
  }
  CHECK(parse_config(path) == parse_config_text(kMinimal));
  std::filesystem::remove(path);
  CHECK_THROWS_AS(parse_config(path), ParseError);
}

TEST_CASE("validate_config: semantic errors") {
  const ExperimentConfig base = parse_config_text(kMinimal);
  ExperimentConfig c = base;
  c.seeds = {1, 1};
  CHECK_THROWS_AS(validate_config(c), ConfigError);
  c = base;
  c.seeds.clear();
  CHECK_THROWS_AS(validate_config(c), ConfigError);
  c = base;
  c.utilization_window = 0.0;
  CHECK_THROWS_AS(validate_config(c), ConfigError);
  c = base;
  c.strategy = StrategyTag::kRandom;
  c.mode = RunMode::kBestOfN;
  CHECK_THROWS_AS(validate_config(c), ConfigError);
  c = base;
  c.scorers[0].affinity = {0.9, 0.2};
  CHECK_THROWS_AS(validate_config(c), ConfigError);
  c = base;
  c.threads = 0;
  CHECK_THROWS_AS(validate_config(c), ConfigError);
}
