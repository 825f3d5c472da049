#pragma once

// Synthetic task generator and gold-reward oracle.
//
// Queries fall into C categories; each category has a unit centroid and query
// features are the centroid plus Gaussian jitter, renormalised. Every query owns
// a finite universe of candidate responses whose gold quality is a sigmoid of
// their projection onto a hidden "quality direction" shared by the whole world.
// The world (centroids, quality direction) and the dataset (queries, universes)
// come from separate seeds; two datasets may share one world.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rmb/numerics.h"
#include "rmb/query.h"
#include "rmb/scorers.h"
#include "rmb/trace.h"

namespace rmb {

struct EnvironmentConfig {
  std::size_t categories = 4;
  std::size_t queries_per_category = 143;  // 572 queries -> 400 train
  std::size_t dim = 8;
  std::size_t universe_size = 16;
  double train_fraction = 0.7;
  double dev_fraction = 0.1;
  double test_fraction = 0.2;
  double centroid_jitter = 0.3;
  double gold_sharpness = 1.7;
  double gold_jitter = 0.25;
  int max_response_length = 1;  // lengths uniform in [1, max]
  std::optional<std::uint64_t> world_seed;  // defaults to the dataset seed
  std::string dataset_label = "primary";

  friend bool operator==(const EnvironmentConfig&, const EnvironmentConfig&) = default;
};

struct Environment {
  EnvironmentConfig config;
  std::uint64_t seed = 0;
  std::vector<Vector> centroids;
  Vector quality_direction;  // unit vector
  std::vector<Query> train;
  std::vector<Query> dev;
  std::vector<Query> test;
};

Environment generate_environment(const EnvironmentConfig& config, std::uint64_t seed);

// Argmax over scorers of affinity[query.category]; ties to the lowest index.
std::size_t gold_best_arm(std::size_t category, const ScorerPool& pool);
std::size_t gold_best_arm(const Query& query, const ScorerPool& pool);

// Running sum of the per-step affinity gap between the oracle arm and the
// selection, averaged over the batch's queries.
std::vector<double> cumulative_regret(const TrainTrace& trace, const ScorerPool& pool);

// rows = categories, columns = arms, over the final `window_fraction` of the
// trace. Rows of categories absent from the window are all zero.
std::vector<std::vector<double>> utilization_report(const TrainTrace& trace,
                                                    double window_fraction = 1.0);

inline constexpr int kEnvironmentSchemaVersion = 1;
std::string serialize_environment(const Environment& env);
Environment deserialize_environment(std::string_view document);

}  // namespace rmb
