#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "rmb/numerics.h"

namespace rmb {

// One training (or best-of-n) step.
struct TraceRecord {
  std::size_t iteration = 0;  // 1-based m
  std::size_t step = 0;       // 1-based t within the iteration
  Vector context;
  // Number of batch queries per category.
  std::vector<std::size_t> category_histogram;
  // Selection weight per arm: one-hot for single-scorer strategies, the
  // ensemble weights otherwise.
  std::vector<double> arm_weights;
  std::string chosen;  // arm index, or "ensemble"
  double raw_loss = 0.0;
  double normalized_reward = 0.0;
  std::size_t pairs = 0;
  std::size_t scorer_calls = 0;
  std::vector<double> diagnostics;  // UCB scores, Exp3 probabilities or weights
};

struct TrainTrace {
  std::size_t arm_count = 0;
  std::size_t category_count = 0;
  std::vector<TraceRecord> records;
};

}  // namespace rmb
