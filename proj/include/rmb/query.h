#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "rmb/numerics.h"

namespace rmb {

struct ResponseCandidate {
  std::uint64_t id = 0;  // index within the owning query's universe
  Vector features;
  double gold_quality = 0.0;
  int length = 1;
};

struct Query {
  std::uint64_t id = 0;
  std::size_t category = 0;
  Vector features;  // unit norm
  std::vector<ResponseCandidate> universe;
};

// Positions into Query::universe; duplicates allowed (sampling is with
// replacement).
using ResponseList = std::vector<std::size_t>;

}  // namespace rmb
