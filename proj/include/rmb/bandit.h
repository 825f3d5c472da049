#pragma once

// Arm-selection strategies over the scorer pool: LinUCB (contextual) and Exp3
// (adversarial, non-contextual), plus the quantile normaliser that turns the
// raw MAB reward (negative training loss) into a value in [0, 1].

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "rmb/numerics.h"

namespace rmb {

struct LinUcbArm {
  SpdMatrix a_inv;  // A_k^{-1}
  Vector b;
  std::uint64_t pulls = 0;

  friend bool operator==(const LinUcbArm&, const LinUcbArm&) = default;
};

// A = I, b ~ N(0, b_init_sigma^2) per coordinate.
std::vector<LinUcbArm> make_linucb_arms(std::size_t arm_count, std::size_t dim,
                                        double b_init_sigma, RngStream& rng);

// Per-arm upper confidence bounds c^T theta_k + alpha sqrt(c^T A_k^{-1} c).
std::vector<double> linucb_scores(std::span<const LinUcbArm> arms, const Vector& context,
                                  double alpha);
// Argmax of linucb_scores; ties go to the lowest index.
std::size_t linucb_select(std::span<const LinUcbArm> arms, const Vector& context, double alpha);
LinUcbArm linucb_update(LinUcbArm arm, const Vector& context, double normalized_reward);

struct Exp3State {
  Vector scores;  // S_k
  double gamma = 0.1;
  double overflow_bound = 700.0;

  friend bool operator==(const Exp3State&, const Exp3State&) = default;
};

Exp3State make_exp3_state(std::size_t arm_count, double gamma);
Vector exp3_probabilities(const Exp3State& state);

struct Exp3Draw {
  std::size_t arm = 0;
  double probability = 0.0;
};

Exp3Draw exp3_select(const Exp3State& state, RngStream& rng);
Exp3State exp3_update(Exp3State state, std::size_t arm, double normalized_reward,
                      double probability);

struct RewardNormalizer {
  std::vector<double> history;
  double q_lo_level = 0.20;
  double q_hi_level = 0.80;

  friend bool operator==(const RewardNormalizer&, const RewardNormalizer&) = default;
};

inline constexpr double kWarmupReward = 0.5;

struct NormalizedReward {
  double value = kWarmupReward;
  RewardNormalizer normalizer;
};

// Scales `raw` against the quantiles of the history *before* `raw` is
// appended. Fewer than two history entries, or a degenerate quantile range,
// yield kWarmupReward.
NormalizedReward normalize_reward(RewardNormalizer normalizer, double raw);

enum class BanditAlgorithm { kLinUcb, kExp3 };

std::string_view to_string(BanditAlgorithm algorithm);
BanditAlgorithm bandit_algorithm_from_string(std::string_view text);

struct BanditConfig {
  BanditAlgorithm algorithm = BanditAlgorithm::kLinUcb;
  double alpha = 1.0;
  double gamma = 0.1;
  double b_init_sigma = 0.01;
  bool per_arm_history = false;

  friend bool operator==(const BanditConfig&, const BanditConfig&) = default;
};

// Everything a run needs to continue selecting arms: per-arm statistics, the
// reward history used for normalisation, and the configuration that produced
// them.
struct BanditState {
  BanditConfig config;
  std::size_t context_dim = 0;
  std::vector<LinUcbArm> arms;  // populated for LinUCB
  Exp3State exp3;               // populated for Exp3
  RewardNormalizer normalizer;  // global history
  std::vector<RewardNormalizer> arm_normalizers;  // used when per_arm_history
  std::vector<std::uint64_t> usage;
  std::uint64_t steps = 0;

  std::size_t arm_count() const noexcept { return usage.size(); }

  friend bool operator==(const BanditState&, const BanditState&) = default;
};

BanditState make_bandit_state(const BanditConfig& config, std::size_t arm_count,
                              std::size_t context_dim, RngStream& rng);

struct BanditChoice {
  std::size_t arm = 0;
  double probability = 1.0;         // Exp3 sampling probability, 1 for LinUCB
  std::vector<double> diagnostics;  // UCB scores or Exp3 probabilities
};

BanditChoice bandit_select(const BanditState& state, const Vector& context, RngStream& rng);

// Normalises `raw_reward` against the appropriate history and applies the
// algorithm's update for `choice`. Returns the normalised reward.
double bandit_feedback(BanditState& state, const BanditChoice& choice, const Vector& context,
                       double raw_reward);
// Applies an already-normalised reward (used for the empty-batch convention).
void bandit_apply(BanditState& state, const BanditChoice& choice, const Vector& context,
                  double normalized_reward);

// Versioned JSON document. Doubles are written in shortest round-trip form so
// a save/load cycle is bit-exact.
inline constexpr int kBanditSchemaVersion = 1;
std::string serialize_bandit(const BanditState& state);
// Throws LoadError on malformed input or version mismatch.
BanditState deserialize_bandit(std::string_view document);

}  // namespace rmb
