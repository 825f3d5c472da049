#pragma once

// The training loop that couples scorer selection with preference
// optimisation, every selection / ensemble strategy it can run with, and the
// best-of-n variant that trains only the bandit.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rmb/bandit.h"
#include "rmb/env.h"
#include "rmb/policy.h"
#include "rmb/scorers.h"
#include "rmb/trace.h"

namespace rmb {

enum class StrategyTag {
  kLaserLinUcb,
  kLaserExp3,
  kBestFixed,
  kAvgSingle,  // harness-level: one best_fixed sub-run per scorer
  kRandom,
  kSequential,
  kClassifier,
  kScoreEnsemble,
  kAgreementEnsemble,
  kOnlineEnsemble,
};

std::string_view to_string(StrategyTag tag);
StrategyTag strategy_from_string(std::string_view text);
bool is_bandit_strategy(StrategyTag tag);
bool is_ensemble_strategy(StrategyTag tag);

enum class BatchSampling { kByCategory, kMixed };
std::string_view to_string(BatchSampling sampling);
BatchSampling batch_sampling_from_string(std::string_view text);

struct TrainConfig {
  std::size_t iterations = 4;             // M
  std::size_t steps_per_iteration = 500;  // T
  std::size_t batch_size = 16;
  std::size_t pairs_per_query = 10;    // P
  std::size_t samples_per_query = 30;  // n
  double temperature = 0.8;
  double beta = 0.1;
  double learning_rate = 0.05;
  LossMode loss_mode = LossMode::kDpoPlusNll;
  BatchSampling batch_sampling = BatchSampling::kByCategory;
  double policy_init_alignment = 1.0;
  BanditConfig bandit;
  double ensemble_eta = 0.5;
  bool z_normalize_scores = false;
  std::size_t agreement_candidates = 100;
  std::optional<std::size_t> fixed_arm;  // best_fixed; default: best mean affinity

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

// ---- preference-pair construction -------------------------------------------

// Uniformly samples up to `p` distinct ordered pairs (i, j) of positions in
// `responses` with scores[i] > scores[j]; all of them when fewer exist.
std::vector<PreferencePair> build_preference_pairs(const Query& query,
                                                   const ResponseList& responses,
                                                   const std::vector<double>& scores,
                                                   std::size_t p, RngStream& rng,
                                                   const std::string& scorer_id);

// Per-scorer z-normalisation over one response list (constant scores map to 0).
std::vector<double> z_normalized(const std::vector<double>& scores);

// Arithmetic mean of the per-scorer scores, optionally z-normalised first.
std::vector<double> ensemble_mean_scores(const std::vector<std::vector<double>>& all_scores,
                                         bool z_normalize);
std::vector<double> weighted_mean_scores(const std::vector<std::vector<double>>& all_scores,
                                         const Vector& weights);

std::vector<PreferencePair> score_ensemble_pairs(const Query& query, const ResponseList& responses,
                                                 const std::vector<std::vector<double>>& all_scores,
                                                 std::size_t p, RngStream& rng,
                                                 bool z_normalize = false);

struct AgreementCandidate {
  std::size_t first = 0;  // positions in the response list, first < second
  std::size_t second = 0;
  std::size_t votes_first = 0;
  std::size_t votes_second = 0;
  std::size_t agreement() const { return std::max(votes_first, votes_second); }
};

struct AgreementSelection {
  std::vector<AgreementCandidate> sampled;  // in sample order
  std::vector<std::size_t> selected;        // indices into `sampled`
  std::vector<PreferencePair> pairs;
};

// Samples `candidates` unordered response pairs (all when fewer exist), keeps
// those with a strict majority orientation and returns the `keep` with the
// highest agreement, ties to earlier samples. winner_score / loser_score hold
// the vote counts.
AgreementSelection agreement_ensemble_select(const Query& query, const ResponseList& responses,
                                             const std::vector<std::vector<double>>& all_scores,
                                             RngStream& rng, std::size_t candidates = 100,
                                             std::size_t keep = 10);
std::vector<PreferencePair> agreement_ensemble_pairs(const Query& query, const ResponseList& responses,
                                                     const std::vector<std::vector<double>>& all_scores,
                                                     RngStream& rng, std::size_t candidates = 100,
                                                     std::size_t keep = 10);

// ---- online (multiplicative-weights) ensemble ---------------------------------

struct OnlineEnsembleState {
  Vector weights;  // simplex over scorers
  double eta = 0.5;
};

OnlineEnsembleState make_online_ensemble(std::size_t scorer_count, double eta);
// w_k <- w_k exp(eta fitness_k), renormalised.
OnlineEnsembleState online_ensemble_step(const OnlineEnsembleState& state, const Vector& fitness);

// fitness_k = -mean log(1 + exp(-(s_k(winner) - s_k(loser)))) over `pairs`,
// where pair_scores[i][k] = (s_k(winner), s_k(loser)) for pair i.
Vector online_ensemble_fitness(const std::vector<std::vector<std::pair<double, double>>>& pair_scores,
                               std::size_t scorer_count);

// ---- classifier baseline --------------------------------------------------------

struct LabeledContext {
  Vector context;
  std::size_t label = 0;
};

// Multinomial logistic regression over [context, 1].
struct ScorerClassifier {
  std::size_t classes = 0;
  std::size_t dim = 0;
  std::vector<double> weights;  // classes x (dim + 1), row-major
  bool trained = false;

  std::vector<double> logits(const Vector& context) const;
};

// Gradient descent until the loss changes by less than 1e-6 between
// iterations. Every class in [0, max label] must appear at least once.
ScorerClassifier train_classifier(std::span<const LabeledContext> examples,
                                  double learning_rate = 0.5, std::size_t max_iterations = 20000);
std::size_t classifier_select(const ScorerClassifier& classifier, const Vector& context);

// Label = scorer with the largest correctly-signed score gap between the
// query's gold-best and gold-worst responses; queries no scorer orders
// correctly are skipped.
std::vector<LabeledContext> classifier_training_set(std::span<const Query> queries,
                                                    const ScorerPool& pool,
                                                    const RngStream& noise_root);

// ---- training ---------------------------------------------------------------------

struct TrainResult {
  PolicyParams policy;
  std::optional<BanditState> bandit;
  std::optional<OnlineEnsembleState> online;
  TrainTrace trace;
};

// Runs M x T steps of the selection / pair-building / DPO loop. `initial_bandit`
// replaces the freshly initialised bandit (cold start). avg_single is not a
// per-run strategy; the harness expands it into best_fixed runs.
TrainResult train(const TrainConfig& config, const Environment& env, const ScorerPool& pool,
                  StrategyTag strategy, std::uint64_t seed,
                  std::optional<BanditState> initial_bandit = std::nullopt);

std::size_t default_fixed_arm(const ScorerPool& pool);

struct BestOfNResult {
  BanditState bandit;
  TrainTrace trace;
  double mean_gold_quality = 0.0;
  std::vector<std::size_t> inference_arms;
};

// Returns the position of the highest score; ties go to the lowest position.
std::size_t best_of_n_pick(const std::vector<double>& scores);

// Trains the bandit only: the policy stays frozen at `policy`, the MAB reward is
// the negative mean length-normalised NLL of the best-of-n responses.
BestOfNResult best_of_n_run(const TrainConfig& config, const Environment& env, const ScorerPool& pool,
                            const PolicyParams& policy, std::uint64_t seed,
                            std::optional<BanditState> initial_bandit = std::nullopt);

// ---- persistence --------------------------------------------------------------------

// Atomic write (temporary file + rename).
void save_bandit(const BanditState& state, const std::filesystem::path& path);
// Throws LoadError; never returns a partially-read state.
BanditState load_bandit(const std::filesystem::path& path);

}  // namespace rmb
