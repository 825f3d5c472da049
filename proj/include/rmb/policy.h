#pragma once

// Toy differentiable generation policy.
//
// For a query x with candidate universe U(x), the policy assigns each response
// the logit theta . phi(y) and pi(y | x) = softmax over U(x). Because the logits
// are linear in theta, log-probabilities, the DPO/NLL losses and their exact
// gradients are all closed-form.

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rmb/numerics.h"
#include "rmb/query.h"

namespace rmb {

struct PolicyParams {
  Vector theta;
  std::size_t feature_dim() const noexcept { return theta.dim(); }
  friend bool operator==(const PolicyParams&, const PolicyParams&) = default;
};

struct ReferenceSnapshot {
  Vector theta_ref;
  static ReferenceSnapshot of(const PolicyParams& params) { return {params.theta}; }
};

struct PreferencePair {
  const Query* query = nullptr;
  std::size_t winner = 0;  // universe positions
  std::size_t loser = 0;
  std::string scorer_id;
  double winner_score = 0.0;
  double loser_score = 0.0;
};

enum class LossMode { kDpo, kDpoPlusNll, kNll };

std::string_view to_string(LossMode mode);
LossMode loss_mode_from_string(std::string_view text);

// theta = alignment * direction (an "SFT" starting point that already prefers
// better responses when alignment > 0).
PolicyParams aligned_policy(const Vector& direction, double alignment);

Vector policy_logits(const PolicyParams& params, const Query& query);
Vector policy_log_probs(const PolicyParams& params, const Query& query);
double logprob(const PolicyParams& params, const Query& query, std::size_t response);

ResponseList sample_responses(const PolicyParams& params, const Query& query, std::size_t n,
                              double temperature, RngStream& rng);

double dpo_loss(const PolicyParams& params, const ReferenceSnapshot& ref,
                std::span<const PreferencePair> pairs, double beta);
double nll_loss(const PolicyParams& params, std::span<const PreferencePair> pairs);
double combined_loss(const PolicyParams& params, const ReferenceSnapshot& ref,
                     std::span<const PreferencePair> pairs, double beta, LossMode mode);
// Exact gradient of combined_loss with respect to theta.
Vector loss_gradient(const PolicyParams& params, const ReferenceSnapshot& ref,
                     std::span<const PreferencePair> pairs, double beta, LossMode mode);

PolicyParams sgd_step(const PolicyParams& params, const Vector& gradient, double learning_rate);

// Mean over queries of E_{y ~ softmax(logits / temperature)}[gold(y)].
double expected_gold_quality(const PolicyParams& params, std::span<const Query> queries,
                             double temperature);

// Mean log pi(y_w) - log pi(y_l) over random universe pairs oriented by gold
// quality (ties skipped).
double held_out_margin(const PolicyParams& params, std::span<const Query> queries,
                       std::size_t pairs_per_query, RngStream& rng);

}  // namespace rmb
