#pragma once

// Simulated reward models. A scorer sees the gold quality of a response through
// a per-category affinity, a constant bias and Gaussian noise that is fixed per
// (scorer, query, response). Repeated calls return identical scores.

#include <cstddef>
#include <string>
#include <vector>

#include "rmb/numerics.h"
#include "rmb/query.h"

namespace rmb {

struct ScorerSpec {
  std::string id;
  std::vector<double> affinity;  // one entry per category, in [-1, 1]
  double noise_sigma = 0.0;
  double bias = 0.0;
  double injected_sigma = 0.0;  // extra noise for robustness sweeps

  friend bool operator==(const ScorerSpec&, const ScorerSpec&) = default;
};

class ScorerPool {
 public:
  ScorerPool() = default;
  explicit ScorerPool(std::vector<ScorerSpec> scorers);

  std::size_t size() const noexcept { return scorers_.size(); }
  const ScorerSpec& operator[](std::size_t k) const { return scorers_[k]; }
  const std::vector<ScorerSpec>& scorers() const noexcept { return scorers_; }
  std::size_t category_count() const;

  // Copy with `sigma` of additional noise on every scorer.
  ScorerPool with_injected_noise(double sigma) const;

 private:
  std::vector<ScorerSpec> scorers_;
};

// Throws ConfigError unless every scorer covers `categories` categories with
// affinities in [-1, 1] and non-negative noise.
void validate_pool(const ScorerPool& pool, std::size_t categories);

// affinity[category] * gold + bias + noise. `noise_root` is forked by scorer
// id, query id and response id; it is never advanced.
double score(const ScorerSpec& scorer, const Query& query, const ResponseCandidate& response,
             const RngStream& noise_root);

std::vector<double> score_all(const ScorerSpec& scorer, const Query& query,
                              const ResponseList& responses, const RngStream& noise_root);

// Positions into `scores` ordered by descending score; ties keep input order.
std::vector<std::size_t> rank_by_score(const std::vector<double>& scores);
std::vector<std::size_t> rank_responses(const ScorerSpec& scorer, const Query& query,
                                        const ResponseList& responses,
                                        const RngStream& noise_root);

// F1 of `candidate` against `reference`, positive class = "first response of
// the pair preferred". Defined as 0 when precision + recall == 0.
double pairwise_agreement_f1(const std::vector<bool>& reference,
                             const std::vector<bool>& candidate);

// K x K matrix; entry (r, c) is the F1 of scorer c against reference scorer r
// over `pairs_per_query` random universe pairs per query.
std::vector<std::vector<double>> agreement_matrix(const ScorerPool& pool,
                                                  const std::vector<Query>& queries,
                                                  std::size_t pairs_per_query,
                                                  const RngStream& noise_root, RngStream& rng);

}  // namespace rmb
