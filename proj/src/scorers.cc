#include "rmb/scorers.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "rmb/errors.h"

namespace rmb {

ScorerPool::ScorerPool(std::vector<ScorerSpec> scorers) : scorers_(std::move(scorers)) {
  if (scorers_.empty()) throw ConfigError("scorer pool must contain at least one scorer");
  std::set<std::string> ids;
  for (const ScorerSpec& s : scorers_) {
    if (!ids.insert(s.id).second) throw ConfigError("duplicate scorer id '" + s.id + "'");
    if (!(s.noise_sigma >= 0.0) || !(s.injected_sigma >= 0.0)) {
      throw ConfigError("scorer '" + s.id + "': noise sigma must be non-negative");
    }
  }
}

std::size_t ScorerPool::category_count() const {
  return scorers_.empty() ? 0 : scorers_.front().affinity.size();
}

ScorerPool ScorerPool::with_injected_noise(double sigma) const {
  std::vector<ScorerSpec> copy = scorers_;
  for (ScorerSpec& s : copy) s.injected_sigma = sigma;
  return ScorerPool(std::move(copy));
}

void validate_pool(const ScorerPool& pool, std::size_t categories) {
  if (pool.size() == 0) throw ConfigError("scorer pool must contain at least one scorer");
  for (const ScorerSpec& s : pool.scorers()) {
    if (s.affinity.size() != categories) {
      throw ConfigError("scorer '" + s.id + "' defines " + std::to_string(s.affinity.size()) +
                        " affinities but the environment has " + std::to_string(categories) +
                        " categories");
    }
    for (double a : s.affinity) {
      if (!(a >= -1.0 && a <= 1.0)) {
        throw ConfigError("scorer '" + s.id + "': affinity " + std::to_string(a) +
                          " outside [-1, 1]");
      }
    }
  }
}

double score(const ScorerSpec& scorer, const Query& query, const ResponseCandidate& response,
             const RngStream& noise_root) {
  if (query.category >= scorer.affinity.size()) {
    throw ConfigError("scorer '" + scorer.id + "' has no affinity for category " +
                      std::to_string(query.category));
  }
  double value = scorer.affinity[query.category] * response.gold_quality + scorer.bias;
  if (scorer.noise_sigma > 0.0 || scorer.injected_sigma > 0.0) {
    const RngStream cell = noise_root.fork(scorer.id).fork(query.id).fork(response.id);
    if (scorer.noise_sigma > 0.0) value += scorer.noise_sigma * cell.fork("base").normal();
    if (scorer.injected_sigma > 0.0) value += scorer.injected_sigma * cell.fork("injected").normal();
  }
  return value;
}

std::vector<double> score_all(const ScorerSpec& scorer, const Query& query,
                              const ResponseList& responses, const RngStream& noise_root) {
  std::vector<double> scores;
  scores.reserve(responses.size());
  for (std::size_t r : responses) {
    require(r < query.universe.size(), "response index outside the query's universe");
    scores.push_back(score(scorer, query, query.universe[r], noise_root));
  }
  return scores;
}

std::vector<std::size_t> rank_by_score(const std::vector<double>& scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

std::vector<std::size_t> rank_responses(const ScorerSpec& scorer, const Query& query,
                                        const ResponseList& responses,
                                        const RngStream& noise_root) {
  return rank_by_score(score_all(scorer, query, responses, noise_root));
}

double pairwise_agreement_f1(const std::vector<bool>& reference,
                             const std::vector<bool>& candidate) {
  if (reference.size() != candidate.size()) {
    throw ContractViolation("pairwise_agreement_f1: length mismatch");
  }
  if (reference.empty()) throw ContractViolation("pairwise_agreement_f1: empty preference lists");
  double tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    if (candidate[i] && reference[i]) ++tp;
    if (candidate[i] && !reference[i]) ++fp;
    if (!candidate[i] && reference[i]) ++fn;
  }
  const double precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
  const double recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

std::vector<std::vector<double>> agreement_matrix(const ScorerPool& pool,
                                                  const std::vector<Query>& queries,
                                                  std::size_t pairs_per_query,
                                                  const RngStream& noise_root, RngStream& rng) {
  const std::size_t k = pool.size();
  std::vector<std::vector<bool>> prefs(k);
  for (const Query& q : queries) {
    const std::size_t u = q.universe.size();
    if (u < 2) continue;
    for (std::size_t p = 0; p < pairs_per_query; ++p) {
      const std::size_t i = rng.uniform_index(u);
      std::size_t j = rng.uniform_index(u - 1);
      if (j >= i) ++j;
      for (std::size_t s = 0; s < k; ++s) {
        prefs[s].push_back(score(pool[s], q, q.universe[i], noise_root) >
                           score(pool[s], q, q.universe[j], noise_root));
      }
    }
  }
  std::vector<std::vector<double>> f1(k, std::vector<double>(k, 0.0));
  if (prefs.front().empty()) throw EmptyBatchError("agreement_matrix: no comparable pairs");
  for (std::size_t r = 0; r < k; ++r) {
    for (std::size_t c = 0; c < k; ++c) f1[r][c] = pairwise_agreement_f1(prefs[r], prefs[c]);
  }
  return f1;
}

}  // namespace rmb
