#include "rmb/pipeline.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rmb/errors.h"

namespace rmb {

namespace {

constexpr std::string_view kStrategyNames[] = {
    "laser_linucb", "laser_exp3",     "best_fixed",     "avg_single",         "random",
    "sequential",   "classifier",     "score_ensemble", "agreement_ensemble", "online_ensemble",
};

// Positions (i, j) into `scores`, scores[i] > scores[j], sampled uniformly
// without replacement.
std::vector<std::pair<std::size_t, std::size_t>> sample_ordered_pairs(const std::vector<double>& scores,
                                                                      std::size_t p, RngStream& rng) {
  std::vector<std::pair<std::size_t, std::size_t>> valid;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (scores[i] > scores[j]) valid.emplace_back(i, j);
    }
  }
  const std::size_t take = std::min(p, valid.size());
  for (std::size_t k = 0; k < take; ++k) {
    std::swap(valid[k], valid[k + rng.uniform_index(valid.size() - k)]);
  }
  valid.resize(take);
  return valid;
}

PreferencePair make_pair(const Query& query, const ResponseList& responses, const std::vector<double>& scores,
                         std::size_t winner_pos, std::size_t loser_pos, const std::string& scorer_id) {
  return {&query, responses[winner_pos], responses[loser_pos], scorer_id, scores[winner_pos], scores[loser_pos]};
}

void check_all_scores(const ResponseList& responses, const std::vector<std::vector<double>>& all_scores) {
  if (all_scores.empty()) throw ContractViolation("ensemble needs scores from at least one scorer");
  for (const auto& s : all_scores) {
    if (s.size() != responses.size()) throw ContractViolation("ensemble score list length does not match responses");
  }
}

class BatchSampler {
 public:
  BatchSampler(const std::vector<Query>& queries, std::size_t categories, BatchSampling mode)
      : queries_(queries), mode_(mode), by_category_(categories) {
    if (queries.empty()) throw ConfigError("training split is empty");
    for (std::size_t i = 0; i < queries.size(); ++i) by_category_.at(queries[i].category).push_back(i);
    for (std::size_t c = 0; c < categories; ++c) {
      if (!by_category_[c].empty()) nonempty_.push_back(c);
    }
  }

  std::vector<const Query*> next(std::size_t batch_size, RngStream& rng) const {
    std::vector<std::size_t> pool;
    if (mode_ == BatchSampling::kByCategory) {
      pool = by_category_[nonempty_[rng.uniform_index(nonempty_.size())]];
    } else {
      pool.resize(queries_.size());
      std::iota(pool.begin(), pool.end(), 0);
    }
    std::vector<const Query*> batch;
    batch.reserve(batch_size);
    // Without replacement while the pool lasts, then with replacement.
    for (std::size_t k = 0; k < batch_size; ++k) {
      if (k < pool.size()) {
        std::swap(pool[k], pool[k + rng.uniform_index(pool.size() - k)]);
        batch.push_back(&queries_[pool[k]]);
      } else {
        batch.push_back(&queries_[pool[rng.uniform_index(pool.size())]]);
      }
    }
    return batch;
  }

 private:
  const std::vector<Query>& queries_;
  BatchSampling mode_;
  std::vector<std::vector<std::size_t>> by_category_;
  std::vector<std::size_t> nonempty_;
};

Vector batch_context(const std::vector<const Query*>& batch) {
  Vector sum(batch.front()->features.dim());
  for (const Query* q : batch) sum += q->features;
  sum *= 1.0 / static_cast<double>(batch.size());
  return sum;
}

std::vector<std::size_t> category_histogram(const std::vector<const Query*>& batch, std::size_t categories) {
  std::vector<std::size_t> hist(categories, 0);
  for (const Query* q : batch) ++hist.at(q->category);
  return hist;
}

std::vector<double> one_hot(std::size_t k, std::size_t arm) {
  std::vector<double> w(k, 0.0);
  w.at(arm) = 1.0;
  return w;
}

void validate(const TrainConfig& c, const Environment& env, const ScorerPool& pool) {
  validate_pool(pool, env.config.categories);
  if (c.iterations == 0 || c.steps_per_iteration == 0) throw ConfigError("iterations and steps must be positive");
  if (c.batch_size == 0) throw ConfigError("batch_size must be positive");
  if (c.pairs_per_query == 0) throw ConfigError("pairs_per_query must be positive");
  if (c.samples_per_query < 2) throw ConfigError("samples_per_query must be at least 2");
  if (!(c.temperature > 0.0)) throw ConfigError("temperature must be positive");
  if (!(c.beta >= 0.0)) throw ConfigError("beta must be non-negative");
  if (!(c.learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (!(c.ensemble_eta >= 0.0)) throw ConfigError("ensemble eta must be non-negative");
  if (c.fixed_arm && *c.fixed_arm >= pool.size()) throw ConfigError("fixed_arm out of range");
}

void check_bandit_compat(const BanditState& state, const ScorerPool& pool, const Environment& env) {
  if (state.arm_count() != pool.size()) {
    throw ConfigError("bandit state has " + std::to_string(state.arm_count()) + " arms but the pool has " +
                      std::to_string(pool.size()));
  }
  if (state.context_dim != env.config.dim) {
    throw ConfigError("bandit state context dimension " + std::to_string(state.context_dim) +
                      " does not match environment dimension " + std::to_string(env.config.dim));
  }
}

}  // namespace

std::string_view to_string(StrategyTag tag) { return kStrategyNames[static_cast<std::size_t>(tag)]; }

StrategyTag strategy_from_string(std::string_view text) {
  for (std::size_t i = 0; i < std::size(kStrategyNames); ++i) {
    if (kStrategyNames[i] == text) return static_cast<StrategyTag>(i);
  }
  throw ConfigError("unknown strategy '" + std::string(text) + "'");
}

bool is_bandit_strategy(StrategyTag tag) {
  return tag == StrategyTag::kLaserLinUcb || tag == StrategyTag::kLaserExp3;
}

bool is_ensemble_strategy(StrategyTag tag) {
  return tag == StrategyTag::kScoreEnsemble || tag == StrategyTag::kAgreementEnsemble ||
         tag == StrategyTag::kOnlineEnsemble;
}

std::string_view to_string(BatchSampling sampling) {
  return sampling == BatchSampling::kByCategory ? "by_category" : "mixed";
}

BatchSampling batch_sampling_from_string(std::string_view text) {
  if (text == "by_category") return BatchSampling::kByCategory;
  if (text == "mixed") return BatchSampling::kMixed;
  throw ConfigError("unknown batch sampling '" + std::string(text) + "'");
}

std::vector<PreferencePair> build_preference_pairs(const Query& query, const ResponseList& responses,
                                                   const std::vector<double>& scores, std::size_t p,
                                                   RngStream& rng, const std::string& scorer_id) {
  if (responses.size() != scores.size()) throw ContractViolation("build_preference_pairs: |responses| != |scores|");
  if (responses.size() < 2) throw ContractViolation("build_preference_pairs: need at least two responses");
  std::vector<PreferencePair> pairs;
  for (const auto& [w, l] : sample_ordered_pairs(scores, p, rng)) {
    pairs.push_back(make_pair(query, responses, scores, w, l, scorer_id));
  }
  return pairs;
}

std::vector<double> z_normalized(const std::vector<double>& scores) {
  if (scores.empty()) return {};
  const double n = static_cast<double>(scores.size());
  const double mean = std::accumulate(scores.begin(), scores.end(), 0.0) / n;
  double var = 0.0;
  for (double s : scores) var += (s - mean) * (s - mean);
  const double sd = std::sqrt(var / n);
  std::vector<double> out(scores.size(), 0.0);
  if (sd > 0.0) {
    for (std::size_t i = 0; i < scores.size(); ++i) out[i] = (scores[i] - mean) / sd;
  }
  return out;
}

std::vector<double> ensemble_mean_scores(const std::vector<std::vector<double>>& all_scores, bool z_normalize) {
  if (all_scores.empty()) throw ContractViolation("ensemble needs scores from at least one scorer");
  std::vector<double> mean(all_scores.front().size(), 0.0);
  for (const auto& raw : all_scores) {
    const std::vector<double> s = z_normalize ? z_normalized(raw) : raw;
    for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += s.at(i);
  }
  for (double& m : mean) m /= static_cast<double>(all_scores.size());
  return mean;
}

std::vector<double> weighted_mean_scores(const std::vector<std::vector<double>>& all_scores, const Vector& weights) {
  if (all_scores.size() != weights.dim()) throw ContractViolation("weighted_mean_scores: one weight per scorer required");
  std::vector<double> mean(all_scores.front().size(), 0.0);
  for (std::size_t k = 0; k < all_scores.size(); ++k) {
    for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += weights[k] * all_scores[k].at(i);
  }
  return mean;
}

std::vector<PreferencePair> score_ensemble_pairs(const Query& query, const ResponseList& responses,
                                                 const std::vector<std::vector<double>>& all_scores, std::size_t p,
                                                 RngStream& rng, bool z_normalize) {
  check_all_scores(responses, all_scores);
  return build_preference_pairs(query, responses, ensemble_mean_scores(all_scores, z_normalize), p, rng,
                                "score_ensemble");
}

AgreementSelection agreement_ensemble_select(const Query& query, const ResponseList& responses,
                                             const std::vector<std::vector<double>>& all_scores, RngStream& rng,
                                             std::size_t candidates, std::size_t keep) {
  check_all_scores(responses, all_scores);
  if (responses.size() < 2) throw ContractViolation("agreement ensemble needs at least two responses");
  const std::size_t n = responses.size();
  std::vector<std::pair<std::size_t, std::size_t>> all_pairs;
  all_pairs.reserve(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) all_pairs.emplace_back(i, j);
  }
  const std::size_t take = std::min(candidates, all_pairs.size());
  for (std::size_t k = 0; k < take; ++k) {
    std::swap(all_pairs[k], all_pairs[k + rng.uniform_index(all_pairs.size() - k)]);
  }

  AgreementSelection out;
  const std::size_t scorers = all_scores.size();
  for (std::size_t k = 0; k < take; ++k) {
    AgreementCandidate c{all_pairs[k].first, all_pairs[k].second, 0, 0};
    for (const auto& s : all_scores) {
      if (s[c.first] > s[c.second]) ++c.votes_first;
      if (s[c.second] > s[c.first]) ++c.votes_second;
    }
    out.sampled.push_back(c);
  }
  std::vector<std::size_t> eligible;
  for (std::size_t k = 0; k < out.sampled.size(); ++k) {
    if (2 * out.sampled[k].agreement() > scorers && out.sampled[k].votes_first != out.sampled[k].votes_second) {
      eligible.push_back(k);
    }
  }
  std::stable_sort(eligible.begin(), eligible.end(), [&](std::size_t a, std::size_t b) {
    return out.sampled[a].agreement() > out.sampled[b].agreement();
  });
  eligible.resize(std::min(keep, eligible.size()));
  out.selected = eligible;
  for (std::size_t k : out.selected) {
    const AgreementCandidate& c = out.sampled[k];
    const bool first_wins = c.votes_first > c.votes_second;
    const std::size_t w = first_wins ? c.first : c.second;
    const std::size_t l = first_wins ? c.second : c.first;
    out.pairs.push_back({&query, responses[w], responses[l], "agreement_ensemble",
                         static_cast<double>(first_wins ? c.votes_first : c.votes_second),
                         static_cast<double>(first_wins ? c.votes_second : c.votes_first)});
  }
  return out;
}

std::vector<PreferencePair> agreement_ensemble_pairs(const Query& query, const ResponseList& responses,
                                                     const std::vector<std::vector<double>>& all_scores, RngStream& rng,
                                                     std::size_t candidates, std::size_t keep) {
  return agreement_ensemble_select(query, responses, all_scores, rng, candidates, keep).pairs;
}

OnlineEnsembleState make_online_ensemble(std::size_t scorer_count, double eta) {
  if (scorer_count == 0) throw ConfigError("online ensemble needs at least one scorer");
  return {Vector(scorer_count, 1.0 / static_cast<double>(scorer_count)), eta};
}

OnlineEnsembleState online_ensemble_step(const OnlineEnsembleState& state, const Vector& fitness) {
  if (fitness.dim() != state.weights.dim()) throw ContractViolation("online_ensemble_step: one fitness per scorer");
  if (!fitness.all_finite()) throw ContractViolation("online_ensemble_step: non-finite fitness");
  // Log-domain update.
  Vector log_w(state.weights.dim());
  for (std::size_t k = 0; k < log_w.dim(); ++k) {
    log_w[k] = (state.weights[k] > 0.0 ? std::log(state.weights[k]) : -745.0) + state.eta * fitness[k];
  }
  return {softmax(log_w), state.eta};
}

Vector online_ensemble_fitness(const std::vector<std::vector<std::pair<double, double>>>& pair_scores,
                               std::size_t scorer_count) {
  Vector fitness(scorer_count);
  if (pair_scores.empty()) return fitness;
  for (const auto& row : pair_scores) {
    require(row.size() == scorer_count, "online_ensemble_fitness: one score pair per scorer");
    for (std::size_t k = 0; k < scorer_count; ++k) {
      fitness[k] += log_sigmoid(row[k].first - row[k].second);
    }
  }
  fitness *= 1.0 / static_cast<double>(pair_scores.size());
  return fitness;
}

std::size_t default_fixed_arm(const ScorerPool& pool) {
  std::size_t best = 0;
  double best_mean = -1e300;
  for (std::size_t k = 0; k < pool.size(); ++k) {
    const auto& a = pool[k].affinity;
    const double mean = std::accumulate(a.begin(), a.end(), 0.0) / static_cast<double>(a.size());
    if (mean > best_mean) {
      best_mean = mean;
      best = k;
    }
  }
  return best;
}

TrainResult train(const TrainConfig& config, const Environment& env, const ScorerPool& pool, StrategyTag strategy,
                  std::uint64_t seed, std::optional<BanditState> initial_bandit) {
  validate(config, env, pool);
  if (strategy == StrategyTag::kAvgSingle) {
    throw ConfigError("avg_single is aggregated by the harness; run best_fixed per scorer instead");
  }
  const std::size_t k_arms = pool.size();
  const std::size_t categories = env.config.categories;

  RngStream root(seed, "train");
  RngStream batch_rng = root.fork("batches");
  RngStream sample_rng = root.fork("samples");
  RngStream pair_rng = root.fork("pairs");
  RngStream strategy_rng = root.fork("strategy");
  const RngStream noise_root(seed, "scorer-noise");

  TrainResult result;
  result.policy = aligned_policy(env.quality_direction, config.policy_init_alignment);
  result.trace.arm_count = k_arms;
  result.trace.category_count = categories;
  result.trace.records.reserve(config.iterations * config.steps_per_iteration);

  if (is_bandit_strategy(strategy)) {
    if (initial_bandit) {
      check_bandit_compat(*initial_bandit, pool, env);
      const BanditAlgorithm want =
          strategy == StrategyTag::kLaserLinUcb ? BanditAlgorithm::kLinUcb : BanditAlgorithm::kExp3;
      if (initial_bandit->config.algorithm != want) {
        throw ConfigError("bandit state algorithm does not match strategy " + std::string(to_string(strategy)));
      }
      result.bandit = std::move(initial_bandit);
    } else {
      BanditConfig bc = config.bandit;
      bc.algorithm = strategy == StrategyTag::kLaserLinUcb ? BanditAlgorithm::kLinUcb : BanditAlgorithm::kExp3;
      RngStream init_rng = root.fork("bandit-init");
      result.bandit = make_bandit_state(bc, k_arms, env.config.dim, init_rng);
    }
  }
  if (strategy == StrategyTag::kOnlineEnsemble) result.online = make_online_ensemble(k_arms, config.ensemble_eta);

  ScorerClassifier classifier;
  std::vector<std::size_t> class_to_arm;
  if (strategy == StrategyTag::kClassifier) {
    std::vector<LabeledContext> examples = classifier_training_set(env.train, pool, noise_root);
    if (examples.empty()) throw ConfigError("classifier baseline: no labelled training contexts");
    // Relabel to consecutive classes, dropping scorers that never win.
    std::vector<bool> present(k_arms, false);
    for (const LabeledContext& e : examples) present.at(e.label) = true;
    std::vector<std::size_t> arm_to_class(k_arms, 0);
    for (std::size_t k = 0; k < k_arms; ++k) {
      if (!present[k]) continue;
      arm_to_class[k] = class_to_arm.size();
      class_to_arm.push_back(k);
    }
    for (LabeledContext& e : examples) e.label = arm_to_class[e.label];
    classifier = train_classifier(examples);
  }
  const std::size_t fixed_arm = config.fixed_arm.value_or(default_fixed_arm(pool));

  RewardNormalizer side_normalizer;  // normalised reward column for non-bandit strategies
  const BatchSampler sampler(env.train, categories, config.batch_sampling);
  std::size_t global_step = 0;

  for (std::size_t m = 1; m <= config.iterations; ++m) {
    const ReferenceSnapshot ref = ReferenceSnapshot::of(result.policy);
    for (std::size_t t = 1; t <= config.steps_per_iteration; ++t, ++global_step) {
      const std::vector<const Query*> batch = sampler.next(config.batch_size, batch_rng);
      TraceRecord rec;
      rec.iteration = m;
      rec.step = t;
      rec.context = batch_context(batch);
      rec.category_histogram = category_histogram(batch, categories);

      std::optional<BanditChoice> choice;
      std::optional<std::size_t> arm;
      switch (strategy) {
        case StrategyTag::kLaserLinUcb:
        case StrategyTag::kLaserExp3:
          choice = bandit_select(*result.bandit, rec.context, strategy_rng);
          arm = choice->arm;
          rec.diagnostics = choice->diagnostics;
          break;
        case StrategyTag::kBestFixed: arm = fixed_arm; break;
        case StrategyTag::kRandom: arm = strategy_rng.uniform_index(k_arms); break;
        case StrategyTag::kSequential: arm = global_step % k_arms; break;
        case StrategyTag::kClassifier: arm = class_to_arm.at(classifier_select(classifier, rec.context)); break;
        default: break;
      }
      if (arm) {
        rec.arm_weights = one_hot(k_arms, *arm);
        rec.chosen = std::to_string(*arm);
      } else {
        rec.arm_weights = strategy == StrategyTag::kOnlineEnsemble
                              ? result.online->weights.raw()
                              : std::vector<double>(k_arms, 1.0 / static_cast<double>(k_arms));
        rec.chosen = "ensemble";
      }
      if (rec.diagnostics.empty()) rec.diagnostics = rec.arm_weights;

      std::vector<PreferencePair> pairs;
      std::vector<std::vector<std::pair<double, double>>> online_pair_scores;
      for (const Query* q : batch) {
        const ResponseList responses =
            sample_responses(result.policy, *q, config.samples_per_query, config.temperature, sample_rng);
        if (arm) {
          const std::vector<double> scores = score_all(pool[*arm], *q, responses, noise_root);
          rec.scorer_calls += responses.size();
          auto built = build_preference_pairs(*q, responses, scores, config.pairs_per_query, pair_rng, pool[*arm].id);
          pairs.insert(pairs.end(), built.begin(), built.end());
          continue;
        }
        std::vector<std::vector<double>> all_scores;
        all_scores.reserve(k_arms);
        for (std::size_t k = 0; k < k_arms; ++k) all_scores.push_back(score_all(pool[k], *q, responses, noise_root));
        rec.scorer_calls += k_arms * responses.size();
        std::vector<PreferencePair> built;
        if (strategy == StrategyTag::kScoreEnsemble) {
          built = score_ensemble_pairs(*q, responses, all_scores, config.pairs_per_query, pair_rng,
                                       config.z_normalize_scores);
        } else if (strategy == StrategyTag::kAgreementEnsemble) {
          built = agreement_ensemble_pairs(*q, responses, all_scores, pair_rng, config.agreement_candidates,
                                           config.pairs_per_query);
        } else {
          const std::vector<double> mixed = weighted_mean_scores(all_scores, result.online->weights);
          for (const auto& [w, l] : sample_ordered_pairs(mixed, config.pairs_per_query, pair_rng)) {
            built.push_back(make_pair(*q, responses, mixed, w, l, "online_ensemble"));
            std::vector<std::pair<double, double>> row;
            row.reserve(k_arms);
            for (std::size_t k = 0; k < k_arms; ++k) row.emplace_back(all_scores[k][w], all_scores[k][l]);
            online_pair_scores.push_back(std::move(row));
          }
        }
        pairs.insert(pairs.end(), built.begin(), built.end());
      }
      rec.pairs = pairs.size();

      if (pairs.empty()) {
        rec.raw_loss = 0.0;
        rec.normalized_reward = kWarmupReward;
        if (choice) bandit_apply(*result.bandit, *choice, rec.context, kWarmupReward);
      } else {
        try {
          const Vector grad = loss_gradient(result.policy, ref, pairs, config.beta, config.loss_mode);
          result.policy = sgd_step(result.policy, grad, config.learning_rate);
        } catch (const Error& e) {
          throw NumericalError("iteration " + std::to_string(m) + " step " + std::to_string(t) + ": " + e.what());
        }
        // The MAB reward is observed after the policy has trained on the batch.
        rec.raw_loss = combined_loss(result.policy, ref, pairs, config.beta, config.loss_mode);
        const double raw_reward = -rec.raw_loss;
        if (choice) {
          rec.normalized_reward = bandit_feedback(*result.bandit, *choice, rec.context, raw_reward);
        } else {
          NormalizedReward nr = normalize_reward(std::move(side_normalizer), raw_reward);
          side_normalizer = std::move(nr.normalizer);
          rec.normalized_reward = nr.value;
        }
        if (strategy == StrategyTag::kOnlineEnsemble) {
          result.online = online_ensemble_step(*result.online, online_ensemble_fitness(online_pair_scores, k_arms));
        }
      }
      result.trace.records.push_back(std::move(rec));
    }
  }
  return result;
}

std::size_t best_of_n_pick(const std::vector<double>& scores) {
  if (scores.empty()) throw ContractViolation("best_of_n_pick: no scores");
  return static_cast<std::size_t>(std::max_element(scores.begin(), scores.end()) - scores.begin());
}

BestOfNResult best_of_n_run(const TrainConfig& config, const Environment& env, const ScorerPool& pool,
                            const PolicyParams& policy, std::uint64_t seed, std::optional<BanditState> initial_bandit) {
  validate(config, env, pool);
  if (policy.feature_dim() != env.config.dim) throw ContractViolation("best_of_n_run: policy dimension mismatch");
  RngStream root(seed, "best-of-n");
  RngStream batch_rng = root.fork("batches");
  RngStream sample_rng = root.fork("samples");
  RngStream strategy_rng = root.fork("strategy");
  const RngStream noise_root(seed, "scorer-noise");

  BestOfNResult result;
  if (initial_bandit) {
    check_bandit_compat(*initial_bandit, pool, env);
    result.bandit = std::move(*initial_bandit);
  } else {
    RngStream init_rng = root.fork("bandit-init");
    result.bandit = make_bandit_state(config.bandit, pool.size(), env.config.dim, init_rng);
  }
  result.trace.arm_count = pool.size();
  result.trace.category_count = env.config.categories;

  const BatchSampler sampler(env.train, env.config.categories, config.batch_sampling);
  for (std::size_t m = 1; m <= config.iterations; ++m) {
    for (std::size_t t = 1; t <= config.steps_per_iteration; ++t) {
      const std::vector<const Query*> batch = sampler.next(config.batch_size, batch_rng);
      TraceRecord rec;
      rec.iteration = m;
      rec.step = t;
      rec.context = batch_context(batch);
      rec.category_histogram = category_histogram(batch, env.config.categories);
      const BanditChoice choice = bandit_select(result.bandit, rec.context, strategy_rng);
      rec.diagnostics = choice.diagnostics;
      rec.arm_weights = one_hot(pool.size(), choice.arm);
      rec.chosen = std::to_string(choice.arm);

      double nll = 0.0;
      for (const Query* q : batch) {
        const ResponseList responses =
            sample_responses(policy, *q, config.samples_per_query, config.temperature, sample_rng);
        const std::vector<double> scores = score_all(pool[choice.arm], *q, responses, noise_root);
        rec.scorer_calls += responses.size();
        const std::size_t pick = responses[best_of_n_pick(scores)];
        nll += -logprob(policy, *q, pick) / static_cast<double>(q->universe[pick].length);
      }
      rec.raw_loss = nll / static_cast<double>(batch.size());
      rec.normalized_reward = bandit_feedback(result.bandit, choice, rec.context, -rec.raw_loss);
      result.trace.records.push_back(std::move(rec));
    }
  }

  RngStream infer_rng = root.fork("inference");
  double gold = 0.0;
  for (const Query& q : env.test) {
    const BanditChoice choice = bandit_select(result.bandit, q.features, infer_rng);
    const ResponseList responses =
        sample_responses(policy, q, config.samples_per_query, config.temperature, infer_rng);
    const std::vector<double> scores = score_all(pool[choice.arm], q, responses, noise_root);
    gold += q.universe[responses[best_of_n_pick(scores)]].gold_quality;
    result.inference_arms.push_back(choice.arm);
  }
  if (!env.test.empty()) result.mean_gold_quality = gold / static_cast<double>(env.test.size());
  return result;
}

}  // namespace rmb
