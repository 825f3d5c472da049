#include "rmb/bandit.h"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "rmb/errors.h"

namespace rmb {

using nlohmann::json;

std::vector<LinUcbArm> make_linucb_arms(std::size_t arm_count, std::size_t dim,
                                        double b_init_sigma, RngStream& rng) {
  if (arm_count == 0) throw ConfigError("LinUCB needs at least one arm");
  if (dim == 0) throw ConfigError("LinUCB context dimension must be positive");
  std::vector<LinUcbArm> arms;
  arms.reserve(arm_count);
  for (std::size_t k = 0; k < arm_count; ++k) {
    LinUcbArm arm{SpdMatrix::identity(dim), Vector(dim), 0};
    for (double& x : arm.b.values()) x = rng.normal(0.0, b_init_sigma);
    arms.push_back(std::move(arm));
  }
  return arms;
}

std::vector<double> linucb_scores(std::span<const LinUcbArm> arms, const Vector& context,
                                  double alpha) {
  if (arms.empty()) throw ConfigError("linucb_select: empty arm list");
  if (!(alpha >= 0.0)) throw ContractViolation("linucb_select: alpha must be non-negative");
  std::vector<double> scores;
  scores.reserve(arms.size());
  for (const LinUcbArm& arm : arms) {
    if (arm.a_inv.dim() != context.dim() || arm.b.dim() != context.dim()) {
      throw ContractViolation("linucb_select: arm dimension " + std::to_string(arm.b.dim()) +
                              " does not match context dimension " +
                              std::to_string(context.dim()));
    }
    const Vector a_inv_c = arm.a_inv.multiply(context);
    const double mean = dot(a_inv_c, arm.b);  // c^T A^{-1} b, A^{-1} symmetric
    const double width = std::sqrt(std::max(0.0, dot(context, a_inv_c)));
    scores.push_back(mean + alpha * width);
  }
  return scores;
}

std::size_t linucb_select(std::span<const LinUcbArm> arms, const Vector& context, double alpha) {
  const std::vector<double> scores = linucb_scores(arms, context, alpha);
  return static_cast<std::size_t>(std::max_element(scores.begin(), scores.end()) - scores.begin());
}

LinUcbArm linucb_update(LinUcbArm arm, const Vector& context, double normalized_reward) {
  if (!(normalized_reward >= 0.0 && normalized_reward <= 1.0)) {
    throw ContractViolation("linucb_update: reward " + std::to_string(normalized_reward) +
                            " outside [0, 1]");
  }
  arm.a_inv = sherman_morrison_update(arm.a_inv, context);
  arm.b.add_scaled(context, normalized_reward);
  ++arm.pulls;
  return arm;
}

Exp3State make_exp3_state(std::size_t arm_count, double gamma) {
  if (arm_count == 0) throw ConfigError("Exp3 needs at least one arm");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("Exp3 gamma must lie in (0, 1]");
  return Exp3State{Vector(arm_count), gamma};
}

Vector exp3_probabilities(const Exp3State& state) {
  const std::size_t k = state.scores.dim();
  if (k == 0) throw ConfigError("exp3_probabilities: no arms");
  const Vector weights = softmax(state.scores);
  Vector p(k);
  const double floor = state.gamma / static_cast<double>(k);
  for (std::size_t i = 0; i < k; ++i) p[i] = (1.0 - state.gamma) * weights[i] + floor;
  return p;
}

Exp3Draw exp3_select(const Exp3State& state, RngStream& rng) {
  const Vector p = exp3_probabilities(state);
  const std::size_t arm = rng.categorical(p.values());
  return {arm, p[arm]};
}

Exp3State exp3_update(Exp3State state, std::size_t arm, double normalized_reward,
                      double probability) {
  if (!(probability > 0.0)) throw ContractViolation("exp3_update: probability must be positive");
  if (!(normalized_reward >= 0.0 && normalized_reward <= 1.0)) {
    throw ContractViolation("exp3_update: reward outside [0, 1]");
  }
  if (arm >= state.scores.dim()) throw ContractViolation("exp3_update: arm out of range");
  state.scores[arm] += normalized_reward / probability;

  const auto [lo, hi] = std::minmax_element(state.scores.begin(), state.scores.end());
  if (*hi - *lo > state.overflow_bound || *hi > state.overflow_bound) {
    // Shifting by the max leaves the distribution unchanged; the clamp only
    // touches arms whose weight is already below exp(-bound).
    const double shift = *hi;
    for (double& s : state.scores.values()) s = std::max(s - shift, -state.overflow_bound);
  }
  return state;
}

NormalizedReward normalize_reward(RewardNormalizer normalizer, double raw) {
  if (!std::isfinite(raw)) throw ContractViolation("normalize_reward: non-finite raw reward");
  double value = kWarmupReward;
  if (normalizer.history.size() >= 2) {
    const double q_lo = quantile(normalizer.history, normalizer.q_lo_level);
    const double q_hi = quantile(normalizer.history, normalizer.q_hi_level);
    if (q_hi > q_lo) {
      if (raw < q_lo) {
        value = 0.0;
      } else if (raw > q_hi) {
        value = 1.0;
      } else {
        value = std::clamp((raw - q_lo) / (q_hi - q_lo), 0.0, 1.0);
      }
    }
  }
  normalizer.history.push_back(raw);
  return {value, std::move(normalizer)};
}

std::string_view to_string(BanditAlgorithm algorithm) {
  return algorithm == BanditAlgorithm::kLinUcb ? "linucb" : "exp3";
}

BanditAlgorithm bandit_algorithm_from_string(std::string_view text) {
  if (text == "linucb") return BanditAlgorithm::kLinUcb;
  if (text == "exp3") return BanditAlgorithm::kExp3;
  throw ConfigError("unknown bandit algorithm '" + std::string(text) + "'");
}

BanditState make_bandit_state(const BanditConfig& config, std::size_t arm_count,
                              std::size_t context_dim, RngStream& rng) {
  BanditState state;
  state.config = config;
  state.context_dim = context_dim;
  if (config.algorithm == BanditAlgorithm::kLinUcb) {
    state.arms = make_linucb_arms(arm_count, context_dim, config.b_init_sigma, rng);
  } else {
    state.exp3 = make_exp3_state(arm_count, config.gamma);
  }
  if (config.per_arm_history) state.arm_normalizers.resize(arm_count);
  state.usage.assign(arm_count, 0);
  return state;
}

BanditChoice bandit_select(const BanditState& state, const Vector& context, RngStream& rng) {
  BanditChoice choice;
  if (state.config.algorithm == BanditAlgorithm::kLinUcb) {
    choice.diagnostics = linucb_scores(state.arms, context, state.config.alpha);
    choice.arm = static_cast<std::size_t>(
        std::max_element(choice.diagnostics.begin(), choice.diagnostics.end()) -
        choice.diagnostics.begin());
    choice.probability = 1.0;
  } else {
    const Vector p = exp3_probabilities(state.exp3);
    choice.diagnostics = p.raw();
    choice.arm = rng.categorical(p.values());
    choice.probability = p[choice.arm];
  }
  return choice;
}

void bandit_apply(BanditState& state, const BanditChoice& choice, const Vector& context,
                  double normalized_reward) {
  if (state.config.algorithm == BanditAlgorithm::kLinUcb) {
    state.arms.at(choice.arm) =
        linucb_update(std::move(state.arms.at(choice.arm)), context, normalized_reward);
  } else {
    state.exp3 =
        exp3_update(std::move(state.exp3), choice.arm, normalized_reward, choice.probability);
  }
  ++state.usage.at(choice.arm);
  ++state.steps;
}

double bandit_feedback(BanditState& state, const BanditChoice& choice, const Vector& context,
                       double raw_reward) {
  RewardNormalizer& history = state.config.per_arm_history
                                  ? state.arm_normalizers.at(choice.arm)
                                  : state.normalizer;
  NormalizedReward result = normalize_reward(std::move(history), raw_reward);
  history = std::move(result.normalizer);
  bandit_apply(state, choice, context, result.value);
  return result.value;
}

namespace {

json normalizer_to_json(const RewardNormalizer& n) {
  return json{{"q_lo_level", n.q_lo_level}, {"q_hi_level", n.q_hi_level}, {"history", n.history}};
}

RewardNormalizer normalizer_from_json(const json& j) {
  RewardNormalizer n;
  n.q_lo_level = j.at("q_lo_level").get<double>();
  n.q_hi_level = j.at("q_hi_level").get<double>();
  n.history = j.at("history").get<std::vector<double>>();
  return n;
}

}  // namespace

std::string serialize_bandit(const BanditState& state) {
  json doc;
  doc["schema"] = "rmb-bandit-state";
  doc["version"] = kBanditSchemaVersion;
  doc["algorithm"] = std::string(to_string(state.config.algorithm));
  doc["config"] = {{"alpha", state.config.alpha},
                   {"gamma", state.config.gamma},
                   {"b_init_sigma", state.config.b_init_sigma},
                   {"per_arm_history", state.config.per_arm_history}};
  doc["context_dim"] = state.context_dim;
  doc["arm_count"] = state.arm_count();
  json arms = json::array();
  for (const LinUcbArm& arm : state.arms) {
    arms.push_back({{"a_inv", arm.a_inv.row_major()}, {"b", arm.b.raw()}, {"pulls", arm.pulls}});
  }
  doc["arms"] = std::move(arms);
  doc["exp3"] = {{"scores", state.exp3.scores.raw()},
                 {"gamma", state.exp3.gamma},
                 {"overflow_bound", state.exp3.overflow_bound}};
  doc["normalizer"] = normalizer_to_json(state.normalizer);
  json per_arm = json::array();
  for (const RewardNormalizer& n : state.arm_normalizers) per_arm.push_back(normalizer_to_json(n));
  doc["arm_normalizers"] = std::move(per_arm);
  doc["usage"] = state.usage;
  doc["steps"] = state.steps;
  return doc.dump(2) + "\n";
}

BanditState deserialize_bandit(std::string_view document) {
  try {
    const json doc = json::parse(document);
    if (doc.at("schema").get<std::string>() != "rmb-bandit-state") {
      throw LoadError("not a bandit state document");
    }
    const int version = doc.at("version").get<int>();
    if (version != kBanditSchemaVersion) {
      throw LoadError("bandit state version " + std::to_string(version) + " unsupported (expected " +
                      std::to_string(kBanditSchemaVersion) + ")");
    }
    BanditState state;
    state.config.algorithm = bandit_algorithm_from_string(doc.at("algorithm").get<std::string>());
    const json& cfg = doc.at("config");
    state.config.alpha = cfg.at("alpha").get<double>();
    state.config.gamma = cfg.at("gamma").get<double>();
    state.config.b_init_sigma = cfg.at("b_init_sigma").get<double>();
    state.config.per_arm_history = cfg.at("per_arm_history").get<bool>();
    state.context_dim = doc.at("context_dim").get<std::size_t>();
    const auto arm_count = doc.at("arm_count").get<std::size_t>();
    for (const json& a : doc.at("arms")) {
      LinUcbArm arm{SpdMatrix(state.context_dim, a.at("a_inv").get<std::vector<double>>()),
                    Vector(a.at("b").get<std::vector<double>>()), a.at("pulls").get<std::uint64_t>()};
      if (arm.b.dim() != state.context_dim) throw LoadError("arm vector dimension mismatch");
      state.arms.push_back(std::move(arm));
    }
    const json& e = doc.at("exp3");
    state.exp3.scores = Vector(e.at("scores").get<std::vector<double>>());
    state.exp3.gamma = e.at("gamma").get<double>();
    state.exp3.overflow_bound = e.at("overflow_bound").get<double>();
    state.normalizer = normalizer_from_json(doc.at("normalizer"));
    for (const json& n : doc.at("arm_normalizers")) {
      state.arm_normalizers.push_back(normalizer_from_json(n));
    }
    state.usage = doc.at("usage").get<std::vector<std::uint64_t>>();
    state.steps = doc.at("steps").get<std::uint64_t>();

    if (state.usage.size() != arm_count) throw LoadError("usage length does not match arm_count");
    if (state.config.algorithm == BanditAlgorithm::kLinUcb && state.arms.size() != arm_count) {
      throw LoadError("LinUCB state has " + std::to_string(state.arms.size()) + " arms, expected " +
                      std::to_string(arm_count));
    }
    if (state.config.algorithm == BanditAlgorithm::kExp3 && state.exp3.scores.dim() != arm_count) {
      throw LoadError("Exp3 score vector length does not match arm_count");
    }
    if (state.config.per_arm_history && state.arm_normalizers.size() != arm_count) {
      throw LoadError("per-arm history count does not match arm_count");
    }
    return state;
  } catch (const LoadError&) {
    throw;
  } catch (const Error& e) {
    throw LoadError(e.what());
  } catch (const json::exception& e) {
    throw LoadError(std::string("malformed bandit state: ") + e.what());
  }
}

}  // namespace rmb
