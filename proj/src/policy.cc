#include "rmb/policy.h"

#include <cmath>

#include "rmb/errors.h"

namespace rmb {

namespace {

void check_pairs(std::span<const PreferencePair> pairs) {
  if (pairs.empty()) throw EmptyBatchError("loss over an empty set of preference pairs");
  for (const PreferencePair& p : pairs) {
    require(p.query != nullptr, "preference pair without a query");
    require(p.winner < p.query->universe.size() && p.loser < p.query->universe.size(),
            "preference pair references a response outside the universe");
  }
}

// log-sum-exp of the query's logits plus the softmax-weighted mean feature,
// cached across consecutive pairs of the same query.
struct QueryStats {
  const Query* query = nullptr;
  double lse = 0.0;
  Vector mean_features;
};

void refresh(QueryStats& stats, const PolicyParams& params, const Query& query, bool need_mean) {
  if (stats.query == &query && (!need_mean || stats.mean_features.dim() > 0)) return;
  stats.query = &query;
  const Vector logits = policy_logits(params, query);
  stats.lse = log_sum_exp(logits.values());
  stats.mean_features = Vector();
  if (need_mean) {
    stats.mean_features = Vector(params.feature_dim());
    for (std::size_t y = 0; y < query.universe.size(); ++y) {
      stats.mean_features.add_scaled(query.universe[y].features, std::exp(logits[y] - stats.lse));
    }
  }
}

double dpo_margin(const PolicyParams& params, const ReferenceSnapshot& ref, const PreferencePair& p) {
  const Vector& fw = p.query->universe[p.winner].features;
  const Vector& fl = p.query->universe[p.loser].features;
  // log pi(w) - log pi(l) = theta . (phi_w - phi_l); the normaliser cancels.
  return (dot(params.theta, fw) - dot(params.theta, fl)) - (dot(ref.theta_ref, fw) - dot(ref.theta_ref, fl));
}

int winner_length(const PreferencePair& p) {
  const int length = p.query->universe[p.winner].length;
  if (length <= 0) throw ContractViolation("nll_loss: response length must be positive");
  return length;
}

}  // namespace

std::string_view to_string(LossMode mode) {
  switch (mode) {
    case LossMode::kDpo: return "dpo";
    case LossMode::kDpoPlusNll: return "dpo_plus_nll";
    case LossMode::kNll: return "nll";
  }
  return "?";
}

LossMode loss_mode_from_string(std::string_view text) {
  if (text == "dpo") return LossMode::kDpo;
  if (text == "dpo_plus_nll") return LossMode::kDpoPlusNll;
  if (text == "nll") return LossMode::kNll;
  throw ConfigError("unknown loss mode '" + std::string(text) + "'");
}

PolicyParams aligned_policy(const Vector& direction, double alignment) {
  return {alignment * normalized(direction)};
}

Vector policy_logits(const PolicyParams& params, const Query& query) {
  Vector logits(query.universe.size());
  for (std::size_t y = 0; y < query.universe.size(); ++y) {
    logits[y] = dot(params.theta, query.universe[y].features);
  }
  return logits;
}

Vector policy_log_probs(const PolicyParams& params, const Query& query) {
  return log_softmax(policy_logits(params, query));
}

double logprob(const PolicyParams& params, const Query& query, std::size_t response) {
  if (response >= query.universe.size()) {
    throw ContractViolation("logprob: response " + std::to_string(response) +
                            " is not in the query's universe");
  }
  return policy_log_probs(params, query)[response];
}

ResponseList sample_responses(const PolicyParams& params, const Query& query, std::size_t n,
                              double temperature, RngStream& rng) {
  if (!(temperature > 0.0)) throw DomainError("sample_responses: temperature must be positive");
  if (query.universe.empty()) throw ContractViolation("sample_responses: empty universe");
  const Vector p = softmax(policy_logits(params, query), temperature);
  ResponseList out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(rng.categorical(p.values()));
  return out;
}

double dpo_loss(const PolicyParams& params, const ReferenceSnapshot& ref,
                std::span<const PreferencePair> pairs, double beta) {
  check_pairs(pairs);
  double total = 0.0;
  for (const PreferencePair& p : pairs) total += -log_sigmoid(beta * dpo_margin(params, ref, p));
  return total / static_cast<double>(pairs.size());
}

double nll_loss(const PolicyParams& params, std::span<const PreferencePair> pairs) {
  check_pairs(pairs);
  QueryStats stats;
  double total = 0.0;
  for (const PreferencePair& p : pairs) {
    const int length = winner_length(p);
    refresh(stats, params, *p.query, false);
    const double lp = dot(params.theta, p.query->universe[p.winner].features) - stats.lse;
    total += -lp / static_cast<double>(length);
  }
  return total / static_cast<double>(pairs.size());
}

double combined_loss(const PolicyParams& params, const ReferenceSnapshot& ref,
                     std::span<const PreferencePair> pairs, double beta, LossMode mode) {
  switch (mode) {
    case LossMode::kDpo: return dpo_loss(params, ref, pairs, beta);
    case LossMode::kNll: return nll_loss(params, pairs);
    case LossMode::kDpoPlusNll: return dpo_loss(params, ref, pairs, beta) + nll_loss(params, pairs);
  }
  throw ContractViolation("combined_loss: unknown mode");
}

Vector loss_gradient(const PolicyParams& params, const ReferenceSnapshot& ref,
                     std::span<const PreferencePair> pairs, double beta, LossMode mode) {
  check_pairs(pairs);
  const bool with_dpo = mode != LossMode::kNll;
  const bool with_nll = mode != LossMode::kDpo;
  Vector grad(params.feature_dim());
  QueryStats stats;
  for (const PreferencePair& p : pairs) {
    const Vector& fw = p.query->universe[p.winner].features;
    if (with_dpo) {
      const Vector& fl = p.query->universe[p.loser].features;
      // d/dtheta [-log sigmoid(beta m)] = -beta sigmoid(-beta m) (phi_w - phi_l)
      const double coeff = -beta * sigmoid(-beta * dpo_margin(params, ref, p));
      grad.add_scaled(fw, coeff);
      grad.add_scaled(fl, -coeff);
    }
    if (with_nll) {
      const double inv_len = 1.0 / static_cast<double>(winner_length(p));
      refresh(stats, params, *p.query, true);
      // d/dtheta [-(theta.phi_w - lse)] = -(phi_w - E_pi[phi])
      grad.add_scaled(fw, -inv_len);
      grad.add_scaled(stats.mean_features, inv_len);
    }
  }
  grad *= 1.0 / static_cast<double>(pairs.size());
  return grad;
}

PolicyParams sgd_step(const PolicyParams& params, const Vector& gradient, double learning_rate) {
  if (!(learning_rate > 0.0)) throw DomainError("sgd_step: learning rate must be positive");
  if (gradient.dim() != params.feature_dim()) throw ContractViolation("sgd_step: gradient dimension mismatch");
  if (!gradient.all_finite()) {
    std::string detail;
    for (std::size_t i = 0; i < gradient.dim(); ++i) {
      if (!std::isfinite(gradient[i])) {
        detail = "component " + std::to_string(i) + " = " + std::to_string(gradient[i]);
        break;
      }
    }
    throw NumericalError("sgd_step: non-finite gradient (" + detail + ")");
  }
  PolicyParams next = params;
  next.theta.add_scaled(gradient, -learning_rate);
  return next;
}

double expected_gold_quality(const PolicyParams& params, std::span<const Query> queries,
                             double temperature) {
  if (queries.empty()) throw EmptyBatchError("expected_gold_quality: no queries");
  double total = 0.0;
  for (const Query& q : queries) {
    const Vector p = softmax(policy_logits(params, q), temperature);
    for (std::size_t y = 0; y < q.universe.size(); ++y) total += p[y] * q.universe[y].gold_quality;
  }
  return total / static_cast<double>(queries.size());
}

double held_out_margin(const PolicyParams& params, std::span<const Query> queries,
                       std::size_t pairs_per_query, RngStream& rng) {
  double total = 0.0;
  std::size_t count = 0;
  for (const Query& q : queries) {
    const std::size_t u = q.universe.size();
    if (u < 2) continue;
    const Vector lp = policy_log_probs(params, q);
    for (std::size_t k = 0; k < pairs_per_query; ++k) {
      const std::size_t i = rng.uniform_index(u);
      std::size_t j = rng.uniform_index(u - 1);
      if (j >= i) ++j;
      const double gi = q.universe[i].gold_quality;
      const double gj = q.universe[j].gold_quality;
      if (gi == gj) continue;
      total += gi > gj ? lp[i] - lp[j] : lp[j] - lp[i];
      ++count;
    }
  }
  if (count == 0) throw EmptyBatchError("held_out_margin: no gold-ordered pairs");
  return total / static_cast<double>(count);
}

}  // namespace rmb
