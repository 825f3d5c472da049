// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "oracles.h"
#include "rmb/bandit.h"
#include "rmb/config.h"
#include "rmb/harness.h"
#include "rmb/pipeline.h"

using namespace rmb;

namespace {

int failures = 0;

void verdict(int id, bool ok, const std::string& detail) {
  std::printf("criterion %2d: %s  %s\n", id, ok ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

void info(const std::string& line) {
  std::printf("    %s\n", line.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

ExperimentConfig default_config() { return parse_config(RMB_SOURCE_DIR "/configs/default.toml"); }

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

struct Run {
  PolicyParams policy;
  std::optional<BanditState> bandit;
  TrainTrace trace;
  double gold = 0.0;
};

Run train_run(const ExperimentConfig& c, StrategyTag strategy, std::uint64_t seed, const ScorerPool& pool,
              std::optional<BanditState> initial = std::nullopt) {
  const Environment env = generate_environment(c.environment, seed);
  TrainResult r = train(c.training, env, pool, strategy, seed, std::move(initial));
  const double gold = expected_gold_quality(r.policy, env.test, c.training.temperature);
  return {std::move(r.policy), std::move(r.bandit), std::move(r.trace), gold};
}

// ---- 1, 2, 6: default LinUCB runs --------------------------------------------

void linucb_identification_regret_margin() {
  ExperimentConfig c = default_config();
  c.strategy = StrategyTag::kLaserLinUcb;
  c.training.bandit.alpha = 1.0;
  const ScorerPool pool = c.pool();
  int identified = 0, positive_margin = 0;
  double linucb_regret = 0.0, random_regret = 0.0, linucb_seconds = 0.0;
  std::size_t steps = 0;
  for (std::uint64_t seed : c.seeds) {
    TrainTrace trace;
    const auto start = std::chrono::steady_clock::now();
    const RunSummary s = run_single(c, seed, std::nullopt, &trace);
    linucb_seconds += seconds_since(start);
    steps = s.steps;
    bool all = true;
    std::string modes;
    for (std::size_t cat = 0; cat < s.utilization.size(); ++cat) {
      const auto& row = s.utilization[cat];
      const std::size_t mode = std::max_element(row.begin(), row.end()) - row.begin();
      all = all && mode == gold_best_arm(cat, pool);
      modes += " " + std::to_string(mode);
    }
    identified += all;
    positive_margin += s.held_out_margin > 0.0;
    linucb_regret += s.final_regret;

    ExperimentConfig rc = c;
    rc.strategy = StrategyTag::kRandom;
    const RunSummary r = run_single(rc, seed);
    random_regret += r.final_regret;
    info(fmt("seed %2llu: modal arms%s  regret %.1f (random %.1f)  margin %+.4f", (unsigned long long)seed,
             modes.c_str(), s.final_regret, r.final_regret, s.held_out_margin));
  }
  const double n = static_cast<double>(c.seeds.size());
  verdict(1, identified >= 8 && linucb_seconds < 30.0,
          fmt("LinUCB identifies gold_best_arm in all categories for %d/10 seeds (need >= 8); %.1f s total "
              "(need < 30 s)",
              identified, linucb_seconds));
  const double ratio = linucb_regret / random_regret;
  verdict(2, ratio <= 0.5,
          fmt("mean regret at step %zu: LinUCB %.2f, random %.2f, ratio %.3f (need <= 0.5)", steps,
              linucb_regret / n, random_regret / n, ratio));
  verdict(6, positive_margin == 10,
          fmt("held-out margin > 0 in %d/10 seeds (need 10/10)", positive_margin));
}

// ---- 3: noise robustness ------------------------------------------------------

void noise_robustness() {
  const ExperimentConfig c = default_config();
  const ScorerPool clean = c.pool();
  const StrategyTag tags[] = {StrategyTag::kLaserExp3, StrategyTag::kLaserLinUcb, StrategyTag::kSequential};
  const double sigmas[] = {0.1, 0.2, 0.3, 0.4};
  // base[s][t] = gold without injected noise
  std::vector<std::vector<double>> base(c.seeds.size(), std::vector<double>(3));
  for (std::size_t s = 0; s < c.seeds.size(); ++s) {
    for (int t = 0; t < 3; ++t) base[s][t] = train_run(c, tags[t], c.seeds[s], clean).gold;
  }
  int exp3_wins = 0, linucb_wins = 0;
  for (double sigma : sigmas) {
    const ScorerPool noisy = clean.with_injected_noise(sigma);
    double mean_drop[3] = {0, 0, 0};
    for (std::size_t s = 0; s < c.seeds.size(); ++s) {
      double drop[3];
      for (int t = 0; t < 3; ++t) {
        drop[t] = base[s][t] - train_run(c, tags[t], c.seeds[s], noisy).gold;
        mean_drop[t] += drop[t] / static_cast<double>(c.seeds.size());
      }
      if (sigma == 0.3) {
        exp3_wins += drop[0] < drop[2];
        linucb_wins += drop[1] < drop[2];
        info(fmt("sigma 0.3 seed %2llu: drop exp3 %+.4f linucb %+.4f sequential %+.4f",
                 (unsigned long long)c.seeds[s], drop[0], drop[1], drop[2]));
      }
    }
    info(fmt("sigma %.1f mean drop: exp3 %+.4f linucb %+.4f sequential %+.4f", sigma, mean_drop[0], mean_drop[1],
             mean_drop[2]));
  }
  verdict(3, exp3_wins >= 8 && linucb_wins >= 8,
          fmt("at sigma 0.3 the drop is below sequential for exp3 in %d/10 and linucb in %d/10 seeds (need >= 8 "
              "each)",
              exp3_wins, linucb_wins));
}

// ---- 4: normalisation contract --------------------------------------------------

void normalization_contract() {
  RngStream rng(2024, "acceptance-normalizer");
  long violations = 0;
  for (int call = 0; call < 10000; ++call) {
    RewardNormalizer n;
    const std::size_t len = rng.uniform_index(30);
    for (std::size_t i = 0; i < len; ++i) {
      n.history.push_back(rng.uniform() < 0.2 ? std::round(rng.normal(0.0, 2.0)) : rng.normal(0.0, 2.0));
    }
    const double raw = rng.normal(0.0, 3.0);
    const NormalizedReward out = normalize_reward(n, raw);
    if (!(out.value >= 0.0 && out.value <= 1.0)) ++violations;
    if (len >= 2) {
      const double lo = quantile(n.history, 0.2), hi = quantile(n.history, 0.8);
      if (lo < hi) {
        if (raw < lo && out.value != 0.0) ++violations;
        if (raw > hi && out.value != 1.0) ++violations;
      }
    }
    const double other = raw + std::abs(rng.normal(0.0, 1.0));
    if (normalize_reward(n, other).value < out.value) ++violations;
    if (out.normalizer.history.size() != len + 1 || out.normalizer.history.back() != raw) ++violations;
  }
  verdict(4, violations == 0, fmt("10000 randomized calls, %ld violations", violations));
}

// ---- 5: gradient correctness -----------------------------------------------------

void gradient_correctness() {
  RngStream rng(55, "acceptance-gradient");
  bool ok = true;
  std::string per_mode;
  for (LossMode mode : {LossMode::kDpo, LossMode::kDpoPlusNll, LossMode::kNll}) {
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      const std::size_t dim = 2 + rng.uniform_index(10);
      std::vector<Query> queries(1 + rng.uniform_index(4));
      for (std::size_t k = 0; k < queries.size(); ++k) {
        queries[k].id = k;
        queries[k].features = Vector(dim);
        const std::size_t universe = 2 + rng.uniform_index(15);
        for (std::size_t y = 0; y < universe; ++y) {
          Vector f(dim);
          for (double& x : f.values()) x = rng.normal();
          queries[k].universe.push_back({y, f, rng.uniform(), 1 + static_cast<int>(rng.uniform_index(4))});
        }
      }
      std::vector<PreferencePair> pairs(1 + rng.uniform_index(20));
      for (PreferencePair& p : pairs) {
        p.query = &queries[rng.uniform_index(queries.size())];
        const std::size_t u = p.query->universe.size();
        p.winner = rng.uniform_index(u);
        p.loser = rng.uniform_index(u - 1);
        if (p.loser >= p.winner) ++p.loser;
      }
      PolicyParams params{Vector(dim)};
      ReferenceSnapshot ref{Vector(dim)};
      for (double& x : params.theta.values()) x = rng.normal(0.0, 1.5);
      for (double& x : ref.theta_ref.values()) x = rng.normal(0.0, 1.5);
      const double beta = 0.01 + 2.0 * rng.uniform();
      const Vector g = loss_gradient(params, ref, pairs, beta, mode);
      const oracle::RealVector ref_real(ref.theta_ref.begin(), ref.theta_ref.end());
      const std::vector<double> fd = oracle::numeric_gradient(
          [&](const oracle::RealVector& th) { return oracle::preference_loss(th, ref_real, pairs, beta, mode); },
          params.theta.raw());
      double diff = 0.0, scale = 0.0;
      for (std::size_t i = 0; i < dim; ++i) {
        diff += (g[i] - fd[i]) * (g[i] - fd[i]);
        scale += fd[i] * fd[i];
      }
      const double rel = std::sqrt(diff) / std::max(std::sqrt(scale), 1e-8);
      worst = std::max(worst, rel);
      ok = ok && rel < 1e-4;
    }
    per_mode += fmt(" %s %.2e", std::string(to_string(mode)).c_str(), worst);
  }
  verdict(5, ok, "worst relative error per mode (100 instances each, need < 1e-4):" + per_mode);
}

// ---- 7: ensemble oracle equivalence -------------------------------------------------

void ensemble_oracles() {
  const std::size_t universe = 8, scorers = 3;
  std::vector<std::vector<double>> grid(scorers, std::vector<double>(universe));
  for (std::size_t k = 0; k < scorers; ++k) {
    for (std::size_t i = 0; i < universe; ++i) grid[k][i] = 0.25 * static_cast<double>((i * (k + 2) + k) % 5);
  }
  Query q;
  q.features = Vector{1.0};
  for (std::size_t i = 0; i < universe; ++i) q.universe.push_back({i, Vector{0.0}, 0.0, 1});
  RngStream rng(7, "acceptance-ensemble");
  std::size_t sets = 0, score_mismatch = 0, agreement_violations = 0;
  for (unsigned mask = 0; mask < (1u << universe); ++mask) {
    const int n = __builtin_popcount(mask);
    if (n < 2 || n > 6) continue;
    ++sets;
    ResponseList responses;
    for (std::size_t i = 0; i < universe; ++i) {
      if (mask & (1u << i)) responses.push_back(i);
    }
    std::vector<std::vector<double>> all(scorers);
    for (std::size_t k = 0; k < scorers; ++k) {
      for (std::size_t r : responses) all[k].push_back(grid[k][r]);
    }
    std::set<std::pair<std::size_t, std::size_t>> expected, got;
    for (std::size_t a : responses) {
      for (std::size_t b : responses) {
        double ma = 0.0, mb = 0.0;
        for (std::size_t k = 0; k < scorers; ++k) {
          ma += grid[k][a];
          mb += grid[k][b];
        }
        if (ma / scorers > mb / scorers) expected.emplace(a, b);
      }
    }
    for (const PreferencePair& p : score_ensemble_pairs(q, responses, all, universe * universe, rng)) {
      got.emplace(p.winner, p.loser);
    }
    score_mismatch += got != expected;

    for (std::size_t keep : {1u, 3u, 10u}) {
      const AgreementSelection sel = agreement_ensemble_select(q, responses, all, rng, 100, keep);
      std::set<std::size_t> chosen(sel.selected.begin(), sel.selected.end());
      for (std::size_t s : sel.selected) {
        for (std::size_t u = 0; u < sel.sampled.size(); ++u) {
          if (!chosen.count(u) && sel.sampled[u].agreement() > sel.sampled[s].agreement()) ++agreement_violations;
        }
      }
    }
  }
  verdict(7, score_mismatch == 0 && agreement_violations == 0,
          fmt("%zu response sets: %zu score-ensemble mismatches, %zu agreement-ordering violations", sets,
              score_mismatch, agreement_violations));
}

// ---- 8: Sherman-Morrison fidelity -------------------------------------------------------

void sherman_morrison_fidelity() {
  const std::size_t d = 16;
  RngStream rng(8, "acceptance-sm");
  SpdMatrix inv = SpdMatrix::identity(d);
  oracle::Matrix a(d, std::vector<double>(d, 0.0));
  for (std::size_t i = 0; i < d; ++i) a[i][i] = 1.0;
  for (int step = 0; step < 1000; ++step) {
    Vector c(d);
    for (double& x : c.values()) x = rng.normal();
    inv = sherman_morrison_update(inv, c);
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j < d; ++j) a[i][j] += c[i] * c[j];
    }
  }
  const oracle::Matrix expected = oracle::invert(a);
  double worst = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) worst = std::max(worst, std::abs(inv(i, j) - expected[i][j]));
  }
  verdict(8, worst < 1e-8, fmt("1000 updates at d=16, max abs error %.3e (need < 1e-8)", worst));
}

// ---- 9: multiplicative weights ----------------------------------------------------------

void multiplicative_weights() {
  ExperimentConfig c = default_config();
  c.scorers.push_back(ScorerSpec{"noise", std::vector<double>(c.environment.categories, 0.0), 0.1, 0.0});
  c.training.iterations = 1;
  c.training.steps_per_iteration = 500;
  const ScorerPool pool = c.pool();
  const double threshold = 1.0 / (2.0 * static_cast<double>(pool.size()));
  int below = 0;
  bool simplex = true;
  for (std::uint64_t seed : c.seeds) {
    const Run r = train_run(c, StrategyTag::kOnlineEnsemble, seed, pool);
    std::size_t first_below = 0;
    for (std::size_t t = 0; t < r.trace.records.size(); ++t) {
      const auto& w = r.trace.records[t].arm_weights;
      double total = 0.0;
      for (double x : w) {
        simplex = simplex && x >= 0.0;
        total += x;
      }
      simplex = simplex && std::abs(total - 1.0) < 1e-12;
      if (!first_below && w.back() < threshold) first_below = t + 1;
    }
    below += first_below > 0;
    info(fmt("seed %2llu: noise weight below %.2f after %zu batches (0 = never)", (unsigned long long)seed,
             threshold, first_below));
  }
  verdict(9, simplex && below == 10,
          fmt("weights on the simplex at every step: %s; pure-noise weight < 1/(2K) within 500 batches in %d/10 "
              "seeds",
              simplex ? "yes" : "no", below));
}

// ---- 10: determinism, persistence, cold start ---------------------------------------------

void determinism_and_cold_start() {
  const ExperimentConfig c = default_config();
  const ScorerPool pool = c.pool();
  const std::uint64_t seed = c.seeds.front();
  const Run a = train_run(c, StrategyTag::kLaserLinUcb, seed, pool);
  const Run b = train_run(c, StrategyTag::kLaserLinUcb, seed, pool);
  const bool identical = trace_csv(a.trace, "det", seed) == trace_csv(b.trace, "det", seed);

  const std::filesystem::path dir = std::filesystem::temp_directory_path() / "rmb-acceptance";
  std::filesystem::create_directories(dir);
  const Run e = train_run(c, StrategyTag::kLaserExp3, seed, pool);
  bool round_trip = true;
  for (const Run* run : {&a, &e}) {
    save_bandit(*run->bandit, dir / "bandit.json");
    const BanditState back = load_bandit(dir / "bandit.json");
    round_trip = round_trip && back == *run->bandit && serialize_bandit(back) == serialize_bandit(*run->bandit);
  }
  std::filesystem::remove_all(dir);

  double cold = 0.0, continuous = 0.0;
  const std::size_t seeds = 5;
  for (std::uint64_t s = 1; s <= seeds; ++s) {
    ExperimentConfig first = c, second = c;
    first.environment.world_seed = s;
    second.environment.world_seed = s;
    second.environment.dataset_label = "second";
    const Run source = train_run(first, StrategyTag::kLaserLinUcb, s, pool);
    const double g_cold = train_run(second, StrategyTag::kLaserLinUcb, s, pool, source.bandit).gold;
    const double g_cont = train_run(second, StrategyTag::kLaserLinUcb, s, pool).gold;
    info(fmt("seed %llu: cold start %.4f, continuous %.4f", (unsigned long long)s, g_cold, g_cont));
    cold += g_cold / seeds;
    continuous += g_cont / seeds;
  }
  const double gap = std::abs(cold - continuous);
  verdict(10, identical && round_trip && gap <= 0.02,
          fmt("byte-identical traces: %s; save/load bit-exact: %s; cold start %.4f vs continuous %.4f, gap %.4f "
              "(need <= 0.02)",
              identical ? "yes" : "no", round_trip ? "yes" : "no", cold, continuous, gap));
}

// ---- 11: efficiency accounting -------------------------------------------------------------

void efficiency_accounting() {
  ExperimentConfig c = default_config();
  c.training.iterations = 1;
  c.training.steps_per_iteration = 100;
  const std::uint64_t seed = c.seeds.front();
  const double k = static_cast<double>(c.scorers.size());
  bool ok = true;
  std::string detail;
  for (StrategyTag selection : {StrategyTag::kLaserLinUcb, StrategyTag::kLaserExp3, StrategyTag::kRandom}) {
    c.strategy = selection;
    const RunSummary sel = run_single(c, seed);
    for (StrategyTag ensemble :
         {StrategyTag::kScoreEnsemble, StrategyTag::kAgreementEnsemble, StrategyTag::kOnlineEnsemble}) {
      c.strategy = ensemble;
      const RunSummary ens = run_single(c, seed);
      const double ratio = static_cast<double>(ens.scorer_calls) / static_cast<double>(sel.scorer_calls);
      ok = ok && ratio == k;
      if (selection == StrategyTag::kLaserLinUcb) {
        detail += fmt(" %s/%s=%g", std::string(to_string(ensemble)).c_str(),
                      std::string(to_string(selection)).c_str(), ratio);
      }
    }
  }
  verdict(11, ok, fmt("K=%g, ratios:", k) + detail);
}

}  // namespace

int main() {
  const std::vector<std::pair<int, std::function<void()>>> criteria{
      {1, linucb_identification_regret_margin},  // also reports 2 and 6
      {4, normalization_contract},
      {5, gradient_correctness},
      {7, ensemble_oracles},
      {8, sherman_morrison_fidelity},
      {9, multiplicative_weights},
      {10, determinism_and_cold_start},
      {11, efficiency_accounting},
      {3, noise_robustness},
  };
  for (const auto& [id, run] : criteria) {
    try {
      run();
    } catch (const std::exception& e) {
      verdict(id, false, std::string("raised: ") + e.what());
    }
  }
  std::printf("%s: %d criterion/criteria failed\n", failures ? "FAIL" : "PASS", failures);
  return failures ? 1 : 0;
}
