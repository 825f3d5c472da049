#include <doctest.h>

#include <cmath>
#include <vector>

#include "oracles.h"
#include "rmb/bandit.h"
#include "rmb/errors.h"

using namespace rmb;

namespace {

LinUcbArm scalar_arm(double a, double b) { return {SpdMatrix(1, {1.0 / a}), Vector{b}, 0}; }

}  // namespace

TEST_CASE("linucb_select: fresh arms and a zero context tie to arm 0") {
  RngStream rng(1, "t");
  const auto arms = make_linucb_arms(4, 3, 0.0, rng);
  CHECK(linucb_select(arms, Vector(3), 1.0) == 0);
  for (double s : linucb_scores(arms, Vector(3), 1.0)) CHECK(s == 0.0);
}

TEST_CASE("linucb_select: scalar evaluation of the upper confidence bound") {
  const std::vector<LinUcbArm> arms{scalar_arm(2.0, 1.0), scalar_arm(1.0, 0.0)};
  const auto scores = linucb_scores(arms, Vector{1.0}, 1.0);
  CHECK(scores[0] == doctest::Approx(0.5 + std::sqrt(0.5)));
  CHECK(scores[0] == doctest::Approx(1.2071067811865475));
  CHECK(scores[1] == doctest::Approx(1.0));
  CHECK(linucb_select(arms, Vector{1.0}, 1.0) == 0);
}

TEST_CASE("linucb_select: exploitation only with alpha 0") {
  std::vector<LinUcbArm> arms{{SpdMatrix::identity(2), Vector{1.0, 0.0}, 0},
                              {SpdMatrix::identity(2), Vector{0.0, 1.0}, 0}};
  CHECK(linucb_select(arms, Vector{1.0, 0.0}, 0.0) == 0);
  CHECK(linucb_select(arms, Vector{0.0, 1.0}, 0.0) == 1);
}

TEST_CASE("linucb_select: errors") {
  std::vector<LinUcbArm> none;
  CHECK_THROWS_AS(linucb_select(none, Vector{1.0}, 1.0), ConfigError);
  std::vector<LinUcbArm> arms{scalar_arm(1.0, 0.0)};
  CHECK_THROWS_AS(linucb_select(arms, Vector{1.0, 2.0}, 1.0), ContractViolation);
}

TEST_CASE("linucb_update: scalar identity update and zero reward") {
  LinUcbArm arm = linucb_update(scalar_arm(1.0, 0.0), Vector{1.0}, 1.0);
  CHECK(arm.a_inv(0, 0) == doctest::Approx(0.5));
  CHECK(arm.b[0] == 1.0);
  CHECK(arm.pulls == 1);
  LinUcbArm zero = linucb_update(scalar_arm(1.0, 0.25), Vector{1.0}, 0.0);
  CHECK(zero.b[0] == 0.25);
  CHECK(zero.a_inv(0, 0) == doctest::Approx(0.5));
  CHECK_THROWS_AS(linucb_update(scalar_arm(1.0, 0.0), Vector{1.0}, 1.5), ContractViolation);
  CHECK_THROWS_AS(linucb_update(scalar_arm(1.0, 0.0), Vector{1.0}, -0.1), ContractViolation);
}

TEST_CASE("linucb_update: property - A equals I plus the sum of outer products (oracle inverse)") {
  RngStream rng(4, "linucb-prop");
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t d = 2 + rng.uniform_index(6);
    LinUcbArm arm{SpdMatrix::identity(d), Vector(d), 0};
    oracle::Matrix a(d, std::vector<double>(d, 0.0));
    for (std::size_t i = 0; i < d; ++i) a[i][i] = 1.0;
    std::vector<double> b(d, 0.0);
    const int steps = 1 + static_cast<int>(rng.uniform_index(40));
    for (int s = 0; s < steps; ++s) {
      Vector c(d);
      for (std::size_t i = 0; i < d; ++i) c[i] = rng.normal();
      const double r = rng.uniform();
      arm = linucb_update(arm, c, r);
      for (std::size_t i = 0; i < d; ++i) {
        b[i] += r * c[i];
        for (std::size_t j = 0; j < d; ++j) a[i][j] += c[i] * c[j];
      }
    }
    const oracle::Matrix inv = oracle::invert(a);
    for (std::size_t i = 0; i < d; ++i) {
      CHECK(arm.b[i] == doctest::Approx(b[i]).epsilon(1e-12));
      for (std::size_t j = 0; j < d; ++j) CHECK(std::abs(arm.a_inv(i, j) - inv[i][j]) < 1e-10);
    }
    CHECK(arm.pulls == static_cast<std::uint64_t>(steps));
  }
}

TEST_CASE("make_linucb_arms: identity inverse and small Gaussian b") {
  RngStream rng(2, "init");
  const auto arms = make_linucb_arms(3, 5, 0.01, rng);
  REQUIRE(arms.size() == 3);
  for (const auto& arm : arms) {
    CHECK(arm.a_inv == SpdMatrix::identity(5));
    CHECK(arm.b.dim() == 5);
    for (double x : arm.b) CHECK(std::abs(x) < 0.06);
  }
}

TEST_CASE("exp3_probabilities: documented examples") {
  Exp3State s = make_exp3_state(4, 0.1);
  for (double p : exp3_probabilities(s)) CHECK(p == doctest::Approx(0.25));
  s.scores = Vector{5.0, -3.0, 1.0, 0.0};
  s.gamma = 1.0;
  for (double p : exp3_probabilities(s)) CHECK(p == doctest::Approx(0.25));
  Exp3State two{Vector{1.0, 0.0}, 0.0, 700.0};
  const Vector p = exp3_probabilities(two);
  CHECK(p[0] == doctest::Approx(0.7310585786300049).epsilon(1e-14));
  CHECK(p[1] == doctest::Approx(0.2689414213699951).epsilon(1e-14));
}

TEST_CASE("exp3_probabilities: property - valid distribution with a gamma/K floor") {
  RngStream rng(6, "exp3-prop");
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t k = 1 + rng.uniform_index(8);
    Exp3State s = make_exp3_state(k, 0.01 + 0.99 * rng.uniform());
    for (std::size_t i = 0; i < k; ++i) s.scores[i] = rng.normal(0.0, 200.0);
    const Vector p = exp3_probabilities(s);
    double total = 0.0;
    for (double x : p) {
      CHECK(x >= s.gamma / static_cast<double>(k) - 1e-15);
      total += x;
    }
    CHECK(std::abs(total - 1.0) < 1e-12);
  }
}

TEST_CASE("exp3_select: uniform under gamma 1, concentrated under a large score gap, deterministic") {
  Exp3State s = make_exp3_state(4, 1.0);
  RngStream rng(3, "exp3");
  std::vector<int> counts(4, 0);
  const int n = 10000;
  for (int i = 0; i < n; ++i) ++counts[exp3_select(s, rng).arm];
  for (int c : counts) CHECK(std::abs(c - n / 4.0) < 3 * std::sqrt(n * 0.25 * 0.75));

  Exp3State skew{Vector{50.0, -50.0}, 0.01, 700.0};
  int zero = 0;
  for (int i = 0; i < n; ++i) zero += exp3_select(skew, rng).arm == 0;
  CHECK(zero >= 0.98 * n);

  RngStream a(9, "same"), b(9, "same");
  for (int i = 0; i < 100; ++i) {
    const Exp3Draw da = exp3_select(skew, a), db = exp3_select(skew, b);
    CHECK(da.arm == db.arm);
    CHECK(da.probability == db.probability);
  }
}

TEST_CASE("exp3_update: importance-weighted score increment") {
  Exp3State s = make_exp3_state(3, 0.1);
  Exp3State up = exp3_update(s, 0, 1.0, 0.5);
  CHECK(up.scores[0] == 2.0);
  CHECK(up.scores[1] == 0.0);
  CHECK(up.scores[2] == 0.0);
  CHECK(exp3_update(s, 1, 0.0, 0.3) == s);
  CHECK_THROWS_AS(exp3_update(s, 0, 0.5, 0.0), ContractViolation);
  CHECK_THROWS_AS(exp3_update(s, 0, 1.5, 0.5), ContractViolation);
}

TEST_CASE("exp3_update: scores stay finite and bounded under long runs") {
  Exp3State s = make_exp3_state(3, 0.01);
  for (int i = 0; i < 100000; ++i) {
    s = exp3_update(s, 0, 1.0, 0.0034);
    CHECK_FALSE(!s.scores.all_finite());
    double lo = s.scores[0], hi = s.scores[0];
    for (double x : s.scores) {
      lo = std::min(lo, x);
      hi = std::max(hi, x);
    }
    if (hi - lo > s.overflow_bound + 1e-9) {
      FAIL("score spread exceeds the overflow bound");
      break;
    }
  }
  const Vector p = exp3_probabilities(s);
  CHECK(p[0] > 0.98);
}

TEST_CASE("normalize_reward: warm-up, midpoint and clipping branches") {
  RewardNormalizer n;
  NormalizedReward r = normalize_reward(n, -1.0);
  CHECK(r.value == kWarmupReward);
  r = normalize_reward(r.normalizer, -2.0);
  CHECK(r.value == kWarmupReward);
  CHECK(r.normalizer.history == std::vector<double>{-1.0, -2.0});

  // History whose 20th / 80th quantiles are exactly -2 and -1.
  RewardNormalizer h;
  h.history = {-2.0, -2.0, -1.5, -1.0, -1.0, -2.0, -1.0, -2.0, -1.0, -1.5, -2.0};
  CHECK(quantile(h.history, 0.2) == -2.0);
  CHECK(quantile(h.history, 0.8) == -1.0);
  CHECK(normalize_reward(h, -1.5).value == doctest::Approx(0.5));
  CHECK(normalize_reward(h, -3.0).value == 0.0);
  CHECK(normalize_reward(h, 0.0).value == 1.0);

  RewardNormalizer flat;
  flat.history = {1.0, 1.0, 1.0};
  CHECK(normalize_reward(flat, 5.0).value == kWarmupReward);
  CHECK_THROWS_AS(normalize_reward(flat, NAN), ContractViolation);
}

TEST_CASE("normalize_reward: uses the history before appending the new value") {
  RewardNormalizer n;
  n.history = {0.0, 1.0};
  const NormalizedReward r = normalize_reward(n, 0.9);
  // q20 = 0.2, q80 = 0.8 of {0, 1} -> 0.9 is above the upper quantile.
  CHECK(r.value == 1.0);
  CHECK(r.normalizer.history.back() == 0.9);
}

TEST_CASE("bandit state: select, feedback and serialisation round-trip") {
  for (BanditAlgorithm alg : {BanditAlgorithm::kLinUcb, BanditAlgorithm::kExp3}) {
    BanditConfig cfg;
    cfg.algorithm = alg;
    RngStream init(1, "init"), rng(1, "sel");
    BanditState s = make_bandit_state(cfg, 3, 4, init);
    for (int i = 0; i < 50; ++i) {
      Vector c{rng.uniform(), rng.uniform(), rng.uniform(), rng.uniform()};
      const BanditChoice ch = bandit_select(s, c, rng);
      CHECK(ch.diagnostics.size() == 3);
      const double r = bandit_feedback(s, ch, c, -rng.uniform());
      CHECK(r >= 0.0);
      CHECK(r <= 1.0);
    }
    CHECK(s.steps == 50);
    const BanditState back = deserialize_bandit(serialize_bandit(s));
    CHECK(back == s);
    CHECK(serialize_bandit(back) == serialize_bandit(s));
  }
}

TEST_CASE("deserialize_bandit: malformed documents and version mismatches are load errors") {
  CHECK_THROWS_AS(deserialize_bandit("not json"), LoadError);
  CHECK_THROWS_AS(deserialize_bandit("{}"), LoadError);
  BanditConfig cfg;
  RngStream init(1, "init");
  std::string doc = serialize_bandit(make_bandit_state(cfg, 2, 2, init));
  const std::string needle = "\"version\": 1";
  const auto pos = doc.find(needle);
  REQUIRE(pos != std::string::npos);
  doc.replace(pos, needle.size(), "\"version\": 99");
  CHECK_THROWS_AS(deserialize_bandit(doc), LoadError);
}
