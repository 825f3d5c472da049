#include "rmb/env.h"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "rmb/errors.h"

namespace rmb {

using nlohmann::json;

namespace {

Vector gaussian_vector(std::size_t dim, RngStream& rng) {
  Vector v(dim);
  for (double& x : v.values()) x = rng.normal();
  return v;
}

std::vector<Vector> make_centroids(std::size_t categories, std::size_t dim, RngStream& rng) {
  std::vector<Vector> centroids;
  centroids.reserve(categories);
  while (centroids.size() < categories) {
    Vector v = gaussian_vector(dim, rng);
    // Orthogonalise while there is room; beyond `dim` categories we fall back
    // to plain random directions.
    if (centroids.size() < dim) {
      for (const Vector& c : centroids) v.add_scaled(c, -dot(v, c));
    }
    if (norm(v) < 1e-6) continue;
    centroids.push_back(normalized(std::move(v)));
  }
  return centroids;
}

void validate(const EnvironmentConfig& c) {
  if (c.categories == 0) throw ConfigError("environment: categories must be positive");
  if (c.queries_per_category == 0) throw ConfigError("environment: queries_per_category must be positive");
  if (c.dim == 0) throw ConfigError("environment: dim must be positive");
  if (c.universe_size < 2) throw ConfigError("environment: universe_size must be at least 2");
  if (c.max_response_length < 1) throw ConfigError("environment: max_response_length must be >= 1");
  for (double f : {c.train_fraction, c.dev_fraction, c.test_fraction}) {
    if (!(f >= 0.0 && f <= 1.0)) throw ConfigError("environment: split fractions must lie in [0, 1]");
  }
  if (std::abs(c.train_fraction + c.dev_fraction + c.test_fraction - 1.0) > 1e-9) {
    throw ConfigError("environment: split fractions must sum to 1");
  }
  if (!(c.centroid_jitter >= 0.0) || !(c.gold_jitter >= 0.0) || !(c.gold_sharpness > 0.0)) {
    throw ConfigError("environment: jitter must be non-negative and sharpness positive");
  }
}

}  // namespace

Environment generate_environment(const EnvironmentConfig& config, std::uint64_t seed) {
  validate(config);
  Environment env;
  env.config = config;
  env.seed = seed;

  RngStream world(config.world_seed.value_or(seed), "world");
  RngStream centroid_rng = world.fork("centroids");
  RngStream direction_rng = world.fork("quality-direction");
  env.centroids = make_centroids(config.categories, config.dim, centroid_rng);
  env.quality_direction = normalized(gaussian_vector(config.dim, direction_rng));

  RngStream data(seed, "dataset/" + config.dataset_label);
  const std::size_t total = config.categories * config.queries_per_category;
  std::vector<Query> all;
  all.reserve(total);
  for (std::size_t c = 0; c < config.categories; ++c) {
    for (std::size_t i = 0; i < config.queries_per_category; ++i) {
      Query q;
      q.id = all.size();
      q.category = c;
      Vector f = env.centroids[c];
      f.add_scaled(gaussian_vector(config.dim, data), config.centroid_jitter / std::sqrt(double(config.dim)));
      q.features = normalized(std::move(f));
      q.universe.reserve(config.universe_size);
      for (std::size_t r = 0; r < config.universe_size; ++r) {
        ResponseCandidate cand;
        cand.id = r;
        cand.features = gaussian_vector(config.dim, data);
        const double latent = dot(env.quality_direction, cand.features) + config.gold_jitter * data.normal();
        cand.gold_quality = sigmoid(config.gold_sharpness * latent);
        cand.length = 1 + static_cast<int>(data.uniform_index(static_cast<std::size_t>(config.max_response_length)));
        q.universe.push_back(std::move(cand));
      }
      all.push_back(std::move(q));
    }
  }

  for (std::size_t i = all.size(); i > 1; --i) {
    std::swap(all[i - 1], all[data.uniform_index(i)]);
  }
  const auto n_train = static_cast<std::size_t>(std::llround(double(total) * config.train_fraction));
  const auto n_dev = std::min(total - n_train,
                              static_cast<std::size_t>(std::llround(double(total) * config.dev_fraction)));
  env.train.assign(std::make_move_iterator(all.begin()), std::make_move_iterator(all.begin() + n_train));
  env.dev.assign(std::make_move_iterator(all.begin() + n_train),
                 std::make_move_iterator(all.begin() + n_train + n_dev));
  env.test.assign(std::make_move_iterator(all.begin() + n_train + n_dev), std::make_move_iterator(all.end()));
  return env;
}

std::size_t gold_best_arm(std::size_t category, const ScorerPool& pool) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < pool.size(); ++k) {
    if (pool[k].affinity.at(category) > pool[best].affinity.at(category)) best = k;
  }
  return best;
}

std::size_t gold_best_arm(const Query& query, const ScorerPool& pool) {
  return gold_best_arm(query.category, pool);
}

std::vector<double> cumulative_regret(const TrainTrace& trace, const ScorerPool& pool) {
  if (trace.arm_count != pool.size()) {
    throw ContractViolation("cumulative_regret: trace has " + std::to_string(trace.arm_count) +
                            " arms but the pool has " + std::to_string(pool.size()));
  }
  if (trace.category_count != pool.category_count()) {
    throw ContractViolation("cumulative_regret: category count mismatch");
  }
  std::vector<double> curve;
  curve.reserve(trace.records.size());
  double total = 0.0;
  for (const TraceRecord& r : trace.records) {
    double gap = 0.0;
    double queries = 0.0;
    for (std::size_t c = 0; c < r.category_histogram.size(); ++c) {
      const std::size_t count = r.category_histogram[c];
      if (count == 0) continue;
      const double best = pool[gold_best_arm(c, pool)].affinity[c];
      double chosen = 0.0;
      for (std::size_t k = 0; k < r.arm_weights.size(); ++k) chosen += r.arm_weights[k] * pool[k].affinity[c];
      gap += static_cast<double>(count) * std::max(0.0, best - chosen);
      queries += static_cast<double>(count);
    }
    if (queries > 0.0) total += gap / queries;
    curve.push_back(total);
  }
  return curve;
}

std::vector<std::vector<double>> utilization_report(const TrainTrace& trace, double window_fraction) {
  if (!(window_fraction > 0.0 && window_fraction <= 1.0)) {
    throw ConfigError("utilization window fraction must lie in (0, 1]");
  }
  std::vector<std::vector<double>> table(trace.category_count, std::vector<double>(trace.arm_count, 0.0));
  const std::size_t n = trace.records.size();
  const auto window = static_cast<std::size_t>(std::ceil(double(n) * window_fraction));
  for (std::size_t i = n - std::min(n, window); i < n; ++i) {
    const TraceRecord& r = trace.records[i];
    for (std::size_t c = 0; c < r.category_histogram.size(); ++c) {
      for (std::size_t k = 0; k < r.arm_weights.size(); ++k) {
        table[c][k] += static_cast<double>(r.category_histogram[c]) * r.arm_weights[k];
      }
    }
  }
  for (auto& row : table) {
    double sum = 0.0;
    for (double x : row) sum += x;
    if (sum > 0.0) {
      for (double& x : row) x /= sum;
    }
  }
  return table;
}

namespace {

json query_to_json(const Query& q) {
  json universe = json::array();
  for (const ResponseCandidate& r : q.universe) {
    universe.push_back({{"id", r.id}, {"features", r.features.raw()}, {"gold_quality", r.gold_quality}, {"length", r.length}});
  }
  return {{"id", q.id}, {"category", q.category}, {"features", q.features.raw()}, {"universe", std::move(universe)}};
}

Query query_from_json(const json& j) {
  Query q;
  q.id = j.at("id").get<std::uint64_t>();
  q.category = j.at("category").get<std::size_t>();
  q.features = Vector(j.at("features").get<std::vector<double>>());
  for (const json& r : j.at("universe")) {
    q.universe.push_back({r.at("id").get<std::uint64_t>(), Vector(r.at("features").get<std::vector<double>>()),
                          r.at("gold_quality").get<double>(), r.at("length").get<int>()});
  }
  return q;
}

json split_to_json(const std::vector<Query>& split) {
  json out = json::array();
  for (const Query& q : split) out.push_back(query_to_json(q));
  return out;
}

std::vector<Query> split_from_json(const json& j) {
  std::vector<Query> out;
  for (const json& q : j) out.push_back(query_from_json(q));
  return out;
}

}  // namespace

std::string serialize_environment(const Environment& env) {
  const EnvironmentConfig& c = env.config;
  json doc;
  doc["schema"] = "rmb-environment";
  doc["version"] = kEnvironmentSchemaVersion;
  doc["seed"] = env.seed;
  doc["config"] = {{"categories", c.categories},
                   {"queries_per_category", c.queries_per_category},
                   {"dim", c.dim},
                   {"universe_size", c.universe_size},
                   {"train_fraction", c.train_fraction},
                   {"dev_fraction", c.dev_fraction},
                   {"test_fraction", c.test_fraction},
                   {"centroid_jitter", c.centroid_jitter},
                   {"gold_sharpness", c.gold_sharpness},
                   {"gold_jitter", c.gold_jitter},
                   {"max_response_length", c.max_response_length},
                   {"world_seed", c.world_seed ? json(*c.world_seed) : json(nullptr)},
                   {"dataset_label", c.dataset_label}};
  json centroids = json::array();
  for (const Vector& v : env.centroids) centroids.push_back(v.raw());
  doc["centroids"] = std::move(centroids);
  doc["quality_direction"] = env.quality_direction.raw();
  doc["train"] = split_to_json(env.train);
  doc["dev"] = split_to_json(env.dev);
  doc["test"] = split_to_json(env.test);
  return doc.dump() + "\n";
}

Environment deserialize_environment(std::string_view document) {
  try {
    const json doc = json::parse(document);
    if (doc.at("schema").get<std::string>() != "rmb-environment") throw LoadError("not an environment document");
    if (doc.at("version").get<int>() != kEnvironmentSchemaVersion) throw LoadError("unsupported environment version");
    Environment env;
    env.seed = doc.at("seed").get<std::uint64_t>();
    const json& c = doc.at("config");
    EnvironmentConfig& cfg = env.config;
    cfg.categories = c.at("categories").get<std::size_t>();
    cfg.queries_per_category = c.at("queries_per_category").get<std::size_t>();
    cfg.dim = c.at("dim").get<std::size_t>();
    cfg.universe_size = c.at("universe_size").get<std::size_t>();
    cfg.train_fraction = c.at("train_fraction").get<double>();
    cfg.dev_fraction = c.at("dev_fraction").get<double>();
    cfg.test_fraction = c.at("test_fraction").get<double>();
    cfg.centroid_jitter = c.at("centroid_jitter").get<double>();
    cfg.gold_sharpness = c.at("gold_sharpness").get<double>();
    cfg.gold_jitter = c.at("gold_jitter").get<double>();
    cfg.max_response_length = c.at("max_response_length").get<int>();
    if (!c.at("world_seed").is_null()) cfg.world_seed = c.at("world_seed").get<std::uint64_t>();
    cfg.dataset_label = c.at("dataset_label").get<std::string>();
    for (const json& v : doc.at("centroids")) env.centroids.emplace_back(v.get<std::vector<double>>());
    env.quality_direction = Vector(doc.at("quality_direction").get<std::vector<double>>());
    env.train = split_from_json(doc.at("train"));
    env.dev = split_from_json(doc.at("dev"));
    env.test = split_from_json(doc.at("test"));
    return env;
  } catch (const LoadError&) {
    throw;
  } catch (const json::exception& e) {
    throw LoadError(std::string("malformed environment: ") + e.what());
  }
}

}  // namespace rmb
