#include "rmb/harness.h"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "rmb/env.h"
#include "rmb/errors.h"
#include "rmb/pipeline.h"
#include "rmb/policy.h"

namespace rmb {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::string_view kExperimentSchema = "rmb-experiment";

std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

void write_file(const fs::path& path, const std::string& content) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("io error", "cannot write " + tmp.string());
    out << content;
    if (!out) throw Error("io error", "failed writing " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ReportError("cannot read " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  while (true) {
    const std::size_t pos = line.find(sep);
    out.push_back(line.substr(0, pos));
    if (pos == std::string_view::npos) return out;
    line.remove_prefix(pos + 1);
  }
}

template <class T>
T parse_field(std::string_view text, std::string_view what) {
  T value{};
  const auto r = std::from_chars(text.data(), text.data() + text.size(), value);
  if (r.ec != std::errc() || r.ptr != text.data() + text.size()) {
    throw ReportError("trace: cannot parse " + std::string(what) + " '" + std::string(text) + "'");
  }
  return value;
}

std::string run_id_for(StrategyTag strategy, std::uint64_t seed, const std::string& scorer = "") {
  std::string id(to_string(strategy));
  if (!scorer.empty()) id += "-" + scorer;
  return id + "-s" + std::to_string(seed);
}

struct Outcome {
  RunSummary summary;
  TrainTrace trace;
  std::optional<BanditState> bandit;
};

RunSummary summarize_trace(const TrainTrace& trace, const ScorerPool& pool, double window) {
  RunSummary s;
  s.steps = trace.records.size();
  s.arm_counts.assign(trace.arm_count, 0);
  for (const TraceRecord& r : trace.records) {
    s.total_pairs += r.pairs;
    s.scorer_calls += r.scorer_calls;
    s.total_raw_loss += r.raw_loss;
    if (r.chosen == "ensemble") {
      ++s.ensemble_steps;
    } else {
      ++s.arm_counts.at(std::stoul(r.chosen));
    }
  }
  const std::vector<double> regret = cumulative_regret(trace, pool);
  s.final_regret = regret.empty() ? 0.0 : regret.back();
  s.utilization = utilization_report(trace, window);
  return s;
}

Outcome run_one(const ExperimentConfig& config, const Environment& env, const ScorerPool& pool,
                StrategyTag strategy, const TrainConfig& training, std::uint64_t seed,
                const std::optional<BanditState>& initial_bandit) {
  const PolicyParams start = aligned_policy(env.quality_direction, training.policy_init_alignment);
  Outcome out;
  PolicyParams final_policy = start;
  double gold = 0.0;
  if (config.mode == RunMode::kBestOfN) {
    BestOfNResult r = best_of_n_run(training, env, pool, start, seed, initial_bandit);
    out.trace = std::move(r.trace);
    out.bandit = std::move(r.bandit);
    gold = r.mean_gold_quality;
  } else {
    TrainResult r = train(training, env, pool, strategy, seed, initial_bandit);
    out.trace = std::move(r.trace);
    out.bandit = std::move(r.bandit);
    final_policy = r.policy;
    gold = expected_gold_quality(final_policy, env.test, training.temperature);
  }
  out.summary = summarize_trace(out.trace, pool, config.utilization_window);
  out.summary.seed = seed;
  out.summary.initial_gold_quality = expected_gold_quality(start, env.test, training.temperature);
  out.summary.mean_gold_quality = gold;
  RngStream margin_rng(seed, "held-out-margin");
  out.summary.held_out_margin = held_out_margin(final_policy, env.test, training.pairs_per_query, margin_rng);
  return out;
}

// Mean of the quality metrics, sum of the counters.
RunSummary combine(const std::vector<RunSummary>& parts, std::string run_id, std::uint64_t seed) {
  RunSummary s;
  s.run_id = std::move(run_id);
  s.seed = seed;
  const double n = static_cast<double>(parts.size());
  s.arm_counts.assign(parts.front().arm_counts.size(), 0);
  s.utilization.assign(parts.front().utilization.size(),
                       std::vector<double>(parts.front().arm_counts.size(), 0.0));
  for (const RunSummary& p : parts) {
    s.steps += p.steps;
    s.total_pairs += p.total_pairs;
    s.scorer_calls += p.scorer_calls;
    s.total_raw_loss += p.total_raw_loss;
    s.ensemble_steps += p.ensemble_steps;
    for (std::size_t k = 0; k < s.arm_counts.size(); ++k) s.arm_counts[k] += p.arm_counts[k];
    s.final_regret += p.final_regret / n;
    s.initial_gold_quality += p.initial_gold_quality / n;
    s.mean_gold_quality += p.mean_gold_quality / n;
    s.held_out_margin += p.held_out_margin / n;
    for (std::size_t c = 0; c < s.utilization.size(); ++c) {
      for (std::size_t k = 0; k < s.utilization[c].size(); ++k) s.utilization[c][k] += p.utilization[c][k] / n;
    }
  }
  return s;
}

void check_consistency(const fs::path& csv_path, const RunSummary& s) {
  const TraceTotals t = trace_totals(read_file(csv_path), s.arm_counts.size());
  if (t.rows != s.steps || t.pairs != s.total_pairs || t.scorer_calls != s.scorer_calls ||
      t.raw_loss != s.total_raw_loss || t.arm_counts != s.arm_counts || t.ensemble_rows != s.ensemble_steps) {
    throw StateError("summary totals disagree with " + csv_path.string());
  }
}

// Writes trace, bandit state and summary for one run into `dir`.
void write_run(const fs::path& dir, const Outcome& o, const ExperimentConfig& config) {
  fs::create_directories(dir);
  const fs::path csv = dir / "trace.csv";
  write_file(csv, trace_csv(o.trace, o.summary.run_id, o.summary.seed));
  if (o.bandit) save_bandit(*o.bandit, dir / "bandit.json");
  check_consistency(csv, o.summary);
  write_file(dir / "summary.json", summary_json(o.summary, config));
}

RunSummary execute_seed(const ExperimentConfig& config, std::uint64_t seed,
                        const std::optional<BanditState>& initial_bandit, const fs::path* dir,
                        TrainTrace* trace_out, std::optional<BanditState>* bandit_out) {
  validate_config(config);
  if (initial_bandit && !is_bandit_strategy(config.strategy)) {
    throw ConfigError("a bandit state can only seed laser_linucb or laser_exp3 runs");
  }
  const ScorerPool pool = config.pool();
  const Environment env = generate_environment(config.environment, seed);

  if (config.strategy != StrategyTag::kAvgSingle) {
    Outcome o = run_one(config, env, pool, config.strategy, config.training, seed, initial_bandit);
    o.summary.run_id = run_id_for(config.strategy, seed);
    if (dir) write_run(*dir, o, config);
    if (trace_out) *trace_out = std::move(o.trace);
    if (bandit_out) *bandit_out = std::move(o.bandit);
    return o.summary;
  }

  std::vector<RunSummary> parts;
  for (std::size_t k = 0; k < pool.size(); ++k) {
    TrainConfig training = config.training;
    training.fixed_arm = k;
    Outcome o = run_one(config, env, pool, StrategyTag::kBestFixed, training, seed, std::nullopt);
    o.summary.run_id = run_id_for(config.strategy, seed, pool[k].id);
    if (dir) write_run(*dir / pool[k].id, o, config);
    if (trace_out) *trace_out = std::move(o.trace);
    parts.push_back(std::move(o.summary));
  }
  RunSummary s = combine(parts, run_id_for(config.strategy, seed), seed);
  if (dir) write_file(*dir / "summary.json", summary_json(s, config));
  return s;
}

json summary_to_json(const RunSummary& s) {
  return json{{"run_id", s.run_id},
              {"seed", s.seed},
              {"steps", s.steps},
              {"total_pairs", s.total_pairs},
              {"scorer_calls", s.scorer_calls},
              {"total_raw_loss", s.total_raw_loss},
              {"arm_counts", s.arm_counts},
              {"ensemble_steps", s.ensemble_steps},
              {"final_regret", s.final_regret},
              {"initial_gold_quality", s.initial_gold_quality},
              {"mean_gold_quality", s.mean_gold_quality},
              {"held_out_margin", s.held_out_margin},
              {"utilization", s.utilization}};
}

json experiment_header(const ExperimentConfig& config) {
  std::vector<std::string> ids;
  for (const ScorerSpec& s : config.scorers) ids.push_back(s.id);
  return json{{"strategy", to_string(config.strategy)},
              {"mode", to_string(config.mode)},
              {"scorers", ids},
              {"categories", config.environment.categories}};
}

std::string experiment_summary(const ExperimentConfig& config, const ExperimentResult& result) {
  json doc{{"schema", kExperimentSchema}, {"version", kSummaryVersion}};
  doc.update(experiment_header(config));
  json runs = json::array();
  double regret = 0.0, gold = 0.0, calls = 0.0;
  for (const RunSummary& r : result.runs) {
    runs.push_back(summary_to_json(r));
    regret += r.final_regret;
    gold += r.mean_gold_quality;
    calls += static_cast<double>(r.scorer_calls);
  }
  const double n = result.runs.empty() ? 1.0 : static_cast<double>(result.runs.size());
  doc["runs"] = runs;
  doc["mean_final_regret"] = regret / n;
  doc["mean_gold_quality"] = gold / n;
  doc["mean_scorer_calls"] = calls / n;
  json failed = json::array();
  for (const RunFailure& f : result.failures) failed.push_back({{"seed", f.seed}, {"error", f.message}});
  doc["failures"] = failed;
  return doc.dump(2) + "\n";
}

fs::path seed_dir(const ExperimentConfig& config, std::uint64_t seed) {
  return config.out_dir / ("seed-" + std::to_string(seed));
}

}  // namespace

std::string trace_csv(const TrainTrace& trace, const std::string& run_id, std::uint64_t seed) {
  std::string out = "# " + std::string(kTraceSchema) + "\n";
  out += "run_id,seed,iteration,step,chosen,raw_loss,normalized_reward,pairs,scorer_calls";
  for (std::size_t c = 0; c < trace.category_count; ++c) out += ",cat_" + std::to_string(c);
  for (std::size_t k = 0; k < trace.arm_count; ++k) out += ",weight_" + std::to_string(k);
  for (std::size_t k = 0; k < trace.arm_count; ++k) out += ",diag_" + std::to_string(k);
  out += "\n";
  const std::string prefix = run_id + "," + std::to_string(seed) + ",";
  for (const TraceRecord& r : trace.records) {
    if (r.category_histogram.size() != trace.category_count || r.arm_weights.size() != trace.arm_count ||
        r.diagnostics.size() != trace.arm_count) {
      throw ContractViolation("trace record does not match the trace shape");
    }
    out += prefix;
    out += std::to_string(r.iteration) + "," + std::to_string(r.step) + "," + r.chosen + ",";
    out += format_double(r.raw_loss) + "," + format_double(r.normalized_reward) + ",";
    out += std::to_string(r.pairs) + "," + std::to_string(r.scorer_calls);
    for (std::size_t h : r.category_histogram) out += "," + std::to_string(h);
    for (double w : r.arm_weights) out += "," + format_double(w);
    for (double d : r.diagnostics) out += "," + format_double(d);
    out += "\n";
  }
  return out;
}

TraceTotals trace_totals(std::string_view csv, std::size_t arm_count) {
  std::vector<std::string_view> lines = split(csv, '\n');
  if (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.size() < 2 || lines[0] != "# " + std::string(kTraceSchema)) {
    throw ReportError("trace: missing '# " + std::string(kTraceSchema) + "' header");
  }
  const std::vector<std::string_view> header = split(lines[1], ',');
  static constexpr std::string_view kFixed[] = {"run_id", "seed",   "iteration", "step",        "chosen",
                                                "raw_loss", "normalized_reward", "pairs", "scorer_calls"};
  if (header.size() < std::size(kFixed) + 2 * arm_count || !std::equal(std::begin(kFixed), std::end(kFixed), header.begin())) {
    throw ReportError("trace: unexpected column layout");
  }
  const std::size_t columns = header.size();
  if (header[columns - 2 * arm_count] != "weight_0") throw ReportError("trace: arm count does not match columns");

  TraceTotals t;
  t.arm_counts.assign(arm_count, 0);
  for (std::size_t i = 2; i < lines.size(); ++i) {
    const std::vector<std::string_view> f = split(lines[i], ',');
    if (f.size() != columns) throw ReportError("trace: row " + std::to_string(i + 1) + " has the wrong width");
    ++t.rows;
    t.raw_loss += parse_field<double>(f[5], "raw_loss");
    t.pairs += parse_field<std::size_t>(f[7], "pairs");
    t.scorer_calls += parse_field<std::size_t>(f[8], "scorer_calls");
    if (f[4] == "ensemble") {
      ++t.ensemble_rows;
    } else {
      const std::size_t arm = parse_field<std::size_t>(f[4], "chosen");
      if (arm >= arm_count) throw ReportError("trace: chosen arm out of range");
      ++t.arm_counts[arm];
    }
  }
  return t;
}

std::string summary_json(const RunSummary& summary, const ExperimentConfig& config) {
  json doc{{"schema", kSummarySchema}, {"version", kSummaryVersion}};
  doc.update(experiment_header(config));
  doc.update(summary_to_json(summary));
  return doc.dump(2) + "\n";
}

RunSummary parse_summary_json(std::string_view document) {
  try {
    const json doc = json::parse(document);
    if (doc.at("schema") != kSummarySchema || doc.at("version") != kSummaryVersion) {
      throw ReportError("unsupported run summary schema");
    }
    RunSummary s;
    doc.at("run_id").get_to(s.run_id);
    doc.at("seed").get_to(s.seed);
    doc.at("steps").get_to(s.steps);
    doc.at("total_pairs").get_to(s.total_pairs);
    doc.at("scorer_calls").get_to(s.scorer_calls);
    doc.at("total_raw_loss").get_to(s.total_raw_loss);
    doc.at("arm_counts").get_to(s.arm_counts);
    doc.at("ensemble_steps").get_to(s.ensemble_steps);
    doc.at("final_regret").get_to(s.final_regret);
    doc.at("initial_gold_quality").get_to(s.initial_gold_quality);
    doc.at("mean_gold_quality").get_to(s.mean_gold_quality);
    doc.at("held_out_margin").get_to(s.held_out_margin);
    doc.at("utilization").get_to(s.utilization);
    return s;
  } catch (const json::exception& e) {
    throw ReportError(std::string("malformed run summary: ") + e.what());
  }
}

RunSummary run_single(const ExperimentConfig& config, std::uint64_t seed,
                      const std::optional<BanditState>& initial_bandit, TrainTrace* trace,
                      std::optional<BanditState>* final_bandit) {
  return execute_seed(config, seed, initial_bandit, nullptr, trace, final_bandit);
}

ExperimentResult run_experiment(const ExperimentConfig& config, const std::optional<BanditState>& initial_bandit) {
  validate_config(config);
  fs::create_directories(config.out_dir);
  write_file(config.out_dir / "config.toml", format_config(config));
  std::error_code ignored;
  fs::remove(config.out_dir / ".failed", ignored);

  std::vector<std::optional<RunSummary>> summaries(config.seeds.size());
  std::vector<std::optional<std::string>> errors(config.seeds.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < config.seeds.size(); i = next++) {
      const std::uint64_t seed = config.seeds[i];
      const fs::path dir = seed_dir(config, seed);
      try {
        fs::create_directories(dir);
        fs::remove(dir / ".failed", ignored);
        summaries[i] = execute_seed(config, seed, initial_bandit, &dir, nullptr, nullptr);
      } catch (const std::exception& e) {
        errors[i] = e.what();
        std::ofstream(dir / ".failed") << e.what() << "\n";
      }
    }
  };
  const std::size_t threads = std::min(config.threads, config.seeds.size());
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }

  ExperimentResult result;
  for (std::size_t i = 0; i < config.seeds.size(); ++i) {
    if (summaries[i]) result.runs.push_back(std::move(*summaries[i]));
    if (errors[i]) result.failures.push_back({config.seeds[i], *errors[i]});
  }
  std::sort(result.runs.begin(), result.runs.end(),
            [](const RunSummary& a, const RunSummary& b) { return a.seed < b.seed; });
  std::sort(result.failures.begin(), result.failures.end(),
            [](const RunFailure& a, const RunFailure& b) { return a.seed < b.seed; });
  write_file(config.out_dir / "summary.json", experiment_summary(config, result));
  if (!result.ok()) std::ofstream(config.out_dir / ".failed") << result.failures.size() << " run(s) failed\n";
  return result;
}

Report report(const std::vector<fs::path>& experiment_dirs) {
  if (experiment_dirs.empty()) throw ReportError("report: no experiment directories given");
  struct Row {
    std::string name, strategy, mode;
    std::size_t runs = 0;
    double regret = 0.0, gold = 0.0, calls = 0.0;
    std::vector<std::vector<double>> utilization;
  };
  std::vector<Row> rows;
  json reference;
  for (const fs::path& dir : experiment_dirs) {
    const fs::path path = dir / "summary.json";
    if (!fs::is_directory(dir)) throw ReportError("report: " + dir.string() + " is not a directory");
    if (!fs::exists(path)) throw ReportError("report: no experiment summary in " + dir.string());
    if (fs::exists(dir / ".failed")) throw ReportError("report: " + dir.string() + " contains failed runs");
    json doc;
    try {
      doc = json::parse(read_file(path));
    } catch (const json::exception& e) {
      throw ReportError("report: malformed " + path.string() + ": " + e.what());
    }
    if (doc.value("schema", "") != kExperimentSchema || doc.value("version", 0) != kSummaryVersion) {
      throw ReportError("report: " + path.string() + " has an incompatible schema");
    }
    if (reference.is_null()) {
      reference = doc;
    } else if (doc.at("scorers") != reference.at("scorers") || doc.at("categories") != reference.at("categories")) {
      throw ReportError("report: " + dir.string() + " uses a different scorer pool or category count");
    }
    const json& runs = doc.at("runs");
    if (runs.empty()) throw ReportError("report: " + dir.string() + " has no completed runs");
    Row row;
    row.name = dir.filename().empty() ? dir.parent_path().filename().string() : dir.filename().string();
    row.strategy = doc.at("strategy").get<std::string>();
    row.mode = doc.at("mode").get<std::string>();
    row.runs = runs.size();
    row.regret = doc.at("mean_final_regret").get<double>();
    row.gold = doc.at("mean_gold_quality").get<double>();
    row.calls = doc.at("mean_scorer_calls").get<double>();
    const double n = static_cast<double>(runs.size());
    for (const json& r : runs) {
      const auto u = r.at("utilization").get<std::vector<std::vector<double>>>();
      if (row.utilization.empty()) row.utilization.assign(u.size(), std::vector<double>(u.front().size(), 0.0));
      for (std::size_t c = 0; c < u.size(); ++c) {
        for (std::size_t k = 0; k < u[c].size(); ++k) row.utilization[c][k] += u[c][k] / n;
      }
    }
    rows.push_back(std::move(row));
  }

  double min_calls = rows.front().calls;
  for (const Row& r : rows) min_calls = std::min(min_calls, r.calls);
  const auto scorers = reference.at("scorers").get<std::vector<std::string>>();

  Report out;
  out.csv = "experiment,strategy,mode,runs,final_regret,mean_gold_quality,scorer_calls,relative_calls";
  for (std::size_t c = 0; c < rows.front().utilization.size(); ++c) {
    for (const std::string& id : scorers) out.csv += ",util_c" + std::to_string(c) + "_" + id;
  }
  out.csv += "\n";
  std::ostringstream text;
  char line[256];
  std::snprintf(line, sizeof line, "%-24s %-18s %-9s %5s %14s %10s %14s %9s\n", "experiment", "strategy", "mode",
                "runs", "final_regret", "gold", "scorer_calls", "relative");
  text << line;
  for (const Row& r : rows) {
    const double relative = min_calls > 0.0 ? r.calls / min_calls : 0.0;
    std::snprintf(line, sizeof line, "%-24s %-18s %-9s %5zu %14.4f %10.6f %14.1f %9.4f\n", r.name.c_str(),
                  r.strategy.c_str(), r.mode.c_str(), r.runs, r.regret, r.gold, r.calls, relative);
    text << line;
    out.csv += r.name + "," + r.strategy + "," + r.mode + "," + std::to_string(r.runs) + "," +
               format_double(r.regret) + "," + format_double(r.gold) + "," + format_double(r.calls) + "," +
               format_double(relative);
    for (const auto& cat : r.utilization) {
      for (double u : cat) out.csv += "," + format_double(u);
    }
    out.csv += "\n";
  }
  text << "\nutilization over the final window (rows: categories, columns: scorers)\n";
  for (const Row& r : rows) {
    text << r.name << "\n";
    for (std::size_t c = 0; c < r.utilization.size(); ++c) {
      std::snprintf(line, sizeof line, "  cat %zu:", c);
      text << line;
      for (double u : r.utilization[c]) {
        std::snprintf(line, sizeof line, " %6.3f", u);
        text << line;
      }
      text << "\n";
    }
  }
  out.text = text.str();
  return out;
}

void export_state(const fs::path& run_dir, const fs::path& destination) {
  fs::path source = run_dir / "bandit.json";
  if (!fs::exists(source)) {
    std::vector<fs::path> found;
    if (fs::is_directory(run_dir)) {
      for (const fs::directory_entry& e : fs::directory_iterator(run_dir)) {
        if (e.is_directory() && e.path().filename().string().rfind("seed-", 0) == 0 &&
            fs::exists(e.path() / "bandit.json")) {
          found.push_back(e.path() / "bandit.json");
        }
      }
    }
    if (found.size() != 1) {
      throw LoadError("export-state: " + run_dir.string() +
                      (found.empty() ? " holds no bandit state" : " holds several seeds; pass a seed directory"));
    }
    source = found.front();
  }
  save_bandit(load_bandit(source), destination);
}

}  // namespace rmb
