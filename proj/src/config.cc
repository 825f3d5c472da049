#include "rmb/config.h"

#include <charconv>
#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>
#include <variant>

#include "rmb/errors.h"

namespace rmb {

namespace {

struct Number {
  bool is_int = false;
  std::int64_t i = 0;
  double d = 0.0;
};

using Array = std::vector<Number>;
using Value = std::variant<Number, bool, std::string, Array>;

struct Entry {
  std::string key;
  Value value;
  int line = 0;
  bool used = false;
};

struct Section {
  std::string name;
  int line = 0;
  std::vector<Entry> entries;
};

bool is_key_char(char c) { return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_'; }
bool is_id_char(char c) {
  return is_key_char(c) || (c >= 'A' && c <= 'Z') || c == '-';
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

class Parser {
 public:
  Parser(std::string_view source, int line) : source_(source), line_(line) {}

  [[noreturn]] void fail(const std::string& message) const {
    throw ParseError(std::string(source_) + ":" + std::to_string(line_) + ": " + message);
  }

  Value value(std::string_view& s, const std::string& key) {
    s = trim(s);
    if (s.empty()) fail("key '" + key + "' has no value");
    if (s.front() == '"') return string(s, key);
    if (s.front() == '[') return array(s, key);
    if (s.substr(0, 4) == "true") {
      s.remove_prefix(4);
      return true;
    }
    if (s.substr(0, 5) == "false") {
      s.remove_prefix(5);
      return false;
    }
    return number(s, key);
  }

 private:
  std::string string(std::string_view& s, const std::string& key) {
    std::string out;
    std::size_t i = 1;
    for (; i < s.size() && s[i] != '"'; ++i) {
      if (s[i] != '\\') {
        out += s[i];
        continue;
      }
      if (++i == s.size()) break;
      switch (s[i]) {
        case '"': out += '"'; break;
        case '\\': out += '\\'; break;
        case 'n': out += '\n'; break;
        case 't': out += '\t'; break;
        default: fail("key '" + key + "': unsupported escape '\\" + std::string(1, s[i]) + "'");
      }
    }
    if (i >= s.size()) fail("key '" + key + "': unterminated string");
    s.remove_prefix(i + 1);
    return out;
  }

  Number number(std::string_view& s, const std::string& key) {
    std::size_t end = 0;
    while (end < s.size() && s[end] != ',' && s[end] != ']' && s[end] != ' ' && s[end] != '\t') ++end;
    const std::string_view token = s.substr(0, end);
    const bool looks_real = token.find_first_of(".eE") != std::string_view::npos;
    Number n;
    const char* first = token.data();
    const char* last = token.data() + token.size();
    std::from_chars_result r{};
    if (looks_real) {
      r = std::from_chars(first, last, n.d);
    } else {
      n.is_int = true;
      r = std::from_chars(first, last, n.i);
      n.d = static_cast<double>(n.i);
    }
    if (token.empty() || r.ec != std::errc() || r.ptr != last || !std::isfinite(n.d)) {
      fail("key '" + key + "': cannot parse value '" + std::string(token) + "'");
    }
    s.remove_prefix(end);
    return n;
  }

  Array array(std::string_view& s, const std::string& key) {
    s.remove_prefix(1);
    Array out;
    s = trim(s);
    if (!s.empty() && s.front() == ']') {
      s.remove_prefix(1);
      return out;
    }
    while (true) {
      s = trim(s);
      out.push_back(number(s, key));
      s = trim(s);
      if (s.empty()) fail("key '" + key + "': unterminated array");
      if (s.front() == ']') {
        s.remove_prefix(1);
        return out;
      }
      if (s.front() != ',') fail("key '" + key + "': expected ',' or ']' in array");
      s.remove_prefix(1);
    }
  }

  std::string_view source_;
  int line_;
};

std::string_view strip_comment(std::string_view line) {
  bool in_string = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '\\' && in_string) {
      ++i;
    } else if (line[i] == '"') {
      in_string = !in_string;
    } else if (line[i] == '#' && !in_string) {
      return line.substr(0, i);
    }
  }
  return line;
}

bool known_section(std::string_view name) {
  if (name == "experiment" || name == "environment" || name == "training" || name == "bandit") return true;
  if (name.substr(0, 7) != "scorer." || name.size() == 7) return false;
  for (char c : name.substr(7)) {
    if (!is_id_char(c)) return false;
  }
  return true;
}

std::vector<Section> tokenize(std::string_view text, std::string_view source) {
  std::vector<Section> sections;
  int line_no = 0;
  while (!text.empty()) {
    const std::size_t nl = text.find('\n');
    std::string_view raw = text.substr(0, nl);
    text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
    ++line_no;
    Parser parser(source, line_no);
    const std::string_view line = trim(strip_comment(raw));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') parser.fail("malformed section header");
      const std::string name(trim(line.substr(1, line.size() - 2)));
      if (!known_section(name)) parser.fail("unknown section '" + name + "'");
      for (const Section& s : sections) {
        if (s.name == name) parser.fail("duplicate section '" + name + "'");
      }
      sections.push_back({name, line_no, {}});
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos) parser.fail("expected 'key = value'");
    const std::string key(trim(line.substr(0, eq)));
    if (key.empty()) parser.fail("empty key");
    for (char c : key) {
      if (!is_key_char(c)) parser.fail("invalid key '" + key + "'");
    }
    if (sections.empty()) parser.fail("key '" + key + "' outside of any section");
    Section& section = sections.back();
    const std::string qualified = section.name + "." + key;
    for (const Entry& e : section.entries) {
      if (e.key == key) parser.fail("duplicate key '" + qualified + "'");
    }
    std::string_view rest = line.substr(eq + 1);
    Value v = parser.value(rest, qualified);
    if (!trim(rest).empty()) parser.fail("key '" + qualified + "': trailing characters after value");
    section.entries.push_back({key, std::move(v), line_no, false});
  }
  return sections;
}

// Typed, use-tracking access to one section.
class Reader {
 public:
  Reader(Section* section, std::string name, std::string_view source)
      : section_(section), name_(std::move(name)), source_(source) {}

  bool has(const std::string& key) const { return find(key) != nullptr; }

  std::size_t count(const std::string& key) {
    Entry& e = require_entry(key);
    const std::int64_t v = as_int(e);
    if (v < 0) fail(e, "key '" + qualified(key) + "' must be non-negative");
    return static_cast<std::size_t>(v);
  }
  double real(const std::string& key) { return as_real(require_entry(key)); }
  bool boolean(const std::string& key) {
    Entry& e = require_entry(key);
    if (const bool* b = std::get_if<bool>(&e.value)) return *b;
    fail(e, "key '" + qualified(key) + "' expects a boolean");
  }
  std::string text(const std::string& key) {
    Entry& e = require_entry(key);
    if (const std::string* s = std::get_if<std::string>(&e.value)) return *s;
    fail(e, "key '" + qualified(key) + "' expects a string");
  }
  template <class Convert>
  auto choice(const std::string& key, Convert convert) {
    Entry& e = require_entry(key);
    const std::string* s = std::get_if<std::string>(&e.value);
    if (!s) fail(e, "key '" + qualified(key) + "' expects a string");
    try {
      return convert(*s);
    } catch (const ConfigError& err) {
      fail(e, "key '" + qualified(key) + "': " + err.what());
    }
  }
  std::vector<double> reals(const std::string& key) {
    Entry& e = require_entry(key);
    const Array* a = std::get_if<Array>(&e.value);
    if (!a) fail(e, "key '" + qualified(key) + "' expects an array of numbers");
    std::vector<double> out;
    for (const Number& n : *a) out.push_back(n.d);
    return out;
  }
  std::vector<std::uint64_t> seeds(const std::string& key) {
    Entry& e = require_entry(key);
    const Array* a = std::get_if<Array>(&e.value);
    if (!a) fail(e, "key '" + qualified(key) + "' expects an array of integers");
    std::vector<std::uint64_t> out;
    for (const Number& n : *a) {
      if (!n.is_int || n.i < 0) fail(e, "key '" + qualified(key) + "' expects non-negative integers");
      out.push_back(static_cast<std::uint64_t>(n.i));
    }
    return out;
  }

  // Optional fields keep `target` when the key is absent.
  void maybe(const std::string& key, std::size_t& target) {
    if (has(key)) target = count(key);
  }
  void maybe(const std::string& key, double& target) {
    if (has(key)) target = real(key);
  }
  void maybe(const std::string& key, bool& target) {
    if (has(key)) target = boolean(key);
  }
  void maybe(const std::string& key, std::string& target) {
    if (has(key)) target = text(key);
  }

  void reject_unused() const {
    if (!section_) return;
    for (const Entry& e : section_->entries) {
      if (!e.used) {
        throw ParseError(std::string(source_) + ":" + std::to_string(e.line) + ": unknown key '" +
                         qualified(e.key) + "'");
      }
    }
  }

 private:
  Entry* find(const std::string& key) const {
    if (!section_) return nullptr;
    for (Entry& e : section_->entries) {
      if (e.key == key) return &e;
    }
    return nullptr;
  }

  Entry& require_entry(const std::string& key) {
    Entry* e = find(key);
    if (!e) {
      const std::string where = section_ ? std::to_string(section_->line) : "end of input";
      throw ParseError(std::string(source_) + ":" + where + ": missing required key '" + qualified(key) + "'");
    }
    e->used = true;
    return *e;
  }

  std::int64_t as_int(const Entry& e) const {
    const Number* n = std::get_if<Number>(&e.value);
    if (!n || !n->is_int) fail(e, "key '" + qualified(e.key) + "' expects an integer");
    return n->i;
  }

  double as_real(const Entry& e) const {
    const Number* n = std::get_if<Number>(&e.value);
    if (!n) fail(e, "key '" + qualified(e.key) + "' expects a number");
    return n->d;
  }

  std::string qualified(const std::string& key) const { return name_ + "." + key; }

  [[noreturn]] void fail(const Entry& e, const std::string& message) const {
    throw ParseError(std::string(source_) + ":" + std::to_string(e.line) + ": " + message);
  }

  Section* section_;
  std::string name_;
  std::string_view source_;
};

Section* find_section(std::vector<Section>& sections, std::string_view name) {
  for (Section& s : sections) {
    if (s.name == name) return &s;
  }
  return nullptr;
}

template <class Enum, class Convert>
Enum optional_choice(Reader& r, const std::string& key, Enum fallback, Convert convert) {
  return r.has(key) ? r.choice(key, convert) : fallback;
}

std::string format_real(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  std::string out(buf, r.ptr);
  if (out.find_first_of(".eEn") == std::string::npos) out += ".0";
  return out;
}

std::string quoted(std::string_view s) {
  std::string out = "\"";
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      default: out += c;
    }
  }
  return out + "\"";
}

}  // namespace

std::string_view to_string(RunMode mode) { return mode == RunMode::kTrain ? "train" : "best_of_n"; }

RunMode run_mode_from_string(std::string_view text) {
  if (text == "train") return RunMode::kTrain;
  if (text == "best_of_n") return RunMode::kBestOfN;
  throw ConfigError("unknown mode '" + std::string(text) + "'");
}

ScorerPool ExperimentConfig::pool() const {
  ScorerPool base(scorers);
  return injected_noise > 0.0 ? base.with_injected_noise(injected_noise) : base;
}

ExperimentConfig parse_config_text(std::string_view text, std::string_view source) {
  std::vector<Section> sections = tokenize(text, source);
  ExperimentConfig c;

  Reader ex(find_section(sections, "experiment"), "experiment", source);
  c.strategy = ex.choice("strategy", strategy_from_string);
  c.mode = optional_choice(ex, "mode", c.mode, run_mode_from_string);
  c.seeds = ex.seeds("seeds");
  c.out_dir = ex.text("out_dir");
  ex.maybe("threads", c.threads);
  ex.maybe("utilization_window", c.utilization_window);
  ex.maybe("injected_noise", c.injected_noise);
  ex.reject_unused();

  Reader en(find_section(sections, "environment"), "environment", source);
  EnvironmentConfig& e = c.environment;
  en.maybe("categories", e.categories);
  en.maybe("queries_per_category", e.queries_per_category);
  en.maybe("dim", e.dim);
  en.maybe("universe_size", e.universe_size);
  en.maybe("train_fraction", e.train_fraction);
  en.maybe("dev_fraction", e.dev_fraction);
  en.maybe("test_fraction", e.test_fraction);
  en.maybe("centroid_jitter", e.centroid_jitter);
  en.maybe("gold_sharpness", e.gold_sharpness);
  en.maybe("gold_jitter", e.gold_jitter);
  if (en.has("max_response_length")) e.max_response_length = static_cast<int>(en.count("max_response_length"));
  if (en.has("world_seed")) e.world_seed = en.count("world_seed");
  en.maybe("dataset_label", e.dataset_label);
  en.reject_unused();

  Reader tr(find_section(sections, "training"), "training", source);
  TrainConfig& t = c.training;
  tr.maybe("iterations", t.iterations);
  tr.maybe("steps_per_iteration", t.steps_per_iteration);
  tr.maybe("batch_size", t.batch_size);
  tr.maybe("pairs_per_query", t.pairs_per_query);
  tr.maybe("samples_per_query", t.samples_per_query);
  tr.maybe("temperature", t.temperature);
  tr.maybe("beta", t.beta);
  tr.maybe("learning_rate", t.learning_rate);
  t.loss_mode = optional_choice(tr, "loss_mode", t.loss_mode, loss_mode_from_string);
  t.batch_sampling = optional_choice(tr, "batch_sampling", t.batch_sampling, batch_sampling_from_string);
  tr.maybe("policy_init_alignment", t.policy_init_alignment);
  tr.maybe("ensemble_eta", t.ensemble_eta);
  tr.maybe("z_normalize_scores", t.z_normalize_scores);
  tr.maybe("agreement_candidates", t.agreement_candidates);
  if (tr.has("fixed_arm")) t.fixed_arm = tr.count("fixed_arm");
  tr.reject_unused();

  Reader ba(find_section(sections, "bandit"), "bandit", source);
  ba.maybe("alpha", t.bandit.alpha);
  ba.maybe("gamma", t.bandit.gamma);
  ba.maybe("b_init_sigma", t.bandit.b_init_sigma);
  ba.maybe("per_arm_history", t.bandit.per_arm_history);
  ba.reject_unused();
  t.bandit.algorithm = c.strategy == StrategyTag::kLaserExp3 ? BanditAlgorithm::kExp3 : BanditAlgorithm::kLinUcb;

  for (Section& s : sections) {
    if (s.name.substr(0, 7) != "scorer.") continue;
    Reader sc(&s, s.name, source);
    ScorerSpec spec;
    spec.id = s.name.substr(7);
    spec.affinity = sc.reals("affinity");
    spec.noise_sigma = sc.real("noise_sigma");
    sc.maybe("bias", spec.bias);
    sc.reject_unused();
    c.scorers.push_back(std::move(spec));
  }
  if (c.scorers.empty()) {
    throw ParseError(std::string(source) + ": at least one [scorer.<id>] section is required");
  }
  return c;
}

ExperimentConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open config file " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_config_text(buffer.str(), path.string());
}

std::string format_config(const ExperimentConfig& c) {
  std::ostringstream o;
  const EnvironmentConfig& e = c.environment;
  const TrainConfig& t = c.training;
  o << "[experiment]\n"
    << "strategy = " << quoted(to_string(c.strategy)) << "\n"
    << "mode = " << quoted(to_string(c.mode)) << "\n"
    << "seeds = [";
  for (std::size_t i = 0; i < c.seeds.size(); ++i) o << (i ? ", " : "") << c.seeds[i];
  o << "]\n"
    << "out_dir = " << quoted(c.out_dir.string()) << "\n"
    << "threads = " << c.threads << "\n"
    << "utilization_window = " << format_real(c.utilization_window) << "\n"
    << "injected_noise = " << format_real(c.injected_noise) << "\n\n";

  o << "[environment]\n"
    << "categories = " << e.categories << "\n"
    << "queries_per_category = " << e.queries_per_category << "\n"
    << "dim = " << e.dim << "\n"
    << "universe_size = " << e.universe_size << "\n"
    << "train_fraction = " << format_real(e.train_fraction) << "\n"
    << "dev_fraction = " << format_real(e.dev_fraction) << "\n"
    << "test_fraction = " << format_real(e.test_fraction) << "\n"
    << "centroid_jitter = " << format_real(e.centroid_jitter) << "\n"
    << "gold_sharpness = " << format_real(e.gold_sharpness) << "\n"
    << "gold_jitter = " << format_real(e.gold_jitter) << "\n"
    << "max_response_length = " << e.max_response_length << "\n";
  if (e.world_seed) o << "world_seed = " << *e.world_seed << "\n";
  o << "dataset_label = " << quoted(e.dataset_label) << "\n\n";

  o << "[training]\n"
    << "iterations = " << t.iterations << "\n"
    << "steps_per_iteration = " << t.steps_per_iteration << "\n"
    << "batch_size = " << t.batch_size << "\n"
    << "pairs_per_query = " << t.pairs_per_query << "\n"
    << "samples_per_query = " << t.samples_per_query << "\n"
    << "temperature = " << format_real(t.temperature) << "\n"
    << "beta = " << format_real(t.beta) << "\n"
    << "learning_rate = " << format_real(t.learning_rate) << "\n"
    << "loss_mode = " << quoted(to_string(t.loss_mode)) << "\n"
    << "batch_sampling = " << quoted(to_string(t.batch_sampling)) << "\n"
    << "policy_init_alignment = " << format_real(t.policy_init_alignment) << "\n"
    << "ensemble_eta = " << format_real(t.ensemble_eta) << "\n"
    << "z_normalize_scores = " << (t.z_normalize_scores ? "true" : "false") << "\n"
    << "agreement_candidates = " << t.agreement_candidates << "\n";
  if (t.fixed_arm) o << "fixed_arm = " << *t.fixed_arm << "\n";
  o << "\n[bandit]\n"
    << "alpha = " << format_real(t.bandit.alpha) << "\n"
    << "gamma = " << format_real(t.bandit.gamma) << "\n"
    << "b_init_sigma = " << format_real(t.bandit.b_init_sigma) << "\n"
    << "per_arm_history = " << (t.bandit.per_arm_history ? "true" : "false") << "\n";

  for (const ScorerSpec& s : c.scorers) {
    o << "\n[scorer." << s.id << "]\naffinity = [";
    for (std::size_t i = 0; i < s.affinity.size(); ++i) o << (i ? ", " : "") << format_real(s.affinity[i]);
    o << "]\nnoise_sigma = " << format_real(s.noise_sigma) << "\nbias = " << format_real(s.bias) << "\n";
  }
  return o.str();
}

void validate_config(const ExperimentConfig& c) {
  if (c.seeds.empty()) throw ConfigError("experiment.seeds must not be empty");
  for (std::size_t i = 0; i < c.seeds.size(); ++i) {
    for (std::size_t j = i + 1; j < c.seeds.size(); ++j) {
      if (c.seeds[i] == c.seeds[j]) throw ConfigError("experiment.seeds contains " + std::to_string(c.seeds[i]) + " twice");
    }
  }
  if (c.out_dir.empty()) throw ConfigError("experiment.out_dir must not be empty");
  if (c.threads == 0) throw ConfigError("experiment.threads must be positive");
  if (!(c.utilization_window > 0.0 && c.utilization_window <= 1.0)) {
    throw ConfigError("experiment.utilization_window must be in (0, 1]");
  }
  if (!(c.injected_noise >= 0.0)) throw ConfigError("experiment.injected_noise must be non-negative");
  if (c.mode == RunMode::kBestOfN && !is_bandit_strategy(c.strategy)) {
    throw ConfigError("best_of_n mode needs a bandit strategy (laser_linucb or laser_exp3)");
  }
  if (c.environment.categories == 0) throw ConfigError("environment.categories must be positive");
  if (c.environment.dim == 0) throw ConfigError("environment.dim must be positive");
  if (c.environment.max_response_length < 1) throw ConfigError("environment.max_response_length must be >= 1");
  validate_pool(c.pool(), c.environment.categories);
}

}  // namespace rmb
