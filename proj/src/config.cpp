#include "hmlab/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace hmlab {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double parse_plain(std::string_view text) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw ConfigError("not a number: '" + std::string(text) + "'");
  }
  return v;
}

std::uint64_t parse_unsigned(std::string_view text) {
  text = trim(text);
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw ConfigError("not a non-negative integer: '" + std::string(text) + "'");
  }
  return v;
}

bool parse_bool(std::string_view text) {
  text = trim(text);
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ConfigError("not a boolean: '" + std::string(text) + "'");
}

std::vector<std::size_t> parse_list(std::string_view text) {
  std::vector<std::size_t> out;
  text = trim(text);
  if (text.empty() || text == "none") return out;
  while (!text.empty()) {
    const auto comma = text.find(',');
    out.push_back(parse_unsigned(text.substr(0, comma)));
    if (comma == std::string_view::npos) break;
    text.remove_prefix(comma + 1);
  }
  return out;
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string format_list(const std::vector<std::size_t>& v) {
  if (v.empty()) return "none";
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

struct Field {
  std::function<void(TrainConfig&, std::string_view)> set;
  std::function<std::string(const TrainConfig&)> get;
};

template <class T>
Field size_field(T TrainConfig::*m) {
  return {[m](TrainConfig& c, std::string_view v) { c.*m = static_cast<T>(parse_unsigned(v)); },
          [m](const TrainConfig& c) { return std::to_string(c.*m); }};
}

Field double_field(double TrainConfig::*m) {
  return {[m](TrainConfig& c, std::string_view v) { c.*m = parse_number(v); },
          [m](const TrainConfig& c) { return format_double(c.*m); }};
}

Field string_field(std::string TrainConfig::*m) {
  return {[m](TrainConfig& c, std::string_view v) { c.*m = std::string(trim(v)); },
          [m](const TrainConfig& c) { return c.*m; }};
}

// Ordered list so serialized configs are stable.
const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = {
      {"epochs", size_field(&TrainConfig::epochs)},
      {"classes_per_batch", size_field(&TrainConfig::classes_per_batch)},
      {"samples_per_class", size_field(&TrainConfig::samples_per_class)},
      {"lr", double_field(&TrainConfig::lr)},
      {"gamma", double_field(&TrainConfig::gamma)},
      {"lambda", double_field(&TrainConfig::lambda)},
      {"epsilon", double_field(&TrainConfig::epsilon)},
      {"alpha", double_field(&TrainConfig::alpha)},
      {"pgd_steps", size_field(&TrainConfig::pgd_steps)},
      {"eval_pgd_steps", size_field(&TrainConfig::eval_pgd_steps)},
      {"attack_candidates", size_field(&TrainConfig::attack_candidates)},
      {"defense", string_field(&TrainConfig::defense)},
      {"source", string_field(&TrainConfig::source)},
      {"destination", string_field(&TrainConfig::destination)},
      {"seed", size_field(&TrainConfig::seed)},
      {"u", double_field(&TrainConfig::u)},
      {"xi", double_field(&TrainConfig::xi)},
      {"classes", size_field(&TrainConfig::classes)},
      {"input_dim", size_field(&TrainConfig::input_dim)},
      {"train_per_class", size_field(&TrainConfig::train_per_class)},
      {"eval_per_class", size_field(&TrainConfig::eval_per_class)},
      {"sigma", double_field(&TrainConfig::sigma)},
      {"data_seed", size_field(&TrainConfig::data_seed)},
      {"hidden",
       {[](TrainConfig& c, std::string_view v) { c.hidden = parse_list(v); },
        [](const TrainConfig& c) { return format_list(c.hidden); }}},
      {"embedding_dim", size_field(&TrainConfig::embedding_dim)},
      {"collapse_threshold", double_field(&TrainConfig::collapse_threshold)},
      {"collapse_patience", size_field(&TrainConfig::collapse_patience)},
      {"final_attacks",
       {[](TrainConfig& c, std::string_view v) { c.final_attacks = parse_bool(v); },
        [](const TrainConfig& c) { return std::string(c.final_attacks ? "true" : "false"); }}},
  };
  return table;
}

}  // namespace

double parse_number(std::string_view text) {
  text = trim(text);
  if (const auto slash = text.find('/'); slash != std::string_view::npos) {
    const double num = parse_plain(trim(text.substr(0, slash)));
    const double den = parse_plain(trim(text.substr(slash + 1)));
    if (den == 0.0) throw ConfigError("zero denominator in '" + std::string(text) + "'");
    return num / den;
  }
  return parse_plain(text);
}

void set_field(TrainConfig& config, std::string_view key, std::string_view value) {
  key = trim(key);
  for (const auto& [name, field] : fields()) {
    if (name == key) {
      try {
        field.set(config, value);
      } catch (const ConfigError& e) {
        throw ConfigError(std::string(key) + ": " + e.what());
      }
      return;
    }
  }
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& [name, field] : fields()) keys.push_back(name);
  return keys;
}

TrainConfig parse_config_text(std::string_view text, TrainConfig base) {
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    }
    set_field(base, line.substr(0, eq), line.substr(eq + 1));
  }
  return base;
}

TrainConfig load_config(const std::filesystem::path& path, TrainConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), std::move(base));
}

std::string to_config_text(const TrainConfig& config) {
  std::string out;
  for (const auto& [name, field] : fields()) out += name + " = " + field.get(config) + "\n";
  return out;
}

nlohmann::json to_json(const TrainConfig& config) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [name, field] : fields()) j[name] = field.get(config);
  return j;
}

void TrainConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(what);
  };
  require(classes_per_batch >= 2, "classes_per_batch must be >= 2");
  require(samples_per_class >= 2, "samples_per_class must be >= 2");
  require(lr > 0.0, "lr must be positive");
  require(gamma > 0.0, "gamma must be positive");
  require(lambda >= 0.0, "lambda must be >= 0");
  require(epsilon >= 0.0, "epsilon must be >= 0");
  require(alpha > 0.0, "alpha must be positive");
  require(u >= 0.0, "u must be >= 0 (0 selects gamma)");
  require(xi >= 0.0, "xi must be >= 0");
  require(classes >= classes_per_batch, "classes must be >= classes_per_batch");
  require(input_dim > 0 && embedding_dim > 0, "dimensions must be positive");
  require(train_per_class >= 2 * samples_per_class, "train_per_class must be >= 2 * samples_per_class");
  require(eval_per_class >= 4, "eval_per_class must be >= 4");
  require(sigma >= 0.0, "sigma must be >= 0");
  require(collapse_threshold > -1.0 && collapse_threshold <= 1.0, "collapse_threshold must lie in (-1, 1]");
  require(collapse_patience >= 1, "collapse_patience must be >= 1");
  require(attack_candidates >= 1, "attack_candidates must be >= 1");
  for (std::size_t h : hidden) require(h > 0, "hidden widths must be positive");
  defense_spec().validate();
  attack_config().budget.validate();
}

DefenseSpec TrainConfig::defense_spec() const {
  DefenseSpec spec;
  spec.kind = parse_defense(defense);
  spec.source = parse_strategy(source);
  spec.destination = parse_destination(destination, xi);
  spec.lambda = lambda;
  spec.gamma = gamma;
  spec.budget = PerturbationBudget{epsilon, alpha, pgd_steps, 0.0, 1.0};
  return spec;
}

DatasetConfig TrainConfig::dataset_config() const {
  return {classes, input_dim, train_per_class, eval_per_class, sigma, data_seed};
}

EncoderConfig TrainConfig::encoder_config() const { return {input_dim, hidden, embedding_dim, seed}; }

AttackConfig TrainConfig::attack_config() const {
  AttackConfig a;
  a.budget = PerturbationBudget{epsilon, alpha, eval_pgd_steps, 0.0, 1.0};
  a.candidates_per_class = attack_candidates;
  a.seed = seed;
  return a;
}

}  // namespace hmlab
