#include "hyperka/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace hyperka {

RunConfig default_run_config(Task task) {
  RunConfig c;
  c.task = task;
  if (task == Task::kTypeInference) {
    c.model.dim_kg1 = 75;
    c.model.dim_kg2 = 15;
    c.model.num_layers = 3;
    c.train.lr = 0.0005;
    c.train.batch_size = 20000;
    c.train.neg_samples = 30;
    c.train.margin_rel = 0.2;
    c.train.margin_proj = 0.1;
    c.train.epochs = 100;
    c.train.neg_strategy = NegStrategy::kUniform;
    c.eval.metric = RankMetric::kHyperbolic;
    c.eval.hits = {1, 3};
  } else {
    c.model.dim_kg1 = 75;
    c.model.dim_kg2 = 75;
    c.model.num_layers = 2;
    c.train.lr = 0.0002;
    c.train.batch_size = 20000;
    c.train.neg_samples = 40;
    c.train.margin_rel = 0.1;
    c.train.margin_proj = 0.4;
    c.train.epochs = 800;
    c.train.neg_strategy = NegStrategy::kTruncated;
    c.eval.metric = RankMetric::kCsls;
    c.eval.hits = {1, 10};
  }
  return c;
}

namespace {

std::string trim(const std::string &s) {
  const auto b = s.find_first_not_of(" \t\r");
  const auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

// shortest text that parses back to the same double
std::string fmt(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string fmt(bool v) { return v ? "true" : "false"; }

template <typename Int>
Int parse_int(const std::string &key, const std::string &value) {
  Int out{};
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw ConfigError("'" + key + "': expected an integer, got '" + value + "'");
  }
  return out;
}

double parse_double(const std::string &key, const std::string &value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used == value.size()) return v;
  } catch (const std::exception &) {
  }
  throw ConfigError("'" + key + "': expected a number, got '" + value + "'");
}

bool parse_bool(const std::string &key, const std::string &value) {
  if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
  if (value == "false" || value == "0" || value == "no" || value == "off") return false;
  throw ConfigError("'" + key + "': expected true or false, got '" + value + "'");
}

std::vector<int> parse_int_list(const std::string &key, const std::string &value) {
  std::vector<int> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_int<int>(key, trim(item)));
  if (out.empty()) throw ConfigError("'" + key + "': expected a comma-separated list");
  return out;
}

template <typename Fn>
auto parse_enum(const std::string &key, const std::string &value, Fn fn) {
  try {
    return fn(value);
  } catch (const std::invalid_argument &e) {
    throw ConfigError("'" + key + "': " + e.what());
  }
}

struct Field {
  std::function<void(RunConfig &, const std::string &)> set;
  std::function<std::string(const RunConfig &)> get;
};

using FieldTable = std::vector<std::pair<std::string, Field>>;

const FieldTable &fields() {
  static const FieldTable table = [] {
    FieldTable t;
    auto add = [&](std::string key, Field f) { t.emplace_back(std::move(key), std::move(f)); };
#define HYPERKA_DOUBLE(KEY, MEMBER)                                                          \
  add(KEY, {[](RunConfig &c, const std::string &v) { c.MEMBER = parse_double(KEY, v); },     \
            [](const RunConfig &c) { return fmt(double(c.MEMBER)); }})
#define HYPERKA_INT(KEY, MEMBER)                                                             \
  add(KEY, {[](RunConfig &c, const std::string &v) {                                        \
              c.MEMBER = parse_int<std::decay_t<decltype(c.MEMBER)>>(KEY, v);               \
            },                                                                               \
            [](const RunConfig &c) { return std::to_string(c.MEMBER); }})
#define HYPERKA_BOOL(KEY, MEMBER)                                                            \
  add(KEY, {[](RunConfig &c, const std::string &v) { c.MEMBER = parse_bool(KEY, v); },       \
            [](const RunConfig &c) { return fmt(bool(c.MEMBER)); }})
#define HYPERKA_STRING(KEY, MEMBER)                                                          \
  add(KEY, {[](RunConfig &c, const std::string &v) { c.MEMBER = v; },                        \
            [](const RunConfig &c) { return c.MEMBER; }})
#define HYPERKA_ENUM(KEY, MEMBER, PARSE)                                                     \
  add(KEY, {[](RunConfig &c, const std::string &v) { c.MEMBER = parse_enum(KEY, v, PARSE); }, \
            [](const RunConfig &c) { return to_string(c.MEMBER); }})

    HYPERKA_ENUM("task", task, task_from_string);
    HYPERKA_STRING("dataset_dir", dataset_dir);
    HYPERKA_STRING("checkpoint", checkpoint);
    HYPERKA_STRING("log", log);
    HYPERKA_STRING("export", export_path);
    HYPERKA_STRING("eval_json", eval_json);

    HYPERKA_INT("dim_kg1", model.dim_kg1);
    HYPERKA_INT("dim_kg2", model.dim_kg2);
    HYPERKA_INT("num_layers", model.num_layers);
    HYPERKA_ENUM("activation", model.activation, activation_from_string);
    HYPERKA_ENUM("combine_final", model.combine_final, combine_final_from_string);
    HYPERKA_ENUM("pooling", model.pooling, pooling_from_string);
    HYPERKA_INT("max_neighbors", model.max_neighbors);
    HYPERKA_DOUBLE("ball_eps", model.geometry.ball_eps);
    HYPERKA_DOUBLE("acosh_eps", model.geometry.acosh_eps);

    HYPERKA_DOUBLE("lr", train.lr);
    HYPERKA_INT("batch_size", train.batch_size);
    HYPERKA_INT("neg_samples", train.neg_samples);
    HYPERKA_DOUBLE("margin_rel", train.margin_rel);
    HYPERKA_DOUBLE("margin_proj", train.margin_proj);
    HYPERKA_INT("epochs", train.epochs);
    HYPERKA_ENUM("neg_strategy", train.neg_strategy, neg_strategy_from_string);
    HYPERKA_DOUBLE("trunc_frac", train.trunc_frac);
    HYPERKA_INT("trunc_refresh", train.trunc_refresh);
    HYPERKA_BOOL("rel_loss", train.rel_loss);
    HYPERKA_ENUM("optimizer", train.optimizer, optimizer_from_string);
    HYPERKA_DOUBLE("adam_beta1", train.adam_beta1);
    HYPERKA_DOUBLE("adam_beta2", train.adam_beta2);
    HYPERKA_DOUBLE("adam_eps", train.adam_eps);
    HYPERKA_BOOL("fixed_negatives", train.fixed_negatives);
    HYPERKA_INT("seed", train.seed);
    HYPERKA_INT("threads", train.threads);
    HYPERKA_INT("validate_every", train.validate_every);

    HYPERKA_BOOL("self_train", self_train.enabled);
    HYPERKA_DOUBLE("semi_epsilon", self_train.epsilon);
    HYPERKA_DOUBLE("semi_mu", self_train.mu);
    HYPERKA_INT("semi_propose_every", self_train.propose_every);
    HYPERKA_BOOL("semi_mutual_nearest", self_train.mutual_nearest);

    add("csls", {[](RunConfig &c, const std::string &v) {
                   c.eval.metric = parse_bool("csls", v) ? RankMetric::kCsls
                                                         : RankMetric::kHyperbolic;
                 },
                 [](const RunConfig &c) { return fmt(c.eval.metric == RankMetric::kCsls); }});
    HYPERKA_INT("csls_k", eval.csls_k);
    add("hits", {[](RunConfig &c, const std::string &v) { c.eval.hits = parse_int_list("hits", v); },
                 [](const RunConfig &c) {
                   std::string s;
                   for (std::size_t i = 0; i < c.eval.hits.size(); ++i) {
                     if (i) s += ',';
                     s += std::to_string(c.eval.hits[i]);
                   }
                   return s;
                 }});
#undef HYPERKA_DOUBLE
#undef HYPERKA_INT
#undef HYPERKA_BOOL
#undef HYPERKA_STRING
#undef HYPERKA_ENUM
    return t;
  }();
  return table;
}

const Field *find_field(const std::string &key) {
  for (const auto &[name, field] : fields()) {
    if (name == key) return &field;
  }
  return nullptr;
}

}  // namespace

const std::vector<std::string> &run_config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto &[name, field] : fields()) k.push_back(name);
    return k;
  }();
  return keys;
}

void apply_setting(RunConfig &config, const std::string &key, const std::string &value) {
  const Field *f = find_field(key);
  if (!f) throw ConfigError("unknown config key '" + key + "'");
  f->set(config, value);
}

Settings parse_settings(const std::string &text, const std::string &origin) {
  Settings out;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected key = value");
    }
    out.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return out;
}

RunConfig build_run_config(const Settings &settings) {
  Task task = Task::kAlignment;
  for (const auto &[key, value] : settings) {
    if (key == "task") task = parse_enum(key, value, task_from_string);
  }
  RunConfig config = default_run_config(task);
  for (const auto &[key, value] : settings) {
    if (key != "task") apply_setting(config, key, value);
  }
  return config;
}

RunConfig load_run_config(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return build_run_config(parse_settings(buf.str(), path.filename().string()));
}

std::string dump_run_config(const RunConfig &config) {
  std::string out;
  for (const auto &[name, field] : fields()) out += name + " = " + field.get(config) + '\n';
  return out;
}

}  // namespace hyperka
