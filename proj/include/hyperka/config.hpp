// Flat "key = value" run configuration shared by every CLI command.

#ifndef HYPERKA_CONFIG_HPP
#define HYPERKA_CONFIG_HPP

#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "hyperka/eval.hpp"
#include "hyperka/kg.hpp"
#include "hyperka/model.hpp"
#include "hyperka/train.hpp"

namespace hyperka {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  Task task = Task::kAlignment;
  ModelConfig model;
  TrainConfig train;
  SelfTrainConfig self_train;
  EvalOptions eval;
  std::string dataset_dir;
  std::string checkpoint = "hyperka.ckpt";
  std::string log = "train.log";
  std::string export_path;
  std::string eval_json = "eval.json";
};

/// Defaults for a task: the DBP15K settings for alignment and the
/// DB111K-174 settings for type inference.
RunConfig default_run_config(Task task = Task::kAlignment);

/// Every accepted key, in dump order.
const std::vector<std::string> &run_config_keys();

/// Throws ConfigError for unknown keys and malformed values.
void apply_setting(RunConfig &config, const std::string &key, const std::string &value);

using Settings = std::vector<std::pair<std::string, std::string>>;

/// Parses "key = value" lines ('#' starts a comment).
Settings parse_settings(const std::string &text, const std::string &origin = "config");

/// Starts from the defaults of the task named by a `task` key (the last one
/// wins), then applies the remaining settings in order.
RunConfig build_run_config(const Settings &settings);

RunConfig load_run_config(const std::filesystem::path &path);

std::string dump_run_config(const RunConfig &config);

}  // namespace hyperka

#endif  // HYPERKA_CONFIG_HPP
