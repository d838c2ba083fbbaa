// hyperka command-line driver.
//
// Exit status: 0 success, 1 runtime failure, 2 usage or configuration error.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hyperka/config.hpp"
#include "hyperka/eval.hpp"
#include "hyperka/kg.hpp"
#include "hyperka/model.hpp"
#include "hyperka/train.hpp"

namespace fs = std::filesystem;
using namespace hyperka;

namespace {

constexpr int kOk = 0;
constexpr int kRuntime = 1;
constexpr int kUsage = 2;

// Anything that should end the process with exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigArgs {
  std::string config_file;
  std::vector<std::string> sets;
  std::optional<std::string> dataset;
  std::optional<std::string> checkpoint;
  std::optional<int> epochs;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
};

void add_config_options(CLI::App *cmd, ConfigArgs &a) {
  cmd->add_option("-c,--config", a.config_file, "key = value config file");
  cmd->add_option("--set", a.sets, "override a config key (key=value), repeatable");
  cmd->add_option("--dataset", a.dataset, "dataset directory");
  cmd->add_option("--checkpoint", a.checkpoint, "checkpoint path");
  cmd->add_option("--epochs", a.epochs, "training epochs");
  cmd->add_option("--seed", a.seed, "random seed");
  cmd->add_option("--threads", a.threads, "worker threads");
}

std::optional<std::uint64_t> env_seed() {
  const char *v = std::getenv("HYPERKA_SEED");
  if (!v || !*v) return std::nullopt;
  std::uint64_t out = 0;
  std::istringstream in(v);
  if (!(in >> out) || !in.eof()) throw UsageError(std::string("HYPERKA_SEED is not an integer: ") + v);
  return out;
}

// The task named by a dataset manifest, if any.
std::optional<std::string> manifest_task(const std::string &dir) {
  std::ifstream in(fs::path(dir) / "manifest");
  if (!in) return std::nullopt;
  std::stringstream buf;
  buf << in.rdbuf();
  for (const auto &[k, v] : parse_settings(buf.str(), "manifest")) {
    if (k == "format") return v;
  }
  return std::nullopt;
}

// Without an explicit `task` key the dataset manifest picks the task, and
// with it the task defaults.
// Precedence: task defaults < config file < HYPERKA_SEED < command-line flags.
RunConfig resolve_config(const ConfigArgs &a) {
  Settings settings;
  if (!a.config_file.empty()) {
    std::ifstream in(a.config_file);
    if (!in) throw ConfigError("cannot read config file " + a.config_file);
    std::stringstream buf;
    buf << in.rdbuf();
    settings = parse_settings(buf.str(), a.config_file);
  }
  if (const auto s = env_seed()) settings.emplace_back("seed", std::to_string(*s));
  for (const auto &kv : a.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    settings.emplace_back(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (a.dataset) settings.emplace_back("dataset_dir", *a.dataset);
  if (a.checkpoint) settings.emplace_back("checkpoint", *a.checkpoint);
  if (a.epochs) settings.emplace_back("epochs", std::to_string(*a.epochs));
  if (a.seed) settings.emplace_back("seed", std::to_string(*a.seed));
  if (a.threads) settings.emplace_back("threads", std::to_string(*a.threads));
  std::string dir;
  bool has_task = false;
  for (const auto &[k, v] : settings) {
    if (k == "dataset_dir") dir = v;
    if (k == "task") has_task = true;
  }
  if (!has_task && !dir.empty()) {
    if (const auto t = manifest_task(dir)) settings.insert(settings.begin(), {"task", *t});
  }
  return build_run_config(settings);
}

DatasetBundle load_bundle(const RunConfig &rc) {
  if (rc.dataset_dir.empty()) throw UsageError("no dataset given (--dataset or dataset_dir)");
  if (!fs::is_directory(rc.dataset_dir)) {
    throw UsageError("dataset directory not found: " + rc.dataset_dir);
  }
  return load_dataset(rc.dataset_dir, rc.task);
}

void print_report(const EvalReport &r, std::ostream &out) {
  char buf[64];
  for (const auto &[k, v] : r.hits_at) {
    std::snprintf(buf, sizeof buf, "H@%d %.3f\n", k, v);
    out << buf;
  }
  std::snprintf(buf, sizeof buf, "MRR %.3f\n", r.mrr);
  out << buf;
  out << "queries " << r.num_queries << (r.csls_used ? "  (csls k=" + std::to_string(r.k_csls) + ")" : "")
      << '\n';
}

void write_json(const std::string &path, const EvalReport &r) {
  if (path.empty()) return;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << report_to_json(r) << '\n';
}

Checkpoint load_checked(const RunConfig &rc, const DatasetBundle &bundle) {
  if (!fs::exists(rc.checkpoint)) throw UsageError("checkpoint not found: " + rc.checkpoint);
  Checkpoint ck = load_checkpoint(rc.checkpoint);
  try {
    check_shapes(ck.params, bundle, ck.config);
  } catch (const std::invalid_argument &e) {
    throw UsageError(std::string("checkpoint does not match dataset: ") + e.what());
  }
  return ck;
}

int cmd_train(const ConfigArgs &a, bool dump_only) {
  RunConfig rc = resolve_config(a);
  if (dump_only) {
    std::cout << dump_run_config(rc);
    return kOk;
  }
  const DatasetBundle bundle = load_bundle(rc);

  std::ofstream log;
  TrainHooks hooks;
  if (!rc.log.empty()) {
    log.open(rc.log, std::ios::app);
    if (!log) throw std::runtime_error("cannot write " + rc.log);
    hooks.log = &log;
  }
  if (rc.train.validate_every > 0) {
    hooks.validate = [&](const ModelParams &p) {
      return rank_all(p, bundle, rc.model, bundle.associations.test_pairs, rc.eval).hits_at.begin()->second;
    };
  }

  TrainResult result;
  try {
    result = train(bundle, rc.model, rc.train, rc.self_train, hooks);
  } catch (const TrainingDiverged &e) {
    save_checkpoint(rc.checkpoint, e.last_good(), rc.model);
    std::cerr << "error: " << e.what() << " (last good parameters saved to " << rc.checkpoint
              << ")\n";
    return kRuntime;
  }
  save_checkpoint(rc.checkpoint, result.params, rc.model);
  std::cout << "checkpoint " << rc.checkpoint << '\n';

  if (!bundle.associations.test_pairs.empty()) {
    const EvalReport r =
        rank_all(result.params, bundle, rc.model, bundle.associations.test_pairs, rc.eval);
    print_report(r, std::cout);
    write_json(rc.eval_json, r);
  }
  if (!rc.export_path.empty()) export_embeddings(result.params, bundle, rc.model, rc.export_path);
  return kOk;
}

int cmd_eval(const ConfigArgs &a, const std::optional<std::string> &hits,
             const std::optional<bool> &csls, const std::optional<int> &csls_k,
             const std::optional<std::string> &json, const std::string &split) {
  ConfigArgs args = a;
  if (hits) args.sets.push_back("hits=" + *hits);
  if (csls) args.sets.push_back(std::string("csls=") + (*csls ? "true" : "false"));
  if (csls_k) args.sets.push_back("csls_k=" + std::to_string(*csls_k));
  if (json) args.sets.push_back("eval_json=" + *json);
  const RunConfig rc = resolve_config(args);
  const DatasetBundle bundle = load_bundle(rc);
  const Checkpoint ck = load_checked(rc, bundle);

  const auto &pairs =
      split == "train" ? bundle.associations.train_pairs : bundle.associations.test_pairs;
  if (pairs.empty()) throw UsageError("the " + split + " split is empty");
  const EvalReport r = rank_all(ck.params, bundle, ck.config, pairs, rc.eval);
  print_report(r, std::cout);
  write_json(rc.eval_json, r);
  return kOk;
}

int cmd_export(const ConfigArgs &a, const std::string &out) {
  const RunConfig rc = resolve_config(a);
  const DatasetBundle bundle = load_bundle(rc);
  const Checkpoint ck = load_checked(rc, bundle);
  const std::string path = out.empty() ? rc.export_path : out;
  if (path.empty()) throw UsageError("no output path (--out or export)");
  export_embeddings(ck.params, bundle, ck.config, path);
  std::cout << "wrote " << path << '\n';
  return kOk;
}

int cmd_gradcheck(GradCheckOptions o, bool seed_given) {
  if (!seed_given) {
    if (const auto s = env_seed()) o.seed = *s;
  }
  const GradCheckReport r = gradient_check(o);
  char buf[96];
  for (const auto &g : r.groups) {
    std::snprintf(buf, sizeof buf, "%-22s %.3e\n", g.name.c_str(), g.max_rel_error);
    std::cout << buf;
  }
  std::snprintf(buf, sizeof buf, "step %.3g  max relative error %.3e  tolerance %.0e\n", r.step,
                r.max_rel_error, kGradCheckTolerance);
  std::cout << buf << (r.pass ? "PASS" : "FAIL") << '\n';
  return r.pass ? kOk : kRuntime;
}

struct SynthArgs {
  std::string out;
  bool typed = false;
  SyntheticOptions alignment;
  TypedSyntheticOptions typing;
  std::optional<double> train_fraction;
  bool seed_given = false;
};

int cmd_synth(SynthArgs s) {
  if (!s.seed_given) {
    if (const auto seed = env_seed()) s.alignment.seed = s.typing.seed = *seed;
  }
  if (s.train_fraction) s.alignment.train_fraction = s.typing.train_fraction = *s.train_fraction;
  const DatasetBundle b = s.typed ? generate_typed_pair(s.typing) : generate_synthetic_pair(s.alignment);
  save_dataset(b, s.out);
  std::cout << "wrote " << s.out << '\n';
  return kOk;
}

void print_graph(const char *name, const GraphStats &g) {
  std::printf("%s  objects %lld  relations %lld  triples %lld  mean degree %.3f\n", name,
              static_cast<long long>(g.num_objects), static_cast<long long>(g.num_relations),
              static_cast<long long>(g.num_triples), g.mean_degree);
}

int cmd_stats(const ConfigArgs &a) {
  const RunConfig rc = resolve_config(a);
  const DatasetBundle bundle = load_bundle(rc);
  const BundleStats s = graph_stats(bundle);
  std::printf("task  %s\n", to_string(bundle.task).c_str());
  print_graph("kg1", s.kg1);
  print_graph("kg2", s.kg2);
  std::printf("pairs  train %lld  test %lld  total %lld\n", static_cast<long long>(s.train_pairs),
              static_cast<long long>(s.test_pairs), static_cast<long long>(s.total_pairs()));
  return kOk;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"hyperka: hyperbolic knowledge association"};
  app.require_subcommand(1);

  ConfigArgs train_args, eval_args, export_args, stats_args;
  bool dump_config = false;
  auto *train_cmd = app.add_subcommand("train", "train a model and save a checkpoint");
  add_config_options(train_cmd, train_args);
  train_cmd->add_flag("--dump-config", dump_config, "print the resolved config and exit");

  std::optional<std::string> hits, json;
  std::optional<bool> csls;
  std::optional<int> csls_k;
  std::string split = "test";
  auto *eval_cmd = app.add_subcommand("eval", "rank held-out pairs with a checkpoint");
  add_config_options(eval_cmd, eval_args);
  eval_cmd->add_option("--hits", hits, "comma-separated k values, e.g. 1,3,10");
  eval_cmd->add_flag("--csls,!--no-csls", csls, "CSLS re-ranking on or off");
  eval_cmd->add_option("--csls-k", csls_k, "CSLS neighborhood size");
  eval_cmd->add_option("--json", json, "JSON report path");
  eval_cmd->add_option("--split", split, "pairs to rank")->check(CLI::IsMember({"test", "train"}));

  GradCheckOptions gc;
  auto *gc_cmd = app.add_subcommand("gradcheck", "compare gradients with central differences");
  gc_cmd->add_option("--objects", gc.num_objects, "objects per graph")->check(CLI::Range(2, 1000));
  gc_cmd->add_option("--dim", gc.dim, "embedding dimension")->check(CLI::Range(1, 1000));
  gc_cmd->add_option("--layers", gc.num_layers, "GNN layers")->check(CLI::Range(0, 10));
  gc_cmd->add_option("--step", gc.step, "finite-difference step")->check(CLI::PositiveNumber);
  auto *gc_seed = gc_cmd->add_option("--seed", gc.seed, "random seed");
  gc_cmd->add_option("--perturb", gc.perturb, "corrupt the projection gradient (negative control)");

  SynthArgs sa;
  auto *synth_cmd = app.add_subcommand("synth", "write a synthetic dataset");
  synth_cmd->add_option("-o,--out", sa.out, "output directory")->required();
  synth_cmd->add_flag("--typed", sa.typed, "type-inference pair instead of an isomorphic pair");
  synth_cmd->add_option("--objects", sa.alignment.num_objects)->check(CLI::Range(2, 10000000));
  synth_cmd->add_option("--relations", sa.alignment.num_relations)->check(CLI::Range(1, 1000000));
  synth_cmd->add_option("--density", sa.alignment.density)->check(CLI::Range(0.0, 1.0));
  synth_cmd->add_option("--drop", sa.alignment.drop_fraction)->check(CLI::Range(0.0, 1.0));
  synth_cmd->add_option("--train-fraction", sa.train_fraction)->check(CLI::Range(0.0, 1.0));
  synth_cmd->add_option("--entities", sa.typing.num_entities)->check(CLI::Range(2, 10000000));
  synth_cmd->add_option("--concepts", sa.typing.num_concepts)->check(CLI::Range(2, 1000000));
  auto *synth_seed = synth_cmd->add_option("--seed", sa.alignment.seed, "random seed");

  std::string export_out;
  auto *export_cmd = app.add_subcommand("export", "write final embeddings as TSV");
  add_config_options(export_cmd, export_args);
  export_cmd->add_option("-o,--out", export_out, "output file");

  auto *stats_cmd = app.add_subcommand("stats", "print dataset statistics");
  add_config_options(stats_cmd, stats_args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*train_cmd) return cmd_train(train_args, dump_config);
    if (*eval_cmd) return cmd_eval(eval_args, hits, csls, csls_k, json, split);
    if (*gc_cmd) return cmd_gradcheck(gc, gc_seed->count() > 0);
    if (*synth_cmd) {
      sa.seed_given = synth_seed->count() > 0;
      if (sa.seed_given) sa.typing.seed = sa.alignment.seed;
      return cmd_synth(sa);
    }
    if (*export_cmd) return cmd_export(export_args, export_out);
    if (*stats_cmd) return cmd_stats(stats_args);
  } catch (const UsageError &e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const ConfigError &e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntime;
  }
  return kUsage;
}
