#include "hyperka/kg.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <utility>

namespace hyperka {

std::string to_string(Task task) {
  return task == Task::kAlignment ? "alignment" : "type_inference";
}

Task task_from_string(const std::string &name) {
  if (name == "alignment") return Task::kAlignment;
  if (name == "type_inference") return Task::kTypeInference;
  throw std::invalid_argument("unknown task '" + name +
                              "' (expected alignment or type_inference)");
}

KnowledgeGraph::KnowledgeGraph(std::vector<std::string> object_ids,
                               std::vector<std::string> relation_ids,
                               std::vector<Triple> triples)
    : object_ids_(std::move(object_ids)), relation_ids_(std::move(relation_ids)) {
  const Index n = num_objects();
  const Index r = num_relations();
  object_lookup_.reserve(object_ids_.size());
  for (Index i = 0; i < n; ++i) {
    if (!object_lookup_.emplace(object_ids_[i], i).second) {
      throw std::invalid_argument("duplicate object id '" + object_ids_[i] + "'");
    }
  }
  triples_.reserve(triples.size());
  triple_set_.reserve(triples.size());
  for (const Triple &t : triples) {
    if (t.head < 0 || t.head >= n || t.tail < 0 || t.tail >= n ||
        t.relation < 0 || t.relation >= r) {
      throw std::invalid_argument("triple index out of range");
    }
    if (triple_set_.insert(t).second) triples_.push_back(t);
  }
  adjacency_.assign(static_cast<std::size_t>(n), {});
  for (const Triple &t : triples_) {
    adjacency_[t.head].push_back(t.tail);
    if (t.head != t.tail) adjacency_[t.tail].push_back(t.head);
  }
  for (auto &list : adjacency_) {
    std::sort(list.begin(), list.end());
    list.erase(std::unique(list.begin(), list.end()), list.end());
  }
}

Index KnowledgeGraph::find_object(const std::string &id) const {
  auto it = object_lookup_.find(id);
  return it == object_lookup_.end() ? -1 : it->second;
}

namespace {

std::vector<std::string> split_tabs(const std::string &line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find('\t', start);
    fields.push_back(line.substr(start, pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return fields;
}

std::string location(const std::filesystem::path &file, std::size_t line) {
  return file.filename().string() + ":" + std::to_string(line);
}

// Calls fn(fields, line_number) for every non-empty line.
template <typename Fn>
void for_each_record(const std::filesystem::path &file, std::size_t arity, Fn fn) {
  std::ifstream in(file);
  if (!in) throw DatasetError("missing file: " + file.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_tabs(line);
    if (fields.size() != arity) {
      throw DatasetError(location(file, line_no) + ": expected " +
                         std::to_string(arity) + " tab-separated fields, got " +
                         std::to_string(fields.size()));
    }
    fn(fields, line_no);
  }
}

std::vector<std::string> read_id_list(const std::filesystem::path &file) {
  std::vector<std::string> ids;
  for_each_record(file, 1, [&](const std::vector<std::string> &f, std::size_t) {
    ids.push_back(f[0]);
  });
  return ids;
}

class IdTable {
 public:
  explicit IdTable(bool frozen) : frozen_(frozen) {}

  void add(const std::string &id, const std::filesystem::path &file) {
    if (!index_.emplace(id, static_cast<Index>(ids_.size())).second) {
      throw DatasetError(file.filename().string() + ": duplicate id '" + id + "'");
    }
    ids_.push_back(id);
  }

  Index get(const std::string &id, const std::filesystem::path &file,
            std::size_t line_no) {
    auto it = index_.find(id);
    if (it != index_.end()) return it->second;
    if (frozen_) {
      throw DatasetError(location(file, line_no) + ": id '" + id +
                         "' is not listed");
    }
    const Index idx = static_cast<Index>(ids_.size());
    index_.emplace(id, idx);
    ids_.push_back(id);
    return idx;
  }

  std::vector<std::string> take() { return std::move(ids_); }

 private:
  bool frozen_;
  std::vector<std::string> ids_;
  std::unordered_map<std::string, Index> index_;
};

KnowledgeGraph read_graph(const std::filesystem::path &triple_file,
                          const std::filesystem::path *object_list,
                          const std::filesystem::path *relation_list) {
  IdTable objects(object_list != nullptr);
  IdTable relations(relation_list != nullptr);
  if (object_list) {
    for (const auto &id : read_id_list(*object_list)) objects.add(id, *object_list);
  }
  if (relation_list) {
    for (const auto &id : read_id_list(*relation_list)) relations.add(id, *relation_list);
  }
  std::vector<Triple> triples;
  for_each_record(triple_file, 3,
                  [&](const std::vector<std::string> &f, std::size_t line_no) {
                    Triple t;
                    t.head = objects.get(f[0], triple_file, line_no);
                    t.relation = relations.get(f[1], triple_file, line_no);
                    t.tail = objects.get(f[2], triple_file, line_no);
                    triples.push_back(t);
                  });
  if (triples.empty()) {
    throw DatasetError(triple_file.filename().string() + ": empty graph");
  }
  return KnowledgeGraph(objects.take(), relations.take(), std::move(triples));
}

std::vector<AssociationPair> read_pairs(const std::filesystem::path &file,
                                        const KnowledgeGraph &kg1,
                                        const KnowledgeGraph &kg2) {
  std::vector<AssociationPair> pairs;
  for_each_record(file, 2, [&](const std::vector<std::string> &f, std::size_t line_no) {
    const Index a = kg1.find_object(f[0]);
    const Index b = kg2.find_object(f[1]);
    if (a < 0) {
      throw DatasetError(location(file, line_no) + ": dangling id '" + f[0] +
                         "' (not in the first graph)");
    }
    if (b < 0) {
      throw DatasetError(location(file, line_no) + ": dangling id '" + f[1] +
                         "' (not in the second graph)");
    }
    pairs.push_back({a, b});
  });
  return pairs;
}

struct Manifest {
  std::map<std::string, std::string> files = {
      {"triples_1", "triples_1"}, {"triples_2", "triples_2"},
      {"train_pairs", "sup_pairs"}, {"test_pairs", "ref_pairs"}};
  std::optional<Task> format;
};

Manifest read_manifest(const std::filesystem::path &dir) {
  Manifest m;
  const auto path = dir / "manifest";
  if (!std::filesystem::exists(path)) return m;
  std::ifstream in(path);
  std::string line;
  std::size_t line_no = 0;
  static const std::set<std::string> kFileKeys = {
      "triples_1",  "triples_2",  "train_pairs", "test_pairs",
      "entities_1", "entities_2", "relations_1", "relations_2"};
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto eq = line.find('=');
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    if (trim(line).empty()) continue;
    if (eq == std::string::npos) {
      throw DatasetError(location(path, line_no) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "format") {
      try {
        m.format = task_from_string(value);
      } catch (const std::invalid_argument &e) {
        throw DatasetError(location(path, line_no) + ": " + e.what());
      }
    } else if (kFileKeys.contains(key)) {
      m.files[key] = value;
    } else {
      throw DatasetError(location(path, line_no) + ": unknown manifest key '" + key + "'");
    }
  }
  return m;
}

DatasetBundle load_with(const std::filesystem::path &dir, std::optional<Task> format) {
  if (!std::filesystem::is_directory(dir)) {
    throw DatasetError("dataset directory not found: " + dir.string());
  }
  const Manifest m = read_manifest(dir);
  auto optional_file = [&](const std::string &key) -> std::optional<std::filesystem::path> {
    auto it = m.files.find(key);
    if (it == m.files.end()) return std::nullopt;
    return dir / it->second;
  };
  auto graph = [&](const std::string &suffix) {
    auto objects = optional_file("entities_" + suffix);
    auto relations = optional_file("relations_" + suffix);
    return read_graph(dir / m.files.at("triples_" + suffix),
                      objects ? &*objects : nullptr, relations ? &*relations : nullptr);
  };

  DatasetBundle bundle;
  bundle.task = format.value_or(m.format.value_or(Task::kAlignment));
  bundle.kg1 = graph("1");
  bundle.kg2 = graph("2");
  const auto train_file = dir / m.files.at("train_pairs");
  const auto test_file = dir / m.files.at("test_pairs");
  bundle.associations.train_pairs = read_pairs(train_file, bundle.kg1, bundle.kg2);
  bundle.associations.test_pairs = read_pairs(test_file, bundle.kg1, bundle.kg2);

  struct PairHash {
    std::size_t operator()(const AssociationPair &p) const noexcept {
      return std::hash<Index>()(p.first * 1000003 + p.second);
    }
  };
  std::unordered_set<AssociationPair, PairHash> train(
      bundle.associations.train_pairs.begin(), bundle.associations.train_pairs.end());
  for (std::size_t k = 0; k < bundle.associations.test_pairs.size(); ++k) {
    if (train.contains(bundle.associations.test_pairs[k])) {
      throw DatasetError(location(test_file, k + 1) +
                         ": pair also present in the training split");
    }
  }
  return bundle;
}

void write_lines(const std::filesystem::path &file, const std::vector<std::string> &lines) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw DatasetError("cannot write " + file.string());
  for (const auto &l : lines) out << l << '\n';
}

}  // namespace

DatasetBundle load_dataset(const std::filesystem::path &dir) {
  return load_with(dir, std::nullopt);
}

DatasetBundle load_dataset(const std::filesystem::path &dir, Task format) {
  return load_with(dir, format);
}

void save_dataset(const DatasetBundle &bundle, const std::filesystem::path &dir) {
  std::filesystem::create_directories(dir);
  auto save_graph = [&](const KnowledgeGraph &kg, const std::string &suffix) {
    std::vector<std::string> lines;
    lines.reserve(kg.triples().size());
    for (const Triple &t : kg.triples()) {
      lines.push_back(kg.object_ids()[t.head] + '\t' + kg.relation_ids()[t.relation] +
                      '\t' + kg.object_ids()[t.tail]);
    }
    write_lines(dir / ("triples_" + suffix), lines);
    write_lines(dir / ("entities_" + suffix), kg.object_ids());
    write_lines(dir / ("relations_" + suffix), kg.relation_ids());
  };
  save_graph(bundle.kg1, "1");
  save_graph(bundle.kg2, "2");
  auto save_pairs = [&](const std::vector<AssociationPair> &pairs, const std::string &name) {
    std::vector<std::string> lines;
    lines.reserve(pairs.size());
    for (const auto &p : pairs) {
      lines.push_back(bundle.kg1.object_ids()[p.first] + '\t' +
                      bundle.kg2.object_ids()[p.second]);
    }
    write_lines(dir / name, lines);
  };
  save_pairs(bundle.associations.train_pairs, "sup_pairs");
  save_pairs(bundle.associations.test_pairs, "ref_pairs");
  write_lines(dir / "manifest",
              {"format = " + to_string(bundle.task), "triples_1 = triples_1",
               "triples_2 = triples_2", "train_pairs = sup_pairs",
               "test_pairs = ref_pairs", "entities_1 = entities_1",
               "entities_2 = entities_2", "relations_1 = relations_1",
               "relations_2 = relations_2"});
}

namespace {

std::vector<std::string> numbered_ids(const std::string &prefix, Index count) {
  std::vector<std::string> ids;
  ids.reserve(static_cast<std::size_t>(count));
  for (Index i = 0; i < count; ++i) ids.push_back(prefix + std::to_string(i));
  return ids;
}

void add_self_loops(Index num_objects, std::vector<Triple> &triples) {
  std::vector<bool> touched(static_cast<std::size_t>(num_objects), false);
  for (const Triple &t : triples) touched[t.head] = touched[t.tail] = true;
  for (Index i = 0; i < num_objects; ++i) {
    if (!touched[i]) triples.push_back({i, 0, i});
  }
}

}  // namespace

DatasetBundle generate_synthetic_pair(const SyntheticOptions &options) {
  if (options.num_objects < 10) {
    throw std::invalid_argument("generate_synthetic_pair: need at least 10 objects");
  }
  if (!(options.density > 0.0 && options.density <= 1.0)) {
    throw std::invalid_argument("generate_synthetic_pair: density must be in (0, 1]");
  }
  if (options.num_relations < 1) {
    throw std::invalid_argument("generate_synthetic_pair: need at least one relation");
  }
  const Index n = options.num_objects;
  std::mt19937_64 rng(options.seed);
  std::bernoulli_distribution edge(options.density);
  std::uniform_int_distribution<Index> relation(0, options.num_relations - 1);

  std::vector<Triple> triples1;
  for (Index h = 0; h < n; ++h) {
    for (Index t = 0; t < n; ++t) {
      if (h != t && edge(rng)) triples1.push_back({h, relation(rng), t});
    }
  }
  add_self_loops(n, triples1);

  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Index{0});
  std::shuffle(perm.begin(), perm.end(), rng);

  std::vector<Triple> triples2;
  triples2.reserve(triples1.size());
  for (const Triple &t : triples1) triples2.push_back({perm[t.head], t.relation, perm[t.tail]});
  const auto drop = static_cast<std::size_t>(
      std::llround(options.drop_fraction * static_cast<double>(triples2.size())));
  if (drop > 0) {
    std::vector<std::size_t> order(triples2.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<bool> keep(triples2.size(), true);
    for (std::size_t k = 0; k < drop && k < order.size(); ++k) keep[order[k]] = false;
    std::vector<Triple> kept;
    for (std::size_t k = 0; k < triples2.size(); ++k) {
      if (keep[k]) kept.push_back(triples2[k]);
    }
    triples2 = std::move(kept);
    add_self_loops(n, triples2);
  }

  DatasetBundle bundle;
  bundle.task = Task::kAlignment;
  bundle.kg1 = KnowledgeGraph(numbered_ids("a", n), numbered_ids("ra", options.num_relations),
                              std::move(triples1));
  bundle.kg2 = KnowledgeGraph(numbered_ids("b", n), numbered_ids("rb", options.num_relations),
                              std::move(triples2));

  std::vector<AssociationPair> pairs;
  pairs.reserve(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) pairs.push_back({i, perm[i]});
  std::shuffle(pairs.begin(), pairs.end(), rng);
  const auto n_train = static_cast<std::size_t>(
      std::llround(options.train_fraction * static_cast<double>(n)));
  bundle.associations.train_pairs.assign(pairs.begin(), pairs.begin() + n_train);
  bundle.associations.test_pairs.assign(pairs.begin() + n_train, pairs.end());
  return bundle;
}

DatasetBundle generate_typed_pair(const TypedSyntheticOptions &options) {
  const Index n = options.num_entities;
  const Index c = options.num_concepts;
  if (c < 2 || n < c) {
    throw std::invalid_argument("generate_typed_pair: need >= 2 concepts and >= 1 entity each");
  }
  std::mt19937_64 rng(options.seed);

  // Ontology: a random tree (subclass_of towards the root) plus a few
  // related_to links between siblings.
  std::vector<Triple> onto;
  std::vector<Index> parent(static_cast<std::size_t>(c), -1);
  for (Index k = 1; k < c; ++k) {
    parent[k] = std::uniform_int_distribution<Index>(0, k - 1)(rng);
    onto.push_back({k, 0, parent[k]});
  }
  for (Index a = 1; a < c; ++a) {
    for (Index b = a + 1; b < c; ++b) {
      if (parent[a] == parent[b]) onto.push_back({a, 1, b});
    }
  }

  std::vector<Index> type(static_cast<std::size_t>(n));
  for (Index e = 0; e < n; ++e) type[e] = e % c;
  std::shuffle(type.begin(), type.end(), rng);
  std::vector<Index> type_size(static_cast<std::size_t>(c), 0);
  for (Index t : type) ++type_size[t];

  std::vector<Triple> inst;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const Index r = std::max<Index>(1, options.num_entity_relations);
  for (Index a = 0; a < n; ++a) {
    for (Index b = a + 1; b < n; ++b) {
      const bool same = type[a] == type[b];
      const double p =
          same ? options.intra_degree / std::max<double>(1.0, type_size[type[a]] - 1.0)
               : options.inter_degree / std::max<double>(1.0, double(n - type_size[type[a]]));
      if (unit(rng) >= p) continue;
      const bool forward = unit(rng) < 0.5;
      const Index h = forward ? a : b;
      const Index t = forward ? b : a;
      inst.push_back({h, (type[h] * 7 + type[t] * 3) % r, t});
    }
  }
  add_self_loops(n, inst);

  DatasetBundle bundle;
  bundle.task = Task::kTypeInference;
  bundle.kg1 = KnowledgeGraph(numbered_ids("e", n), numbered_ids("p", r), std::move(inst));
  bundle.kg2 = KnowledgeGraph(numbered_ids("c", c), {"subclass_of", "related_to"},
                              std::move(onto));
  std::vector<AssociationPair> pairs;
  for (Index e = 0; e < n; ++e) pairs.push_back({e, type[e]});
  std::shuffle(pairs.begin(), pairs.end(), rng);
  const auto n_train = static_cast<std::size_t>(
      std::llround(options.train_fraction * static_cast<double>(n)));
  bundle.associations.train_pairs.assign(pairs.begin(), pairs.begin() + n_train);
  bundle.associations.test_pairs.assign(pairs.begin() + n_train, pairs.end());
  return bundle;
}

BundleStats graph_stats(const DatasetBundle &bundle) {
  auto one = [](const KnowledgeGraph &kg) {
    GraphStats s;
    s.num_objects = kg.num_objects();
    s.num_relations = kg.num_relations();
    s.num_triples = kg.num_triples();
    std::size_t degree_sum = 0;
    for (const auto &nbrs : kg.adjacency()) degree_sum += nbrs.size();
    s.mean_degree = s.num_objects == 0 ? 0.0
                                       : static_cast<double>(degree_sum) /
                                             static_cast<double>(s.num_objects);
    return s;
  };
  BundleStats out;
  out.kg1 = one(bundle.kg1);
  out.kg2 = one(bundle.kg2);
  out.train_pairs = static_cast<Index>(bundle.associations.train_pairs.size());
  out.test_pairs = static_cast<Index>(bundle.associations.test_pairs.size());
  return out;
}

}  // namespace hyperka
