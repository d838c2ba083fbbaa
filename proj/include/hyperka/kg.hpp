// Knowledge graph data model, dataset ingestion and synthetic generators.

#ifndef HYPERKA_KG_HPP
#define HYPERKA_KG_HPP

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace hyperka {

using Index = std::int64_t;

struct Triple {
  Index head = 0;
  Index relation = 0;
  Index tail = 0;

  friend bool operator==(const Triple &, const Triple &) = default;
};

struct TripleHash {
  std::size_t operator()(const Triple &t) const noexcept {
    std::uint64_t h = static_cast<std::uint64_t>(t.head) * 0x9E3779B97F4A7C15ULL;
    h ^= static_cast<std::uint64_t>(t.relation) + 0x632BE59BD9B4E019ULL + (h << 6) + (h >> 2);
    h ^= static_cast<std::uint64_t>(t.tail) + 0x94D049BB133111EBULL + (h << 6) + (h >> 2);
    return static_cast<std::size_t>(h);
  }
};

/// Cross-graph link (object of the first graph, object of the second graph).
struct AssociationPair {
  Index first = 0;
  Index second = 0;

  friend bool operator==(const AssociationPair &, const AssociationPair &) = default;
};

enum class Task { kAlignment, kTypeInference };

std::string to_string(Task task);
Task task_from_string(const std::string &name);

/// Raised for malformed or inconsistent dataset files; the message carries
/// the file name and line number.
class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class KnowledgeGraph {
 public:
  KnowledgeGraph() = default;

  /// Triples are deduplicated; an out-of-range index throws
  /// std::invalid_argument.
  KnowledgeGraph(std::vector<std::string> object_ids,
                 std::vector<std::string> relation_ids,
                 std::vector<Triple> triples);

  Index num_objects() const { return static_cast<Index>(object_ids_.size()); }
  Index num_relations() const { return static_cast<Index>(relation_ids_.size()); }
  Index num_triples() const { return static_cast<Index>(triples_.size()); }

  const std::vector<std::string> &object_ids() const { return object_ids_; }
  const std::vector<std::string> &relation_ids() const { return relation_ids_; }
  const std::vector<Triple> &triples() const { return triples_; }

  /// Sorted, undirected, relation-agnostic neighbor lists. A self-loop puts
  /// an object in its own list.
  const std::vector<std::vector<Index>> &adjacency() const { return adjacency_; }

  bool contains(const Triple &t) const { return triple_set_.contains(t); }

  /// Index of an object id, or -1.
  Index find_object(const std::string &id) const;

  friend bool operator==(const KnowledgeGraph &a, const KnowledgeGraph &b) {
    return a.object_ids_ == b.object_ids_ && a.relation_ids_ == b.relation_ids_ &&
           a.triples_ == b.triples_;
  }

 private:
  std::vector<std::string> object_ids_;
  std::vector<std::string> relation_ids_;
  std::vector<Triple> triples_;
  std::vector<std::vector<Index>> adjacency_;
  std::unordered_set<Triple, TripleHash> triple_set_;
  std::unordered_map<std::string, Index> object_lookup_;
};

struct AssociationSet {
  std::vector<AssociationPair> train_pairs;
  std::vector<AssociationPair> test_pairs;

  friend bool operator==(const AssociationSet &, const AssociationSet &) = default;
};

struct DatasetBundle {
  Task task = Task::kAlignment;
  KnowledgeGraph kg1;
  KnowledgeGraph kg2;
  AssociationSet associations;

  const KnowledgeGraph &graph(int side) const { return side == 0 ? kg1 : kg2; }

  friend bool operator==(const DatasetBundle &, const DatasetBundle &) = default;
};

/// Loads a dataset directory. The optional `manifest` file (key = value)
/// names the files; without one the default names are used:
///   triples_1, triples_2, sup_pairs, ref_pairs
/// plus optional entities_1/entities_2 and relations_1/relations_2 id lists
/// that fix index order. `format` in the manifest selects the task; the
/// argument, when given, overrides it.
DatasetBundle load_dataset(const std::filesystem::path &dir);
DatasetBundle load_dataset(const std::filesystem::path &dir, Task format);

/// Writes a bundle in the layout read by load_dataset, including id lists
/// and a manifest, so that reloading reproduces the bundle exactly.
void save_dataset(const DatasetBundle &bundle, const std::filesystem::path &dir);

struct SyntheticOptions {
  Index num_objects = 100;
  Index num_relations = 5;
  /// Probability that an ordered object pair carries a triple.
  double density = 0.05;
  /// Fraction of the second graph's triples dropped after relabeling.
  double drop_fraction = 0.0;
  double train_fraction = 0.3;
  std::uint64_t seed = 7;
};

/// Random graph plus an isomorphic copy under a seeded permutation. Objects
/// left isolated get a self-loop under relation 0.
DatasetBundle generate_synthetic_pair(const SyntheticOptions &options);

struct TypedSyntheticOptions {
  Index num_entities = 300;
  Index num_concepts = 12;
  Index num_entity_relations = 4;
  /// Expected number of same-type neighbors per entity.
  double intra_degree = 6.0;
  /// Expected number of cross-type neighbors per entity.
  double inter_degree = 0.5;
  double train_fraction = 0.6;
  std::uint64_t seed = 11;
};

/// Instance graph with type-homophilous links plus an ontology tree over the
/// concepts; every entity is associated with exactly one concept.
DatasetBundle generate_typed_pair(const TypedSyntheticOptions &options);

struct GraphStats {
  Index num_objects = 0;
  Index num_relations = 0;
  Index num_triples = 0;
  double mean_degree = 0.0;
};

struct BundleStats {
  GraphStats kg1;
  GraphStats kg2;
  Index train_pairs = 0;
  Index test_pairs = 0;
  Index total_pairs() const { return train_pairs + test_pairs; }
};

BundleStats graph_stats(const DatasetBundle &bundle);

}  // namespace hyperka

#endif  // HYPERKA_KG_HPP
