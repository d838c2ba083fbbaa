// Negative sampling for triples and association pairs.

#ifndef HYPERKA_SAMPLING_HPP
#define HYPERKA_SAMPLING_HPP

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include <Eigen/Dense>

#include "hyperka/geometry.hpp"
#include "hyperka/kg.hpp"

namespace hyperka {

enum class NegStrategy { kUniform, kTruncated };

std::string to_string(NegStrategy s);
NegStrategy neg_strategy_from_string(const std::string &s);

/// For every object, the candidate replacements used by truncated sampling:
/// the ceil(fraction * N) objects nearest to it (hyperbolic distance,
/// nearest first, ties by index). The object itself is usually first.
using NearestLists = std::vector<std::vector<Index>>;

NearestLists nearest_candidates(const Eigen::MatrixXd &embeddings, double fraction,
                                const GeometryConfig &geometry = {}, int threads = 1);

struct PairHash {
  std::size_t operator()(const AssociationPair &p) const noexcept {
    return std::hash<std::uint64_t>()(static_cast<std::uint64_t>(p.first) * 0x9E3779B97F4A7C15ULL ^
                                      static_cast<std::uint64_t>(p.second));
  }
};
using PairSet = std::unordered_set<AssociationPair, PairHash>;

/// Attempts per negative before a colliding sample is accepted anyway.
inline constexpr int kMaxResampleAttempts = 10;

/// k corruptions per positive, head or tail with equal probability. With
/// kTruncated, `nearest` must hold one list per object of `kg`. Negatives
/// that are existing triples are resampled.
std::vector<Triple> neg_sample_triples(const KnowledgeGraph &kg, std::span<const Triple> batch,
                                       int k, NegStrategy strategy, const NearestLists *nearest,
                                       std::mt19937_64 &rng);

std::vector<Triple> neg_sample_triples(const KnowledgeGraph &kg, std::span<const Triple> batch,
                                       int k, NegStrategy strategy, const NearestLists *nearest,
                                       std::uint64_t seed);

/// k corruptions per positive pair, replacing the first or the second object
/// with equal probability. Truncated candidates are the nearest neighbors of
/// the replaced object in its own graph. Negatives found in `known` are
/// resampled.
std::vector<AssociationPair> neg_sample_pairs(Index num_objects_1, Index num_objects_2,
                                              std::span<const AssociationPair> positives,
                                              int k, NegStrategy strategy,
                                              const NearestLists *nearest_1,
                                              const NearestLists *nearest_2,
                                              const PairSet &known, std::mt19937_64 &rng);

std::vector<AssociationPair> neg_sample_pairs(const DatasetBundle &bundle,
                                              std::span<const AssociationPair> positives,
                                              int k, NegStrategy strategy,
                                              const NearestLists *nearest_1,
                                              const NearestLists *nearest_2,
                                              std::uint64_t seed);

}  // namespace hyperka

#endif  // HYPERKA_SAMPLING_HPP
