#include "hyperka/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "hyperka/parallel.hpp"

namespace hyperka {

std::string to_string(NegStrategy s) {
  return s == NegStrategy::kUniform ? "uniform" : "truncated";
}

NegStrategy neg_strategy_from_string(const std::string &s) {
  if (s == "uniform") return NegStrategy::kUniform;
  if (s == "truncated") return NegStrategy::kTruncated;
  throw std::invalid_argument("unknown negative sampling strategy '" + s + "'");
}

NearestLists nearest_candidates(const Eigen::MatrixXd &embeddings, double fraction,
                                const GeometryConfig &geometry, int threads) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw std::invalid_argument("trunc_frac must be in (0, 1]");
  }
  const Index n = embeddings.cols();
  const Index keep = std::clamp<Index>(
      static_cast<Index>(std::ceil(fraction * static_cast<double>(n))), 1, n);
  NearestLists lists(static_cast<std::size_t>(n));
  parallel_chunks(n, threads, [&](int, Index begin, Index end) {
    std::vector<double> dist(static_cast<std::size_t>(n));
    std::vector<Index> order(static_cast<std::size_t>(n));
    for (Index i = begin; i < end; ++i) {
      for (Index j = 0; j < n; ++j) {
        dist[j] = hyperbolic_distance(embeddings.col(i), embeddings.col(j), geometry);
      }
      std::iota(order.begin(), order.end(), Index{0});
      auto closer = [&](Index a, Index b) {
        return dist[a] < dist[b] || (dist[a] == dist[b] && a < b);
      };
      std::partial_sort(order.begin(), order.begin() + keep, order.end(), closer);
      lists[i].assign(order.begin(), order.begin() + keep);
    }
  });
  return lists;
}

namespace {

Index draw(Index original, Index num_objects, NegStrategy strategy,
           const NearestLists *nearest, std::mt19937_64 &rng) {
  if (strategy == NegStrategy::kTruncated) {
    const auto &list = (*nearest)[original];
    std::uniform_int_distribution<std::size_t> pick(0, list.size() - 1);
    return list[pick(rng)];
  }
  std::uniform_int_distribution<Index> pick(0, num_objects - 1);
  return pick(rng);
}

void check_nearest(NegStrategy strategy, const NearestLists *nearest, Index n,
                   const char *what) {
  if (strategy != NegStrategy::kTruncated) return;
  if (nearest == nullptr || Index(nearest->size()) != n) {
    throw std::invalid_argument(std::string(what) +
                                ": truncated sampling needs one candidate list per object");
  }
}

}  // namespace

std::vector<Triple> neg_sample_triples(const KnowledgeGraph &kg, std::span<const Triple> batch,
                                       int k, NegStrategy strategy, const NearestLists *nearest,
                                       std::mt19937_64 &rng) {
  std::vector<Triple> out;
  if (k <= 0) return out;
  check_nearest(strategy, nearest, kg.num_objects(), "neg_sample_triples");
  out.reserve(batch.size() * static_cast<std::size_t>(k));
  std::bernoulli_distribution corrupt_head(0.5);
  for (const Triple &pos : batch) {
    for (int s = 0; s < k; ++s) {
      Triple neg = pos;
      for (int attempt = 0; attempt < kMaxResampleAttempts; ++attempt) {
        neg = pos;
        if (corrupt_head(rng)) {
          neg.head = draw(pos.head, kg.num_objects(), strategy, nearest, rng);
        } else {
          neg.tail = draw(pos.tail, kg.num_objects(), strategy, nearest, rng);
        }
        if (!kg.contains(neg)) break;
      }
      out.push_back(neg);
    }
  }
  return out;
}

std::vector<Triple> neg_sample_triples(const KnowledgeGraph &kg, std::span<const Triple> batch,
                                       int k, NegStrategy strategy, const NearestLists *nearest,
                                       std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return neg_sample_triples(kg, batch, k, strategy, nearest, rng);
}

std::vector<AssociationPair> neg_sample_pairs(Index num_objects_1, Index num_objects_2,
                                              std::span<const AssociationPair> positives,
                                              int k, NegStrategy strategy,
                                              const NearestLists *nearest_1,
                                              const NearestLists *nearest_2,
                                              const PairSet &known, std::mt19937_64 &rng) {
  std::vector<AssociationPair> out;
  if (k <= 0) return out;
  check_nearest(strategy, nearest_1, num_objects_1, "neg_sample_pairs");
  check_nearest(strategy, nearest_2, num_objects_2, "neg_sample_pairs");
  out.reserve(positives.size() * static_cast<std::size_t>(k));
  std::bernoulli_distribution corrupt_first(0.5);
  for (const AssociationPair &pos : positives) {
    for (int s = 0; s < k; ++s) {
      AssociationPair neg = pos;
      for (int attempt = 0; attempt < kMaxResampleAttempts; ++attempt) {
        neg = pos;
        if (corrupt_first(rng)) {
          neg.first = draw(pos.first, num_objects_1, strategy, nearest_1, rng);
        } else {
          neg.second = draw(pos.second, num_objects_2, strategy, nearest_2, rng);
        }
        if (neg != pos && !known.contains(neg)) break;
      }
      out.push_back(neg);
    }
  }
  return out;
}

std::vector<AssociationPair> neg_sample_pairs(const DatasetBundle &bundle,
                                              std::span<const AssociationPair> positives,
                                              int k, NegStrategy strategy,
                                              const NearestLists *nearest_1,
                                              const NearestLists *nearest_2,
                                              std::uint64_t seed) {
  PairSet known(bundle.associations.train_pairs.begin(), bundle.associations.train_pairs.end());
  known.insert(positives.begin(), positives.end());
  std::mt19937_64 rng(seed);
  return neg_sample_pairs(bundle.kg1.num_objects(), bundle.kg2.num_objects(), positives, k,
                          strategy, nearest_1, nearest_2, known, rng);
}

}  // namespace hyperka
