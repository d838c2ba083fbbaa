#ifndef HYPERKA_TEST_FIXTURES_HPP
#define HYPERKA_TEST_FIXTURES_HPP

#include "hyperka/kg.hpp"
#include "hyperka/model.hpp"

namespace fixtures {

// Parameters that solve a synthetic isomorphic pair exactly: kg2 input
// embeddings are kg1's moved through the ground-truth permutation, layers
// are zero and the projection is the identity, so every true pair has
// projection error 0.
inline hyperka::ModelParams perfect_params(const hyperka::DatasetBundle &b,
                                           const hyperka::ModelConfig &c,
                                           std::uint64_t seed = 1) {
  hyperka::ModelParams p = hyperka::init_params(b, c, seed);
  for (auto &g : p.graphs) {
    for (auto &l : g.layers) {
      l.weight.setZero();
      l.bias.setZero();
    }
  }
  for (const auto *split : {&b.associations.train_pairs, &b.associations.test_pairs}) {
    for (const auto &pair : *split) {
      p.graphs[1].objects.col(pair.second) = p.graphs[0].objects.col(pair.first);
    }
  }
  p.projection.setIdentity();
  return p;
}

}  // namespace fixtures

#endif  // HYPERKA_TEST_FIXTURES_HPP
