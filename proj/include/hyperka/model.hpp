// Trainable parameters and the forward computation: translational energy on
// input embeddings, stacked hyperbolic GNN layers, and the cross-space
// projection. Embedding tables store one ball point per column.

#ifndef HYPERKA_MODEL_HPP
#define HYPERKA_MODEL_HPP

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <type_traits>
#include <vector>

#include <Eigen/Dense>

#include "hyperka/geometry.hpp"
#include "hyperka/kg.hpp"

namespace hyperka {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class Activation { kTanhTangent, kTanhCoordinate };
enum class CombineFinal { kOutputOnly, kInputPlusOutput };
enum class Pooling { kTangentMean, kCoordinateMean };

std::string to_string(Activation a);
std::string to_string(CombineFinal c);
std::string to_string(Pooling p);
Activation activation_from_string(const std::string &s);
CombineFinal combine_final_from_string(const std::string &s);
Pooling pooling_from_string(const std::string &s);

struct ModelConfig {
  Index dim_kg1 = 75;
  Index dim_kg2 = 75;
  int num_layers = 2;
  Activation activation = Activation::kTanhTangent;
  CombineFinal combine_final = CombineFinal::kInputPlusOutput;
  Pooling pooling = Pooling::kTangentMean;
  /// Caps the pooled neighborhood (self plus the lowest-index neighbors);
  /// 0 disables the cap.
  Index max_neighbors = 0;
  GeometryConfig geometry;

  Index dim(int side) const { return side == 0 ? dim_kg1 : dim_kg2; }
};

struct GnnLayer {
  MatrixXd weight;  // dim x dim
  VectorXd bias;    // ball point

  friend bool operator==(const GnnLayer &a, const GnnLayer &b) {
    return a.weight == b.weight && a.bias == b.bias;
  }
};

struct GraphParams {
  MatrixXd objects;    // dim x num_objects
  MatrixXd relations;  // dim x num_relations
  std::vector<GnnLayer> layers;

  friend bool operator==(const GraphParams &a, const GraphParams &b) {
    return a.objects == b.objects && a.relations == b.relations && a.layers == b.layers;
  }
};

struct ModelParams {
  std::array<GraphParams, 2> graphs;
  MatrixXd projection;  // dim_kg2 x dim_kg1

  friend bool operator==(const ModelParams &a, const ModelParams &b) {
    return a.graphs == b.graphs && a.projection == b.projection;
  }
};

/// Same shapes as `like`, all zeros. Used for gradient accumulators.
ModelParams zeros_like(const ModelParams &like);

/// Visits every parameter block with a stable name, e.g. "kg1.objects",
/// "kg2.layer1.weight", "projection". `is_manifold` marks ball-valued blocks
/// whose columns are points.
template <typename Params, typename Fn>
void for_each_block(Params &params, Fn &&fn) {
  for (int side = 0; side < 2; ++side) {
    auto &g = params.graphs[side];
    const std::string prefix = "kg" + std::to_string(side + 1) + ".";
    fn(prefix + "objects", g.objects, true);
    fn(prefix + "relations", g.relations, true);
    for (std::size_t l = 0; l < g.layers.size(); ++l) {
      const std::string lp = prefix + "layer" + std::to_string(l + 1) + ".";
      fn(lp + "weight", g.layers[l].weight, false);
      fn(lp + "bias", g.layers[l].bias, true);
    }
  }
  fn(std::string("projection"), params.projection, false);
}

/// Flat views of every parameter block, in for_each_block order.
template <typename Params>
auto block_views(Params &params) {
  using Map = std::conditional_t<std::is_const_v<Params>, Eigen::Map<const MatrixXd>,
                                 Eigen::Map<MatrixXd>>;
  struct View {
    std::string name;
    Map map;
    bool is_manifold;
  };
  std::vector<View> views;
  for_each_block(params, [&](const std::string &name, auto &block, bool manifold) {
    views.push_back(View{name, Map(block.data(), block.rows(), block.cols()), manifold});
  });
  return views;
}

/// Xavier-normal draws mapped into the ball with exp_0 for every embedding
/// row; Xavier-normal layer weights; zero biases; identity-block projection.
ModelParams init_params(const DatasetBundle &bundle, const ModelConfig &config,
                        std::uint64_t seed);

/// Checks that parameter shapes agree with the bundle and the config.
void check_shapes(const ModelParams &params, const DatasetBundle &bundle,
                  const ModelConfig &config);

/// d(u_h (+) u_r, u_t) on input embeddings.
double relation_energy(const ModelParams &params, int side, const Triple &triple,
                       const GeometryConfig &geometry = {});

/// Pooled neighborhoods N'(i) = {i} U N(i), sorted, capped per config.
using PoolingSets = std::vector<std::vector<Index>>;
PoolingSets pooling_sets(const KnowledgeGraph &kg, Index max_neighbors = 0);

/// Layer inputs kept for the backward pass: inputs[l] is u^(l) for
/// l = 0..L-1; `output` is u^(L).
struct GnnTrace {
  std::vector<MatrixXd> inputs;
  MatrixXd output;
};

/// Final embeddings (one column per object) of one graph. Fills `trace` when
/// given.
MatrixXd gnn_forward(const GraphParams &params, const PoolingSets &sets,
                     const ModelConfig &config, GnnTrace *trace = nullptr,
                     int threads = 1);

MatrixXd gnn_forward(const ModelParams &params, int side, const DatasetBundle &bundle,
                     const ModelConfig &config);

/// Accumulates into `grads` the gradient of a loss w.r.t. the graph's input
/// embeddings and layer parameters, given dL/d(final embeddings).
void gnn_backward(const GraphParams &params, const PoolingSets &sets,
                  const ModelConfig &config, const GnnTrace &trace,
                  const MatrixXd &grad_final, GraphParams &grads, int threads = 1);

/// pi(i, j) = d(M (x) u_i, u_j).
double projection_error(const ModelParams &params, const VectorXd &u_i,
                        const VectorXd &u_j, const GeometryConfig &geometry = {});

/// M (x) u for every column of `embeddings`.
MatrixXd project_all(const MatrixXd &projection, const MatrixXd &embeddings,
                     const GeometryConfig &geometry = {}, int threads = 1);

/// Versioned binary checkpoint; layout described in README.md.
void save_checkpoint(const std::filesystem::path &path, const ModelParams &params,
                     const ModelConfig &config);

struct Checkpoint {
  ModelParams params;
  ModelConfig config;
};

Checkpoint load_checkpoint(const std::filesystem::path &path);

}  // namespace hyperka

#endif  // HYPERKA_MODEL_HPP
