#include "hyperka/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "hyperka/parallel.hpp"

namespace hyperka {

std::string to_string(Activation a) {
  return a == Activation::kTanhTangent ? "tanh_tangent" : "tanh_coordinate";
}
std::string to_string(CombineFinal c) {
  return c == CombineFinal::kOutputOnly ? "output_only" : "input_plus_output";
}
std::string to_string(Pooling p) {
  return p == Pooling::kTangentMean ? "tangent_mean" : "coordinate_mean";
}

Activation activation_from_string(const std::string &s) {
  if (s == "tanh_tangent" || s == "tanh") return Activation::kTanhTangent;
  if (s == "tanh_coordinate") return Activation::kTanhCoordinate;
  throw std::invalid_argument("unknown activation '" + s + "'");
}
CombineFinal combine_final_from_string(const std::string &s) {
  if (s == "output_only") return CombineFinal::kOutputOnly;
  if (s == "input_plus_output") return CombineFinal::kInputPlusOutput;
  throw std::invalid_argument("unknown combine_final '" + s + "'");
}
Pooling pooling_from_string(const std::string &s) {
  if (s == "tangent_mean") return Pooling::kTangentMean;
  if (s == "coordinate_mean") return Pooling::kCoordinateMean;
  throw std::invalid_argument("unknown pooling '" + s + "'");
}

ModelParams zeros_like(const ModelParams &like) {
  ModelParams out = like;
  for_each_block(out, [](const std::string &, auto &block, bool) { block.setZero(); });
  return out;
}

namespace {

MatrixXd xavier_normal(Index rows, Index cols, double fan_in, double fan_out,
                       std::mt19937_64 &rng) {
  std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / (fan_in + fan_out)));
  MatrixXd m(rows, cols);
  for (Index j = 0; j < cols; ++j) {
    for (Index i = 0; i < rows; ++i) m(i, j) = normal(rng);
  }
  return m;
}

// Embedding table of `count` rows of width `dim`, stored transposed.
MatrixXd ball_table(Index dim, Index count, const GeometryConfig &geometry,
                    std::mt19937_64 &rng) {
  MatrixXd table = xavier_normal(dim, count, double(count), double(dim), rng);
  for (Index j = 0; j < count; ++j) table.col(j) = exp_map_0(table.col(j), geometry);
  return table;
}

}  // namespace

ModelParams init_params(const DatasetBundle &bundle, const ModelConfig &config,
                        std::uint64_t seed) {
  if (config.num_layers < 1) throw std::invalid_argument("num_layers must be >= 1");
  if (config.dim_kg1 < 1 || config.dim_kg2 < 1) {
    throw std::invalid_argument("embedding dimensions must be positive");
  }
  std::mt19937_64 rng(seed);
  ModelParams params;
  for (int side = 0; side < 2; ++side) {
    const KnowledgeGraph &kg = bundle.graph(side);
    const Index dim = config.dim(side);
    GraphParams &g = params.graphs[side];
    g.objects = ball_table(dim, kg.num_objects(), config.geometry, rng);
    g.relations = ball_table(dim, kg.num_relations(), config.geometry, rng);
    g.layers.resize(static_cast<std::size_t>(config.num_layers));
    for (auto &layer : g.layers) {
      layer.weight = xavier_normal(dim, dim, double(dim), double(dim), rng);
      layer.bias = VectorXd::Zero(dim);
    }
  }
  params.projection = MatrixXd::Identity(config.dim_kg2, config.dim_kg1);
  return params;
}

void check_shapes(const ModelParams &params, const DatasetBundle &bundle,
                  const ModelConfig &config) {
  auto fail = [](const std::string &what, Index expected, Index got) {
    throw std::invalid_argument(what + ": expected " + std::to_string(expected) +
                                ", got " + std::to_string(got));
  };
  for (int side = 0; side < 2; ++side) {
    const auto &g = params.graphs[side];
    const std::string name = "kg" + std::to_string(side + 1);
    const Index dim = config.dim(side);
    if (g.objects.rows() != dim) fail(name + " embedding dimension", dim, g.objects.rows());
    if (g.objects.cols() != bundle.graph(side).num_objects()) {
      fail(name + " object count", bundle.graph(side).num_objects(), g.objects.cols());
    }
    if (g.relations.rows() != dim) fail(name + " relation dimension", dim, g.relations.rows());
    if (g.relations.cols() != bundle.graph(side).num_relations()) {
      fail(name + " relation count", bundle.graph(side).num_relations(), g.relations.cols());
    }
    if (static_cast<int>(g.layers.size()) != config.num_layers) {
      fail(name + " layer count", config.num_layers, Index(g.layers.size()));
    }
    for (const auto &layer : g.layers) {
      if (layer.weight.rows() != dim || layer.weight.cols() != dim) {
        fail(name + " layer weight size", dim, layer.weight.rows());
      }
      if (layer.bias.size() != dim) fail(name + " layer bias size", dim, layer.bias.size());
    }
  }
  if (params.projection.rows() != config.dim_kg2) {
    fail("projection rows", config.dim_kg2, params.projection.rows());
  }
  if (params.projection.cols() != config.dim_kg1) {
    fail("projection cols", config.dim_kg1, params.projection.cols());
  }
}

double relation_energy(const ModelParams &params, int side, const Triple &triple,
                       const GeometryConfig &geometry) {
  const GraphParams &g = params.graphs[side];
  const VectorXd translated =
      mobius_add(g.objects.col(triple.head), g.relations.col(triple.relation), geometry);
  return hyperbolic_distance(translated, g.objects.col(triple.tail), geometry);
}

PoolingSets pooling_sets(const KnowledgeGraph &kg, Index max_neighbors) {
  PoolingSets sets(static_cast<std::size_t>(kg.num_objects()));
  for (Index i = 0; i < kg.num_objects(); ++i) {
    auto &set = sets[i];
    set.push_back(i);
    for (Index j : kg.adjacency()[i]) {
      if (j == i) continue;
      if (max_neighbors > 0 && Index(set.size()) > max_neighbors) break;
      set.push_back(j);
    }
    std::sort(set.begin(), set.end());
  }
  return sets;
}

namespace {

MatrixXd gather(const MatrixXd &table, const std::vector<Index> &cols) {
  MatrixXd out(table.rows(), Index(cols.size()));
  for (std::size_t k = 0; k < cols.size(); ++k) out.col(Index(k)) = table.col(cols[k]);
  return out;
}

// Intermediate values of one node's layer update.
struct NodeState {
  MatrixXd points;
  VectorXd pooled;
  VectorXd transformed;
  VectorXd biased;
  VectorXd activated;
};

NodeState node_forward(const GnnLayer &layer, const MatrixXd &input,
                       const std::vector<Index> &set, const ModelConfig &config) {
  const GeometryConfig &geo = config.geometry;
  NodeState s;
  s.points = gather(input, set);
  s.pooled = config.pooling == Pooling::kTangentMean ? tangent_mean(s.points, geo)
                                                     : coordinate_mean(s.points, geo);
  s.transformed = mobius_matvec(layer.weight, s.pooled, geo);
  s.biased = mobius_add(s.transformed, layer.bias, geo);
  s.activated = config.activation == Activation::kTanhTangent
                    ? tangent_tanh(s.biased, geo)
                    : coordinate_tanh(s.biased, geo);
  return s;
}

void layer_forward(const GnnLayer &layer, const MatrixXd &input, const PoolingSets &sets,
                   const ModelConfig &config, MatrixXd &output, int threads) {
  output.resize(input.rows(), input.cols());
  parallel_chunks(input.cols(), threads, [&](int, Index begin, Index end) {
    for (Index i = begin; i < end; ++i) {
      const NodeState s = node_forward(layer, input, sets[i], config);
      output.col(i) = mobius_add(input.col(i), s.activated, config.geometry);
    }
  });
}

struct LayerGrads {
  MatrixXd input;
  MatrixXd weight;
  VectorXd bias;
};

void layer_backward_range(const GnnLayer &layer, const MatrixXd &input,
                          const PoolingSets &sets, const ModelConfig &config,
                          const MatrixXd &grad_output, Index begin, Index end,
                          LayerGrads &out) {
  const GeometryConfig &geo = config.geometry;
  for (Index i = begin; i < end; ++i) {
    const VectorXd g_out = grad_output.col(i);
    if (g_out.isZero(0.0)) continue;
    const NodeState s = node_forward(layer, input, sets[i], config);
    auto [g_self, g_act] = mobius_add_vjp(input.col(i), s.activated, g_out, geo);
    out.input.col(i) += g_self;
    const VectorXd g_biased = config.activation == Activation::kTanhTangent
                                  ? tangent_tanh_vjp(s.biased, g_act, geo)
                                  : coordinate_tanh_vjp(s.biased, g_act, geo);
    auto [g_transformed, g_bias] = mobius_add_vjp(s.transformed, layer.bias, g_biased, geo);
    out.bias += g_bias;
    auto mv = mobius_matvec_vjp(layer.weight, s.pooled, g_transformed, geo);
    out.weight += mv.matrix;
    const MatrixXd g_points = config.pooling == Pooling::kTangentMean
                                  ? tangent_mean_vjp(s.points, mv.point, geo)
                                  : coordinate_mean_vjp(s.points, mv.point, geo);
    const auto &set = sets[i];
    for (std::size_t k = 0; k < set.size(); ++k) out.input.col(set[k]) += g_points.col(Index(k));
  }
}

LayerGrads zero_layer_grads(const GnnLayer &layer, const MatrixXd &input) {
  return {MatrixXd::Zero(input.rows(), input.cols()),
          MatrixXd::Zero(layer.weight.rows(), layer.weight.cols()),
          VectorXd::Zero(layer.bias.size())};
}

}  // namespace

MatrixXd gnn_forward(const GraphParams &params, const PoolingSets &sets,
                     const ModelConfig &config, GnnTrace *trace, int threads) {
  if (Index(sets.size()) != params.objects.cols()) {
    throw std::invalid_argument("gnn_forward: pooling sets do not match object count");
  }
  MatrixXd current = params.objects;
  if (trace) trace->inputs.clear();
  for (const GnnLayer &layer : params.layers) {
    MatrixXd next;
    layer_forward(layer, current, sets, config, next, threads);
    if (trace) trace->inputs.push_back(std::move(current));
    current = std::move(next);
  }
  if (trace) trace->output = current;
  if (config.combine_final == CombineFinal::kOutputOnly) return current;
  MatrixXd final_embeds(current.rows(), current.cols());
  for (Index i = 0; i < current.cols(); ++i) {
    final_embeds.col(i) = mobius_add(params.objects.col(i), current.col(i), config.geometry);
  }
  return final_embeds;
}

MatrixXd gnn_forward(const ModelParams &params, int side, const DatasetBundle &bundle,
                     const ModelConfig &config) {
  return gnn_forward(params.graphs[side],
                     pooling_sets(bundle.graph(side), config.max_neighbors), config);
}

void gnn_backward(const GraphParams &params, const PoolingSets &sets,
                  const ModelConfig &config, const GnnTrace &trace,
                  const MatrixXd &grad_final, GraphParams &grads, int threads) {
  const GeometryConfig &geo = config.geometry;
  MatrixXd grad = grad_final;
  if (config.combine_final == CombineFinal::kInputPlusOutput) {
    for (Index i = 0; i < grad_final.cols(); ++i) {
      if (grad_final.col(i).isZero(0.0)) continue;
      auto [g_in, g_out] =
          mobius_add_vjp(params.objects.col(i), trace.output.col(i), grad_final.col(i), geo);
      grads.objects.col(i) += g_in;
      grad.col(i) = g_out;
    }
  }
  for (std::size_t l = params.layers.size(); l-- > 0;) {
    const GnnLayer &layer = params.layers[l];
    const MatrixXd &input = trace.inputs[l];
    const int chunks = std::max(1, threads);
    std::vector<LayerGrads> partial;
    partial.reserve(static_cast<std::size_t>(chunks));
    for (int c = 0; c < chunks; ++c) partial.push_back(zero_layer_grads(layer, input));
    parallel_chunks(input.cols(), chunks, [&](int c, Index begin, Index end) {
      layer_backward_range(layer, input, sets, config, grad, begin, end, partial[c]);
    });
    for (int c = 1; c < chunks; ++c) {
      partial[0].input += partial[c].input;
      partial[0].weight += partial[c].weight;
      partial[0].bias += partial[c].bias;
    }
    grads.layers[l].weight += partial[0].weight;
    grads.layers[l].bias += partial[0].bias;
    grad = std::move(partial[0].input);
  }
  grads.objects += grad;
}

double projection_error(const ModelParams &params, const VectorXd &u_i,
                        const VectorXd &u_j, const GeometryConfig &geometry) {
  return hyperbolic_distance(mobius_matvec(params.projection, u_i, geometry), u_j, geometry);
}

MatrixXd project_all(const MatrixXd &projection, const MatrixXd &embeddings,
                     const GeometryConfig &geometry, int threads) {
  MatrixXd out(projection.rows(), embeddings.cols());
  parallel_chunks(embeddings.cols(), threads, [&](int, Index begin, Index end) {
    for (Index i = begin; i < end; ++i) {
      out.col(i) = mobius_matvec(projection, embeddings.col(i), geometry);
    }
  });
  return out;
}

}  // namespace hyperka
