// Ranking evaluation (H@k, MRR), CSLS re-ranking and embedding export.

#ifndef HYPERKA_EVAL_HPP
#define HYPERKA_EVAL_HPP

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hyperka/kg.hpp"
#include "hyperka/model.hpp"

namespace hyperka {

enum class RankMetric { kHyperbolic, kCsls };

struct EvalOptions {
  RankMetric metric = RankMetric::kHyperbolic;
  int csls_k = 10;
  std::vector<int> hits = {1, 10};
  int threads = 1;
};

struct EvalReport {
  std::map<int, double> hits_at;
  double mrr = 0.0;
  Index num_queries = 0;
  bool csls_used = false;
  int k_csls = 0;
};

/// Pairwise hyperbolic distances, queries x candidates (points are columns).
MatrixXd distance_matrix(const MatrixXd &queries, const MatrixXd &candidates,
                         const GeometryConfig &geometry = {}, int threads = 1);

/// CSLS(q, c) = 2 s(q, c) - r_q - r_c with s = -distance, r_q the mean of the
/// k largest similarities of query q and r_c the same over queries for c.
/// k is clamped to the matrix extents.
MatrixXd csls_scores(const MatrixXd &distances, int k);

/// Ranks every row of `scores` (higher is better). truth[q] is the column of
/// the correct candidate; ties go to the lower column index.
EvalReport report_from_scores(const MatrixXd &scores, std::span<const Index> truth,
                              std::span<const int> hits);

/// Projects the first object of each pair, ranks the candidate pool and
/// reports where the second object lands. The pool is every distinct second
/// object of `pairs` for alignment, and every object of the second graph for
/// type inference.
EvalReport rank_all(const ModelParams &params, const DatasetBundle &bundle,
                    const ModelConfig &config, std::span<const AssociationPair> pairs,
                    const EvalOptions &options = {});

/// Same, from precomputed final embeddings.
EvalReport rank_embeddings(const MatrixXd &final_1, const MatrixXd &final_2,
                           const MatrixXd &projection, Task task,
                           std::span<const AssociationPair> pairs, const EvalOptions &options,
                           const GeometryConfig &geometry = {});

/// Report as a JSON object string.
std::string report_to_json(const EvalReport &report);

/// Tab-separated rows "<id>\t<tag>\t<coords...>" with tags kg1, kg2 and
/// kg1_projected, coordinates printed with 17 significant digits.
void export_embeddings(const ModelParams &params, const DatasetBundle &bundle,
                       const ModelConfig &config, const std::filesystem::path &out_path);

}  // namespace hyperka

#endif  // HYPERKA_EVAL_HPP
