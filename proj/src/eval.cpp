#include "hyperka/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <functional>
#include <stdexcept>

#include <json.hpp>

#include "hyperka/parallel.hpp"

namespace hyperka {

MatrixXd distance_matrix(const MatrixXd &queries, const MatrixXd &candidates,
                         const GeometryConfig &geometry, int threads) {
  MatrixXd d(queries.cols(), candidates.cols());
  parallel_chunks(queries.cols(), threads, [&](int, Index begin, Index end) {
    for (Index q = begin; q < end; ++q) {
      for (Index c = 0; c < candidates.cols(); ++c) {
        d(q, c) = hyperbolic_distance(queries.col(q), candidates.col(c), geometry);
      }
    }
  });
  return d;
}

namespace {

double mean_top_k(std::vector<double> values, int k) {
  const auto kk = static_cast<std::size_t>(std::clamp<int>(k, 1, int(values.size())));
  std::partial_sort(values.begin(), values.begin() + kk, values.end(), std::greater<>());
  double sum = 0.0;
  for (std::size_t i = 0; i < kk; ++i) sum += values[i];
  return sum / double(kk);
}

}  // namespace

MatrixXd csls_scores(const MatrixXd &distances, int k) {
  if (k < 1) throw std::invalid_argument("csls_k must be >= 1");
  const MatrixXd sim = -distances;
  const Index nq = sim.rows();
  const Index nc = sim.cols();
  VectorXd query_hub(nq), cand_hub(nc);
  for (Index q = 0; q < nq; ++q) {
    std::vector<double> row(static_cast<std::size_t>(nc));
    for (Index c = 0; c < nc; ++c) row[c] = sim(q, c);
    query_hub(q) = mean_top_k(std::move(row), k);
  }
  for (Index c = 0; c < nc; ++c) {
    std::vector<double> col(sim.col(c).data(), sim.col(c).data() + nq);
    cand_hub(c) = mean_top_k(std::move(col), k);
  }
  MatrixXd out = 2.0 * sim;
  out.colwise() -= query_hub;
  out.rowwise() -= cand_hub.transpose();
  return out;
}

EvalReport report_from_scores(const MatrixXd &scores, std::span<const Index> truth,
                              std::span<const int> hits) {
  if (scores.rows() == 0 || truth.empty()) {
    throw std::invalid_argument("evaluation needs at least one query");
  }
  if (Index(truth.size()) != scores.rows()) {
    throw std::invalid_argument("one truth column per query is required");
  }
  EvalReport report;
  report.num_queries = scores.rows();
  for (int k : hits) report.hits_at[k] = 0.0;
  double rr = 0.0;
  for (Index q = 0; q < scores.rows(); ++q) {
    const Index t = truth[q];
    const double s = scores(q, t);
    Index rank = 1;
    for (Index c = 0; c < scores.cols(); ++c) {
      if (scores(q, c) > s || (scores(q, c) == s && c < t)) ++rank;
    }
    rr += 1.0 / double(rank);
    for (auto &[k, v] : report.hits_at) {
      if (rank <= k) v += 1.0;
    }
  }
  report.mrr = rr / double(scores.rows());
  for (auto &[k, v] : report.hits_at) v /= double(scores.rows());
  return report;
}

EvalReport rank_embeddings(const MatrixXd &final_1, const MatrixXd &final_2,
                           const MatrixXd &projection, Task task,
                           std::span<const AssociationPair> pairs, const EvalOptions &options,
                           const GeometryConfig &geometry) {
  if (pairs.empty()) throw std::invalid_argument("evaluation needs a non-empty test set");
  std::vector<Index> pool;
  if (task == Task::kTypeInference) {
    pool.resize(std::size_t(final_2.cols()));
    for (Index j = 0; j < final_2.cols(); ++j) pool[j] = j;
  } else {
    for (const auto &p : pairs) pool.push_back(p.second);
    std::sort(pool.begin(), pool.end());
    pool.erase(std::unique(pool.begin(), pool.end()), pool.end());
  }
  std::vector<Index> column_of(std::size_t(final_2.cols()), -1);
  for (std::size_t c = 0; c < pool.size(); ++c) column_of[pool[c]] = Index(c);

  MatrixXd queries(projection.rows(), Index(pairs.size()));
  MatrixXd candidates(final_2.rows(), Index(pool.size()));
  std::vector<Index> truth(pairs.size());
  for (std::size_t q = 0; q < pairs.size(); ++q) {
    queries.col(Index(q)) = mobius_matvec(projection, final_1.col(pairs[q].first), geometry);
    truth[q] = column_of[pairs[q].second];
  }
  for (std::size_t c = 0; c < pool.size(); ++c) candidates.col(Index(c)) = final_2.col(pool[c]);

  const MatrixXd dist = distance_matrix(queries, candidates, geometry, options.threads);
  const bool csls = options.metric == RankMetric::kCsls;
  EvalReport report = report_from_scores(csls ? csls_scores(dist, options.csls_k) : MatrixXd(-dist),
                                         truth, options.hits);
  report.csls_used = csls;
  report.k_csls = csls ? options.csls_k : 0;
  return report;
}

EvalReport rank_all(const ModelParams &params, const DatasetBundle &bundle,
                    const ModelConfig &config, std::span<const AssociationPair> pairs,
                    const EvalOptions &options) {
  std::array<MatrixXd, 2> finals;
  for (int side = 0; side < 2; ++side) {
    finals[side] = gnn_forward(params.graphs[side],
                               pooling_sets(bundle.graph(side), config.max_neighbors), config,
                               nullptr, options.threads);
  }
  return rank_embeddings(finals[0], finals[1], params.projection, bundle.task, pairs, options,
                         config.geometry);
}

std::string report_to_json(const EvalReport &report) {
  nlohmann::ordered_json j;
  nlohmann::ordered_json hits = nlohmann::ordered_json::object();
  for (const auto &[k, v] : report.hits_at) hits[std::to_string(k)] = v;
  j["hits_at"] = hits;
  j["mrr"] = report.mrr;
  j["num_queries"] = report.num_queries;
  j["csls_used"] = report.csls_used;
  j["k_csls"] = report.k_csls;
  return j.dump(2);
}

void export_embeddings(const ModelParams &params, const DatasetBundle &bundle,
                       const ModelConfig &config, const std::filesystem::path &out_path) {
  std::ofstream out(out_path);
  if (!out) throw std::runtime_error("cannot write " + out_path.string());
  std::array<MatrixXd, 2> finals;
  for (int side = 0; side < 2; ++side) finals[side] = gnn_forward(params, side, bundle, config);
  const MatrixXd projected = project_all(params.projection, finals[0], config.geometry);

  char buf[40];
  auto write_rows = [&](const MatrixXd &table, const KnowledgeGraph &kg, const char *tag) {
    for (Index i = 0; i < table.cols(); ++i) {
      out << kg.object_ids()[i] << '\t' << tag;
      for (Index d = 0; d < table.rows(); ++d) {
        std::snprintf(buf, sizeof buf, "%.17g", table(d, i));
        out << '\t' << buf;
      }
      out << '\n';
    }
  };
  write_rows(finals[0], bundle.kg1, "kg1");
  write_rows(finals[1], bundle.kg2, "kg2");
  write_rows(projected, bundle.kg1, "kg1_projected");
  if (!out) throw std::runtime_error("failed writing " + out_path.string());
}

}  // namespace hyperka
