#include "hyperka/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

#include "hyperka/parallel.hpp"

namespace hyperka {

std::string to_string(OptimizerKind k) { return k == OptimizerKind::kAdam ? "adam" : "rsgd"; }

OptimizerKind optimizer_from_string(const std::string &s) {
  if (s == "adam") return OptimizerKind::kAdam;
  if (s == "rsgd") return OptimizerKind::kRsgd;
  throw std::invalid_argument("unknown optimizer '" + s + "'");
}

double total_loss(const LossBreakdown &parts) { return parts.rel + parts.proj + parts.semi; }

ModelContext make_context(const DatasetBundle &bundle, const ModelConfig &config) {
  ModelContext ctx;
  ctx.bundle = &bundle;
  ctx.config = config;
  for (int side = 0; side < 2; ++side) {
    ctx.pooling[side] = pooling_sets(bundle.graph(side), config.max_neighbors);
  }
  return ctx;
}

double loss_rel(const ModelParams &params, int side, std::span<const Triple> positives,
                std::span<const Triple> negatives, double margin,
                const GeometryConfig &geometry) {
  double loss = 0.0;
  for (const Triple &t : positives) loss += relation_energy(params, side, t, geometry);
  for (const Triple &t : negatives) {
    loss += std::max(0.0, margin - relation_energy(params, side, t, geometry));
  }
  return loss;
}

double loss_proj(const MatrixXd &projection, const MatrixXd &final_1, const MatrixXd &final_2,
                 std::span<const AssociationPair> positives,
                 std::span<const AssociationPair> negatives, double margin,
                 const GeometryConfig &geometry) {
  auto pi = [&](const AssociationPair &p) {
    return hyperbolic_distance(mobius_matvec(projection, final_1.col(p.first), geometry),
                               final_2.col(p.second), geometry);
  };
  double loss = 0.0;
  for (const auto &p : positives) loss += pi(p);
  for (const auto &p : negatives) loss += std::max(0.0, margin - pi(p));
  return loss;
}

double loss_semi(const MatrixXd &projection, const MatrixXd &final_1, const MatrixXd &final_2,
                 std::span<const AssociationPair> proposals, double mu,
                 const GeometryConfig &geometry) {
  return mu * loss_proj(projection, final_1, final_2, proposals, {}, 0.0, geometry);
}

namespace {

// Relation-translation term of one graph; accumulates gradients when asked.
double rel_term(const ModelParams &params, int side, std::span<const Triple> positives,
                std::span<const Triple> negatives, double margin, const GeometryConfig &geo,
                GraphParams *grads) {
  const GraphParams &g = params.graphs[side];
  double loss = 0.0;
  auto visit = [&](const Triple &t, double weight) {
    if (!grads) return;
    const VectorXd translated = mobius_add(g.objects.col(t.head), g.relations.col(t.relation), geo);
    auto [g_translated, g_tail] =
        hyperbolic_distance_vjp(translated, g.objects.col(t.tail), weight, geo);
    auto [g_head, g_rel] =
        mobius_add_vjp(g.objects.col(t.head), g.relations.col(t.relation), g_translated, geo);
    grads->objects.col(t.head) += g_head;
    grads->objects.col(t.tail) += g_tail;
    grads->relations.col(t.relation) += g_rel;
  };
  for (const Triple &t : positives) {
    loss += relation_energy(params, side, t, geo);
    visit(t, 1.0);
  }
  for (const Triple &t : negatives) {
    const double gap = margin - relation_energy(params, side, t, geo);
    if (gap > 0.0) {
      loss += gap;
      visit(t, -1.0);
    }
  }
  return loss;
}

// Shared forward (and optional backward) over a batch.
LossBreakdown run_batch(const ModelParams &params, const ModelContext &ctx, const Batch &batch,
                        const LossSettings &settings, ModelParams *grads) {
  const GeometryConfig &geo = ctx.config.geometry;
  LossBreakdown loss;
  if (settings.rel_loss) {
    for (int side = 0; side < 2; ++side) {
      loss.rel += rel_term(params, side, batch.triples[side], batch.neg_triples[side],
                           settings.margin_rel, geo, grads ? &grads->graphs[side] : nullptr);
    }
  }
  if (batch.pairs.empty() && batch.neg_pairs.empty() && batch.semi_pairs.empty()) return loss;

  std::array<GnnTrace, 2> traces;
  std::array<MatrixXd, 2> finals;
  for (int side = 0; side < 2; ++side) {
    finals[side] = gnn_forward(params.graphs[side], ctx.pooling[side], ctx.config,
                               grads ? &traces[side] : nullptr, settings.threads);
  }
  const MatrixXd &m = params.projection;
  const MatrixXd projected = project_all(m, finals[0], geo, settings.threads);

  MatrixXd g_projected, g_final_2;
  if (grads) {
    g_projected = MatrixXd::Zero(projected.rows(), projected.cols());
    g_final_2 = MatrixXd::Zero(finals[1].rows(), finals[1].cols());
  }
  auto visit = [&](const AssociationPair &p, double weight) {
    if (!grads) return;
    auto [g_q, g_u] =
        hyperbolic_distance_vjp(projected.col(p.first), finals[1].col(p.second), weight, geo);
    g_projected.col(p.first) += g_q;
    g_final_2.col(p.second) += g_u;
  };
  auto pi = [&](const AssociationPair &p) {
    return hyperbolic_distance(projected.col(p.first), finals[1].col(p.second), geo);
  };
  for (const auto &p : batch.pairs) {
    loss.proj += pi(p);
    visit(p, 1.0);
  }
  for (const auto &p : batch.neg_pairs) {
    const double gap = settings.margin_proj - pi(p);
    if (gap > 0.0) {
      loss.proj += gap;
      visit(p, -1.0);
    }
  }
  double semi = 0.0;
  for (const auto &p : batch.semi_pairs) {
    semi += pi(p);
    visit(p, settings.mu);
  }
  loss.semi = settings.mu * semi;

  if (grads) {
    MatrixXd g_final_1 = MatrixXd::Zero(finals[0].rows(), finals[0].cols());
    for (Index i = 0; i < g_projected.cols(); ++i) {
      if (g_projected.col(i).isZero(0.0)) continue;
      auto mv = mobius_matvec_vjp(m, finals[0].col(i), g_projected.col(i), geo);
      grads->projection += mv.matrix;
      g_final_1.col(i) = mv.point;
    }
    gnn_backward(params.graphs[0], ctx.pooling[0], ctx.config, traces[0], g_final_1,
                 grads->graphs[0], settings.threads);
    gnn_backward(params.graphs[1], ctx.pooling[1], ctx.config, traces[1], g_final_2,
                 grads->graphs[1], settings.threads);
  }
  return loss;
}

}  // namespace

LossBreakdown evaluate_loss(const ModelParams &params, const ModelContext &context,
                            const Batch &batch, const LossSettings &settings) {
  return run_batch(params, context, batch, settings, nullptr);
}

GradientResult compute_gradients(const ModelParams &params, const ModelContext &context,
                                 const Batch &batch, const LossSettings &settings,
                                 int batch_index) {
  GradientResult out;
  out.grads = zeros_like(params);
  out.loss = run_batch(params, context, batch, settings, &out.grads);
  for_each_block(out.grads, [&](const std::string &name, const auto &block, bool) {
    if (!block.allFinite()) throw NonFiniteGradient(name, batch_index);
  });
  return out;
}

AdamState make_adam_state(const ModelParams &params) {
  return AdamState{zeros_like(params), zeros_like(params), 0};
}

void optimizer_step(ModelParams &params, const ModelParams &grads, AdamState &state,
                    const TrainConfig &config, const GeometryConfig &geometry) {
  auto theta = block_views(params);
  auto grad = block_views(grads);
  auto m1 = block_views(state.first_moment);
  auto m2 = block_views(state.second_moment);
  ++state.steps;
  const double b1 = config.adam_beta1;
  const double b2 = config.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, double(state.steps));
  const double c2 = 1.0 - std::pow(b2, double(state.steps));
  const bool adam = config.optimizer == OptimizerKind::kAdam;

  for (std::size_t b = 0; b < theta.size(); ++b) {
    auto &p = theta[b].map;
    for (Index j = 0; j < p.cols(); ++j) {
      VectorXd g = grad[b].map.col(j);
      if (theta[b].is_manifold) g = riemannian_rescale(p.col(j), g);
      VectorXd step;
      if (adam) {
        m1[b].map.col(j) = b1 * m1[b].map.col(j) + (1.0 - b1) * g;
        m2[b].map.col(j) = b2 * m2[b].map.col(j) + (1.0 - b2) * g.cwiseAbs2();
        const VectorXd m_hat = m1[b].map.col(j) / c1;
        const VectorXd v_hat = m2[b].map.col(j) / c2;
        step = config.lr * (m_hat.array() / (v_hat.array().sqrt() + config.adam_eps)).matrix();
      } else {
        step = config.lr * g;
      }
      if (theta[b].is_manifold) {
        p.col(j) = project_to_ball(VectorXd(p.col(j) - step), geometry);
      } else {
        p.col(j) -= step;
      }
    }
  }
}

std::vector<AssociationPair> self_train_propose(const ModelParams &params,
                                                const ModelContext &context, double epsilon,
                                                bool mutual_nearest, int threads) {
  std::vector<AssociationPair> out;
  if (!(epsilon > 0.0)) return out;
  const DatasetBundle &bundle = *context.bundle;
  const GeometryConfig &geo = context.config.geometry;

  std::vector<bool> aligned_1(std::size_t(bundle.kg1.num_objects()), false);
  std::vector<bool> aligned_2(std::size_t(bundle.kg2.num_objects()), false);
  for (const auto &p : bundle.associations.train_pairs) {
    aligned_1[p.first] = true;
    aligned_2[p.second] = true;
  }
  std::vector<Index> cand_1, cand_2;
  for (Index i = 0; i < bundle.kg1.num_objects(); ++i) {
    if (!aligned_1[i]) cand_1.push_back(i);
  }
  for (Index j = 0; j < bundle.kg2.num_objects(); ++j) {
    if (!aligned_2[j]) cand_2.push_back(j);
  }
  if (cand_1.empty() || cand_2.empty()) return out;

  const MatrixXd final_1 = gnn_forward(params.graphs[0], context.pooling[0], context.config,
                                       nullptr, threads);
  const MatrixXd final_2 = gnn_forward(params.graphs[1], context.pooling[1], context.config,
                                       nullptr, threads);
  const MatrixXd projected = project_all(params.projection, final_1, geo, threads);

  const Index n1 = Index(cand_1.size());
  const Index n2 = Index(cand_2.size());
  MatrixXd dist(n1, n2);
  parallel_chunks(n1, threads, [&](int, Index begin, Index end) {
    for (Index a = begin; a < end; ++a) {
      for (Index b = 0; b < n2; ++b) {
        dist(a, b) = hyperbolic_distance(projected.col(cand_1[a]), final_2.col(cand_2[b]), geo);
      }
    }
  });

  if (!mutual_nearest) {
    for (Index a = 0; a < n1; ++a) {
      for (Index b = 0; b < n2; ++b) {
        if (dist(a, b) < epsilon) out.push_back({cand_1[a], cand_2[b]});
      }
    }
    return out;
  }
  std::vector<Index> best_col(std::size_t(n1), 0), best_row(std::size_t(n2), 0);
  for (Index a = 0; a < n1; ++a) dist.row(a).minCoeff(&best_col[a]);
  for (Index b = 0; b < n2; ++b) dist.col(b).minCoeff(&best_row[b]);
  for (Index a = 0; a < n1; ++a) {
    const Index b = best_col[a];
    if (best_row[b] == a && dist(a, b) < epsilon) out.push_back({cand_1[a], cand_2[b]});
  }
  return out;
}

std::string format_epoch_line(const EpochRecord &r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%d\t%.10g\t%.10g\t%.10g\t%.4f\t", r.epoch, r.loss.rel,
                r.loss.proj, r.loss.semi, r.seconds);
  std::string line(buf);
  if (!std::isnan(r.validation_h1)) {
    std::snprintf(buf, sizeof buf, "%.6f", r.validation_h1);
    line += buf;
  }
  return line;
}

namespace {

template <typename T>
std::span<const T> slice(const std::vector<T> &v, std::size_t step, std::size_t steps) {
  const std::size_t begin = v.size() * step / steps;
  const std::size_t end = v.size() * (step + 1) / steps;
  return std::span<const T>(v).subspan(begin, end - begin);
}

}  // namespace

TrainResult train(const DatasetBundle &bundle, const ModelConfig &model_config,
                  const TrainConfig &train_config, const SelfTrainConfig &self_config,
                  const TrainHooks &hooks) {
  return train(bundle, init_params(bundle, model_config, train_config.seed), model_config,
               train_config, self_config, hooks);
}

TrainResult train(const DatasetBundle &bundle, ModelParams initial,
                  const ModelConfig &model_config, const TrainConfig &tc,
                  const SelfTrainConfig &sc, const TrainHooks &hooks) {
  if (!(tc.margin_rel > 0.0) || !(tc.margin_proj > 0.0)) {
    throw std::invalid_argument("margins must be positive");
  }
  if (!(tc.lr >= 0.0)) throw std::invalid_argument("learning rate must be non-negative");
  if (tc.batch_size < 1) throw std::invalid_argument("batch_size must be positive");
  if (sc.enabled && (!(sc.epsilon > 0.0) || !(sc.mu > 0.0 && sc.mu <= 1.0))) {
    throw std::invalid_argument("self-training needs epsilon > 0 and 0 < mu <= 1");
  }
  check_shapes(initial, bundle, model_config);

  TrainResult result;
  result.params = std::move(initial);
  ModelParams &params = result.params;
  const ModelContext ctx = make_context(bundle, model_config);
  const GeometryConfig &geo = model_config.geometry;
  AdamState adam = make_adam_state(params);
  std::mt19937_64 rng(tc.seed ^ 0x5DEECE66DULL);

  LossSettings settings;
  settings.margin_rel = tc.margin_rel;
  settings.margin_proj = tc.margin_proj;
  settings.mu = sc.mu;
  settings.rel_loss = tc.rel_loss;
  settings.threads = tc.threads;

  std::array<std::vector<Triple>, 2> triples = {bundle.kg1.triples(), bundle.kg2.triples()};
  std::vector<AssociationPair> pairs = bundle.associations.train_pairs;
  const std::size_t total_triples = triples[0].size() + triples[1].size();
  const std::size_t steps = std::max<std::size_t>(
      1, (total_triples + std::size_t(tc.batch_size) - 1) / std::size_t(tc.batch_size));

  const bool truncated = tc.neg_strategy == NegStrategy::kTruncated;
  std::array<NearestLists, 2> nearest_input, nearest_final;
  std::vector<Batch> frozen;  // fixed_negatives: one batch per step

  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const ModelParams last_good = params;

    if (sc.enabled && epoch > 0 && sc.propose_every > 0 && epoch % sc.propose_every == 0) {
      result.proposals = self_train_propose(params, ctx, sc.epsilon, sc.mutual_nearest,
                                            tc.threads);
    }
    if (truncated && (epoch % std::max(1, tc.trunc_refresh) == 0) &&
        !(tc.fixed_negatives && !frozen.empty())) {
      for (int side = 0; side < 2; ++side) {
        nearest_input[side] =
            nearest_candidates(params.graphs[side].objects, tc.trunc_frac, geo, tc.threads);
        const MatrixXd fin = gnn_forward(params.graphs[side], ctx.pooling[side], model_config,
                                         nullptr, tc.threads);
        nearest_final[side] = nearest_candidates(fin, tc.trunc_frac, geo, tc.threads);
      }
    }
    if (!tc.fixed_negatives) {
      for (auto &t : triples) std::shuffle(t.begin(), t.end(), rng);
      std::shuffle(pairs.begin(), pairs.end(), rng);
    }
    PairSet known(pairs.begin(), pairs.end());
    known.insert(result.proposals.begin(), result.proposals.end());

    LossBreakdown epoch_loss;
    for (std::size_t step = 0; step < steps; ++step) {
      Batch fresh;
      const Batch *batch = nullptr;
      if (tc.fixed_negatives && frozen.size() > step) {
        batch = &frozen[step];
      } else {
        for (int side = 0; side < 2; ++side) {
          auto pos = slice(triples[side], step, steps);
          fresh.triples[side].assign(pos.begin(), pos.end());
          if (tc.rel_loss) {
            fresh.neg_triples[side] = neg_sample_triples(
                bundle.graph(side), pos, tc.neg_samples, tc.neg_strategy,
                truncated ? &nearest_input[side] : nullptr, rng);
          }
        }
        auto pos_pairs = slice(pairs, step, steps);
        fresh.pairs.assign(pos_pairs.begin(), pos_pairs.end());
        fresh.neg_pairs = neg_sample_pairs(
            bundle.kg1.num_objects(), bundle.kg2.num_objects(), pos_pairs, tc.neg_samples,
            tc.neg_strategy, truncated ? &nearest_final[0] : nullptr,
            truncated ? &nearest_final[1] : nullptr, known, rng);
        if (tc.fixed_negatives) {
          frozen.push_back(std::move(fresh));
          batch = &frozen.back();
        } else {
          batch = &fresh;
        }
      }
      Batch with_semi;
      if (sc.enabled && !result.proposals.empty()) {
        with_semi = *batch;
        auto semi = slice(result.proposals, step, steps);
        with_semi.semi_pairs.assign(semi.begin(), semi.end());
        batch = &with_semi;
      }

      GradientResult gr;
      try {
        gr = compute_gradients(params, ctx, *batch, settings, int(step));
      } catch (const NonFiniteGradient &e) {
        throw TrainingDiverged("epoch " + std::to_string(epoch) + ": " + e.what(), last_good);
      }
      if (!std::isfinite(gr.loss.total())) {
        throw TrainingDiverged("epoch " + std::to_string(epoch) + ": non-finite loss",
                               last_good);
      }
      epoch_loss.rel += gr.loss.rel;
      epoch_loss.proj += gr.loss.proj;
      epoch_loss.semi += gr.loss.semi;
      optimizer_step(params, gr.grads, adam, tc, geo);
    }

    EpochRecord record;
    record.epoch = epoch;
    record.loss = epoch_loss;
    record.proposals = result.proposals.size();
    if (hooks.validate && tc.validate_every > 0 && (epoch + 1) % tc.validate_every == 0) {
      record.validation_h1 = hooks.validate(params);
    }
    record.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (hooks.log) *hooks.log << format_epoch_line(record) << '\n' << std::flush;
    result.log.push_back(record);
    if (hooks.on_epoch_end) hooks.on_epoch_end(epoch, params);
  }
  return result;
}

GradCheckReport gradient_check(const ModelParams &params, const ModelContext &context,
                               const Batch &batch, const LossSettings &settings, double step,
                               double perturb) {
  GradientResult analytic = compute_gradients(params, context, batch, settings);
  if (perturb != 0.0) analytic.grads.projection *= (1.0 + perturb);

  ModelParams probe = params;
  auto probe_views = block_views(probe);
  auto grad_views = block_views(std::as_const(analytic.grads));

  GradCheckReport report;
  report.step = step;
  for (std::size_t b = 0; b < probe_views.size(); ++b) {
    auto &theta = probe_views[b].map;
    const auto &g = grad_views[b].map;
    double max_diff = 0.0;
    double scale = 0.0;
    for (Index k = 0; k < theta.size(); ++k) {
      const double saved = theta.data()[k];
      theta.data()[k] = saved + step;
      const double up = evaluate_loss(probe, context, batch, settings).total();
      theta.data()[k] = saved - step;
      const double down = evaluate_loss(probe, context, batch, settings).total();
      theta.data()[k] = saved;
      const double numeric = (up - down) / (2.0 * step);
      max_diff = std::max(max_diff, std::abs(numeric - g.data()[k]));
      scale = std::max({scale, std::abs(numeric), std::abs(g.data()[k])});
    }
    const double err = scale > 0.0 ? max_diff / scale : 0.0;
    report.groups.push_back({probe_views[b].name, err});
    report.max_rel_error = std::max(report.max_rel_error, err);
  }
  report.pass = report.max_rel_error < kGradCheckTolerance;
  return report;
}

GradCheckReport gradient_check(const GradCheckOptions &options) {
  SyntheticOptions so;
  so.num_objects = options.num_objects;
  so.num_relations = 3;
  so.density = 0.3;
  so.seed = options.seed;
  const DatasetBundle bundle = generate_synthetic_pair(so);

  ModelConfig mc;
  mc.dim_kg1 = mc.dim_kg2 = options.dim;
  mc.num_layers = options.num_layers;
  ModelParams params = init_params(bundle, mc, options.seed);

  // Move biases and the projection off their special initial values so every
  // term of the chain rule is exercised.
  std::mt19937_64 rng(options.seed + 1);
  std::normal_distribution<double> normal(0.0, 0.3);
  for (auto &g : params.graphs) {
    for (auto &layer : g.layers) {
      VectorXd v(layer.bias.size());
      for (Index k = 0; k < v.size(); ++k) v(k) = normal(rng);
      layer.bias = exp_map_0(v, mc.geometry);
    }
  }
  for (Index k = 0; k < params.projection.size(); ++k) params.projection.data()[k] += normal(rng);

  const ModelContext ctx = make_context(bundle, mc);
  Batch batch;
  for (int side = 0; side < 2; ++side) {
    batch.triples[side] = bundle.graph(side).triples();
    batch.neg_triples[side] = neg_sample_triples(bundle.graph(side), batch.triples[side], 2,
                                                 NegStrategy::kUniform, nullptr, rng);
  }
  batch.pairs = bundle.associations.train_pairs;
  batch.neg_pairs = neg_sample_pairs(bundle, batch.pairs, 2, NegStrategy::kUniform, nullptr,
                                     nullptr, options.seed + 2);
  const auto &test = bundle.associations.test_pairs;
  batch.semi_pairs.assign(test.begin(), test.begin() + std::min<std::size_t>(2, test.size()));

  LossSettings settings;
  settings.margin_rel = 1.0;
  settings.margin_proj = 1.5;
  settings.mu = 0.05;
  return gradient_check(params, ctx, batch, settings, options.step, options.perturb);
}

}  // namespace hyperka
