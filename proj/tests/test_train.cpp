#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "hyperka/sampling.hpp"
#include "hyperka/train.hpp"

using namespace hyperka;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

ModelConfig config(Index dim, int layers) {
  ModelConfig c;
  c.dim_kg1 = c.dim_kg2 = dim;
  c.num_layers = layers;
  return c;
}

DatasetBundle synthetic(Index n = 20, double density = 0.15, double train_fraction = 0.3) {
  SyntheticOptions o;
  o.num_objects = n;
  o.num_relations = 3;
  o.density = density;
  o.train_fraction = train_fraction;
  return generate_synthetic_pair(o);
}

// Point on the first axis at hyperbolic distance d from the origin.
VectorXd at_distance(double d, Index dim = 2) {
  VectorXd v = VectorXd::Zero(dim);
  v(0) = std::tanh(d / 2);
  return v;
}

TrainConfig quick_train(int epochs) {
  TrainConfig t;
  t.epochs = epochs;
  t.lr = 0.005;
  t.neg_samples = 3;
  t.batch_size = 1000000;
  t.neg_strategy = NegStrategy::kUniform;
  return t;
}

}  // namespace

TEST(Loss, RelationHingeArithmetic) {
  DatasetBundle b;
  b.kg1 = KnowledgeGraph({"h", "t", "n"}, {"r"}, {{0, 0, 1}});
  b.kg2 = b.kg1;
  ModelParams p = init_params(b, config(2, 1), 1);
  auto &g = p.graphs[0];
  g.objects.col(0).setZero();
  g.relations.col(0).setZero();
  g.objects.col(1) = at_distance(0.2);
  g.objects.col(2) = at_distance(0.05);
  const std::vector<Triple> pos = {{0, 0, 1}}, neg = {{0, 0, 2}};
  EXPECT_NEAR(loss_rel(p, 0, pos, neg, 0.1), 0.25, 1e-12);

  // every positive at 0 and every negative beyond the margin
  g.objects.col(1).setZero();
  g.objects.col(2) = at_distance(0.3);
  EXPECT_NEAR(loss_rel(p, 0, pos, neg, 0.1), 0.0, 1e-12);
}

TEST(Loss, ProjectionHingeArithmetic) {
  MatrixXd f1 = MatrixXd::Zero(2, 2), f2(2, 2);
  f2.col(0) = at_distance(0.3);
  f2.col(1) = at_distance(0.1);
  const MatrixXd m = MatrixXd::Identity(2, 2);
  const std::vector<AssociationPair> pos = {{0, 0}}, neg = {{1, 1}};
  EXPECT_NEAR(loss_proj(m, f1, f2, pos, neg, 0.4), 0.6, 1e-12);
  EXPECT_NEAR(loss_proj(m, f1, f2, pos, {}, 0.4), 0.3, 1e-12);

  f2.col(0).setZero();
  f2.col(1) = at_distance(0.5);
  EXPECT_NEAR(loss_proj(m, f1, f2, pos, neg, 0.4), 0.0, 1e-12);
}

TEST(Loss, Totals) {
  EXPECT_NEAR(total_loss({0.25, 0.6, 0.0}), 0.85, 1e-15);
  EXPECT_EQ(total_loss({0.0, 0.0, 0.0}), 0.0);

  MatrixXd f1 = MatrixXd::Zero(2, 2), f2(2, 2);
  f2.col(0) = at_distance(1.0);
  f2.col(1) = at_distance(1.0);
  const std::vector<AssociationPair> a = {{0, 0}, {1, 1}};
  const double semi = loss_semi(MatrixXd::Identity(2, 2), f1, f2, a, 0.05);
  EXPECT_NEAR(semi, 0.1, 1e-12);
  EXPECT_NEAR(total_loss({0.25, 0.6, semi}), 0.95, 1e-12);
}

TEST(Gradients, MatchCentralDifferences) {
  const GradCheckReport r = gradient_check(GradCheckOptions{});
  EXPECT_TRUE(r.pass);
  EXPECT_LT(r.max_rel_error, kGradCheckTolerance);
  EXPECT_EQ(r.step, 1e-6);
  std::set<std::string> names;
  for (const auto &g : r.groups) names.insert(g.name);
  for (const char *n : {"kg1.objects", "kg1.relations", "kg1.layer1.weight", "kg1.layer2.bias",
                        "kg2.objects", "kg2.layer2.weight", "projection"}) {
    EXPECT_TRUE(names.contains(n)) << n;
  }
}

TEST(Gradients, InjectedBugIsCaught) {
  GradCheckOptions o;
  o.perturb = 0.01;
  EXPECT_FALSE(gradient_check(o).pass);
}

TEST(Gradients, CoordinateVariantsAndOutputOnly) {
  const DatasetBundle b = synthetic(10, 0.3);
  ModelConfig c = config(3, 2);
  c.pooling = Pooling::kCoordinateMean;
  c.activation = Activation::kTanhCoordinate;
  c.combine_final = CombineFinal::kOutputOnly;
  ModelParams p = init_params(b, c, 2);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.0, 0.1);
  for (auto &g : p.graphs) {
    for (auto &l : g.layers) l.bias = exp_map_0(VectorXd(VectorXd::NullaryExpr(3, [&] { return n(rng); })));
  }
  const ModelContext ctx = make_context(b, c);
  Batch batch;
  for (int s = 0; s < 2; ++s) {
    batch.triples[s] = b.graph(s).triples();
    batch.neg_triples[s] = neg_sample_triples(b.graph(s), batch.triples[s], 2, NegStrategy::kUniform, nullptr, 7 + s);
  }
  batch.pairs = b.associations.train_pairs;
  batch.neg_pairs = neg_sample_pairs(b, batch.pairs, 2, NegStrategy::kUniform, nullptr, nullptr, 9);
  batch.semi_pairs = b.associations.test_pairs;
  LossSettings ls;
  ls.margin_rel = 1.0;
  ls.margin_proj = 1.5;
  const GradCheckReport r = gradient_check(p, ctx, batch, ls, 1e-6);
  EXPECT_LT(r.max_rel_error, kGradCheckTolerance);
}

TEST(Gradients, EmptyBatchIsZero) {
  const DatasetBundle b = synthetic();
  const ModelConfig c = config(4, 2);
  const ModelParams p = init_params(b, c, 1);
  const GradientResult g = compute_gradients(p, make_context(b, c), Batch{}, LossSettings{});
  EXPECT_EQ(g.loss.total(), 0.0);
  for (const auto &v : block_views(g.grads)) EXPECT_TRUE(v.map.isZero(0.0)) << v.name;
}

TEST(Gradients, InactiveNegativesContributeNothing) {
  DatasetBundle b;
  b.kg1 = KnowledgeGraph({"h", "t", "n"}, {"r"}, {{0, 0, 1}});
  b.kg2 = b.kg1;
  const ModelConfig c = config(2, 1);
  ModelParams p = init_params(b, c, 1);
  auto &g = p.graphs[0];
  g.relations.col(0).setZero();
  g.objects.col(0).setZero();
  g.objects.col(1) = at_distance(0.2);
  g.objects.col(2) = at_distance(0.9);  // far beyond margin 0.1
  const ModelContext ctx = make_context(b, c);
  LossSettings ls;
  Batch with, without;
  with.triples[0] = without.triples[0] = {{0, 0, 1}};
  with.neg_triples[0] = {{0, 0, 2}};
  const auto a = compute_gradients(p, ctx, with, ls);
  const auto z = compute_gradients(p, ctx, without, ls);
  EXPECT_EQ(a.grads, z.grads);
  EXPECT_EQ(a.loss.total(), z.loss.total());
}

TEST(Optimizer, ZeroGradientLeavesParameters) {
  const DatasetBundle b = synthetic();
  const ModelConfig c = config(4, 2);
  ModelParams p = init_params(b, c, 1);
  const ModelParams before = p;
  AdamState s = make_adam_state(p);
  s.first_moment.projection.setConstant(1.0);
  TrainConfig t;
  t.lr = 0.1;
  optimizer_step(p, zeros_like(p), s, t);
  // moments decay only; params move only through the nonzero decayed moment
  EXPECT_EQ(p.graphs, before.graphs);
  EXPECT_TRUE(s.first_moment.projection.isApprox(MatrixXd::Constant(4, 4, 0.9), 1e-15));
  EXPECT_TRUE(s.second_moment.graphs[0].objects.isZero(0.0));
}

TEST(Optimizer, OriginRowTakesAdamStepOfQuarterGradient) {
  DatasetBundle b;
  b.kg1 = KnowledgeGraph({"a", "b"}, {"r"}, {{0, 0, 1}});
  b.kg2 = b.kg1;
  const ModelConfig c = config(2, 1);
  ModelParams p = init_params(b, c, 1);
  p.graphs[0].objects.col(0).setZero();
  ModelParams g = zeros_like(p);
  g.graphs[0].objects.col(0) << 0.8, -0.2;
  AdamState s = make_adam_state(p);
  TrainConfig t;
  t.lr = 0.01;
  optimizer_step(p, g, s, t);
  // first Adam step on r = g / 4: m_hat = r, v_hat = r^2
  const VectorXd r = g.graphs[0].objects.col(0) / 4.0;
  const VectorXd expected = -t.lr * (r.array() / (r.array().abs() + t.adam_eps)).matrix();
  EXPECT_TRUE(p.graphs[0].objects.col(0).isApprox(expected, 1e-14));
}

TEST(Optimizer, BoundaryProjection) {
  DatasetBundle b;
  b.kg1 = KnowledgeGraph({"a", "b"}, {"r"}, {{0, 0, 1}});
  b.kg2 = b.kg1;
  const ModelConfig c = config(2, 1);
  ModelParams p = init_params(b, c, 1);
  p.graphs[0].objects.col(0) << 0.9, 0.0;
  ModelParams g = zeros_like(p);
  g.graphs[0].objects.col(0) << -1.0, 0.0;
  AdamState s = make_adam_state(p);
  TrainConfig t;
  t.lr = 1.0;
  optimizer_step(p, g, s, t);
  EXPECT_NEAR(p.graphs[0].objects.col(0).norm(), 1.0 - c.geometry.ball_eps, 1e-15);
}

TEST(Sampling, KZeroAndDeterminism) {
  const DatasetBundle b = synthetic();
  const auto &t = b.kg1.triples();
  EXPECT_TRUE(neg_sample_triples(b.kg1, t, 0, NegStrategy::kUniform, nullptr, 1).empty());
  EXPECT_TRUE(neg_sample_pairs(b, b.associations.train_pairs, 0, NegStrategy::kUniform, nullptr, nullptr, 1).empty());
  EXPECT_EQ(neg_sample_triples(b.kg1, t, 4, NegStrategy::kUniform, nullptr, 3),
            neg_sample_triples(b.kg1, t, 4, NegStrategy::kUniform, nullptr, 3));
  EXPECT_EQ(neg_sample_pairs(b, b.associations.train_pairs, 4, NegStrategy::kUniform, nullptr, nullptr, 3),
            neg_sample_pairs(b, b.associations.train_pairs, 4, NegStrategy::kUniform, nullptr, nullptr, 3));
  EXPECT_EQ(neg_sample_triples(b.kg1, t, 4, NegStrategy::kUniform, nullptr, 3).size(), 4 * t.size());
}

TEST(Sampling, NegativesAvoidPositives) {
  const DatasetBundle b = synthetic(20, 0.4);
  for (const Triple &n : neg_sample_triples(b.kg1, b.kg1.triples(), 5, NegStrategy::kUniform, nullptr, 2)) {
    EXPECT_FALSE(b.kg1.contains(n));
  }
  const auto &pos = b.associations.train_pairs;
  for (const auto &n : neg_sample_pairs(b, pos, 5, NegStrategy::kUniform, nullptr, nullptr, 2)) {
    for (const auto &q : pos) EXPECT_FALSE(n == q);
  }
}

TEST(Sampling, TruncatedUsesNearestCandidates) {
  const DatasetBundle b = synthetic(40, 0.1);
  const ModelParams p = init_params(b, config(4, 1), 3);
  const NearestLists near = nearest_candidates(p.graphs[0].objects, 0.1);
  ASSERT_EQ(near.size(), 40u);
  for (const auto &l : near) EXPECT_EQ(l.size(), 4u);
  EXPECT_EQ(near[5][0], 5);
  const std::vector<Triple> one = {b.kg1.triples()[0]};
  for (const Triple &n : neg_sample_triples(b.kg1, one, 50, NegStrategy::kTruncated, &near, 1)) {
    const bool head_changed = n.head != one[0].head;
    const Index orig = head_changed ? one[0].head : one[0].tail;
    const Index repl = head_changed ? n.head : n.tail;
    const auto &cands = near[orig];
    EXPECT_NE(std::find(cands.begin(), cands.end(), repl), cands.end());
  }
}

// With every object in the candidate lists, truncated sampling must draw
// replacements from the same distribution as uniform sampling. Two-sample
// chi-square homogeneity test on the replacement counts.
TEST(Sampling, FullTruncationMatchesUniform) {
  const Index n = 20;
  std::vector<std::string> ids;
  for (Index i = 0; i < n; ++i) ids.push_back("e" + std::to_string(i));
  const KnowledgeGraph kg(ids, {"r"}, {{0, 0, 1}});
  Eigen::MatrixXd emb(2, n);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (Index i = 0; i < emb.size(); ++i) emb.data()[i] = u(rng);
  const NearestLists all = nearest_candidates(emb, 1.0);
  for (const auto &l : all) ASSERT_EQ(Index(l.size()), n);

  const std::vector<Triple> batch = {{0, 0, 1}};
  const int k = 20000;
  auto counts = [&](NegStrategy s, std::uint64_t seed) {
    std::vector<double> c(std::size_t(2 * n), 0.0);
    for (const Triple &t : neg_sample_triples(kg, batch, k, s, s == NegStrategy::kTruncated ? &all : nullptr, seed)) {
      if (t.head != 0) c[std::size_t(t.head)] += 1;
      else c[std::size_t(n + t.tail)] += 1;
    }
    return c;
  };
  const auto a = counts(NegStrategy::kUniform, 11);
  const auto b = counts(NegStrategy::kTruncated, 12);
  double chi2 = 0.0;
  int df = -1;
  const double na = std::accumulate(a.begin(), a.end(), 0.0), nb = std::accumulate(b.begin(), b.end(), 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double tot = a[i] + b[i];
    if (tot == 0) continue;
    const double ea = tot * na / (na + nb), eb = tot * nb / (na + nb);
    chi2 += (a[i] - ea) * (a[i] - ea) / ea + (b[i] - eb) * (b[i] - eb) / eb;
    ++df;
  }
  // 0.999 quantile of chi-square with df degrees of freedom, Wilson-Hilferty
  const double z = 3.090232;
  const double q = df * std::pow(1 - 2.0 / (9 * df) + z * std::sqrt(2.0 / (9 * df)), 3);
  EXPECT_LT(chi2, q) << "df " << df;
}

TEST(SelfTraining, EpsilonZeroProposesNothing) {
  const DatasetBundle b = synthetic(30);
  const ModelConfig c = config(4, 2);
  EXPECT_TRUE(self_train_propose(fixtures::perfect_params(b, c), make_context(b, c), 0.0).empty());
}

TEST(SelfTraining, PerfectModelRecoversUnalignedPairs) {
  const DatasetBundle b = synthetic(60, 0.08);
  const ModelConfig c = config(6, 2);
  const auto props = self_train_propose(fixtures::perfect_params(b, c), make_context(b, c), 0.25);
  std::set<std::pair<Index, Index>> truth, got;
  for (const auto &p : b.associations.test_pairs) truth.insert({p.first, p.second});
  for (const auto &p : props) got.insert({p.first, p.second});
  for (const auto &t : truth) EXPECT_TRUE(got.contains(t));
  int correct = 0;
  for (const auto &g : got) correct += truth.contains(g) ? 1 : 0;
  EXPECT_GE(double(correct) / double(got.size()), 0.95);
}

TEST(SelfTraining, MutualNearestBoundsProposalCount) {
  const DatasetBundle b = synthetic(40);
  const ModelConfig c = config(4, 2);
  const ModelParams p = init_params(b, c, 8);
  const auto props = self_train_propose(p, make_context(b, c), 1e9);
  EXPECT_LE(props.size(), b.associations.test_pairs.size());
  std::set<Index> firsts, seconds;
  for (const auto &q : props) {
    EXPECT_TRUE(firsts.insert(q.first).second);
    EXPECT_TRUE(seconds.insert(q.second).second);
  }
}

TEST(Train, ZeroEpochsReturnsInitialization) {
  const DatasetBundle b = synthetic();
  const ModelConfig c = config(4, 2);
  TrainConfig t = quick_train(0);
  t.seed = 21;
  const TrainResult r = train(b, c, t, SelfTrainConfig{});
  EXPECT_EQ(r.params, init_params(b, c, 21));
  EXPECT_TRUE(r.log.empty());
}

TEST(Train, ZeroLearningRateKeepsParameters) {
  const DatasetBundle b = synthetic();
  const ModelConfig c = config(4, 2);
  TrainConfig t = quick_train(3);
  t.lr = 0.0;
  const TrainResult r = train(b, c, t, SelfTrainConfig{});
  EXPECT_EQ(r.params, init_params(b, c, t.seed));
  EXPECT_EQ(r.log.size(), 3u);
}

TEST(Train, FixedNegativesFullBatchLossNonIncreasing) {
  const DatasetBundle b = synthetic(30, 0.1);
  const ModelConfig c = config(4, 2);
  TrainConfig t = quick_train(40);
  t.fixed_negatives = true;
  t.optimizer = OptimizerKind::kRsgd;
  t.lr = 0.005;
  const TrainResult r = train(b, c, t, SelfTrainConfig{});
  ASSERT_EQ(r.log.size(), 40u);
  for (std::size_t e = 1; e < r.log.size(); ++e) {
    EXPECT_LE(r.log[e].loss.total(), r.log[e - 1].loss.total()) << "epoch " << e;
  }
  EXPECT_LT(r.log.back().loss.total(), r.log.front().loss.total());
}

TEST(Train, DeterministicAndSelfTrainingOffIsBaseline) {
  const DatasetBundle b = synthetic(30);
  const ModelConfig c = config(4, 2);
  const TrainConfig t = quick_train(5);
  const TrainResult a = train(b, c, t, SelfTrainConfig{});
  const TrainResult a2 = train(b, c, t, SelfTrainConfig{});
  EXPECT_EQ(a.params, a2.params);
  SelfTrainConfig off;
  off.enabled = false;
  off.epsilon = 3.0;
  off.propose_every = 1;
  EXPECT_EQ(train(b, c, t, off).params, a.params);
}

TEST(Train, LogLineFormat) {
  EpochRecord r;
  r.epoch = 3;
  r.loss = {1.5, 0.25, 0.0};
  r.seconds = 0.5;
  const std::string line = format_epoch_line(r);
  EXPECT_EQ(std::count(line.begin(), line.end(), '\t'), 5);
  EXPECT_EQ(line.substr(0, 2), "3\t");
  r.validation_h1 = 0.75;
  EXPECT_NE(format_epoch_line(r).find("0.75"), std::string::npos);
}

TEST(Train, WritesLogAndValidates) {
  const DatasetBundle b = synthetic();
  const ModelConfig c = config(4, 1);
  TrainConfig t = quick_train(4);
  t.validate_every = 2;
  std::ostringstream log;
  TrainHooks h;
  h.log = &log;
  int calls = 0;
  h.validate = [&](const ModelParams &) {
    ++calls;
    return 0.5;
  };
  const TrainResult r = train(b, c, t, SelfTrainConfig{}, h);
  EXPECT_EQ(calls, 2);
  const std::string text = log.str();
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 4);
  EXPECT_TRUE(std::isnan(r.log[0].validation_h1));
  EXPECT_EQ(r.log[1].validation_h1, 0.5);
}
