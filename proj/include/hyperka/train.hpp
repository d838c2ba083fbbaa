// Losses, exact gradients, Riemannian Adam and the training loop, including
// the optional self-training augmentation.

#ifndef HYPERKA_TRAIN_HPP
#define HYPERKA_TRAIN_HPP

#include <array>
#include <cstdint>
#include <functional>
#include <limits>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "hyperka/kg.hpp"
#include "hyperka/model.hpp"
#include "hyperka/sampling.hpp"

namespace hyperka {

enum class OptimizerKind { kAdam, kRsgd };

std::string to_string(OptimizerKind k);
OptimizerKind optimizer_from_string(const std::string &s);

struct TrainConfig {
  double lr = 0.0002;
  /// Triples per step; pair batches are scaled to the same number of steps.
  Index batch_size = 20000;
  int neg_samples = 40;
  double margin_rel = 0.1;
  double margin_proj = 0.4;
  int epochs = 800;
  NegStrategy neg_strategy = NegStrategy::kTruncated;
  double trunc_frac = 0.1;
  /// Epochs between refreshes of the truncated candidate lists.
  int trunc_refresh = 10;
  /// Turns the translational loss off ("w/o relation" ablation).
  bool rel_loss = true;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  /// Samples negatives once and reuses them every epoch; also disables
  /// shuffling.
  bool fixed_negatives = false;
  std::uint64_t seed = 1;
  int threads = 1;
  /// Run the validation hook every this many epochs (0 = never).
  int validate_every = 0;
};

struct SelfTrainConfig {
  bool enabled = false;
  double epsilon = 0.25;
  double mu = 0.05;
  int propose_every = 10;
  bool mutual_nearest = true;
};

struct LossBreakdown {
  double rel = 0.0;
  double proj = 0.0;
  double semi = 0.0;
  double total() const { return rel + proj + semi; }
};

/// L = L_rel + L_proj (+ L_semi when self-training is on).
double total_loss(const LossBreakdown &parts);

/// Everything a step needs besides parameters.
struct ModelContext {
  const DatasetBundle *bundle = nullptr;
  ModelConfig config;
  std::array<PoolingSets, 2> pooling;
};

ModelContext make_context(const DatasetBundle &bundle, const ModelConfig &config);

struct Batch {
  std::array<std::vector<Triple>, 2> triples;
  std::array<std::vector<Triple>, 2> neg_triples;
  std::vector<AssociationPair> pairs;
  std::vector<AssociationPair> neg_pairs;
  std::vector<AssociationPair> semi_pairs;
};

struct LossSettings {
  double margin_rel = 0.1;
  double margin_proj = 0.4;
  double mu = 0.05;
  bool rel_loss = true;
  int threads = 1;
};

/// sum f(t) over positives + sum [margin - f(t')]_+ over negatives, on input
/// embeddings of one graph.
double loss_rel(const ModelParams &params, int side, std::span<const Triple> positives,
                std::span<const Triple> negatives, double margin,
                const GeometryConfig &geometry = {});

/// sum pi(i, j) over positives + sum [margin - pi(i', j')]_+ over negatives,
/// on final embeddings.
double loss_proj(const MatrixXd &projection, const MatrixXd &final_1, const MatrixXd &final_2,
                 std::span<const AssociationPair> positives,
                 std::span<const AssociationPair> negatives, double margin,
                 const GeometryConfig &geometry = {});

/// mu * sum pi(i, j) over proposed pairs.
double loss_semi(const MatrixXd &projection, const MatrixXd &final_1, const MatrixXd &final_2,
                 std::span<const AssociationPair> proposals, double mu,
                 const GeometryConfig &geometry = {});

LossBreakdown evaluate_loss(const ModelParams &params, const ModelContext &context,
                            const Batch &batch, const LossSettings &settings);

class NonFiniteGradient : public std::runtime_error {
 public:
  NonFiniteGradient(const std::string &parameter, int batch_index)
      : std::runtime_error("non-finite gradient in " + parameter + " (batch " +
                           std::to_string(batch_index) + ")"),
        parameter_(parameter),
        batch_index_(batch_index) {}
  const std::string &parameter() const { return parameter_; }
  int batch_index() const { return batch_index_; }

 private:
  std::string parameter_;
  int batch_index_;
};

struct GradientResult {
  ModelParams grads;
  LossBreakdown loss;
};

/// Exact Euclidean gradients of the batch loss w.r.t. every parameter block,
/// by reverse-mode differentiation through all geometry operations.
/// Throws NonFiniteGradient.
GradientResult compute_gradients(const ModelParams &params, const ModelContext &context,
                                 const Batch &batch, const LossSettings &settings,
                                 int batch_index = 0);

struct AdamState {
  ModelParams first_moment;
  ModelParams second_moment;
  long steps = 0;
};

AdamState make_adam_state(const ModelParams &params);

/// Manifold blocks: per-column Riemannian rescale, Adam moments, step, then
/// projection into the ball. Euclidean blocks: plain Adam. In kRsgd mode the
/// moments are skipped.
void optimizer_step(ModelParams &params, const ModelParams &grads, AdamState &state,
                    const TrainConfig &config, const GeometryConfig &geometry = {});

/// Mutually nearest (optional) pairs of objects outside the training pairs
/// whose projection error is below epsilon.
std::vector<AssociationPair> self_train_propose(const ModelParams &params,
                                                const ModelContext &context, double epsilon,
                                                bool mutual_nearest = true, int threads = 1);

struct EpochRecord {
  int epoch = 0;
  LossBreakdown loss;
  double seconds = 0.0;
  /// NaN unless validation ran this epoch.
  double validation_h1 = std::numeric_limits<double>::quiet_NaN();
  std::size_t proposals = 0;
};

/// One tab-separated epoch log line: epoch, L_rel, L_proj, L_semi, seconds,
/// validation H@1 (empty when not run).
std::string format_epoch_line(const EpochRecord &record);

struct TrainHooks {
  std::function<double(const ModelParams &)> validate;
  std::function<void(int epoch, const ModelParams &)> on_epoch_end;
  std::ostream *log = nullptr;
};

struct TrainResult {
  ModelParams params;
  std::vector<EpochRecord> log;
  std::vector<AssociationPair> proposals;
};

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(const std::string &what, ModelParams last_good)
      : std::runtime_error(what), last_good_(std::move(last_good)) {}
  const ModelParams &last_good() const { return last_good_; }

 private:
  ModelParams last_good_;
};

TrainResult train(const DatasetBundle &bundle, const ModelConfig &model_config,
                  const TrainConfig &train_config, const SelfTrainConfig &self_config,
                  const TrainHooks &hooks = {});

/// Continues from given parameters instead of a fresh initialization.
TrainResult train(const DatasetBundle &bundle, ModelParams initial,
                  const ModelConfig &model_config, const TrainConfig &train_config,
                  const SelfTrainConfig &self_config, const TrainHooks &hooks = {});

struct GradCheckOptions {
  Index num_objects = 10;
  Index dim = 4;
  int num_layers = 2;
  double step = 1e-6;
  std::uint64_t seed = 3;
  /// Relative error scale added to the analytic projection gradient; a
  /// nonzero value is a negative control.
  double perturb = 0.0;
};

struct GradCheckGroup {
  std::string name;
  double max_rel_error = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckGroup> groups;
  double max_rel_error = 0.0;
  double step = 0.0;
  bool pass = false;
};

inline constexpr double kGradCheckTolerance = 1e-4;

/// Central differences against compute_gradients on every parameter block.
/// The error of a block is max|analytic - numeric| over its entries divided
/// by the largest magnitude in either gradient.
GradCheckReport gradient_check(const ModelParams &params, const ModelContext &context,
                               const Batch &batch, const LossSettings &settings, double step,
                               double perturb = 0.0);

/// Builds a small random instance covering every parameter block and checks it.
GradCheckReport gradient_check(const GradCheckOptions &options);

}  // namespace hyperka

#endif  // HYPERKA_TRAIN_HPP
