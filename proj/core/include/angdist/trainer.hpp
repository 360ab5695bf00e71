#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "angdist/data.hpp"
#include "angdist/geometry.hpp"
#include "angdist/metrics.hpp"
#include "angdist/model.hpp"

namespace angdist {

enum class LossMode {
  None,  ///< cross-entropy only
  Hard,  ///< CE + weighted (mu_p, sigma_p, mu_n, sigma_n)
  Soft,  ///< CE + lambda_mu L_mu + lambda_sigma_p sigma_p
};

enum class OptimizerKind {
  AdamW,        ///< two-moment adaptive update, decoupled weight decay
  SgdMomentum,  ///< heavy-ball momentum (beta1), decoupled weight decay
};

std::string to_string(LossMode mode);
LossMode parse_loss_mode(const std::string& name);
std::string to_string(OptimizerKind kind);
OptimizerKind parse_optimizer(const std::string& name);

struct TrainConfig {
  std::size_t epochs = 25;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double adam_epsilon = 1e-8;
  double weight_decay = 1e-2;
  OptimizerKind optimizer = OptimizerKind::AdamW;
  LossMode loss_mode = LossMode::Hard;
  LossWeights weights{1.0, 1.0, 1.0, 1.0};
  double soft_lambda_mu = 1.0;
  double soft_lambda_sigma_p = 1.0;
  MixupSpec mixup;
  std::uint64_t seed = 0;
  double eval_fraction = 0.2;
  /// Record a GeometryReport of the eval split after every epoch.
  bool per_epoch_geometry = false;

  /// Throws InvalidArgument or ConfigConflict.
  void validate() const;
};

struct StepRecord {
  double ce = 0.0;
  double add = 0.0;
  double total = 0.0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double ce = 0.0;
  double add = 0.0;
  double total = 0.0;
  /// Batch means of the four moments (hard mode) or of L_mu/sigma_p (soft).
  double mu_p = 0.0;
  double sigma_p = 0.0;
  double mu_n = 0.0;
  double sigma_n = 0.0;
  double l_mu = 0.0;
  double eval_accuracy = 0.0;
  std::optional<GeometryReport> geometry;
};

struct RunRecord {
  ModelConfig model;
  TrainConfig config;
  std::uint64_t seed = 0;
  std::vector<StepRecord> steps;
  std::vector<EpochRecord> epochs;
  double final_accuracy = 0.0;
  std::optional<GeometryReport> final_geometry;
};

struct TrainResult {
  MlpParams params;
  RunRecord record;
};

struct EvalResult {
  double accuracy = 0.0;
  /// Absent when some class has fewer than two samples in the split.
  std::optional<GeometryReport> geometry;
};

/// `model_config.input_dim` and `.classes` are taken from the dataset when
/// zero, and must match it otherwise.
TrainResult train(const Dataset& dataset, ModelConfig model_config, const TrainConfig& config);

/// Accuracy = fraction of rows with argmax(logits) == argmax(label), ties
/// resolved to the lowest class index.
EvalResult evaluate(const MlpParams& params, const Dataset& split);

double accuracy_from_logits(const Matrix& logits, const std::vector<LabelVector>& labels);

/// The six weightings of the per-term ablation: 1000, 0100, 0010, 0001, 1010, 1111.
std::vector<LossWeights> ablation_weight_set();

struct AblationRow {
  LossWeights weights;
  std::uint64_t seed = 0;
  RunRecord record;
};

struct AblationSummary {
  LossWeights weights;
  std::size_t runs = 0;
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;  ///< sample std; 0 for a single run
};

struct AblationTable {
  std::vector<AblationRow> rows;  ///< lambda-major, then seed order
  std::vector<AblationSummary> summary;

  /// Columns: lambda,seed,accuracy,intra_clustering,intra_equidistance,
  /// inter_separation,inter_equidistance.
  std::string to_csv() const;
};

/// One hard-mode training run per (weights, seed). With `parallel`, runs are
/// spread over hardware threads; rows keep lambda-major order either way.
AblationTable ablation_sweep(const Dataset& dataset, const ModelConfig& model_config,
                             const TrainConfig& base_config,
                             const std::vector<LossWeights>& lambda_set,
                             const std::vector<std::uint64_t>& seeds, bool parallel = false);

std::string run_record_to_json(const RunRecord& record,
                               const std::vector<std::string>& class_names = {});

}  // namespace angdist
