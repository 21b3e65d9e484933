#pragma once

#include "cfr/backends/interfaces.hpp"
#include "cfr/evaluation/evaluation.hpp"
#include "cfr/parameter_set.hpp"

#include <json.hpp>

#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace cfr {

// Groups in `scope` become (1-alpha)*theta0 + alpha*theta1; the rest are copied
// from theta0.
ParameterSet blend_parameters(const ParameterSet& theta0, const ParameterSet& theta1, double alpha,
                              const std::set<std::string>& scope);

struct TrainConfig {
  int batch_size = 8;
  double learning_rate = 1e-4;
  int max_epochs = 50;
  // Minimum gain in validation Acc@5, as a fraction, that resets patience.
  // Values <= 0 turn early stopping off.
  double min_delta = 0.005;
  int patience = 5;
  double alpha = 0.3;
  std::uint64_t seed = 0;
  std::string optimizer = "sgd";  // "sgd" or "momentum"
  double momentum = 0.9;
  // Blend toward theta0 after every epoch instead of once after training.
  bool blend_per_epoch = false;
  // Pick alpha from {0.0, 0.1, ..., 1.0} by validation Acc@5.
  bool alpha_search = false;
  // Augmented copies per source image for the standard-augmentation arm.
  int augment_copies = 2;
  int jobs = 1;

  void validate() const;
};

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0.0;
  double val_acc5 = 0.0;  // percent
};

struct TrainingRecord {
  std::vector<EpochMetrics> epoch_metrics;
  bool stopped_early = false;
  int epochs_run = 0;
};

nlohmann::json to_json(const TrainingRecord& record);

struct FineTuneResult {
  ParameterSet theta1;
  TrainingRecord record;
};

// Trains the head groups with mini-batch cross-entropy; body groups are never
// touched. Shuffling depends only on config.seed.
FineTuneResult fine_tune_head(const TrainableClassifier& classifier, const LabeledSet& train_set,
                              const LabeledSet& val_set, const TrainConfig& config);

// Flips, rotation, crop, masking and colour jitter; each copy draws its own
// transform parameters from `seed`.
ImageTensor augment_image(const ImageTensor& image, std::uint64_t seed);
LabeledSet augment_set(const LabeledSet& set, int copies, std::uint64_t seed);

struct ComparisonRow {
  std::string set;
  std::string cls;  // "overall" for the set-level row
  std::optional<double> baseline;
  std::optional<double> standard;
  std::optional<double> counterfactual;

  std::optional<double> gain() const;
  bool operator==(const ComparisonRow&) const = default;
};

struct ComparisonReport {
  static constexpr int kSchemaVersion = 1;

  std::string model_name;
  std::vector<ComparisonRow> rows;
  // set name -> error text for sets that could not be evaluated
  std::map<std::string, std::string> errors;
  nlohmann::json metadata = nlohmann::json::object();

  bool has_standard() const;
  bool operator==(const ComparisonReport&) const = default;
};

nlohmann::json to_json(const ComparisonReport& report);
ComparisonReport comparison_report_from_json(const nlohmann::json& j);
std::string to_csv(const ComparisonReport& report);

struct ArmResult {
  std::unique_ptr<TrainableClassifier> classifier;
  TrainingRecord record;
  double alpha = 0.0;
};

struct ReinforceResult {
  std::unique_ptr<TrainableClassifier> reinforced;
  TrainingRecord record;
  double alpha = 0.0;
  std::optional<ArmResult> standard;
  ComparisonReport comparison;
};

// Fine-tune, blend the head with `alpha`, then score baseline and reinforced
// models on every eval set. When `standard_train` is given, a second arm is
// trained on augmented copies of it and reported in the "standard" column.
ReinforceResult reinforce(const TrainableClassifier& classifier, const LabeledSet& cf_train, const LabeledSet& val_set,
                          const std::vector<LabeledSet>& eval_sets, const TrainConfig& config,
                          const LabeledSet* standard_train = nullptr);

// Fills Table-2 style rows from per-set, per-model indicators.
ComparisonReport compare_models(const std::vector<LabeledSet>& eval_sets,
                                const std::vector<const Classifier*>& models, int jobs);

}  // namespace cfr
