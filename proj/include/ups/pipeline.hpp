// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "ups/calibration.hpp"
#include "ups/data.hpp"
#include "ups/losses.hpp"
#include "ups/model.hpp"
#include "ups/selection.hpp"
#include "ups/uncertainty.hpp"

namespace ups {

struct ModelConfig {
  std::vector<int> hidden_dims{32, 32};
  double dropout_rate = 0.3;
};

struct TrainingConfig {
  int epochs_per_iteration = 200;
  int batch_size = 32;
  double base_lr = 0.03;
  double min_lr = 0.0;
};

/// Where selection-time probabilities come from.
enum class SelectionProbs {
  mc_mean,        ///< mean over the estimator passes
  deterministic,  ///< one deterministic forward
};

std::string to_string(SelectionProbs source);
SelectionProbs parse_selection_probs(const std::string& text);

struct PipelineConfig {
  ModelConfig model;
  TrainingConfig training;
  /// Total iterations including the supervised iteration 0.
  int max_iterations = 20;
  /// Stop when the relative change of the total selected count falls below this.
  double convergence_delta = 0.01;
  SelectionConfig selection;
  EstimatorConfig estimator;
  /// Applied to every selection-time output (estimator passes and evaluation).
  TemperatureConfig temperature{2.0};
  SelectionProbs selection_probs = SelectionProbs::mc_mean;
  int ece_bins = kDefaultEceBins;
  std::uint64_t master_seed = 0;

  void validate() const;
};

struct IterationRecord {
  int iteration = 0;
  std::size_t pos_selected = 0;
  std::size_t neg_selected = 0;
  /// Unlabeled samples that contributed a loss term.
  std::size_t samples_selected = 0;
  /// Unlabeled samples trained through negative labels only.
  std::size_t samples_negative_only = 0;
  std::vector<std::size_t> positives_per_class;
  std::optional<double> sel_accuracy;       ///< all selected entries
  std::optional<double> positive_accuracy;  ///< selected positive entries
  double test_metric = 0.0;  ///< accuracy (single-label) or mAP (multi-label)
  double ece = 0.0;
  bool balanced = false;
  std::uint64_t model_seed = 0;
  double wall_clock_seconds = 0.0;  ///< not part of any exported file
};

struct RunResult {
  ModelState model;
  std::vector<IterationRecord> records;
  std::vector<SelectionReport> selection_reports;  ///< one per pseudo-labeling iteration
  std::vector<std::string> warnings;
};

/// Seed of the freshly initialized network of iteration k.
std::uint64_t iteration_model_seed(std::uint64_t master_seed, int iteration);
/// Seed of the estimator passes that pseudo-label with iteration k's model.
std::uint64_t iteration_estimator_seed(std::uint64_t master_seed, int iteration);

/// Rows and per-row objectives for one training run.
struct TrainingSet {
  Matrix features;
  losses::LossSpec spec;
};

/// Labeled rows (positive CE, or masked BCE with a full mask) followed by the
/// pseudo-labeled rows that have a non-empty objective.
TrainingSet assemble_training_set(const TrainingView& view, const Matrix& pseudo_features,
                                  const PseudoLabelSet* pseudo, const SelectionConfig& selection);

/// Fresh network from `seed`, then minibatch SGD with dropout active and a
/// cosine schedule over the whole run. The step budget is
/// epochs_per_iteration * ceil(epoch_size / batch_size); the pipeline passes
/// the full training-split size so every iteration gets the same budget no
/// matter how many pseudo-labels were selected. epoch_size 0 means the number
/// of rows in `data`.
ModelState train_model(const TrainingSet& data, const std::vector<int>& layer_dims, Head head,
                       const PipelineConfig& cfg, std::uint64_t seed, std::size_t epoch_size = 0);

struct Evaluation {
  double metric = 0.0;  ///< top-1 accuracy or mAP
  double ece = 0.0;
  PredictionDump dump;  ///< single-label only
};

/// Average precision of one class: mean of precision@k over the ranks k of the
/// positives when samples are sorted by descending score (ties by index).
/// std::nullopt when the class has no positive sample.
std::optional<double> average_precision(std::span<const double> scores,
                                        std::span<const std::uint8_t> truth);
/// Mean of average_precision over classes that have at least one positive.
double mean_average_precision(const ProbMatrix& probs, const BinaryMatrix& truth);

/// Deterministic forward at temperature `temp`. Throws EmptyInput for an empty split.
Evaluation evaluate(const ModelState& model, const Matrix& features, const BinaryMatrix& truth,
                    LabelMode mode, TemperatureConfig temp, int ece_bins = kDefaultEceBins);

/// Iteration 0 trains on D_L. Each later iteration pseudo-labels all of D_U
/// with the previous model, selects, optionally class-balances, reinitializes
/// a network from a fresh seed and trains it on D_L plus the selection.
RunResult run_ssl(const SslDataset& dataset, const PipelineConfig& cfg);

/// Iteration 0 of run_ssl alone.
RunResult run_supervised(const SslDataset& dataset, const PipelineConfig& cfg);

/// MC estimate on the unlabeled split with the run's selection settings,
/// joined with ground truth for offline calibration analysis (single-label).
PredictionDump unlabeled_prediction_dump(const ModelState& model, const SslDataset& dataset,
                                         const PipelineConfig& cfg, int iteration);

/// iteration,pos_selected,neg_selected,sel_accuracy,test_metric,ece
void write_iteration_csv(std::ostream& out, std::span<const IterationRecord> records);

}  // namespace ups
