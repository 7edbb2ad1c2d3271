// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "ups/common.hpp"

namespace ups {

inline constexpr int kDefaultEceBins = 15;

/// One row of a prediction dump: confidence and correctness of the predicted
/// class plus that class's uncertainty.
struct PredictionRecord {
  std::size_t sample_id = 0;
  double confidence = 0.0;
  int pred_class = 0;
  int true_class = 0;
  double uncertainty = 0.0;

  bool correct() const { return pred_class == true_class; }
  friend bool operator==(const PredictionRecord&, const PredictionRecord&) = default;
};

using PredictionDump = std::vector<PredictionRecord>;

struct EceBin {
  double lower = 0.0;
  double upper = 0.0;
  std::size_t count = 0;
  double mean_confidence = 0.0;  ///< 0 for an empty bin
  double accuracy = 0.0;         ///< 0 for an empty bin
};

struct EceReport {
  int bins = kDefaultEceBins;
  std::size_t total = 0;
  std::vector<EceBin> per_bin;
  double ece = 0.0;
};

/// Bins are (l/L, (l+1)/L]: a confidence on a boundary goes to the lower bin,
/// 1.0 to the top bin, and 0 (outside the range) to the bottom bin.
std::size_t ece_bin_index(double confidence, int bins);

/// ECE = sum_l |sum_{i in l} conf_i - sum_{i in l} correct_i| / N.
/// Throws EmptyInput on an empty dump.
EceReport compute_ece(std::span<const PredictionRecord> dump, int bins = kDefaultEceBins);

struct SweepRow {
  double kappa = 0.0;
  std::size_t subset_size = 0;
  std::optional<double> ece;  ///< absent when the subset is empty
};

/// ECE of the subset with uncertainty <= kappa, for each kappa (ascending).
std::vector<SweepRow> ece_vs_uncertainty_sweep(std::span<const PredictionRecord> dump,
                                               std::span<const double> thresholds,
                                               int bins = kDefaultEceBins);

/// Dump of a single-label prediction matrix: confidence = row max, prediction =
/// lowest-index argmax, uncertainty = std of the predicted class (0 without stds).
PredictionDump make_prediction_dump(const ProbMatrix& probs, std::span<const int> true_classes,
                                    const UncertaintyMatrix* stds = nullptr);

/// Multi-label ECE: each class is treated as a binary problem (confidence
/// max(p, 1-p), prediction p >= 0.5) and the per-class ECEs are averaged.
double multilabel_ece(const ProbMatrix& probs, const BinaryMatrix& truth,
                      int bins = kDefaultEceBins);

// Prediction dump CSV, format version 1:
//   sample_id,confidence,pred_class,true_class,uncertainty
// Lines starting with '#' are ignored on read.
void write_prediction_dump(std::ostream& out, std::span<const PredictionRecord> dump);
PredictionDump read_prediction_dump(std::istream& in);

/// kappa,subset_size,ece
void write_sweep_csv(std::ostream& out, std::span<const SweepRow> rows);
/// bin,lower,upper,count,mean_confidence,accuracy
void write_ece_report_csv(std::ostream& out, const EceReport& report);

}  // namespace ups
