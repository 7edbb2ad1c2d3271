// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "ups/common.hpp"

namespace ups {

enum class GammaMode { argmax, fixed };
enum class Regime { vanilla, confidence, ups };

std::string to_string(GammaMode mode);
std::string to_string(Regime regime);
GammaMode parse_gamma_mode(const std::string& text);
Regime parse_regime(const std::string& text);

struct SelectionConfig {
  double tau_p = 0.7;
  double tau_n = 0.05;
  double kappa_p = 0.05;
  double kappa_n = 0.005;
  GammaMode gamma_mode = GammaMode::argmax;
  double gamma = 0.5;  ///< used when gamma_mode == fixed
  Regime regime = Regime::ups;
  /// Pseudo-labeling iterations 1..balance_iters are class balanced.
  int balance_iters = 10;
  /// When false, negative selections are dropped (the "no negative learning" ablation).
  bool negative_learning = true;
  /// Single-label samples with a selected positive also train on their selected negatives.
  bool negatives_with_positive = false;

  void validate() const;
};

/// Hard pseudo-labels and selection masks for the unlabeled set.
/// A selected entry (mask 1) is a positive label when labels is 1 there and a
/// negative label otherwise.
struct PseudoLabelSet {
  BinaryMatrix labels;
  BinaryMatrix masks;
  LabelMode mode = LabelMode::single_label;
  int iteration = 0;
};

/// y_c = [p_c >= gamma]. In argmax mode gamma is the row maximum and only the
/// lowest-index maximal class is marked.
BinaryMatrix generate_labels(const ProbMatrix& probs, GammaMode mode, double gamma = 0.5);

/// g_c = [p_c >= tau_p] + [p_c <= tau_n].
BinaryMatrix select_confidence(const ProbMatrix& probs, const BinaryMatrix& labels,
                               const SelectionConfig& cfg);

/// g_c = [u_c <= kappa_p][p_c >= tau_p] + [u_c <= kappa_n][p_c <= tau_n].
BinaryMatrix select_ups(const ProbMatrix& probs, const UncertaintyMatrix& stds,
                        const BinaryMatrix& labels, const SelectionConfig& cfg);

/// Conventional pseudo-labeling: every generated label is used. Single-label
/// selects the positive class only; multi-label selects all C entries.
BinaryMatrix select_vanilla(const BinaryMatrix& labels, LabelMode mode);

/// Labels plus the regime's masks; negatives removed when negative learning is
/// off. `stds` is required for the ups regime. No class balancing.
PseudoLabelSet pseudo_label(const ProbMatrix& probs, const UncertaintyMatrix* stds,
                            const SelectionConfig& cfg, LabelMode mode, int iteration);

/// Caps each class's selected positives at the smallest per-class count,
/// keeping the highest-probability ones (ties: lower sample index first).
/// Negative selections are left alone.
PseudoLabelSet balance_classes(const PseudoLabelSet& pseudo, const ProbMatrix& probs);

struct SelectionReport {
  int iteration = 0;
  std::vector<std::size_t> positives_per_class;
  std::vector<std::size_t> negatives_per_class;
  std::vector<std::size_t> positives_per_sample;
  std::vector<std::size_t> negatives_per_sample;
  std::size_t total_positive = 0;
  std::size_t total_negative = 0;
  std::size_t samples_with_positive = 0;
  /// Samples whose only selections are negative labels.
  std::size_t samples_negative_only = 0;
  /// Samples with at least one selection.
  std::size_t samples_selected = 0;

  // Present only when ground truth was supplied and the denominator is non-zero.
  std::optional<double> accuracy;           ///< over all selected entries
  std::optional<double> positive_accuracy;  ///< over selected positive entries
  std::optional<double> negative_accuracy;  ///< over selected negative entries
  std::vector<std::optional<double>> accuracy_per_class;
};

/// Counts and, with ground truth, the fraction of selected entries whose
/// pseudo-label equals the true label indicator.
SelectionReport selection_stats(const PseudoLabelSet& pseudo,
                                const BinaryMatrix* ground_truth = nullptr);

/// Header: iteration,class,pos_selected,neg_selected,accuracy
/// One row per class and one "all" row per report; undefined accuracy is empty.
void write_selection_report_csv(std::ostream& out, const std::vector<SelectionReport>& reports);

}  // namespace ups
