// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ups/common.hpp"

namespace ups::losses {

/// Probabilities are clipped to [kProbClip, 1 - kProbClip] inside the losses
/// only. The clip has zero derivative outside that interval.
inline constexpr double kProbClip = 1e-7;

using ProbRow = std::span<const double>;
using BinaryRow = std::span<const std::uint8_t>;

double clip_probability(double p);

/// -log(pred[c*]) where c* is the single positive entry of target.
/// Throws InvalidTarget unless target has exactly one positive entry.
double positive_cross_entropy(ProbRow pred, BinaryRow target);

/// Negative cross-entropy over selected entries:
///   -(1/s) * sum_c g_c (1 - y_c) log(1 - p_c),   s = sum_c g_c.
/// Throws EmptyMask when s = 0.
double negative_cross_entropy(BinaryRow pseudo, ProbRow pred, BinaryRow mask);

/// Binary cross-entropy averaged over the s selected entries.
/// Throws EmptyMask when s = 0.
double masked_bce(BinaryRow pseudo, ProbRow pred, BinaryRow mask);

// Gradients with respect to the probability row, accumulated into `out`
// after multiplying by `scale`.
void positive_cross_entropy_grad(ProbRow pred, BinaryRow target, std::span<double> out,
                                 double scale);
void negative_cross_entropy_grad(BinaryRow pseudo, ProbRow pred, BinaryRow mask,
                                 std::span<double> out, double scale);
void masked_bce_grad(BinaryRow pseudo, ProbRow pred, BinaryRow mask, std::span<double> out,
                     double scale);

/// What a sample contributes to a batch objective.
enum class SampleObjective : std::uint8_t {
  skip,                   ///< excluded from the batch mean
  positive,               ///< positive_cross_entropy on the target's positive class
  negative,               ///< negative_cross_entropy on the selected entries
  positive_and_negative,  ///< positive CE plus NCE over the selected negatives
  masked_bce,             ///< masked binary cross-entropy
};

/// Per-sample targets, selection masks and objectives for one batch.
struct LossSpec {
  BinaryMatrix targets;
  BinaryMatrix masks;
  std::vector<SampleObjective> objectives;

  /// Every sample gets the same objective. Samples whose mask is empty are
  /// skipped for the mask-based objectives.
  static LossSpec uniform(SampleObjective objective, BinaryMatrix targets, BinaryMatrix masks);

  /// Single-label routing: a selected positive label trains with positive CE;
  /// otherwise selected negatives train with NCE; otherwise the sample is skipped.
  /// With negatives_with_positive, a sample that has both adds its negatives.
  static LossSpec single_label_dispatch(BinaryMatrix targets, BinaryMatrix masks,
                                        bool negatives_with_positive);

  std::size_t rows() const { return objectives.size(); }
  std::size_t contributing() const;
  /// Keeps only the given rows, in order.
  LossSpec subset(std::span<const std::size_t> rows) const;
};

/// Value of one sample's objective.
double sample_loss(SampleObjective objective, BinaryRow target, ProbRow pred, BinaryRow mask);

/// Mean loss over contributing samples. Throws EmptyBatch when none contribute.
double batch_loss(const ProbMatrix& probs, const LossSpec& spec);

/// d(batch_loss)/d(probs). Rows of skipped samples are zero.
ProbMatrix batch_loss_grad(const ProbMatrix& probs, const LossSpec& spec);

}  // namespace ups::losses
