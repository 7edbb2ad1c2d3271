// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>

#include "ups/model.hpp"

namespace ups {

enum class EstimatorKind { mc_dropout, input_jitter };

std::string to_string(EstimatorKind kind);
EstimatorKind parse_estimator(const std::string& text);

struct EstimatorConfig {
  EstimatorKind estimator = EstimatorKind::mc_dropout;
  int passes = 10;
  double jitter_sigma = 0.0;  ///< input_jitter only
  std::uint64_t base_seed = 0;

  void validate() const;
};

/// Per-class mean and sample standard deviation (divisor passes - 1) of the
/// probabilities over `passes` stochastic evaluations.
struct UncertaintyEstimate {
  ProbMatrix mean_probs;
  UncertaintyMatrix std_probs;
  int passes = 0;
  EstimatorKind estimator = EstimatorKind::mc_dropout;
};

/// Seed of pass k. mc_dropout uses it as the dropout pass seed, input_jitter
/// as the noise seed.
std::uint64_t estimator_pass_seed(std::uint64_t base_seed, int pass);

/// inputs + N(0, sigma^2) noise, one counter-addressed draw per entry.
Matrix jitter_inputs(const Matrix& inputs, double sigma, std::uint64_t seed);

/// Probabilities of a single estimator pass.
ProbMatrix estimator_pass(const ModelState& model, const Matrix& inputs,
                          const EstimatorConfig& cfg, TemperatureConfig temp, int pass);

/// Runs every pass (in parallel when workers are available) and reduces them
/// in pass order, so the result does not depend on the worker count.
/// Throws DegenerateEstimator for mc_dropout on a model without dropout.
UncertaintyEstimate estimate(const ModelState& model, const Matrix& inputs,
                             const EstimatorConfig& cfg, TemperatureConfig temp);

/// Confidence used for selection: the mean over passes.
ProbMatrix combine_confidence(const UncertaintyEstimate& estimate);

}  // namespace ups
