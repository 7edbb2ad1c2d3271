// SPDX-License-Identifier: Apache-2.0
#include "ups/uncertainty.hpp"

#include <cmath>
#include <vector>

#include "ups/parallel.hpp"
#include "ups/rng.hpp"

namespace ups {

std::string to_string(EstimatorKind kind) {
  return kind == EstimatorKind::mc_dropout ? "mc_dropout" : "input_jitter";
}

EstimatorKind parse_estimator(const std::string& text) {
  if (text == "mc_dropout") return EstimatorKind::mc_dropout;
  if (text == "input_jitter") return EstimatorKind::input_jitter;
  throw ConfigError("unknown estimator '" + text + "'");
}

void EstimatorConfig::validate() const {
  if (passes < 2) throw InvalidParameter("an estimator needs at least 2 passes");
  if (!(jitter_sigma >= 0.0)) throw InvalidParameter("jitter_sigma must be non-negative");
}

std::uint64_t estimator_pass_seed(std::uint64_t base_seed, int pass) {
  return derive_seed({base_seed, tag("pass"), static_cast<std::uint64_t>(pass)});
}

Matrix jitter_inputs(const Matrix& inputs, double sigma, std::uint64_t seed) {
  Matrix out = inputs;
  if (sigma == 0.0) return out;
  for (Eigen::Index i = 0; i < out.rows(); ++i)
    for (Eigen::Index j = 0; j < out.cols(); ++j)
      out(i, j) += sigma * hashed_normal(derive_seed(
                               {seed, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(j)}));
  return out;
}

ProbMatrix estimator_pass(const ModelState& model, const Matrix& inputs,
                          const EstimatorConfig& cfg, TemperatureConfig temp, int pass) {
  const std::uint64_t seed = estimator_pass_seed(cfg.base_seed, pass);
  if (cfg.estimator == EstimatorKind::mc_dropout)
    return forward(model, inputs, ForwardMode::stochastic(seed), temp);
  return forward(model, jitter_inputs(inputs, cfg.jitter_sigma, seed), ForwardMode::deterministic(),
                 temp);
}

UncertaintyEstimate estimate(const ModelState& model, const Matrix& inputs,
                             const EstimatorConfig& cfg, TemperatureConfig temp) {
  cfg.validate();
  if (cfg.estimator == EstimatorKind::mc_dropout && model.dropout_rate == 0.0)
    throw DegenerateEstimator("MC-dropout on a model with dropout rate 0");
  if (inputs.cols() != model.input_dim()) throw ShapeError("input width does not match model");

  const auto n_passes = static_cast<std::size_t>(cfg.passes);
  std::vector<ProbMatrix> passes(n_passes);
  parallel_for(n_passes, [&](std::size_t k) {
    passes[k] = estimator_pass(model, inputs, cfg, temp, static_cast<int>(k));
  });

  UncertaintyEstimate est;
  est.passes = cfg.passes;
  est.estimator = cfg.estimator;
  // Welford's update in pass order: identical passes give a zero spread exactly.
  est.mean_probs = ProbMatrix::Zero(inputs.rows(), model.num_classes());
  UncertaintyMatrix m2 = UncertaintyMatrix::Zero(inputs.rows(), model.num_classes());
  for (std::size_t k = 0; k < n_passes; ++k) {
    const ProbMatrix delta = passes[k] - est.mean_probs;
    est.mean_probs += delta / static_cast<double>(k + 1);
    m2 += delta.cwiseProduct(passes[k] - est.mean_probs);
  }
  est.std_probs = (m2 / static_cast<double>(n_passes - 1)).cwiseMax(0.0).cwiseSqrt();
  return est;
}

ProbMatrix combine_confidence(const UncertaintyEstimate& estimate) { return estimate.mean_probs; }

}  // namespace ups
