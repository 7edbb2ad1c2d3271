// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ups/common.hpp"
#include "ups/losses.hpp"

namespace ups {

enum class Head { softmax, sigmoid };
enum class Activation { relu };

std::string to_string(Head head);
Head parse_head(const std::string& text);

/// Head matching a dataset's label mode.
Head head_for(LabelMode mode);

/// One affine layer. `weight` is fan_in x fan_out so that a batch maps as
/// X * weight + bias.
struct DenseLayer {
  Matrix weight;
  RowVector bias;

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

/// Multilayer perceptron with ReLU hidden layers and dropout after every hidden
/// activation. Dropout is inverted (kept units are scaled by 1/(1-rate) during
/// stochastic passes), so deterministic passes apply no mask and no rescaling.
struct ModelState {
  std::vector<int> layer_dims;
  std::vector<DenseLayer> layers;
  double dropout_rate = 0.0;
  Activation activation = Activation::relu;
  Head head = Head::softmax;
  std::uint64_t init_seed = 0;

  int input_dim() const { return layer_dims.front(); }
  int num_classes() const { return layer_dims.back(); }
  std::size_t parameter_count() const;
  /// Throws InvalidArchitecture when shapes do not chain with layer_dims.
  void validate() const;

  friend bool operator==(const ModelState&, const ModelState&) = default;
};

/// Same layout as ModelState::layers.
struct Gradients {
  std::vector<DenseLayer> layers;

  double squared_norm() const;
};

struct ForwardMode {
  enum class Kind { deterministic, stochastic };
  Kind kind = Kind::deterministic;
  std::uint64_t pass_seed = 0;

  static ForwardMode deterministic() { return {}; }
  static ForwardMode stochastic(std::uint64_t seed) { return {Kind::stochastic, seed}; }
  bool is_stochastic() const { return kind == Kind::stochastic; }
};

struct TemperatureConfig {
  double T = 1.0;
};

/// Weights ~ U(-sqrt(6/fan_in), +sqrt(6/fan_in)) drawn in layer order, row-major,
/// from one generator seeded with `seed`; biases zero.
ModelState init_model(std::span<const int> layer_dims, double dropout_rate, Head head,
                      std::uint64_t seed);

/// Keep/drop decision of one hidden unit in a stochastic pass. Addressed by
/// (pass_seed, layer, row, unit) so rows can be evaluated in any order.
bool dropout_keeps(std::uint64_t pass_seed, std::size_t layer, Eigen::Index row,
                   Eigen::Index unit, double rate);

/// Pre-head outputs (not divided by temperature).
Matrix forward_logits(const ModelState& model, const Matrix& inputs, ForwardMode mode);

/// Head(logits / T). Rows sum to 1 for the softmax head.
ProbMatrix forward(const ModelState& model, const Matrix& inputs, ForwardMode mode,
                   TemperatureConfig temp = {});

/// Softmax or elementwise sigmoid of logits / T.
ProbMatrix apply_head(const Matrix& logits, Head head, double T);

struct LossAndGradients {
  double loss = 0.0;
  Gradients grads;
};

/// Exact reverse-mode gradient of the batch-mean loss. The same ForwardMode
/// (and so the same dropout masks) is used for the forward sweep.
LossAndGradients loss_and_gradients(const ModelState& model, const Matrix& inputs,
                                    const losses::LossSpec& spec, ForwardMode mode,
                                    TemperatureConfig temp = {});

inline Gradients backward(const ModelState& model, const Matrix& inputs,
                          const losses::LossSpec& spec, ForwardMode mode,
                          TemperatureConfig temp = {}) {
  return loss_and_gradients(model, inputs, spec, mode, temp).grads;
}

/// Batch loss without gradients; used by finite-difference checks.
double evaluate_loss(const ModelState& model, const Matrix& inputs, const losses::LossSpec& spec,
                     ForwardMode mode, TemperatureConfig temp = {});

struct OptimizerState {
  double base_lr = 0.03;
  double min_lr = 0.0;
  int current_step = 0;
  int total_steps = 1;

  void validate() const;
};

/// min_lr + 0.5 (base_lr - min_lr)(1 + cos(pi t / total_steps)).
double cosine_learning_rate(const OptimizerState& opt, int step);
inline double current_learning_rate(const OptimizerState& opt) {
  return cosine_learning_rate(opt, opt.current_step);
}

/// Plain SGD: theta <- theta - lr(t) g, then t <- t + 1.
/// Throws ScheduleExhausted once current_step reaches total_steps.
void sgd_step(ModelState& model, const Gradients& grads, OptimizerState& opt);

}  // namespace ups
