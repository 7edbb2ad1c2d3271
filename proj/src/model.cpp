// SPDX-License-Identifier: Apache-2.0
#include "ups/model.hpp"

#include <cmath>
#include <numbers>

#include "ups/rng.hpp"

namespace ups {

std::string to_string(LabelMode mode) {
  return mode == LabelMode::single_label ? "single_label" : "multi_label";
}

LabelMode parse_label_mode(const std::string& text) {
  if (text == "single_label") return LabelMode::single_label;
  if (text == "multi_label") return LabelMode::multi_label;
  throw ConfigError("unknown label mode '" + text + "'");
}

std::string to_string(Head head) { return head == Head::softmax ? "softmax" : "sigmoid"; }

Head parse_head(const std::string& text) {
  if (text == "softmax") return Head::softmax;
  if (text == "sigmoid") return Head::sigmoid;
  throw ConfigError("unknown head '" + text + "'");
}

Head head_for(LabelMode mode) {
  return mode == LabelMode::single_label ? Head::softmax : Head::sigmoid;
}

std::size_t ModelState::parameter_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers) n += static_cast<std::size_t>(layer.weight.size() + layer.bias.size());
  return n;
}

void ModelState::validate() const {
  if (layer_dims.size() < 2) throw InvalidArchitecture("need at least an input and an output layer");
  for (int d : layer_dims)
    if (d <= 0) throw InvalidArchitecture("layer widths must be positive");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
    throw InvalidArchitecture("dropout rate must lie in [0, 1)");
  if (layers.size() != layer_dims.size() - 1) throw InvalidArchitecture("layer count mismatch");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& layer = layers[l];
    if (layer.weight.rows() != layer_dims[l] || layer.weight.cols() != layer_dims[l + 1] ||
        layer.bias.size() != layer_dims[l + 1])
      throw InvalidArchitecture("layer " + std::to_string(l) + " does not match layer_dims");
  }
}

double Gradients::squared_norm() const {
  double s = 0.0;
  for (const auto& layer : layers) s += layer.weight.squaredNorm() + layer.bias.squaredNorm();
  return s;
}

ModelState init_model(std::span<const int> layer_dims, double dropout_rate, Head head,
                      std::uint64_t seed) {
  if (layer_dims.size() < 2) throw InvalidArchitecture("need at least an input and an output layer");
  for (int d : layer_dims)
    if (d <= 0) throw InvalidArchitecture("layer widths must be positive");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
    throw InvalidArchitecture("dropout rate must lie in [0, 1)");

  ModelState model;
  model.layer_dims.assign(layer_dims.begin(), layer_dims.end());
  model.dropout_rate = dropout_rate;
  model.head = head;
  model.init_seed = seed;

  Rng rng(seed);
  for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
    const int fan_in = layer_dims[l];
    const int fan_out = layer_dims[l + 1];
    const double bound = std::sqrt(6.0 / fan_in);
    DenseLayer layer{Matrix(fan_in, fan_out), RowVector::Zero(fan_out)};
    for (Eigen::Index i = 0; i < fan_in; ++i)
      for (Eigen::Index j = 0; j < fan_out; ++j) layer.weight(i, j) = rng.uniform(-bound, bound);
    model.layers.push_back(std::move(layer));
  }
  return model;
}

bool dropout_keeps(std::uint64_t pass_seed, std::size_t layer, Eigen::Index row,
                   Eigen::Index unit, double rate) {
  const std::uint64_t key = derive_seed({pass_seed, layer, static_cast<std::uint64_t>(row),
                                         static_cast<std::uint64_t>(unit)});
  return hashed_uniform(key) >= rate;
}

namespace {

struct ForwardCache {
  std::vector<Matrix> layer_inputs;  // input to each affine layer (after dropout)
  std::vector<Matrix> pre_activations;  // hidden layers only
  std::vector<Matrix> dropout_scales;   // hidden layers only; empty when deterministic
  Matrix logits;
};

ForwardCache run_forward(const ModelState& model, const Matrix& inputs, ForwardMode mode) {
  if (inputs.cols() != model.input_dim())
    throw ShapeError("input has " + std::to_string(inputs.cols()) + " columns, model expects " +
                     std::to_string(model.input_dim()));
  ForwardCache cache;
  Matrix current = inputs;
  const std::size_t n_layers = model.layers.size();
  const bool drop = mode.is_stochastic() && model.dropout_rate > 0.0;
  const double keep_scale = 1.0 / (1.0 - model.dropout_rate);
  for (std::size_t l = 0; l < n_layers; ++l) {
    const auto& layer = model.layers[l];
    Matrix z = current * layer.weight;
    z.rowwise() += layer.bias;
    cache.layer_inputs.push_back(std::move(current));
    if (l + 1 == n_layers) {
      cache.logits = std::move(z);
      break;
    }
    Matrix a = z.cwiseMax(0.0);
    if (drop) {
      Matrix scale(a.rows(), a.cols());
      for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j)
          scale(i, j) = dropout_keeps(mode.pass_seed, l, i, j, model.dropout_rate) ? keep_scale : 0.0;
      a = a.cwiseProduct(scale);
      cache.dropout_scales.push_back(std::move(scale));
    }
    cache.pre_activations.push_back(std::move(z));
    current = std::move(a);
  }
  return cache;
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

ProbMatrix apply_head(const Matrix& logits, Head head, double T) {
  if (!(T > 0.0)) throw InvalidParameter("temperature must be positive");
  ProbMatrix out(logits.rows(), logits.cols());
  if (head == Head::sigmoid) {
    for (Eigen::Index i = 0; i < logits.rows(); ++i)
      for (Eigen::Index j = 0; j < logits.cols(); ++j) out(i, j) = sigmoid(logits(i, j) / T);
    return out;
  }
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const RowVector scaled = logits.row(i) / T;
    const double top = scaled.maxCoeff();
    RowVector e = (scaled.array() - top).exp().matrix();
    out.row(i) = e / e.sum();
  }
  return out;
}

Matrix forward_logits(const ModelState& model, const Matrix& inputs, ForwardMode mode) {
  return run_forward(model, inputs, mode).logits;
}

ProbMatrix forward(const ModelState& model, const Matrix& inputs, ForwardMode mode,
                   TemperatureConfig temp) {
  return apply_head(forward_logits(model, inputs, mode), model.head, temp.T);
}

double evaluate_loss(const ModelState& model, const Matrix& inputs, const losses::LossSpec& spec,
                     ForwardMode mode, TemperatureConfig temp) {
  return losses::batch_loss(forward(model, inputs, mode, temp), spec);
}

LossAndGradients loss_and_gradients(const ModelState& model, const Matrix& inputs,
                                    const losses::LossSpec& spec, ForwardMode mode,
                                    TemperatureConfig temp) {
  ForwardCache cache = run_forward(model, inputs, mode);
  const ProbMatrix probs = apply_head(cache.logits, model.head, temp.T);

  LossAndGradients result;
  result.loss = losses::batch_loss(probs, spec);
  const ProbMatrix dprobs = losses::batch_loss_grad(probs, spec);

  // Through the head: softmax Jacobian p_j (delta_jc - p_c), sigmoid p (1 - p); then 1/T.
  Matrix delta(probs.rows(), probs.cols());
  if (model.head == Head::softmax) {
    for (Eigen::Index i = 0; i < probs.rows(); ++i) {
      const double dot = probs.row(i).dot(dprobs.row(i));
      delta.row(i) = probs.row(i).cwiseProduct((dprobs.row(i).array() - dot).matrix());
    }
  } else {
    delta = dprobs.cwiseProduct(probs.cwiseProduct((1.0 - probs.array()).matrix()));
  }
  delta /= temp.T;

  const std::size_t n_layers = model.layers.size();
  result.grads.layers.resize(n_layers);
  for (std::size_t l = n_layers; l-- > 0;) {
    const auto& layer = model.layers[l];
    auto& g = result.grads.layers[l];
    g.weight = cache.layer_inputs[l].transpose() * delta;
    g.bias = delta.colwise().sum();
    if (l == 0) break;
    Matrix upstream = delta * layer.weight.transpose();
    if (!cache.dropout_scales.empty()) upstream = upstream.cwiseProduct(cache.dropout_scales[l - 1]);
    const Matrix& z = cache.pre_activations[l - 1];
    delta = upstream.cwiseProduct((z.array() > 0.0).cast<double>().matrix());
  }
  return result;
}

void OptimizerState::validate() const {
  if (!(base_lr > 0.0)) throw InvalidParameter("base_lr must be positive");
  if (!(min_lr >= 0.0 && min_lr <= base_lr)) throw InvalidParameter("min_lr must lie in [0, base_lr]");
  if (total_steps <= 0) throw InvalidParameter("total_steps must be positive");
  if (current_step < 0 || current_step > total_steps)
    throw InvalidParameter("current_step must lie in [0, total_steps]");
}

double cosine_learning_rate(const OptimizerState& opt, int step) {
  const double progress = static_cast<double>(step) / static_cast<double>(opt.total_steps);
  return opt.min_lr + 0.5 * (opt.base_lr - opt.min_lr) * (1.0 + std::cos(std::numbers::pi * progress));
}

void sgd_step(ModelState& model, const Gradients& grads, OptimizerState& opt) {
  if (opt.current_step >= opt.total_steps)
    throw ScheduleExhausted("learning-rate schedule exhausted at step " +
                            std::to_string(opt.current_step));
  if (grads.layers.size() != model.layers.size()) throw ShapeError("gradient layout mismatch");
  const double lr = current_learning_rate(opt);
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    model.layers[l].weight -= lr * grads.layers[l].weight;
    model.layers[l].bias -= lr * grads.layers[l].bias;
  }
  ++opt.current_step;
}

}  // namespace ups
