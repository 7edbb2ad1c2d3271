// SPDX-License-Identifier: Apache-2.0
#include "ups/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "ups/csv.hpp"
#include "ups/rng.hpp"

namespace ups {

std::string to_string(SelectionProbs source) {
  return source == SelectionProbs::mc_mean ? "mc_mean" : "deterministic";
}

SelectionProbs parse_selection_probs(const std::string& text) {
  if (text == "mc_mean") return SelectionProbs::mc_mean;
  if (text == "deterministic") return SelectionProbs::deterministic;
  throw ConfigError("unknown selection_probs '" + text + "'");
}

void PipelineConfig::validate() const {
  for (int h : model.hidden_dims)
    if (h <= 0) throw InvalidParameter("hidden layer widths must be positive");
  if (!(model.dropout_rate >= 0.0 && model.dropout_rate < 1.0))
    throw InvalidParameter("dropout_rate must lie in [0, 1)");
  if (training.epochs_per_iteration < 1 || training.batch_size < 1)
    throw InvalidParameter("epochs_per_iteration and batch_size must be positive");
  if (!(training.base_lr > 0.0) || !(training.min_lr >= 0.0) || training.min_lr > training.base_lr)
    throw InvalidParameter("learning rates must satisfy 0 <= min_lr <= base_lr, base_lr > 0");
  if (max_iterations < 1) throw InvalidParameter("max_iterations must be >= 1");
  if (!(convergence_delta >= 0.0 && convergence_delta <= 1.0))
    throw InvalidParameter("convergence_delta must lie in [0, 1]");
  if (!(temperature.T > 0.0)) throw InvalidParameter("temperature must be positive");
  if (ece_bins < 1) throw InvalidParameter("ece_bins must be >= 1");
  selection.validate();
  estimator.validate();
  if (selection.regime == Regime::ups && estimator.estimator == EstimatorKind::mc_dropout &&
      model.dropout_rate == 0.0)
    throw InvalidParameter("ups with mc_dropout needs dropout_rate > 0");
}

std::uint64_t iteration_model_seed(std::uint64_t master_seed, int iteration) {
  return derive_seed({master_seed, static_cast<std::uint64_t>(iteration)});
}

std::uint64_t iteration_estimator_seed(std::uint64_t master_seed, int iteration) {
  return derive_seed({master_seed, static_cast<std::uint64_t>(iteration), tag("mc")});
}

TrainingSet assemble_training_set(const TrainingView& view, const Matrix& pseudo_features,
                                  const PseudoLabelSet* pseudo, const SelectionConfig& selection) {
  using losses::LossSpec;
  using losses::SampleObjective;
  const Eigen::Index n_classes = view.num_classes;
  const BinaryMatrix full = BinaryMatrix::Ones(view.labeled_labels.rows(), n_classes);
  LossSpec labeled =
      LossSpec::uniform(view.mode == LabelMode::single_label ? SampleObjective::positive
                                                             : SampleObjective::masked_bce,
                        view.labeled_labels, full);

  TrainingSet out;
  std::vector<std::size_t> keep;
  LossSpec unlabeled;
  if (pseudo != nullptr) {
    if (pseudo->labels.rows() != pseudo_features.rows())
      throw ShapeError("pseudo-labels do not match the unlabeled features");
    unlabeled = view.mode == LabelMode::single_label
                    ? LossSpec::single_label_dispatch(pseudo->labels, pseudo->masks,
                                                      selection.negatives_with_positive)
                    : LossSpec::uniform(SampleObjective::masked_bce, pseudo->labels, pseudo->masks);
    for (std::size_t i = 0; i < unlabeled.rows(); ++i)
      if (unlabeled.objectives[i] != SampleObjective::skip) keep.push_back(i);
  }

  const auto n_l = view.labeled_features.rows();
  const auto n_u = static_cast<Eigen::Index>(keep.size());
  out.features.resize(n_l + n_u, view.labeled_features.cols());
  out.spec.targets.resize(n_l + n_u, n_classes);
  out.spec.masks.resize(n_l + n_u, n_classes);
  out.features.topRows(n_l) = view.labeled_features;
  out.spec.targets.topRows(n_l) = labeled.targets;
  out.spec.masks.topRows(n_l) = labeled.masks;
  out.spec.objectives = labeled.objectives;
  for (Eigen::Index k = 0; k < n_u; ++k) {
    const auto src = static_cast<Eigen::Index>(keep[static_cast<std::size_t>(k)]);
    out.features.row(n_l + k) = pseudo_features.row(src);
    out.spec.targets.row(n_l + k) = unlabeled.targets.row(src);
    out.spec.masks.row(n_l + k) = unlabeled.masks.row(src);
    out.spec.objectives.push_back(unlabeled.objectives[static_cast<std::size_t>(src)]);
  }
  return out;
}

ModelState train_model(const TrainingSet& data, const std::vector<int>& layer_dims, Head head,
                       const PipelineConfig& cfg, std::uint64_t seed, std::size_t epoch_size) {
  ModelState model = init_model(layer_dims, cfg.model.dropout_rate, head, seed);
  const auto n = static_cast<std::size_t>(data.features.rows());
  if (n == 0 || data.spec.contributing() == 0) throw EmptyBatch("nothing to train on");
  const auto batch = static_cast<std::size_t>(cfg.training.batch_size);
  if (epoch_size == 0) epoch_size = n;
  const std::size_t steps_per_epoch = (epoch_size + batch - 1) / batch;

  OptimizerState opt;
  opt.base_lr = cfg.training.base_lr;
  opt.min_lr = cfg.training.min_lr;
  opt.total_steps = static_cast<int>(steps_per_epoch) * cfg.training.epochs_per_iteration;
  opt.validate();

  // Minibatches walk through a reshuffled permutation of the rows, wrapping
  // around as often as the step budget requires.
  Rng shuffle_rng(derive_seed({seed, tag("shuffle")}));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  shuffle_rng.shuffle(order.begin(), order.end());
  std::size_t cursor = 0;
  std::vector<std::size_t> rows;
  Matrix batch_x;
  while (opt.current_step < opt.total_steps) {
    rows.clear();
    for (std::size_t k = 0; k < std::min(batch, n); ++k) {
      if (cursor == n) {
        shuffle_rng.shuffle(order.begin(), order.end());
        cursor = 0;
      }
      rows.push_back(order[cursor++]);
    }
    batch_x.resize(static_cast<Eigen::Index>(rows.size()), data.features.cols());
    for (std::size_t k = 0; k < rows.size(); ++k)
      batch_x.row(static_cast<Eigen::Index>(k)) = data.features.row(static_cast<Eigen::Index>(rows[k]));
    const auto spec = data.spec.subset(rows);
    const auto mode = ForwardMode::stochastic(
        derive_seed({seed, tag("dropout"), static_cast<std::uint64_t>(opt.current_step)}));
    sgd_step(model, backward(model, batch_x, spec, mode), opt);
  }
  return model;
}

std::optional<double> average_precision(std::span<const double> scores,
                                        std::span<const std::uint8_t> truth) {
  if (scores.size() != truth.size()) throw ShapeError("scores and truth differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (!truth[order[k]]) continue;
    ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(k + 1);
  }
  if (hits == 0) return std::nullopt;
  return sum / static_cast<double>(hits);
}

double mean_average_precision(const ProbMatrix& probs, const BinaryMatrix& truth) {
  if (probs.rows() != truth.rows() || probs.cols() != truth.cols())
    throw ShapeError("mAP shape mismatch");
  double total = 0.0;
  int classes = 0;
  for (Eigen::Index c = 0; c < probs.cols(); ++c) {
    const Vector scores = probs.col(c);
    const Eigen::Matrix<std::uint8_t, Eigen::Dynamic, 1> t = truth.col(c);
    if (auto ap = average_precision({scores.data(), static_cast<std::size_t>(scores.size())},
                                    {t.data(), static_cast<std::size_t>(t.size())})) {
      total += *ap;
      ++classes;
    }
  }
  if (classes == 0) throw EmptyInput("no class has a positive sample");
  return total / classes;
}

Evaluation evaluate(const ModelState& model, const Matrix& features, const BinaryMatrix& truth,
                    LabelMode mode, TemperatureConfig temp, int ece_bins) {
  if (features.rows() == 0) throw EmptyInput("evaluation split is empty");
  if (truth.rows() != features.rows() || truth.cols() != model.num_classes())
    throw ShapeError("evaluation labels do not match");
  const ProbMatrix probs = forward(model, features, ForwardMode::deterministic(), temp);
  Evaluation ev;
  if (mode == LabelMode::single_label) {
    const auto classes = class_indices(truth);
    ev.dump = make_prediction_dump(probs, classes);
    const auto correct = std::count_if(ev.dump.begin(), ev.dump.end(),
                                       [](const PredictionRecord& r) { return r.correct(); });
    ev.metric = static_cast<double>(correct) / static_cast<double>(ev.dump.size());
    ev.ece = compute_ece(ev.dump, ece_bins).ece;
  } else {
    ev.metric = mean_average_precision(probs, truth);
    ev.ece = multilabel_ece(probs, truth, ece_bins);
  }
  return ev;
}

namespace {

std::vector<int> layer_dims_for(const PipelineConfig& cfg, int input_dim, int num_classes) {
  std::vector<int> dims{input_dim};
  dims.insert(dims.end(), cfg.model.hidden_dims.begin(), cfg.model.hidden_dims.end());
  dims.push_back(num_classes);
  return dims;
}

struct SelectionInputs {
  ProbMatrix probs;
  UncertaintyMatrix stds;
  bool has_stds = false;
};

SelectionInputs selection_inputs(const ModelState& model, const Matrix& unlabeled,
                                 const PipelineConfig& cfg, int iteration) {
  SelectionInputs in;
  const bool can_estimate =
      cfg.estimator.estimator == EstimatorKind::input_jitter || model.dropout_rate > 0.0;
  const bool need_stds = cfg.selection.regime == Regime::ups;
  if (can_estimate && (need_stds || cfg.selection_probs == SelectionProbs::mc_mean)) {
    EstimatorConfig est_cfg = cfg.estimator;
    est_cfg.base_seed = iteration_estimator_seed(cfg.master_seed, iteration);
    const UncertaintyEstimate est = estimate(model, unlabeled, est_cfg, cfg.temperature);
    in.stds = est.std_probs;
    in.has_stds = true;
    if (cfg.selection_probs == SelectionProbs::mc_mean) in.probs = combine_confidence(est);
  }
  if (in.probs.size() == 0 && unlabeled.rows() > 0)
    in.probs = forward(model, unlabeled, ForwardMode::deterministic(), cfg.temperature);
  if (in.probs.size() == 0) in.probs = ProbMatrix(0, model.num_classes());
  return in;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

void check_dataset(const SslDataset& ds, std::vector<std::string>& warnings) {
  ds.validate();
  if (ds.labeled_idx.empty()) throw InvalidDataset("the labeled set is empty");
  std::vector<std::size_t> per_class(static_cast<std::size_t>(ds.num_classes), 0);
  for (std::size_t i : ds.labeled_idx) {
    int positives = 0;
    for (int c = 0; c < ds.num_classes; ++c)
      if (ds.labels(static_cast<Eigen::Index>(i), c)) {
        ++per_class[static_cast<std::size_t>(c)];
        ++positives;
      }
    if (ds.mode == LabelMode::single_label && positives != 1)
      throw InvalidDataset("labeled sample " + std::to_string(i) + " needs exactly one class");
  }
  for (std::size_t c = 0; c < per_class.size(); ++c)
    if (per_class[c] == 0) warnings.push_back("class " + std::to_string(c) + " is absent from the labeled set");
}

IterationRecord make_record(int iteration, const ModelState& model, const SslDataset& ds,
                            const PipelineConfig& cfg) {
  IterationRecord rec;
  rec.iteration = iteration;
  rec.model_seed = model.init_seed;
  rec.positives_per_class.assign(static_cast<std::size_t>(ds.num_classes), 0);
  if (ds.test_features.rows() > 0) {
    const auto ev = evaluate(model, ds.test_features, ds.test_labels, ds.mode, cfg.temperature, cfg.ece_bins);
    rec.test_metric = ev.metric;
    rec.ece = ev.ece;
  }
  return rec;
}

RunResult run(const SslDataset& ds, const PipelineConfig& cfg, int max_iterations) {
  cfg.validate();
  RunResult result;
  check_dataset(ds, result.warnings);
  if (ds.mode == LabelMode::multi_label && cfg.selection.gamma_mode == GammaMode::argmax)
    result.warnings.push_back("multi-label run with gamma_mode argmax marks one positive per sample");
  const TrainingView view = training_view(ds);
  const BinaryMatrix truth = unlabeled_ground_truth(ds);
  const Head head = head_for(ds.mode);
  const auto dims = layer_dims_for(cfg, ds.feature_dim(), ds.num_classes);

  auto start = std::chrono::steady_clock::now();
  const TrainingSet labeled_only = assemble_training_set(view, view.unlabeled_features, nullptr, cfg.selection);
  result.model = train_model(labeled_only, dims, head, cfg, iteration_model_seed(cfg.master_seed, 0), ds.size());
  result.records.push_back(make_record(0, result.model, ds, cfg));
  result.records.back().wall_clock_seconds = seconds_since(start);

  std::optional<std::size_t> previous_total;
  for (int k = 1; k < max_iterations; ++k) {
    if (view.unlabeled_features.rows() == 0) break;
    start = std::chrono::steady_clock::now();

    const SelectionInputs in = selection_inputs(result.model, view.unlabeled_features, cfg, k - 1);
    PseudoLabelSet pseudo =
        pseudo_label(in.probs, in.has_stds ? &in.stds : nullptr, cfg.selection, ds.mode, k);
    const bool balance = cfg.selection.regime != Regime::vanilla && k <= cfg.selection.balance_iters;
    if (balance) pseudo = balance_classes(pseudo, in.probs);
    SelectionReport report = selection_stats(pseudo, &truth);

    const TrainingSet data = assemble_training_set(view, view.unlabeled_features, &pseudo, cfg.selection);
    result.model = train_model(data, dims, head, cfg, iteration_model_seed(cfg.master_seed, k), ds.size());

    IterationRecord rec = make_record(k, result.model, ds, cfg);
    rec.pos_selected = report.total_positive;
    rec.neg_selected = report.total_negative;
    rec.samples_selected = static_cast<std::size_t>(data.features.rows() - view.labeled_features.rows());
    rec.samples_negative_only = report.samples_negative_only;
    rec.positives_per_class = report.positives_per_class;
    rec.sel_accuracy = report.accuracy;
    rec.positive_accuracy = report.positive_accuracy;
    rec.balanced = balance;
    rec.wall_clock_seconds = seconds_since(start);
    result.records.push_back(std::move(rec));
    result.selection_reports.push_back(std::move(report));

    // Convergence on the selected count, once class balancing no longer caps it.
    const std::size_t total = result.records.back().pos_selected + result.records.back().neg_selected;
    if (previous_total && !balance) {
      const double denom = static_cast<double>(std::max<std::size_t>(*previous_total, 1));
      const double change = std::abs(static_cast<double>(total) - static_cast<double>(*previous_total)) / denom;
      if (change < cfg.convergence_delta) break;
    }
    previous_total = total;
  }
  return result;
}

}  // namespace

RunResult run_ssl(const SslDataset& dataset, const PipelineConfig& cfg) {
  return run(dataset, cfg, cfg.max_iterations);
}

RunResult run_supervised(const SslDataset& dataset, const PipelineConfig& cfg) {
  return run(dataset, cfg, 1);
}

PredictionDump unlabeled_prediction_dump(const ModelState& model, const SslDataset& dataset,
                                         const PipelineConfig& cfg, int iteration) {
  if (dataset.mode != LabelMode::single_label)
    throw InvalidParameter("prediction dumps are defined for single-label data");
  const TrainingView view = training_view(dataset);
  const SelectionInputs in = selection_inputs(model, view.unlabeled_features, cfg, iteration);
  const auto classes = class_indices(unlabeled_ground_truth(dataset));
  auto dump = make_prediction_dump(in.probs, classes, in.has_stds ? &in.stds : nullptr);
  for (std::size_t k = 0; k < dump.size(); ++k) dump[k].sample_id = dataset.unlabeled_idx[k];
  return dump;
}

void write_iteration_csv(std::ostream& out, std::span<const IterationRecord> records) {
  out << "iteration,pos_selected,neg_selected,sel_accuracy,test_metric,ece\n";
  for (const auto& r : records)
    out << r.iteration << ',' << r.pos_selected << ',' << r.neg_selected << ','
        << csv::format_optional(r.sel_accuracy) << ',' << csv::format_double(r.test_metric) << ','
        << csv::format_double(r.ece) << '\n';
}

}  // namespace ups
