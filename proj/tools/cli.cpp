// SPDX-License-Identifier: Apache-2.0
#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "ups/calibration.hpp"
#include "ups/checkpoint.hpp"
#include "ups/config.hpp"
#include "ups/csv.hpp"
#include "ups/data.hpp"
#include "ups/pipeline.hpp"
#include "ups/selection.hpp"

namespace ups::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

struct MakeDatasetArgs {
  std::string kind;
  int n = 0;
  double noise = 0.1;
  std::uint64_t seed = 0;
  int n_test = -1;
  std::size_t n_labeled = 10;
  bool stratified = true;
  int classes = 4;
  double overlap = 0.0;
  std::vector<int> counts;
  double spread = 0.5;
  std::string out = "dataset.csv";
};

struct RunArgs {
  std::string config;
  std::vector<std::string> overrides;
  std::string out;
};

struct CalibrationArgs {
  std::string dump;
  int bins = kDefaultEceBins;
  std::string sweep;
  std::string out = ".";
};

struct SelectionArgs {
  std::string config;
  std::vector<std::string> overrides;
  std::string checkpoint;
  int iteration = 1;
  std::string out = "selection_report.csv";
};

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

fs::path sidecar_path(const fs::path& dataset) { return fs::path(dataset.string() + ".json"); }

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

template <typename Fn>
void write_file(const fs::path& path, Fn&& fn) {
  std::ostringstream buffer;
  fn(buffer);
  write_text(path, buffer.str());
}

std::vector<double> parse_thresholds(const std::string& text) {
  std::vector<double> out;
  if (text.empty()) return out;
  for (auto cell : csv::split(text)) {
    try {
      out.push_back(csv::parse_double(cell, 0));
    } catch (const ParseError&) {
      throw InvalidParameter("sweep threshold '" + std::string(cell) + "' is not a number");
    }
  }
  return out;
}

LabelMode infer_mode(const fs::path& dataset_path) {
  // Single-label unless some row has other than one positive.
  const SslDataset probe = load_csv(dataset_path, {LabelMode::multi_label});
  auto one_positive = [](const BinaryMatrix& y) {
    for (Eigen::Index i = 0; i < y.rows(); ++i)
      if (y.row(i).cast<int>().sum() != 1) return false;
    return true;
  };
  return one_positive(probe.labels) && one_positive(probe.test_labels) ? LabelMode::single_label
                                                                        : LabelMode::multi_label;
}

SslDataset load_dataset(const RunConfig& cfg) {
  if (!fs::exists(cfg.dataset_path)) throw DataError("dataset " + cfg.dataset_path.string() + " does not exist");
  LabelMode mode;
  if (cfg.dataset_mode) {
    mode = *cfg.dataset_mode;
  } else if (const auto side = sidecar_path(cfg.dataset_path); fs::exists(side)) {
    std::ifstream in(side);
    try {
      mode = parse_label_mode(nlohmann::json::parse(in).at("mode").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
      throw DataError("unreadable dataset sidecar " + side.string() + ": " + e.what());
    }
  } else {
    mode = infer_mode(cfg.dataset_path);
  }
  return load_csv(cfg.dataset_path, {mode});
}

int cmd_make_dataset(const MakeDatasetArgs& a, std::ostream& out) {
  SslDataset ds;
  json params;
  if (a.kind == "two-moons") {
    ds = make_two_moons(a.n, a.noise, a.seed, a.n_test);
    params = {{"n", a.n}, {"noise", a.noise}, {"n_test", a.n_test < 0 ? a.n : a.n_test}};
  } else if (a.kind == "blobs-multilabel") {
    ds = make_blobs_multilabel(a.n, a.classes, a.overlap, a.seed, a.n_test);
    params = {{"n", a.n}, {"classes", a.classes}, {"overlap", a.overlap},
              {"n_test", a.n_test < 0 ? a.n : a.n_test}};
  } else if (a.kind == "blobs") {
    if (a.counts.empty()) throw InvalidParameter("blobs needs --counts");
    const int n_test = a.n_test < 0 ? 100 : a.n_test;
    ds = make_blobs(a.counts, a.spread, a.seed, n_test);
    params = {{"counts", a.counts}, {"spread", a.spread}, {"n_test_per_class", n_test}};
  } else {
    throw InvalidParameter("unknown dataset kind '" + a.kind + "'");
  }
  ds = split_labeled(std::move(ds), a.n_labeled, a.seed, a.stratified);
  params["n_labeled"] = a.n_labeled;
  params["stratified"] = a.stratified;

  const fs::path path(a.out);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_file(path, [&](std::ostream& os) { save_csv(ds, os); });

  json side;
  side["format"] = "ups-lab-dataset";
  side["version"] = 1;
  side["generator"] = a.kind;
  side["seed"] = a.seed;
  side["mode"] = to_string(ds.mode);
  side["num_classes"] = ds.num_classes;
  side["params"] = params;
  side["created_utc"] = utc_timestamp();
  write_text(sidecar_path(path), side.dump(2) + "\n");
  out << "wrote " << path.string() << " (" << ds.size() << " training rows, "
      << ds.labeled_idx.size() << " labeled, " << ds.test_features.rows() << " test)\n";
  return kSuccess;
}

json metrics_json(const RunResult& result, const SslDataset& ds) {
  json j;
  const auto& last = result.records.back();
  j["metric"] = ds.mode == LabelMode::single_label ? "accuracy" : "mAP";
  j["iterations"] = result.records.size();
  j["final_test_metric"] = last.test_metric;
  if (ds.mode == LabelMode::single_label) j["final_test_error"] = 1.0 - last.test_metric;
  j["final_ece"] = last.ece;
  j["final_pos_selected"] = last.pos_selected;
  j["final_neg_selected"] = last.neg_selected;
  j["supervised_test_metric"] = result.records.front().test_metric;
  j["warnings"] = result.warnings;
  return j;
}

int cmd_run(const RunArgs& a, bool supervised, std::ostream& out, std::ostream& err) {
  RunConfig cfg = load_run_config(a.config, a.overrides);
  if (!a.out.empty()) cfg.output_dir = a.out;
  const SslDataset ds = load_dataset(cfg);
  const RunResult result = supervised ? run_supervised(ds, cfg.pipeline) : run_ssl(ds, cfg.pipeline);
  for (const auto& w : result.warnings) err << "warning: " << w << '\n';

  fs::create_directories(cfg.output_dir);
  write_file(cfg.output_dir / "iterations.csv",
             [&](std::ostream& os) { write_iteration_csv(os, result.records); });
  write_file(cfg.output_dir / "selection_report.csv",
             [&](std::ostream& os) { write_selection_report_csv(os, result.selection_reports); });
  save_checkpoint(result.model, cfg.output_dir / "checkpoint.json");
  write_text(cfg.output_dir / "metrics.json", metrics_json(result, ds).dump(2) + "\n");
  write_text(cfg.output_dir / "config.resolved.json", to_json(cfg).dump(2) + "\n");
  if (ds.mode == LabelMode::single_label && !ds.unlabeled_idx.empty()) {
    const auto dump = unlabeled_prediction_dump(result.model, ds, cfg.pipeline,
                                                result.records.back().iteration);
    write_file(cfg.output_dir / "unlabeled_predictions.csv",
               [&](std::ostream& os) { write_prediction_dump(os, dump); });
  }
  for (const auto& r : result.records) {
    out << "iteration " << r.iteration << ": pos=" << r.pos_selected << " neg=" << r.neg_selected
        << " test_metric=" << csv::format_double(r.test_metric) << " ece=" << csv::format_double(r.ece)
        << " (" << r.wall_clock_seconds << " s)\n";
  }
  return kSuccess;
}

int cmd_analyze_calibration(const CalibrationArgs& a, std::ostream& out) {
  std::ifstream in(a.dump);
  if (!in) throw DataError("cannot read " + a.dump);
  const PredictionDump dump = read_prediction_dump(in);
  const EceReport report = compute_ece(dump, a.bins);
  std::vector<SweepRow> rows;
  if (!a.sweep.empty()) rows = ece_vs_uncertainty_sweep(dump, parse_thresholds(a.sweep), a.bins);
  const fs::path dir(a.out);
  fs::create_directories(dir);
  write_file(dir / "ece_report.csv", [&](std::ostream& os) { write_ece_report_csv(os, report); });
  json summary{{"bins", report.bins}, {"samples", report.total}, {"ece", report.ece}};
  write_text(dir / "ece_summary.json", summary.dump(2) + "\n");
  out << "ece=" << csv::format_double(report.ece) << " over " << report.total << " samples\n";
  if (!a.sweep.empty())
    write_file(dir / "sweep.csv", [&](std::ostream& os) { write_sweep_csv(os, rows); });
  return kSuccess;
}

int cmd_selection_report(const SelectionArgs& a, std::ostream& out) {
  RunConfig cfg = load_run_config(a.config, a.overrides);
  const SslDataset ds = load_dataset(cfg);
  const ModelState model = load_checkpoint(a.checkpoint);
  if (model.input_dim() != ds.feature_dim() || model.num_classes() != ds.num_classes)
    throw SchemaError("checkpoint does not match the dataset dimensions");
  const TrainingView view = training_view(ds);
  const auto& p = cfg.pipeline;

  ProbMatrix probs;
  UncertaintyMatrix stds;
  bool has_stds = false;
  const bool can_estimate = p.estimator.estimator == EstimatorKind::input_jitter || model.dropout_rate > 0.0;
  if (can_estimate && view.unlabeled_features.rows() > 0) {
    EstimatorConfig est = p.estimator;
    est.base_seed = iteration_estimator_seed(p.master_seed, a.iteration - 1);
    const auto e = estimate(model, view.unlabeled_features, est, p.temperature);
    stds = e.std_probs;
    has_stds = true;
    if (p.selection_probs == SelectionProbs::mc_mean) probs = combine_confidence(e);
  }
  if (probs.size() == 0) probs = forward(model, view.unlabeled_features, ForwardMode::deterministic(), p.temperature);

  PseudoLabelSet pseudo = pseudo_label(probs, has_stds ? &stds : nullptr, p.selection, ds.mode, a.iteration);
  if (p.selection.regime != Regime::vanilla && a.iteration <= p.selection.balance_iters)
    pseudo = balance_classes(pseudo, probs);
  const BinaryMatrix truth = unlabeled_ground_truth(ds);
  const SelectionReport report = selection_stats(pseudo, &truth);
  const fs::path path(a.out);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_file(path, [&](std::ostream& os) { write_selection_report_csv(os, {report}); });
  out << "positives=" << report.total_positive << " negatives=" << report.total_negative
      << " samples_selected=" << report.samples_selected
      << " accuracy=" << csv::format_optional(report.accuracy) << '\n';
  return kSuccess;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"ups-lab: uncertainty-aware pseudo-label selection laboratory", "ups-lab"};
  app.require_subcommand(1);

  MakeDatasetArgs make;
  auto* make_cmd = app.add_subcommand("make-dataset", "Generate a seeded dataset CSV and provenance sidecar");
  make_cmd->add_option("kind", make.kind, "two-moons | blobs | blobs-multilabel")->required();
  make_cmd->add_option("--n", make.n, "Training samples (two-moons, blobs-multilabel)");
  make_cmd->add_option("--noise", make.noise, "Two-moons noise sigma");
  make_cmd->add_option("--seed", make.seed, "Generator and split seed");
  make_cmd->add_option("--n-test", make.n_test, "Test samples (per class for blobs)");
  make_cmd->add_option("--n-labeled", make.n_labeled, "Size of the labeled set");
  make_cmd->add_flag("--stratified,!--no-stratified", make.stratified, "Stratify the labeled split");
  make_cmd->add_option("--classes", make.classes, "Classes (blobs-multilabel)");
  make_cmd->add_option("--overlap", make.overlap, "Label radius over center spacing (blobs-multilabel)");
  make_cmd->add_option("--counts", make.counts, "Per-class counts (blobs)")->delimiter(',');
  make_cmd->add_option("--spread", make.spread, "Blob standard deviation (blobs)");
  make_cmd->add_option("--out", make.out, "Output CSV path");

  RunArgs run_args;
  auto* ssl_cmd = app.add_subcommand("run-ssl", "Iterative pseudo-labeling run");
  auto* sup_cmd = app.add_subcommand("run-supervised", "Train on the labeled set only");
  for (auto* cmd : {ssl_cmd, sup_cmd}) {
    cmd->add_option("--config", run_args.config, "JSON run config")->required();
    cmd->add_option("--set", run_args.overrides, "Override a config key: section.key=value");
    cmd->add_option("--out", run_args.out, "Output directory (overrides output_dir)");
  }

  CalibrationArgs cal;
  auto* cal_cmd = app.add_subcommand("analyze-calibration", "ECE report and uncertainty sweep of a prediction dump");
  cal_cmd->add_option("--dump", cal.dump, "Prediction dump CSV")->required();
  cal_cmd->add_option("--bins", cal.bins, "Number of ECE bins");
  cal_cmd->add_option("--sweep", cal.sweep, "Comma-separated ascending uncertainty thresholds (inf allowed)");
  cal_cmd->add_option("--out", cal.out, "Output directory");

  SelectionArgs sel;
  auto* sel_cmd = app.add_subcommand("selection-report", "Pseudo-label the unlabeled set with a checkpoint and report the selection");
  sel_cmd->add_option("--config", sel.config, "JSON run config")->required();
  sel_cmd->add_option("--set", sel.overrides, "Override a config key: section.key=value");
  sel_cmd->add_option("--checkpoint", sel.checkpoint, "Model checkpoint")->required();
  sel_cmd->add_option("--iteration", sel.iteration, "Pseudo-labeling iteration index to report as");
  sel_cmd->add_option("--out", sel.out, "Output CSV");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kSuccess;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kSuccess;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return kUsageError;
  }

  try {
    if (make_cmd->parsed()) {
      if ((make.kind == "two-moons" || make.kind == "blobs-multilabel") && make_cmd->count("--n") == 0) {
        err << "error: --n is required for " << make.kind << "\n" << make_cmd->help();
        return kUsageError;
      }
      return cmd_make_dataset(make, out);
    }
    if (ssl_cmd->parsed()) return cmd_run(run_args, false, out, err);
    if (sup_cmd->parsed()) return cmd_run(run_args, true, out, err);
    if (cal_cmd->parsed()) return cmd_analyze_calibration(cal, out);
    if (sel_cmd->parsed()) return cmd_selection_report(sel, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const DataError& e) {
    err << "error: " << e.what() << '\n';
    return kDataError;
  } catch (const NumericalError& e) {
    err << "error: " << e.what() << '\n';
    return kNumericalError;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kDataError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kNumericalError;
  }
  return kUsageError;
}

}  // namespace ups::cli
