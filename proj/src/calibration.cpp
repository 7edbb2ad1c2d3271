// SPDX-License-Identifier: Apache-2.0
#include "ups/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ups/csv.hpp"

namespace ups {

std::size_t ece_bin_index(double confidence, int bins) {
  if (bins < 1) throw InvalidParameter("ECE needs at least one bin");
  const double scaled = std::ceil(confidence * bins) - 1.0;
  return static_cast<std::size_t>(std::clamp(scaled, 0.0, static_cast<double>(bins - 1)));
}

EceReport compute_ece(std::span<const PredictionRecord> dump, int bins) {
  if (bins < 1) throw InvalidParameter("ECE needs at least one bin");
  if (dump.empty()) throw EmptyInput("ECE of an empty prediction dump");
  const auto n_bins = static_cast<std::size_t>(bins);
  std::vector<double> conf_sum(n_bins, 0.0), correct_sum(n_bins, 0.0);
  EceReport report;
  report.bins = bins;
  report.total = dump.size();
  report.per_bin.resize(n_bins);
  for (const auto& r : dump) {
    if (!std::isfinite(r.confidence) || r.confidence < 0.0 || r.confidence > 1.0)
      throw InvalidParameter("confidence outside [0, 1] for sample " + std::to_string(r.sample_id));
    const std::size_t b = ece_bin_index(r.confidence, bins);
    conf_sum[b] += r.confidence;
    correct_sum[b] += r.correct() ? 1.0 : 0.0;
    ++report.per_bin[b].count;
  }
  double gap = 0.0;
  for (std::size_t b = 0; b < n_bins; ++b) {
    auto& bin = report.per_bin[b];
    bin.lower = static_cast<double>(b) / bins;
    bin.upper = static_cast<double>(b + 1) / bins;
    if (bin.count > 0) {
      bin.mean_confidence = conf_sum[b] / static_cast<double>(bin.count);
      bin.accuracy = correct_sum[b] / static_cast<double>(bin.count);
    }
    gap += std::abs(conf_sum[b] - correct_sum[b]);
  }
  report.ece = gap / static_cast<double>(dump.size());
  return report;
}

std::vector<SweepRow> ece_vs_uncertainty_sweep(std::span<const PredictionRecord> dump,
                                               std::span<const double> thresholds, int bins) {
  if (!std::is_sorted(thresholds.begin(), thresholds.end()))
    throw InvalidParameter("sweep thresholds must be sorted ascending");
  std::vector<SweepRow> rows;
  rows.reserve(thresholds.size());
  PredictionDump subset;
  for (double kappa : thresholds) {
    subset.clear();
    std::copy_if(dump.begin(), dump.end(), std::back_inserter(subset),
                 [kappa](const PredictionRecord& r) { return r.uncertainty <= kappa; });
    SweepRow row{kappa, subset.size(), std::nullopt};
    if (!subset.empty()) row.ece = compute_ece(subset, bins).ece;
    rows.push_back(row);
  }
  return rows;
}

PredictionDump make_prediction_dump(const ProbMatrix& probs, std::span<const int> true_classes,
                                    const UncertaintyMatrix* stds) {
  if (static_cast<std::size_t>(probs.rows()) != true_classes.size())
    throw ShapeError("one true class per prediction row is required");
  if (stds && (stds->rows() != probs.rows() || stds->cols() != probs.cols()))
    throw ShapeError("uncertainty shape mismatch");
  PredictionDump dump;
  dump.reserve(true_classes.size());
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    Eigen::Index best = 0;
    const double conf = probs.row(i).maxCoeff(&best);
    dump.push_back({static_cast<std::size_t>(i), conf, static_cast<int>(best),
                    true_classes[static_cast<std::size_t>(i)], stds ? (*stds)(i, best) : 0.0});
  }
  return dump;
}

double multilabel_ece(const ProbMatrix& probs, const BinaryMatrix& truth, int bins) {
  if (probs.rows() != truth.rows() || probs.cols() != truth.cols())
    throw ShapeError("multi-label ECE shape mismatch");
  if (probs.rows() == 0 || probs.cols() == 0) throw EmptyInput("multi-label ECE of empty input");
  double total = 0.0;
  PredictionDump dump(static_cast<std::size_t>(probs.rows()));
  for (Eigen::Index c = 0; c < probs.cols(); ++c) {
    for (Eigen::Index i = 0; i < probs.rows(); ++i) {
      const double p = probs(i, c);
      const bool present = p >= 0.5;
      dump[static_cast<std::size_t>(i)] = {static_cast<std::size_t>(i), present ? p : 1.0 - p,
                                           present ? 1 : 0, truth(i, c) ? 1 : 0, 0.0};
    }
    total += compute_ece(dump, bins).ece;
  }
  return total / static_cast<double>(probs.cols());
}

void write_prediction_dump(std::ostream& out, std::span<const PredictionRecord> dump) {
  out << "sample_id,confidence,pred_class,true_class,uncertainty\n";
  for (const auto& r : dump) {
    out << r.sample_id << ',' << csv::format_double(r.confidence) << ',' << r.pred_class << ','
        << r.true_class << ',' << csv::format_double(r.uncertainty) << '\n';
  }
}

PredictionDump read_prediction_dump(std::istream& in) {
  static const std::string kHeader = "sample_id,confidence,pred_class,true_class,uncertainty";
  PredictionDump dump;
  std::string raw;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string_view line = csv::trim_eol(raw);
    if (line.empty() || line.front() == '#') continue;
    if (!have_header) {
      if (line != kHeader)
        throw ParseError("line " + std::to_string(line_no) + ": expected header '" + kHeader + "'");
      have_header = true;
      continue;
    }
    const auto cells = csv::split(line);
    if (cells.size() != 5)
      throw ParseError("line " + std::to_string(line_no) + ": expected 5 fields, found " +
                       std::to_string(cells.size()));
    PredictionRecord r;
    const long long id = csv::parse_integer(cells[0], line_no);
    if (id < 0) throw ParseError("line " + std::to_string(line_no) + ": negative sample_id");
    r.sample_id = static_cast<std::size_t>(id);
    r.confidence = csv::parse_double(cells[1], line_no);
    r.pred_class = static_cast<int>(csv::parse_integer(cells[2], line_no));
    r.true_class = static_cast<int>(csv::parse_integer(cells[3], line_no));
    r.uncertainty = csv::parse_double(cells[4], line_no);
    if (!(r.confidence >= 0.0 && r.confidence <= 1.0))
      throw ParseError("line " + std::to_string(line_no) + ": confidence outside [0, 1]");
    if (!(r.uncertainty >= 0.0))
      throw ParseError("line " + std::to_string(line_no) + ": negative uncertainty");
    dump.push_back(r);
  }
  if (!have_header) throw ParseError("prediction dump is empty");
  return dump;
}

void write_sweep_csv(std::ostream& out, std::span<const SweepRow> rows) {
  out << "kappa,subset_size,ece\n";
  for (const auto& r : rows)
    out << csv::format_double(r.kappa) << ',' << r.subset_size << ',' << csv::format_optional(r.ece)
        << '\n';
}

void write_ece_report_csv(std::ostream& out, const EceReport& report) {
  out << "bin,lower,upper,count,mean_confidence,accuracy\n";
  for (std::size_t b = 0; b < report.per_bin.size(); ++b) {
    const auto& bin = report.per_bin[b];
    out << b << ',' << csv::format_double(bin.lower) << ',' << csv::format_double(bin.upper) << ','
        << bin.count << ',' << csv::format_double(bin.mean_confidence) << ','
        << csv::format_double(bin.accuracy) << '\n';
  }
}

}  // namespace ups
