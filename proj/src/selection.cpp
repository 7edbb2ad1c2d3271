// SPDX-License-Identifier: Apache-2.0
#include "ups/selection.hpp"

#include <algorithm>
#include <numeric>

#include "ups/csv.hpp"

namespace ups {

std::string to_string(GammaMode mode) { return mode == GammaMode::argmax ? "argmax" : "fixed"; }

std::string to_string(Regime regime) {
  switch (regime) {
    case Regime::vanilla:
      return "vanilla";
    case Regime::confidence:
      return "confidence";
    case Regime::ups:
      return "ups";
  }
  return "ups";
}

GammaMode parse_gamma_mode(const std::string& text) {
  if (text == "argmax") return GammaMode::argmax;
  if (text == "fixed") return GammaMode::fixed;
  throw ConfigError("unknown gamma mode '" + text + "'");
}

Regime parse_regime(const std::string& text) {
  if (text == "vanilla") return Regime::vanilla;
  if (text == "confidence") return Regime::confidence;
  if (text == "ups") return Regime::ups;
  throw ConfigError("unknown selection regime '" + text + "'");
}

void SelectionConfig::validate() const {
  auto in_unit = [](double v) { return v > 0.0 && v < 1.0; };
  if (!in_unit(tau_p) || !in_unit(tau_n)) throw InvalidParameter("tau_p and tau_n must lie in (0, 1)");
  if (tau_p < tau_n) throw InvalidParameter("tau_p must be >= tau_n");
  if (!(kappa_p >= 0.0) || !(kappa_n >= 0.0)) throw InvalidParameter("kappa thresholds must be >= 0");
  if (!in_unit(gamma)) throw InvalidParameter("gamma must lie in (0, 1)");
  if (balance_iters < 0) throw InvalidParameter("balance_iters must be >= 0");
}

BinaryMatrix generate_labels(const ProbMatrix& probs, GammaMode mode, double gamma) {
  BinaryMatrix labels = BinaryMatrix::Zero(probs.rows(), probs.cols());
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    if (mode == GammaMode::argmax) {
      Eigen::Index best = 0;
      probs.row(i).maxCoeff(&best);  // first maximal index
      labels(i, best) = 1;
    } else {
      for (Eigen::Index c = 0; c < probs.cols(); ++c) labels(i, c) = probs(i, c) >= gamma ? 1 : 0;
    }
  }
  return labels;
}

namespace {
void require_same_shape(const Matrix& a, Eigen::Index rows, Eigen::Index cols, const char* what) {
  if (a.rows() != rows || a.cols() != cols) throw ShapeError(std::string(what) + " shape mismatch");
}
}  // namespace

BinaryMatrix select_confidence(const ProbMatrix& probs, const BinaryMatrix& labels,
                               const SelectionConfig& cfg) {
  if (labels.rows() != probs.rows() || labels.cols() != probs.cols())
    throw ShapeError("labels shape mismatch");
  BinaryMatrix masks(probs.rows(), probs.cols());
  for (Eigen::Index i = 0; i < probs.rows(); ++i)
    for (Eigen::Index c = 0; c < probs.cols(); ++c) {
      const double p = probs(i, c);
      masks(i, c) = static_cast<std::uint8_t>(p >= cfg.tau_p || p <= cfg.tau_n);
    }
  return masks;
}

BinaryMatrix select_ups(const ProbMatrix& probs, const UncertaintyMatrix& stds,
                        const BinaryMatrix& labels, const SelectionConfig& cfg) {
  require_same_shape(stds, probs.rows(), probs.cols(), "uncertainty");
  if (labels.rows() != probs.rows() || labels.cols() != probs.cols())
    throw ShapeError("labels shape mismatch");
  BinaryMatrix masks(probs.rows(), probs.cols());
  for (Eigen::Index i = 0; i < probs.rows(); ++i)
    for (Eigen::Index c = 0; c < probs.cols(); ++c) {
      const double p = probs(i, c);
      const double u = stds(i, c);
      masks(i, c) = static_cast<std::uint8_t>((u <= cfg.kappa_p && p >= cfg.tau_p) ||
                                              (u <= cfg.kappa_n && p <= cfg.tau_n));
    }
  return masks;
}

BinaryMatrix select_vanilla(const BinaryMatrix& labels, LabelMode mode) {
  if (mode == LabelMode::single_label) return labels;
  return BinaryMatrix::Ones(labels.rows(), labels.cols());
}

PseudoLabelSet pseudo_label(const ProbMatrix& probs, const UncertaintyMatrix* stds,
                            const SelectionConfig& cfg, LabelMode mode, int iteration) {
  cfg.validate();
  PseudoLabelSet out;
  out.mode = mode;
  out.iteration = iteration;
  out.labels = generate_labels(probs, cfg.gamma_mode, cfg.gamma);
  switch (cfg.regime) {
    case Regime::vanilla:
      out.masks = select_vanilla(out.labels, mode);
      break;
    case Regime::confidence:
      out.masks = select_confidence(probs, out.labels, cfg);
      break;
    case Regime::ups:
      if (stds == nullptr) throw InvalidParameter("ups selection needs an uncertainty estimate");
      out.masks = select_ups(probs, *stds, out.labels, cfg);
      break;
  }
  if (!cfg.negative_learning) out.masks = out.masks.cwiseProduct(out.labels);
  return out;
}

PseudoLabelSet balance_classes(const PseudoLabelSet& pseudo, const ProbMatrix& probs) {
  require_same_shape(probs, pseudo.labels.rows(), pseudo.labels.cols(), "probability");
  PseudoLabelSet out = pseudo;
  const Eigen::Index n = pseudo.labels.rows();
  const Eigen::Index n_classes = pseudo.labels.cols();
  if (n_classes == 0) return out;

  std::vector<std::vector<Eigen::Index>> selected(static_cast<std::size_t>(n_classes));
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index c = 0; c < n_classes; ++c)
      if (pseudo.masks(i, c) && pseudo.labels(i, c)) selected[static_cast<std::size_t>(c)].push_back(i);

  std::size_t n_min = selected.front().size();
  for (const auto& s : selected) n_min = std::min(n_min, s.size());

  for (Eigen::Index c = 0; c < n_classes; ++c) {
    auto& rows = selected[static_cast<std::size_t>(c)];
    std::stable_sort(rows.begin(), rows.end(),
                     [&](Eigen::Index a, Eigen::Index b) { return probs(a, c) > probs(b, c); });
    for (std::size_t k = n_min; k < rows.size(); ++k) out.masks(rows[k], c) = 0;
  }
  return out;
}

SelectionReport selection_stats(const PseudoLabelSet& pseudo, const BinaryMatrix* ground_truth) {
  const Eigen::Index n = pseudo.labels.rows();
  const Eigen::Index n_classes = pseudo.labels.cols();
  if (pseudo.masks.rows() != n || pseudo.masks.cols() != n_classes)
    throw ShapeError("labels and masks differ in shape");
  if (ground_truth && (ground_truth->rows() != n || ground_truth->cols() != n_classes))
    throw ShapeError("ground truth shape mismatch");

  const auto nc = static_cast<std::size_t>(n_classes);
  SelectionReport r;
  r.iteration = pseudo.iteration;
  r.positives_per_class.assign(nc, 0);
  r.negatives_per_class.assign(nc, 0);
  r.positives_per_sample.assign(static_cast<std::size_t>(n), 0);
  r.negatives_per_sample.assign(static_cast<std::size_t>(n), 0);

  std::size_t correct_pos = 0, correct_neg = 0;
  std::vector<std::size_t> class_selected(nc, 0), class_correct(nc, 0);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto si = static_cast<std::size_t>(i);
    for (Eigen::Index c = 0; c < n_classes; ++c) {
      if (!pseudo.masks(i, c)) continue;
      const auto sc = static_cast<std::size_t>(c);
      const bool positive = pseudo.labels(i, c) != 0;
      if (positive) {
        ++r.positives_per_class[sc];
        ++r.positives_per_sample[si];
      } else {
        ++r.negatives_per_class[sc];
        ++r.negatives_per_sample[si];
      }
      ++class_selected[sc];
      if (ground_truth && (*ground_truth)(i, c) == pseudo.labels(i, c)) {
        ++class_correct[sc];
        ++(positive ? correct_pos : correct_neg);
      }
    }
    const bool has_pos = r.positives_per_sample[si] > 0;
    const bool has_neg = r.negatives_per_sample[si] > 0;
    r.samples_with_positive += has_pos;
    r.samples_negative_only += (!has_pos && has_neg);
    r.samples_selected += (has_pos || has_neg);
  }
  r.total_positive = std::accumulate(r.positives_per_class.begin(), r.positives_per_class.end(), std::size_t{0});
  r.total_negative = std::accumulate(r.negatives_per_class.begin(), r.negatives_per_class.end(), std::size_t{0});

  auto ratio = [](std::size_t num, std::size_t den) -> std::optional<double> {
    if (den == 0) return std::nullopt;
    return static_cast<double>(num) / static_cast<double>(den);
  };
  r.accuracy_per_class.assign(nc, std::nullopt);
  if (ground_truth) {
    r.accuracy = ratio(correct_pos + correct_neg, r.total_positive + r.total_negative);
    r.positive_accuracy = ratio(correct_pos, r.total_positive);
    r.negative_accuracy = ratio(correct_neg, r.total_negative);
    for (std::size_t c = 0; c < nc; ++c) r.accuracy_per_class[c] = ratio(class_correct[c], class_selected[c]);
  }
  return r;
}

void write_selection_report_csv(std::ostream& out, const std::vector<SelectionReport>& reports) {
  out << "iteration,class,pos_selected,neg_selected,accuracy\n";
  for (const auto& r : reports) {
    for (std::size_t c = 0; c < r.positives_per_class.size(); ++c) {
      out << r.iteration << ',' << c << ',' << r.positives_per_class[c] << ','
          << r.negatives_per_class[c] << ',' << csv::format_optional(r.accuracy_per_class[c]) << '\n';
    }
    out << r.iteration << ",all," << r.total_positive << ',' << r.total_negative << ','
        << csv::format_optional(r.accuracy) << '\n';
  }
}

}  // namespace ups
