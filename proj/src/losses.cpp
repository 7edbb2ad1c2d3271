// SPDX-License-Identifier: Apache-2.0
#include "ups/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace ups::losses {

namespace {

bool clipped(double p) { return p < kProbClip || p > 1.0 - kProbClip; }

// d/dp of -log(clip(p)).
double neg_log_grad(double p) { return clipped(p) ? 0.0 : -1.0 / p; }
// d/dp of -log(1 - clip(p)).
double neg_log_complement_grad(double p) { return clipped(p) ? 0.0 : 1.0 / (1.0 - p); }

std::size_t positive_index(BinaryRow target) {
  std::size_t found = target.size();
  for (std::size_t c = 0; c < target.size(); ++c) {
    if (!target[c]) continue;
    if (found != target.size()) throw InvalidTarget("target has more than one positive entry");
    found = c;
  }
  if (found == target.size()) throw InvalidTarget("target has no positive entry");
  return found;
}

std::size_t selected_count(BinaryRow mask) {
  return static_cast<std::size_t>(std::count_if(mask.begin(), mask.end(), [](auto g) { return g != 0; }));
}

void check_widths(std::size_t a, std::size_t b, std::size_t c) {
  if (a != b || a != c) throw ShapeError("loss operands have different class counts");
}

BinaryRow row_of(const BinaryMatrix& m, Eigen::Index i) {
  return {m.data() + i * m.cols(), static_cast<std::size_t>(m.cols())};
}
ProbRow row_of(const ProbMatrix& m, Eigen::Index i) {
  return {m.data() + i * m.cols(), static_cast<std::size_t>(m.cols())};
}

// Mask restricted to selected negatives (g_c = 1 and y_c = 0).
std::vector<std::uint8_t> negatives_only(BinaryRow target, BinaryRow mask) {
  std::vector<std::uint8_t> out(mask.size());
  for (std::size_t c = 0; c < mask.size(); ++c) out[c] = (mask[c] && !target[c]) ? 1 : 0;
  return out;
}

bool contributes(SampleObjective objective, BinaryRow mask) {
  switch (objective) {
    case SampleObjective::skip:
      return false;
    case SampleObjective::positive:
    case SampleObjective::positive_and_negative:
      return true;
    case SampleObjective::negative:
    case SampleObjective::masked_bce:
      return selected_count(mask) > 0;
  }
  return false;
}

}  // namespace

double clip_probability(double p) { return std::clamp(p, kProbClip, 1.0 - kProbClip); }

double positive_cross_entropy(ProbRow pred, BinaryRow target) {
  if (pred.size() != target.size()) throw ShapeError("prediction and target widths differ");
  return -std::log(clip_probability(pred[positive_index(target)]));
}

double negative_cross_entropy(BinaryRow pseudo, ProbRow pred, BinaryRow mask) {
  check_widths(pseudo.size(), pred.size(), mask.size());
  const std::size_t s = selected_count(mask);
  if (s == 0) throw EmptyMask("negative cross-entropy with no selected labels");
  double sum = 0.0;
  for (std::size_t c = 0; c < pred.size(); ++c) {
    if (mask[c] && !pseudo[c]) sum += std::log(1.0 - clip_probability(pred[c]));
  }
  return -sum / static_cast<double>(s);
}

double masked_bce(BinaryRow pseudo, ProbRow pred, BinaryRow mask) {
  check_widths(pseudo.size(), pred.size(), mask.size());
  const std::size_t s = selected_count(mask);
  if (s == 0) throw EmptyMask("masked BCE with no selected labels");
  double sum = 0.0;
  for (std::size_t c = 0; c < pred.size(); ++c) {
    if (!mask[c]) continue;
    const double p = clip_probability(pred[c]);
    sum += pseudo[c] ? std::log(p) : std::log(1.0 - p);
  }
  return -sum / static_cast<double>(s);
}

void positive_cross_entropy_grad(ProbRow pred, BinaryRow target, std::span<double> out,
                                 double scale) {
  const std::size_t c = positive_index(target);
  out[c] += scale * neg_log_grad(pred[c]);
}

void negative_cross_entropy_grad(BinaryRow pseudo, ProbRow pred, BinaryRow mask,
                                 std::span<double> out, double scale) {
  const std::size_t s = selected_count(mask);
  if (s == 0) throw EmptyMask("negative cross-entropy with no selected labels");
  const double w = scale / static_cast<double>(s);
  for (std::size_t c = 0; c < pred.size(); ++c) {
    if (mask[c] && !pseudo[c]) out[c] += w * neg_log_complement_grad(pred[c]);
  }
}

void masked_bce_grad(BinaryRow pseudo, ProbRow pred, BinaryRow mask, std::span<double> out,
                     double scale) {
  const std::size_t s = selected_count(mask);
  if (s == 0) throw EmptyMask("masked BCE with no selected labels");
  const double w = scale / static_cast<double>(s);
  for (std::size_t c = 0; c < pred.size(); ++c) {
    if (!mask[c]) continue;
    out[c] += w * (pseudo[c] ? neg_log_grad(pred[c]) : neg_log_complement_grad(pred[c]));
  }
}

LossSpec LossSpec::uniform(SampleObjective objective, BinaryMatrix targets, BinaryMatrix masks) {
  if (targets.rows() != masks.rows() || targets.cols() != masks.cols())
    throw ShapeError("targets and masks differ in shape");
  LossSpec spec{std::move(targets), std::move(masks), {}};
  spec.objectives.reserve(static_cast<std::size_t>(spec.targets.rows()));
  for (Eigen::Index i = 0; i < spec.targets.rows(); ++i) {
    spec.objectives.push_back(contributes(objective, row_of(spec.masks, i)) ? objective
                                                                            : SampleObjective::skip);
  }
  return spec;
}

LossSpec LossSpec::single_label_dispatch(BinaryMatrix targets, BinaryMatrix masks,
                                         bool negatives_with_positive) {
  if (targets.rows() != masks.rows() || targets.cols() != masks.cols())
    throw ShapeError("targets and masks differ in shape");
  LossSpec spec{std::move(targets), std::move(masks), {}};
  for (Eigen::Index i = 0; i < spec.targets.rows(); ++i) {
    bool has_positive = false;
    bool has_negative = false;
    for (Eigen::Index c = 0; c < spec.targets.cols(); ++c) {
      if (!spec.masks(i, c)) continue;
      (spec.targets(i, c) ? has_positive : has_negative) = true;
    }
    SampleObjective objective = SampleObjective::skip;
    if (has_positive) {
      objective = (negatives_with_positive && has_negative) ? SampleObjective::positive_and_negative
                                                            : SampleObjective::positive;
    } else if (has_negative) {
      objective = SampleObjective::negative;
    }
    spec.objectives.push_back(objective);
  }
  return spec;
}

std::size_t LossSpec::contributing() const {
  return static_cast<std::size_t>(std::count_if(objectives.begin(), objectives.end(), [](auto o) {
    return o != SampleObjective::skip;
  }));
}

LossSpec LossSpec::subset(std::span<const std::size_t> rows) const {
  LossSpec out;
  out.targets.resize(static_cast<Eigen::Index>(rows.size()), targets.cols());
  out.masks.resize(static_cast<Eigen::Index>(rows.size()), masks.cols());
  out.objectives.reserve(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto r = static_cast<Eigen::Index>(rows[k]);
    out.targets.row(static_cast<Eigen::Index>(k)) = targets.row(r);
    out.masks.row(static_cast<Eigen::Index>(k)) = masks.row(r);
    out.objectives.push_back(objectives[rows[k]]);
  }
  return out;
}

double sample_loss(SampleObjective objective, BinaryRow target, ProbRow pred, BinaryRow mask) {
  switch (objective) {
    case SampleObjective::skip:
      return 0.0;
    case SampleObjective::positive:
      return positive_cross_entropy(pred, target);
    case SampleObjective::negative:
      return negative_cross_entropy(target, pred, mask);
    case SampleObjective::positive_and_negative: {
      double loss = positive_cross_entropy(pred, target);
      const auto neg = negatives_only(target, mask);
      if (selected_count(neg) > 0) loss += negative_cross_entropy(target, pred, neg);
      return loss;
    }
    case SampleObjective::masked_bce:
      return masked_bce(target, pred, mask);
  }
  return 0.0;
}

namespace {
void check_spec(const ProbMatrix& probs, const LossSpec& spec) {
  if (static_cast<std::size_t>(probs.rows()) != spec.rows() || probs.rows() != spec.targets.rows() ||
      probs.cols() != spec.targets.cols() || spec.masks.rows() != spec.targets.rows() ||
      spec.masks.cols() != spec.targets.cols())
    throw ShapeError("loss spec does not match prediction shape");
}
}  // namespace

double batch_loss(const ProbMatrix& probs, const LossSpec& spec) {
  check_spec(probs, spec);
  const std::size_t n = spec.contributing();
  if (n == 0) throw EmptyBatch("no sample in the batch contributes a loss");
  double sum = 0.0;
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    const auto objective = spec.objectives[static_cast<std::size_t>(i)];
    if (objective == SampleObjective::skip) continue;
    sum += sample_loss(objective, row_of(spec.targets, i), row_of(probs, i), row_of(spec.masks, i));
  }
  return sum / static_cast<double>(n);
}

ProbMatrix batch_loss_grad(const ProbMatrix& probs, const LossSpec& spec) {
  check_spec(probs, spec);
  const std::size_t n = spec.contributing();
  if (n == 0) throw EmptyBatch("no sample in the batch contributes a loss");
  const double scale = 1.0 / static_cast<double>(n);
  ProbMatrix grad = ProbMatrix::Zero(probs.rows(), probs.cols());
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    const auto target = row_of(spec.targets, i);
    const auto mask = row_of(spec.masks, i);
    const auto pred = row_of(probs, i);
    std::span<double> out{grad.data() + i * grad.cols(), static_cast<std::size_t>(grad.cols())};
    switch (spec.objectives[static_cast<std::size_t>(i)]) {
      case SampleObjective::skip:
        break;
      case SampleObjective::positive:
        positive_cross_entropy_grad(pred, target, out, scale);
        break;
      case SampleObjective::negative:
        negative_cross_entropy_grad(target, pred, mask, out, scale);
        break;
      case SampleObjective::positive_and_negative: {
        positive_cross_entropy_grad(pred, target, out, scale);
        const auto neg = negatives_only(target, mask);
        if (selected_count(neg) > 0) negative_cross_entropy_grad(target, pred, neg, out, scale);
        break;
      }
      case SampleObjective::masked_bce:
        masked_bce_grad(target, pred, mask, out, scale);
        break;
    }
  }
  return grad;
}

}  // namespace ups::losses
