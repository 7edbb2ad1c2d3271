// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <ostream>
#include <span>
#include <vector>

#include "ups/common.hpp"

namespace ups {

/// Training split (features + ground truth, partitioned into labeled and
/// unlabeled index sets) and a held-out test split.
struct SslDataset {
  LabelMode mode = LabelMode::single_label;
  int num_classes = 0;
  Matrix features;
  BinaryMatrix labels;
  std::vector<std::size_t> labeled_idx;    ///< ascending
  std::vector<std::size_t> unlabeled_idx;  ///< ascending
  Matrix test_features;
  BinaryMatrix test_labels;

  std::size_t size() const { return static_cast<std::size_t>(features.rows()); }
  int feature_dim() const { return static_cast<int>(features.cols()); }
  /// Throws InvalidDataset when shapes or the labeled/unlabeled partition are inconsistent.
  void validate() const;

  friend bool operator==(const SslDataset&, const SslDataset&) = default;
};

/// What the training path may see: unlabeled samples carry no labels.
struct TrainingView {
  LabelMode mode = LabelMode::single_label;
  int num_classes = 0;
  Matrix labeled_features;
  BinaryMatrix labeled_labels;
  Matrix unlabeled_features;
};

TrainingView training_view(const SslDataset& ds);

/// Ground truth of the unlabeled rows, in unlabeled_idx order. Reserved for
/// reporting (selection statistics), never for training.
BinaryMatrix unlabeled_ground_truth(const SslDataset& ds);

/// Class index of each row: the first positive entry, or -1 for an empty row.
std::vector<int> class_indices(const BinaryMatrix& labels);

/// Two interleaving half circles, n/2 points each, angles uniform on [0, pi]:
/// class 0 on (cos t, sin t), class 1 on (1 - cos t, 1/2 - sin t), plus
/// N(0, noise_sigma^2) per coordinate. Every training row starts unlabeled.
/// n_test < 0 means n_test = n. Throws InvalidParameter for odd n or n < 4.
SslDataset make_two_moons(int n, double noise_sigma, std::uint64_t seed, int n_test = -1);

/// Single-label isotropic Gaussian blobs with the given per-class counts
/// (centers on a circle of radius 2). Useful for imbalanced benchmarks.
/// The test split has n_test_per_class samples of every class.
SslDataset make_blobs(std::span<const int> counts_per_class, double spread, std::uint64_t seed,
                      int n_test_per_class);

/// C centers evenly spaced on the unit circle.
Matrix blob_centers(int num_classes);

/// Multi-label indicator of a point: the source class plus every class whose
/// center lies within `radius`.
std::vector<std::uint8_t> multilabel_indicator(const RowVector& point, const Matrix& centers,
                                               double radius, int source_class);

/// Multi-label blobs: each sample is drawn around one center (spread 0.25 x the
/// center spacing) and labelled by multilabel_indicator with radius
/// overlap x spacing. overlap = 0 gives exactly one positive per sample.
SslDataset make_blobs_multilabel(int n, int num_classes, double overlap, std::uint64_t seed,
                                 int n_test = -1);

/// Chooses n_labeled training rows as labeled, the rest unlabeled. Stratified
/// draws floor(n_labeled / C) per class first (fewer if a class is short) and
/// fills the remainder uniformly.
SslDataset split_labeled(SslDataset ds, std::size_t n_labeled, std::uint64_t seed, bool stratified);

struct CsvSchema {
  LabelMode mode = LabelMode::single_label;
};

// CSV layout: feature_0..feature_{d-1},label_0..label_{C-1},split where split
// is labeled | unlabeled | test. Training rows come first, in index order.
// Values are written with 17 significant digits.
void save_csv(const SslDataset& ds, std::ostream& out);
void save_csv(const SslDataset& ds, const std::filesystem::path& path);
SslDataset load_csv(std::istream& in, const CsvSchema& schema);
SslDataset load_csv(const std::filesystem::path& path, const CsvSchema& schema);

}  // namespace ups
