// SPDX-License-Identifier: Apache-2.0
#include "ups/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <string>

#include "ups/csv.hpp"
#include "ups/rng.hpp"

namespace ups {

void SslDataset::validate() const {
  if (num_classes < 1) throw InvalidDataset("dataset needs at least one class");
  if (labels.rows() != features.rows() || labels.cols() != num_classes)
    throw InvalidDataset("training labels do not match features");
  if (test_labels.rows() != test_features.rows() ||
      (test_features.rows() > 0 && (test_labels.cols() != num_classes ||
                                    test_features.cols() != features.cols())))
    throw InvalidDataset("test split shape mismatch");
  std::vector<std::uint8_t> seen(size(), 0);
  auto mark = [&](const std::vector<std::size_t>& idx) {
    for (std::size_t k = 0; k < idx.size(); ++k) {
      if (idx[k] >= size()) throw InvalidDataset("split index out of range");
      if (k > 0 && idx[k] <= idx[k - 1]) throw InvalidDataset("split indices must be ascending");
      if (seen[idx[k]]++) throw InvalidDataset("labeled and unlabeled sets overlap");
    }
  };
  mark(labeled_idx);
  mark(unlabeled_idx);
  if (labeled_idx.size() + unlabeled_idx.size() != size())
    throw InvalidDataset("labeled and unlabeled sets do not cover the training split");
}

namespace {

Matrix gather_rows(const Matrix& m, const std::vector<std::size_t>& idx) {
  Matrix out(static_cast<Eigen::Index>(idx.size()), m.cols());
  for (std::size_t k = 0; k < idx.size(); ++k)
    out.row(static_cast<Eigen::Index>(k)) = m.row(static_cast<Eigen::Index>(idx[k]));
  return out;
}

BinaryMatrix gather_rows(const BinaryMatrix& m, const std::vector<std::size_t>& idx) {
  BinaryMatrix out(static_cast<Eigen::Index>(idx.size()), m.cols());
  for (std::size_t k = 0; k < idx.size(); ++k)
    out.row(static_cast<Eigen::Index>(k)) = m.row(static_cast<Eigen::Index>(idx[k]));
  return out;
}

std::vector<std::size_t> iota_indices(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

// Permutes rows of (features, labels) together.
void shuffle_rows(Matrix& features, BinaryMatrix& labels, Rng& rng) {
  auto order = iota_indices(static_cast<std::size_t>(features.rows()));
  rng.shuffle(order.begin(), order.end());
  features = gather_rows(features, order);
  labels = gather_rows(labels, order);
}

void moons(int n, double noise, Rng& rng, Matrix& x, BinaryMatrix& y) {
  x.resize(n, 2);
  y = BinaryMatrix::Zero(n, 2);
  for (int i = 0; i < n; ++i) {
    const int cls = i % 2;
    const double t = rng.uniform(0.0, std::numbers::pi);
    if (cls == 0) {
      x(i, 0) = std::cos(t);
      x(i, 1) = std::sin(t);
    } else {
      x(i, 0) = 1.0 - std::cos(t);
      x(i, 1) = 0.5 - std::sin(t);
    }
    y(i, cls) = 1;
  }
  if (noise > 0.0)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < 2; ++j) x(i, j) += noise * rng.normal();
  shuffle_rows(x, y, rng);
}

SslDataset all_unlabeled(LabelMode mode, int num_classes, Matrix x, BinaryMatrix y, Matrix tx,
                         BinaryMatrix ty) {
  SslDataset ds;
  ds.mode = mode;
  ds.num_classes = num_classes;
  ds.features = std::move(x);
  ds.labels = std::move(y);
  ds.test_features = std::move(tx);
  ds.test_labels = std::move(ty);
  ds.unlabeled_idx = iota_indices(ds.size());
  return ds;
}

}  // namespace

TrainingView training_view(const SslDataset& ds) {
  ds.validate();
  return {ds.mode, ds.num_classes, gather_rows(ds.features, ds.labeled_idx),
          gather_rows(ds.labels, ds.labeled_idx), gather_rows(ds.features, ds.unlabeled_idx)};
}

BinaryMatrix unlabeled_ground_truth(const SslDataset& ds) {
  return gather_rows(ds.labels, ds.unlabeled_idx);
}

std::vector<int> class_indices(const BinaryMatrix& labels) {
  std::vector<int> out(static_cast<std::size_t>(labels.rows()), -1);
  for (Eigen::Index i = 0; i < labels.rows(); ++i)
    for (Eigen::Index c = 0; c < labels.cols(); ++c)
      if (labels(i, c)) {
        out[static_cast<std::size_t>(i)] = static_cast<int>(c);
        break;
      }
  return out;
}

SslDataset make_two_moons(int n, double noise_sigma, std::uint64_t seed, int n_test) {
  if (n < 4 || n % 2 != 0) throw InvalidParameter("two-moons needs an even n >= 4");
  if (!(noise_sigma >= 0.0)) throw InvalidParameter("noise_sigma must be non-negative");
  if (n_test < 0) n_test = n;
  if (n_test % 2 != 0) throw InvalidParameter("two-moons needs an even test size");
  Rng train_rng(derive_seed({seed, tag("moons")}));
  Rng test_rng(derive_seed({seed, tag("moons-test")}));
  Matrix x, tx;
  BinaryMatrix y, ty;
  moons(n, noise_sigma, train_rng, x, y);
  if (n_test > 0) moons(n_test, noise_sigma, test_rng, tx, ty);
  else {
    tx.resize(0, 2);
    ty.resize(0, 2);
  }
  return all_unlabeled(LabelMode::single_label, 2, std::move(x), std::move(y), std::move(tx),
                       std::move(ty));
}

Matrix blob_centers(int num_classes) {
  if (num_classes < 1) throw InvalidParameter("need at least one class");
  Matrix centers(num_classes, 2);
  for (int c = 0; c < num_classes; ++c) {
    const double a = 2.0 * std::numbers::pi * c / num_classes;
    centers(c, 0) = std::cos(a);
    centers(c, 1) = std::sin(a);
  }
  return centers;
}

SslDataset make_blobs(std::span<const int> counts_per_class, double spread, std::uint64_t seed,
                      int n_test_per_class) {
  const int n_classes = static_cast<int>(counts_per_class.size());
  if (n_classes < 2) throw InvalidParameter("blobs need at least 2 classes");
  if (!(spread >= 0.0) || n_test_per_class < 0) throw InvalidParameter("invalid blob parameters");
  for (int c : counts_per_class)
    if (c < 1) throw InvalidParameter("every class needs at least one sample");
  const Matrix centers = 2.0 * blob_centers(n_classes);
  auto draw = [&](std::span<const int> counts, Rng& rng, Matrix& x, BinaryMatrix& y) {
    int total = 0;
    for (int c : counts) total += c;
    x.resize(total, 2);
    y = BinaryMatrix::Zero(total, n_classes);
    int row = 0;
    for (int c = 0; c < n_classes; ++c)
      for (int k = 0; k < counts[static_cast<std::size_t>(c)]; ++k, ++row) {
        x(row, 0) = centers(c, 0) + spread * rng.normal();
        x(row, 1) = centers(c, 1) + spread * rng.normal();
        y(row, c) = 1;
      }
    shuffle_rows(x, y, rng);
  };
  Rng train_rng(derive_seed({seed, tag("blobs")}));
  Rng test_rng(derive_seed({seed, tag("blobs-test")}));
  Matrix x, tx;
  BinaryMatrix y, ty;
  draw(counts_per_class, train_rng, x, y);
  const std::vector<int> test_counts(static_cast<std::size_t>(n_classes), n_test_per_class);
  draw(test_counts, test_rng, tx, ty);
  return all_unlabeled(LabelMode::single_label, n_classes, std::move(x), std::move(y), std::move(tx),
                       std::move(ty));
}

std::vector<std::uint8_t> multilabel_indicator(const RowVector& point, const Matrix& centers,
                                               double radius, int source_class) {
  std::vector<std::uint8_t> out(static_cast<std::size_t>(centers.rows()), 0);
  for (Eigen::Index c = 0; c < centers.rows(); ++c)
    out[static_cast<std::size_t>(c)] = (c == source_class || (point - centers.row(c)).norm() <= radius);
  return out;
}

SslDataset make_blobs_multilabel(int n, int num_classes, double overlap, std::uint64_t seed,
                                 int n_test) {
  if (num_classes < 2) throw InvalidParameter("multi-label blobs need at least 2 classes");
  if (n < 1) throw InvalidParameter("multi-label blobs need n >= 1");
  if (!(overlap >= 0.0)) throw InvalidParameter("overlap must be non-negative");
  if (n_test < 0) n_test = n;
  const Matrix centers = blob_centers(num_classes);
  const double spacing = 2.0 * std::sin(std::numbers::pi / num_classes);
  const double spread = 0.25 * spacing;
  const double radius = overlap * spacing;
  auto draw = [&](int count, Rng& rng, Matrix& x, BinaryMatrix& y) {
    x.resize(count, 2);
    y = BinaryMatrix::Zero(count, num_classes);
    for (int i = 0; i < count; ++i) {
      const int source = i % num_classes;
      x(i, 0) = centers(source, 0) + spread * rng.normal();
      x(i, 1) = centers(source, 1) + spread * rng.normal();
      const auto ind = multilabel_indicator(x.row(i), centers, radius, source);
      for (int c = 0; c < num_classes; ++c) y(i, c) = ind[static_cast<std::size_t>(c)];
    }
    shuffle_rows(x, y, rng);
  };
  Rng train_rng(derive_seed({seed, tag("mlblobs")}));
  Rng test_rng(derive_seed({seed, tag("mlblobs-test")}));
  Matrix x, tx;
  BinaryMatrix y, ty;
  draw(n, train_rng, x, y);
  draw(n_test, test_rng, tx, ty);
  return all_unlabeled(LabelMode::multi_label, num_classes, std::move(x), std::move(y), std::move(tx),
                       std::move(ty));
}

SslDataset split_labeled(SslDataset ds, std::size_t n_labeled, std::uint64_t seed, bool stratified) {
  const std::size_t n = ds.size();
  const auto n_classes = static_cast<std::size_t>(ds.num_classes);
  if (n_labeled > n) throw InvalidParameter("n_labeled exceeds the training split size");
  if (stratified && n_labeled < n_classes)
    throw InvalidParameter("stratified split needs n_labeled >= number of classes");

  Rng rng(derive_seed({seed, tag("split")}));
  std::vector<std::uint8_t> chosen(n, 0);
  std::size_t taken = 0;
  if (stratified) {
    const std::size_t quota = n_labeled / n_classes;
    const auto cls = class_indices(ds.labels);
    for (std::size_t c = 0; c < n_classes; ++c) {
      std::vector<std::size_t> members;
      for (std::size_t i = 0; i < n; ++i)
        if (cls[i] == static_cast<int>(c)) members.push_back(i);
      rng.shuffle(members.begin(), members.end());
      for (std::size_t k = 0; k < std::min(quota, members.size()); ++k) {
        chosen[members[k]] = 1;
        ++taken;
      }
    }
  }
  std::vector<std::size_t> rest;
  for (std::size_t i = 0; i < n; ++i)
    if (!chosen[i]) rest.push_back(i);
  rng.shuffle(rest.begin(), rest.end());
  for (std::size_t k = 0; taken < n_labeled; ++k, ++taken) chosen[rest[k]] = 1;

  ds.labeled_idx.clear();
  ds.unlabeled_idx.clear();
  for (std::size_t i = 0; i < n; ++i) (chosen[i] ? ds.labeled_idx : ds.unlabeled_idx).push_back(i);
  return ds;
}

void save_csv(const SslDataset& ds, std::ostream& out) {
  ds.validate();
  const int d = ds.feature_dim();
  for (int j = 0; j < d; ++j) out << "feature_" << j << ',';
  for (int c = 0; c < ds.num_classes; ++c) out << "label_" << c << ',';
  out << "split\n";
  std::vector<std::uint8_t> labeled(ds.size(), 0);
  for (std::size_t i : ds.labeled_idx) labeled[i] = 1;
  auto write_row = [&](const Matrix& x, const BinaryMatrix& y, Eigen::Index i, const char* split) {
    for (int j = 0; j < d; ++j) out << csv::format_double(x(i, j)) << ',';
    for (int c = 0; c < ds.num_classes; ++c) out << static_cast<int>(y(i, c)) << ',';
    out << split << '\n';
  };
  for (std::size_t i = 0; i < ds.size(); ++i)
    write_row(ds.features, ds.labels, static_cast<Eigen::Index>(i), labeled[i] ? "labeled" : "unlabeled");
  for (Eigen::Index i = 0; i < ds.test_features.rows(); ++i)
    write_row(ds.test_features, ds.test_labels, i, "test");
}

void save_csv(const SslDataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  save_csv(ds, out);
}

SslDataset load_csv(std::istream& in, const CsvSchema& schema) {
  std::string raw;
  if (!std::getline(in, raw) || csv::trim_eol(raw).empty())
    throw ParseError("line 1: dataset file is empty");
  const auto header = csv::split(csv::trim_eol(raw));
  int d = 0, n_classes = 0;
  std::size_t k = 0;
  while (k < header.size() && header[k] == "feature_" + std::to_string(d)) ++d, ++k;
  while (k < header.size() && header[k] == "label_" + std::to_string(n_classes)) ++n_classes, ++k;
  if (d == 0 || n_classes == 0 || k + 1 != header.size() || header[k] != "split")
    throw SchemaError("line 1: header must be feature_0..feature_{d-1},label_0..label_{C-1},split");

  std::vector<double> train_x, test_x;
  std::vector<std::uint8_t> train_y, test_y;
  SslDataset ds;
  ds.mode = schema.mode;
  ds.num_classes = n_classes;
  std::size_t line_no = 1;
  std::size_t n_train = 0;
  bool seen_test = false;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto line = csv::trim_eol(raw);
    if (line.empty()) continue;
    const auto cells = csv::split(line);
    if (cells.size() != header.size())
      throw SchemaError("line " + std::to_string(line_no) + ": expected " +
                        std::to_string(header.size()) + " fields, found " +
                        std::to_string(cells.size()));
    const auto split = cells.back();
    const bool is_test = split == "test";
    if (!is_test && split != "labeled" && split != "unlabeled")
      throw ParseError("line " + std::to_string(line_no) + ": unknown split '" + std::string(split) + "'");
    if (!is_test && seen_test)
      throw SchemaError("line " + std::to_string(line_no) + ": training rows must precede test rows");
    seen_test = seen_test || is_test;
    auto& xs = is_test ? test_x : train_x;
    auto& ys = is_test ? test_y : train_y;
    for (int j = 0; j < d; ++j) {
      const double v = csv::parse_double(cells[static_cast<std::size_t>(j)], line_no);
      if (!std::isfinite(v))
        throw ParseError("line " + std::to_string(line_no) + ": non-finite feature value");
      xs.push_back(v);
    }
    for (int c = 0; c < n_classes; ++c) {
      const auto cell = cells[static_cast<std::size_t>(d + c)];
      if (cell != "0" && cell != "1")
        throw ParseError("line " + std::to_string(line_no) + ": label cell must be 0 or 1");
      ys.push_back(cell == "1" ? 1 : 0);
    }
    if (!is_test) {
      (split == "labeled" ? ds.labeled_idx : ds.unlabeled_idx).push_back(n_train);
      ++n_train;
    }
  }
  auto to_matrix = [d](const std::vector<double>& v) {
    const auto rows = static_cast<Eigen::Index>(v.size() / static_cast<std::size_t>(d));
    return Matrix(Eigen::Map<const Matrix>(v.data(), rows, d));
  };
  auto to_binary = [n_classes](const std::vector<std::uint8_t>& v) {
    const auto rows = static_cast<Eigen::Index>(v.size() / static_cast<std::size_t>(n_classes));
    return BinaryMatrix(Eigen::Map<const BinaryMatrix>(v.data(), rows, n_classes));
  };
  ds.features = to_matrix(train_x);
  ds.labels = to_binary(train_y);
  ds.test_features = to_matrix(test_x);
  ds.test_labels = to_binary(test_y);
  ds.validate();
  return ds;
}

SslDataset load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  return load_csv(in, schema);
}

}  // namespace ups
