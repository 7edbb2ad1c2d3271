// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <set>
#include <sstream>
#include <vector>

#include "test_util.hpp"
#include "ups/pipeline.hpp"

using namespace ups;

namespace {

PipelineConfig quick_config(std::uint64_t master = 1) {
  PipelineConfig cfg;
  cfg.model.hidden_dims = {8};
  cfg.training.epochs_per_iteration = 3;
  cfg.training.batch_size = 16;
  cfg.training.base_lr = 0.3;
  cfg.max_iterations = 3;
  cfg.master_seed = master;
  return cfg;
}

SslDataset small_moons(std::size_t labeled = 6) {
  return split_labeled(make_two_moons(60, 0.1, 4, 40), labeled, 2, true);
}

bool same_record(IterationRecord a, IterationRecord b) {
  a.wall_clock_seconds = b.wall_clock_seconds = 0.0;
  return a.iteration == b.iteration && a.pos_selected == b.pos_selected &&
         a.neg_selected == b.neg_selected && a.samples_selected == b.samples_selected &&
         a.samples_negative_only == b.samples_negative_only &&
         a.positives_per_class == b.positives_per_class && a.sel_accuracy == b.sel_accuracy &&
         a.positive_accuracy == b.positive_accuracy && a.test_metric == b.test_metric &&
         a.ece == b.ece && a.balanced == b.balanced && a.model_seed == b.model_seed;
}

}  // namespace

TEST_CASE("a single iteration is the supervised baseline") {
  auto cfg = quick_config();
  cfg.max_iterations = 1;
  const auto ssl = run_ssl(small_moons(), cfg);
  const auto sup = run_supervised(small_moons(), quick_config());
  REQUIRE(ssl.records.size() == 1);
  REQUIRE(sup.records.size() == 1);
  CHECK(same_record(ssl.records[0], sup.records[0]));
  CHECK(ssl.model == sup.model);
  CHECK(ssl.selection_reports.empty());
}

TEST_CASE("a fully labeled dataset stops after iteration 0") {
  const auto ds = split_labeled(make_two_moons(40, 0.1, 4), 40, 1, false);
  const auto result = run_ssl(ds, quick_config());
  CHECK(result.records.size() == 1);
}

TEST_CASE("runs are deterministic for a fixed master seed") {
  for (auto regime : {Regime::vanilla, Regime::confidence, Regime::ups}) {
    auto cfg = quick_config(9);
    cfg.selection.regime = regime;
    const auto a = run_ssl(small_moons(), cfg);
    const auto b = run_ssl(small_moons(), cfg);
    REQUIRE(a.records.size() == b.records.size());
    for (std::size_t k = 0; k < a.records.size(); ++k) CHECK(same_record(a.records[k], b.records[k]));
    CHECK(a.model == b.model);
  }
}

TEST_CASE("every iteration is recorded with a fresh network") {
  auto cfg = quick_config(5);
  cfg.convergence_delta = 0.0;
  const auto result = run_ssl(small_moons(), cfg);
  REQUIRE(result.records.size() == 3);
  CHECK(result.selection_reports.size() == 2);
  std::set<std::uint64_t> seeds;
  for (int k = 0; k < 3; ++k) {
    const auto& r = result.records[static_cast<std::size_t>(k)];
    CHECK(r.iteration == k);
    CHECK(r.model_seed == iteration_model_seed(5, k));
    CHECK(r.test_metric >= 0.0);
    CHECK(r.test_metric <= 1.0);
    CHECK(r.positives_per_class.size() == 2);
    if (k > 0) {
      CHECK(r.balanced);
      CHECK(r.samples_selected <= 54);
      if (r.pos_selected + r.neg_selected > 0) CHECK(r.sel_accuracy.has_value());
    }
    seeds.insert(r.model_seed);
  }
  CHECK(seeds.size() == 3);
  CHECK(result.model.init_seed == iteration_model_seed(5, 2));
  CHECK(iteration_estimator_seed(5, 0) != iteration_model_seed(5, 0));
  CHECK(iteration_model_seed(5, 1) != iteration_model_seed(6, 1));
}

TEST_CASE("vanilla pseudo-labeling is never class-balanced") {
  auto cfg = quick_config();
  cfg.selection.regime = Regime::vanilla;
  cfg.convergence_delta = 0.0;
  const auto result = run_ssl(small_moons(), cfg);
  for (std::size_t k = 1; k < result.records.size(); ++k) {
    CHECK_FALSE(result.records[k].balanced);
    CHECK(result.records[k].samples_selected == 54);
    CHECK(result.records[k].neg_selected == 0);
  }
}

TEST_CASE("balancing stops after balance_iters") {
  auto cfg = quick_config();
  cfg.selection.balance_iters = 1;
  cfg.convergence_delta = 0.0;
  const auto result = run_ssl(small_moons(), cfg);
  REQUIRE(result.records.size() == 3);
  CHECK(result.records[1].balanced);
  CHECK_FALSE(result.records[2].balanced);
}

TEST_CASE("an empty labeled set is rejected") {
  CHECK_THROWS_AS(run_ssl(make_two_moons(20, 0.1, 1), quick_config()), InvalidDataset);
  auto cfg = quick_config();
  cfg.max_iterations = 0;
  CHECK_THROWS_AS(run_ssl(small_moons(), cfg), InvalidParameter);
}

TEST_CASE("multi-label runs with argmax labels warn") {
  const auto ds = split_labeled(make_blobs_multilabel(40, 3, 1.0, 2), 10, 1, false);
  auto cfg = quick_config();
  cfg.max_iterations = 1;
  CHECK(run_ssl(ds, cfg).warnings.size() == 1);
  cfg.selection.gamma_mode = GammaMode::fixed;
  CHECK(run_ssl(ds, cfg).warnings.empty());
}

TEST_CASE("assembled training sets keep labeled rows first") {
  const auto ds = small_moons(4);
  const auto view = training_view(ds);
  PseudoLabelSet pseudo;
  pseudo.labels = BinaryMatrix::Zero(view.unlabeled_features.rows(), 2);
  pseudo.masks = BinaryMatrix::Zero(view.unlabeled_features.rows(), 2);
  pseudo.labels(3, 1) = 1;
  pseudo.masks(3, 1) = 1;
  pseudo.masks(7, 0) = 1;
  const auto set = assemble_training_set(view, view.unlabeled_features, &pseudo, SelectionConfig{});
  REQUIRE(set.features.rows() == 6);
  CHECK(set.features.topRows(4) == view.labeled_features);
  CHECK(set.features.row(4) == view.unlabeled_features.row(3));
  CHECK(set.features.row(5) == view.unlabeled_features.row(7));
  CHECK(set.spec.objectives[4] == losses::SampleObjective::positive);
  CHECK(set.spec.objectives[5] == losses::SampleObjective::negative);
  CHECK(assemble_training_set(view, view.unlabeled_features, nullptr, SelectionConfig{}).features.rows() == 4);
}

TEST_CASE("training is reproducible and seed dependent") {
  const auto ds = small_moons(10);
  const auto set = assemble_training_set(training_view(ds), Matrix(0, 2), nullptr, SelectionConfig{});
  const std::vector<int> dims{2, 8, 2};
  const auto cfg = quick_config();
  CHECK(train_model(set, dims, Head::softmax, cfg, 3) == train_model(set, dims, Head::softmax, cfg, 3));
  CHECK_FALSE(train_model(set, dims, Head::softmax, cfg, 3) == train_model(set, dims, Head::softmax, cfg, 4));
}

TEST_CASE("average precision by hand") {
  const std::vector<double> scores{0.9, 0.8, 0.7, 0.6};
  const std::vector<std::uint8_t> truth{1, 0, 1, 0};
  CHECK(*average_precision(scores, truth) == doctest::Approx((1.0 + 2.0 / 3.0) / 2.0));
  const std::vector<double> tied{0.5, 0.5};
  const std::vector<std::uint8_t> second{0, 1};
  CHECK(*average_precision(tied, second) == doctest::Approx(0.5));
  const std::vector<std::uint8_t> none{0, 0};
  CHECK_FALSE(average_precision(tied, none).has_value());

  ProbMatrix p(3, 2);
  p << 0.9, 0.1,  //
      0.2, 0.3,   //
      0.4, 0.8;
  BinaryMatrix t(3, 2);
  t << 1, 0,  //
      0, 0,   //
      0, 1;
  CHECK(mean_average_precision(p, t) == doctest::Approx(1.0));
  t(1, 0) = 1;  // class 0 ranks 0.9, 0.4, 0.2: hits at 1 and 3
  CHECK(mean_average_precision(p, t) == doctest::Approx(((1.0 + 2.0 / 3.0) / 2.0 + 1.0) / 2.0));
  CHECK_THROWS_AS(mean_average_precision(p, BinaryMatrix::Zero(3, 2)), EmptyInput);
}

TEST_CASE("evaluation of a perfect and a constant classifier") {
  const std::vector<int> dims{2, 2};
  ModelState m = init_model(dims, 0.0, Head::softmax, 1);
  m.layers[0].weight << 10, -10,  //
      -10, 10;
  m.layers[0].bias.setZero();
  Matrix x(4, 2);
  x << 1, 0,  //
      2, 0,   //
      0, 1,   //
      0, 3;
  BinaryMatrix y(4, 2);
  y << 1, 0,  //
      1, 0,   //
      0, 1,   //
      0, 1;
  CHECK(evaluate(m, x, y, LabelMode::single_label, TemperatureConfig{1.0}).metric == 1.0);

  m.layers[0].weight.setZero();
  const auto ev = evaluate(m, x, y, LabelMode::single_label, TemperatureConfig{2.0});
  CHECK(ev.metric == 0.5);
  CHECK(ev.ece == doctest::Approx(0.0));
  CHECK(ev.dump.size() == 4);
  CHECK_THROWS_AS(evaluate(m, Matrix(0, 2), BinaryMatrix(0, 2), LabelMode::single_label, {}), EmptyInput);
}

TEST_CASE("iteration CSV layout") {
  IterationRecord a;
  a.test_metric = 0.75;
  a.ece = 0.125;
  IterationRecord b = a;
  b.iteration = 1;
  b.pos_selected = 4;
  b.neg_selected = 2;
  b.sel_accuracy = 0.5;
  std::ostringstream out;
  const std::vector<IterationRecord> records{a, b};
  write_iteration_csv(out, records);
  CHECK(out.str() ==
        "iteration,pos_selected,neg_selected,sel_accuracy,test_metric,ece\n0,0,0,,0.75,0.125\n1,4,2,0.5,0.75,0.125\n");
}

TEST_CASE("unlabeled prediction dumps carry dataset sample ids") {
  const auto ds = small_moons();
  auto cfg = quick_config();
  cfg.max_iterations = 1;
  const auto result = run_ssl(ds, cfg);
  const auto dump = unlabeled_prediction_dump(result.model, ds, cfg, 0);
  REQUIRE(dump.size() == ds.unlabeled_idx.size());
  for (std::size_t k = 0; k < dump.size(); ++k) {
    CHECK(dump[k].sample_id == ds.unlabeled_idx[k]);
    CHECK(dump[k].uncertainty >= 0.0);
  }
}
