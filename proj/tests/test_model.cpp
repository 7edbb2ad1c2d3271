// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include <json.hpp>

#include "test_util.hpp"
#include "ups/checkpoint.hpp"
#include "ups/model.hpp"

using namespace ups;
using ups::testing::check_gradients;
using ups::testing::random_dims;
using ups::testing::random_matrix;
using ups::testing::random_spec;
using losses::LossSpec;
using losses::SampleObjective;

namespace {

ModelState hand_model() {
  // [2, 2, 2]: h = relu(x W1 + b1), logits = h W2 + b2.
  const std::vector<int> dims{2, 2, 2};
  ModelState m = init_model(dims, 0.0, Head::softmax, 0);
  m.layers[0].weight << 1.0, -1.0, 0.5, 2.0;
  m.layers[0].bias << 0.1, 0.2;
  m.layers[1].weight << 2.0, 0.0, 1.0, 1.0;
  m.layers[1].bias << 0.0, 0.5;
  return m;
}

BinaryMatrix one_hot(std::initializer_list<int> classes, int c) {
  BinaryMatrix t = BinaryMatrix::Zero(static_cast<Eigen::Index>(classes.size()), c);
  Eigen::Index i = 0;
  for (int k : classes) t(i++, k) = 1;
  return t;
}

}  // namespace

TEST_CASE("init_model is a pure function of its arguments") {
  const std::vector<int> dims{2, 8, 2};
  const ModelState a = init_model(dims, 0.3, Head::softmax, 7);
  const ModelState b = init_model(dims, 0.3, Head::softmax, 7);
  REQUIRE(a == b);
  for (std::size_t l = 0; l < a.layers.size(); ++l)
    CHECK(std::memcmp(a.layers[l].weight.data(), b.layers[l].weight.data(),
                      sizeof(double) * static_cast<std::size_t>(a.layers[l].weight.size())) == 0);
}

TEST_CASE("init_model rejects degenerate architectures") {
  const std::vector<int> single{2};
  CHECK_THROWS_AS(init_model(single, 0.3, Head::softmax, 1), InvalidArchitecture);
  const std::vector<int> zero_width{2, 0, 2};
  CHECK_THROWS_AS(init_model(zero_width, 0.3, Head::softmax, 1), InvalidArchitecture);
  const std::vector<int> dims{2, 4, 2};
  CHECK_THROWS_AS(init_model(dims, 1.0, Head::softmax, 1), InvalidArchitecture);
  CHECK_THROWS_AS(init_model(dims, -0.1, Head::softmax, 1), InvalidArchitecture);
}

TEST_CASE("different seeds give different weights") {
  const std::vector<int> dims{4, 16, 3};
  CHECK(init_model(dims, 0.3, Head::softmax, 1) != init_model(dims, 0.3, Head::softmax, 2));
}

TEST_CASE("initial weights respect the fan-in bound and biases are zero") {
  const std::vector<int> dims{5, 32, 7, 3};
  const ModelState m = init_model(dims, 0.3, Head::sigmoid, 11);
  m.validate();
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    const double bound = std::sqrt(6.0 / dims[l]);
    CHECK(m.layers[l].weight.rows() == dims[l]);
    CHECK(m.layers[l].weight.cols() == dims[l + 1]);
    CHECK(m.layers[l].weight.cwiseAbs().maxCoeff() <= bound);
    CHECK(m.layers[l].bias.isZero());
  }
  CHECK(m.parameter_count() == 5 * 32 + 32 + 32 * 7 + 7 + 7 * 3 + 3);
}

TEST_CASE("validate catches shapes that do not chain") {
  const std::vector<int> dims{2, 4, 2};
  ModelState m = init_model(dims, 0.3, Head::softmax, 1);
  m.layers[1].weight.resize(3, 2);
  CHECK_THROWS_AS(m.validate(), InvalidArchitecture);
}

TEST_CASE("the head follows the label mode") {
  CHECK(head_for(LabelMode::single_label) == Head::softmax);
  CHECK(head_for(LabelMode::multi_label) == Head::sigmoid);
}

TEST_CASE("softmax of zero logits is uniform") {
  const ProbMatrix p = apply_head(Matrix::Zero(3, 4), Head::softmax, 1.0);
  for (Eigen::Index i = 0; i < p.size(); ++i) CHECK(p.data()[i] == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("a huge temperature flattens the softmax") {
  Rng rng(5);
  const ProbMatrix p = apply_head(random_matrix(rng, 10, 3, 5.0), Head::softmax, 1e6);
  for (Eigen::Index i = 0; i < p.size(); ++i) CHECK(std::abs(p.data()[i] - 1.0 / 3.0) < 1e-4);
}

TEST_CASE("T = 1 leaves logits unchanged") {
  Rng rng(6);
  const Matrix z = random_matrix(rng, 4, 3);
  const ProbMatrix p = apply_head(z, Head::softmax, 1.0);
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double denom = z.row(i).array().exp().sum();
    for (Eigen::Index c = 0; c < z.cols(); ++c)
      CHECK(p(i, c) == doctest::Approx(std::exp(z(i, c)) / denom).epsilon(1e-14));
  }
}

TEST_CASE("hand-evaluated forward pass") {
  Matrix x(1, 2);
  x << 1.0, 0.0;
  // h = relu([1.1, -0.8]) = [1.1, 0]; logits = [2.2, 0.5]; p0 = 1 / (1 + e^-1.7).
  const ModelState m = hand_model();
  const Matrix z = forward_logits(m, x, ForwardMode::deterministic());
  CHECK(z(0, 0) == doctest::Approx(2.2).epsilon(1e-15));
  CHECK(z(0, 1) == doctest::Approx(0.5).epsilon(1e-15));
  const ProbMatrix p = forward(m, x, ForwardMode::deterministic());
  CHECK(p(0, 0) == doctest::Approx(0.8455347349164652).epsilon(1e-14));
  CHECK(p(0, 1) == doctest::Approx(0.15446526508353475).epsilon(1e-13));
  // Sigmoid head on the same logits.
  ModelState s = m;
  s.head = Head::sigmoid;
  const ProbMatrix q = forward(s, x, ForwardMode::deterministic(), TemperatureConfig{2.0});
  CHECK(q(0, 0) == doctest::Approx(1.0 / (1.0 + std::exp(-1.1))).epsilon(1e-14));
  CHECK(q(0, 1) == doctest::Approx(1.0 / (1.0 + std::exp(-0.25))).epsilon(1e-14));
}

TEST_CASE("forward rejects inputs of the wrong width") {
  const ModelState m = hand_model();
  CHECK_THROWS_AS(forward(m, Matrix::Zero(2, 3), ForwardMode::deterministic()), ShapeError);
}

TEST_CASE("softmax rows are stochastic") {
  Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const auto dims = random_dims(rng, static_cast<int>(2 + rng.index(8)));
    const ModelState m = init_model(dims, 0.3, Head::softmax, rng.next());
    const Matrix x = random_matrix(rng, 16, dims.front(), 3.0);
    const double T = 0.5 + 3.0 * rng.uniform();
    for (auto mode : {ForwardMode::deterministic(), ForwardMode::stochastic(rng.next())}) {
      const ProbMatrix p = forward(m, x, mode, TemperatureConfig{T});
      for (Eigen::Index i = 0; i < p.rows(); ++i) {
        CHECK(std::abs(p.row(i).sum() - 1.0) <= 1e-9);
        CHECK(p.row(i).minCoeff() > 0.0);
        CHECK(p.row(i).maxCoeff() < 1.0);
      }
    }
  }
}

TEST_CASE("sigmoid outputs lie strictly inside (0, 1)") {
  Rng rng(9);
  const std::vector<int> dims{3, 8, 4};
  const ModelState m = init_model(dims, 0.3, Head::sigmoid, 3);
  const ProbMatrix p = forward(m, random_matrix(rng, 20, 3), ForwardMode::stochastic(4));
  CHECK(p.minCoeff() > 0.0);
  CHECK(p.maxCoeff() < 1.0);
}

TEST_CASE("stochastic passes are reproducible and seed dependent") {
  Rng rng(10);
  const std::vector<int> dims{3, 16, 16, 3};
  const ModelState m = init_model(dims, 0.3, Head::softmax, 12);
  const Matrix x = random_matrix(rng, 8, 3);
  int differing = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::uint64_t seed = rng.next();
    const ProbMatrix a = forward(m, x, ForwardMode::stochastic(seed));
    const ProbMatrix b = forward(m, x, ForwardMode::stochastic(seed));
    CHECK(std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0);
    const ProbMatrix c = forward(m, x, ForwardMode::stochastic(seed + 1));
    differing += (a != c);
  }
  CHECK(differing == 100);
}

TEST_CASE("a stochastic pass does not depend on how rows are batched") {
  Rng rng(13);
  const std::vector<int> dims{2, 8, 2};
  const ModelState m = init_model(dims, 0.3, Head::softmax, 2);
  const Matrix x = random_matrix(rng, 6, 2);
  const ProbMatrix all = forward(m, x, ForwardMode::stochastic(99));
  const ProbMatrix top = forward(m, x.topRows(3), ForwardMode::stochastic(99));
  CHECK(all.topRows(3) == top);
}

TEST_CASE("without dropout, stochastic and deterministic passes agree") {
  Rng rng(14);
  const std::vector<int> dims{2, 8, 8, 3};
  const ModelState m = init_model(dims, 0.0, Head::softmax, 2);
  const Matrix x = random_matrix(rng, 6, 2);
  CHECK(forward(m, x, ForwardMode::stochastic(5)) == forward(m, x, ForwardMode::deterministic()));
}

TEST_CASE("dropout keep rate matches 1 - rate") {
  std::size_t kept = 0;
  const std::size_t n = 200000;
  for (std::size_t u = 0; u < n; ++u) kept += dropout_keeps(17, 0, static_cast<Eigen::Index>(u / 64),
                                                            static_cast<Eigen::Index>(u % 64), 0.3);
  const double rate = static_cast<double>(kept) / static_cast<double>(n);
  CHECK(std::abs(rate - 0.7) < 4.0 * std::sqrt(0.21 / static_cast<double>(n)));
}

TEST_CASE("inverted dropout preserves expected logits") {
  // With one hidden layer the logits are linear in the dropout mask, so the
  // deterministic logits equal the expectation over masks.
  Rng rng(15);
  const std::vector<int> dims{2, 32, 3};
  ModelState m = init_model(dims, 0.3, Head::softmax, 21);
  for (auto& b : m.layers[0].bias) b = 0.3;
  const Matrix x = random_matrix(rng, 1, 2);
  const Matrix det = forward_logits(m, x, ForwardMode::deterministic());
  const int passes = 1000;
  Matrix sum = Matrix::Zero(1, 3), sum_sq = Matrix::Zero(1, 3);
  for (int k = 0; k < passes; ++k) {
    const Matrix z = forward_logits(m, x, ForwardMode::stochastic(derive_seed({77, static_cast<std::uint64_t>(k)})));
    sum += z;
    sum_sq += z.cwiseProduct(z);
  }
  for (Eigen::Index c = 0; c < 3; ++c) {
    const double mean = sum(0, c) / passes;
    const double var = (sum_sq(0, c) - passes * mean * mean) / (passes - 1);
    const double se = std::sqrt(var / passes);
    CHECK(std::abs(mean - det(0, c)) <= 3.0 * se);
  }
}

TEST_CASE("a higher temperature never sharpens the softmax") {
  Rng rng(16);
  for (int trial = 0; trial < 500; ++trial) {
    const Matrix z = random_matrix(rng, 1, 2 + static_cast<Eigen::Index>(rng.index(6)), 4.0);
    const double t1 = 1.0 + 4.0 * rng.uniform();
    const double t2 = t1 + 0.01 + 4.0 * rng.uniform();
    CHECK(apply_head(z, Head::softmax, t2).maxCoeff() <= apply_head(z, Head::softmax, t1).maxCoeff());
  }
}

TEST_CASE("analytic gradients match finite differences") {
  Rng rng(17);
  const SampleObjective objectives[] = {SampleObjective::positive, SampleObjective::negative,
                                        SampleObjective::masked_bce};
  for (SampleObjective objective : objectives) {
    for (int trial = 0; trial < 6; ++trial) {
      CAPTURE(static_cast<int>(objective));
      CAPTURE(trial);
      const int classes = static_cast<int>(2 + rng.index(4));
      const auto dims = random_dims(rng, classes);
      const Head head = objective == SampleObjective::masked_bce ? Head::sigmoid : Head::softmax;
      const ModelState m = init_model(dims, 0.2, head, rng.next());
      const Matrix x = random_matrix(rng, 5, dims.front());
      const LossSpec spec = random_spec(rng, objective, 5, classes);
      const ForwardMode mode = trial % 2 ? ForwardMode::stochastic(rng.next()) : ForwardMode::deterministic();
      const auto check = check_gradients(m, x, spec, mode, TemperatureConfig{trial < 3 ? 1.0 : 2.0});
      CHECK(check.worst_relative_error < 1e-3);
      CHECK(check.parameters == m.parameter_count());
    }
  }
}

TEST_CASE("a perfectly classified batch has a vanishing gradient") {
  const std::vector<int> dims{2, 2};
  ModelState m = init_model(dims, 0.0, Head::softmax, 1);
  m.layers[0].weight << 100.0, -100.0, -100.0, 100.0;
  Matrix x(2, 2);
  x << 1.0, 0.0, 0.0, 1.0;
  const LossSpec spec = LossSpec::uniform(SampleObjective::positive, one_hot({0, 1}, 2),
                                          BinaryMatrix::Ones(2, 2));
  const auto lg = loss_and_gradients(m, x, spec, ForwardMode::deterministic());
  CHECK(lg.loss <= 1e-6);
  CHECK(std::sqrt(lg.grads.squared_norm()) < 1e-6);
}

TEST_CASE("the batch gradient is the mean of per-sample gradients") {
  Rng rng(18);
  const std::vector<int> dims{3, 6, 3};
  const ModelState m = init_model(dims, 0.3, Head::softmax, 4);
  const Matrix x = random_matrix(rng, 4, 3);
  const LossSpec spec = random_spec(rng, SampleObjective::positive, 4, 3);
  const ForwardMode mode = ForwardMode::deterministic();
  // Appending a copy of sample 0 gives (4 g_batch + g_0) / 5.
  Matrix x5(5, 3);
  x5 << x, x.row(0);
  const std::vector<std::size_t> rows{0, 1, 2, 3, 0};
  const std::vector<std::size_t> first{0};
  const Gradients g4 = backward(m, x, spec, mode);
  const Gradients g5 = backward(m, x5, spec.subset(rows), mode);
  const Gradients g0 = backward(m, x.topRows(1), spec.subset(first), mode);
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    const Matrix expect = (4.0 * g4.layers[l].weight + g0.layers[l].weight) / 5.0;
    CHECK((g5.layers[l].weight - expect).cwiseAbs().maxCoeff() < 1e-14);
    const RowVector expect_b = (4.0 * g4.layers[l].bias + g0.layers[l].bias) / 5.0;
    CHECK((g5.layers[l].bias - expect_b).cwiseAbs().maxCoeff() < 1e-14);
  }
}

TEST_CASE("a batch with no contributing sample is an error") {
  const ModelState m = hand_model();
  const LossSpec spec = LossSpec::uniform(SampleObjective::negative, one_hot({0}, 2), BinaryMatrix::Zero(1, 2));
  CHECK_THROWS_AS(backward(m, Matrix::Zero(1, 2), spec, ForwardMode::deterministic()), EmptyBatch);
}

TEST_CASE("cosine learning-rate schedule") {
  OptimizerState opt;
  opt.total_steps = 100;
  CHECK(cosine_learning_rate(opt, 0) == doctest::Approx(0.03).epsilon(1e-15));
  CHECK(cosine_learning_rate(opt, 50) == doctest::Approx(0.015).epsilon(1e-14));
  CHECK(std::abs(cosine_learning_rate(opt, 100)) < 1e-17);
  opt.min_lr = 0.001;
  CHECK(cosine_learning_rate(opt, 100) == doctest::Approx(0.001).epsilon(1e-14));
  for (int t = 1; t <= 100; ++t) CHECK(cosine_learning_rate(opt, t) <= cosine_learning_rate(opt, t - 1));
}

TEST_CASE("optimizer state validation") {
  OptimizerState opt;
  opt.total_steps = 10;
  opt.min_lr = 0.1;
  CHECK_THROWS_AS(opt.validate(), InvalidParameter);
  opt.min_lr = 0.0;
  opt.current_step = 11;
  CHECK_THROWS_AS(opt.validate(), InvalidParameter);
  opt.current_step = 0;
  opt.total_steps = 0;
  CHECK_THROWS_AS(opt.validate(), InvalidParameter);
}

TEST_CASE("sgd_step applies the scheduled rate and stops at the end") {
  ModelState m = hand_model();
  const ModelState before = m;
  Gradients g;
  for (const auto& layer : m.layers)
    g.layers.push_back({Matrix::Ones(layer.weight.rows(), layer.weight.cols()),
                        RowVector::Ones(layer.bias.size())});
  OptimizerState opt;
  opt.total_steps = 2;
  sgd_step(m, g, opt);
  CHECK(opt.current_step == 1);
  CHECK(m.layers[0].weight(0, 0) == doctest::Approx(before.layers[0].weight(0, 0) - 0.03));
  sgd_step(m, g, opt);
  CHECK(m.layers[0].weight(0, 0) == doctest::Approx(before.layers[0].weight(0, 0) - 0.045));
  CHECK_THROWS_AS(sgd_step(m, g, opt), ScheduleExhausted);
}

TEST_CASE("training reduces the loss on a separable problem") {
  Rng rng(19);
  const std::vector<int> dims{2, 16, 2};
  ModelState m = init_model(dims, 0.0, Head::softmax, 3);
  Matrix x = random_matrix(rng, 40, 2);
  BinaryMatrix t = BinaryMatrix::Zero(40, 2);
  for (Eigen::Index i = 0; i < 40; ++i) t(i, x(i, 0) > 0 ? 1 : 0) = 1;
  const LossSpec spec = LossSpec::uniform(SampleObjective::positive, t, BinaryMatrix::Ones(40, 2));
  const double start = evaluate_loss(m, x, spec, ForwardMode::deterministic());
  OptimizerState opt;
  opt.base_lr = 0.5;
  opt.total_steps = 300;
  while (opt.current_step < opt.total_steps)
    sgd_step(m, backward(m, x, spec, ForwardMode::deterministic()), opt);
  CHECK(evaluate_loss(m, x, spec, ForwardMode::deterministic()) < 0.25 * start);
}

TEST_CASE("checkpoints round-trip bit-exactly") {
  Rng rng(20);
  const std::vector<int> dims{3, 7, 5, 4};
  ModelState m = init_model(dims, 0.3, Head::sigmoid, 99);
  m.layers[1].bias = RowVector::Random(5) * 1e-300;
  m.layers[2].weight(0, 0) = 0.1 + 0.2;
  const ModelState back = checkpoint_from_string(checkpoint_to_string(m));
  CHECK(back == m);
  CHECK(checkpoint_to_string(back) == checkpoint_to_string(m));

  const auto dir = ups::testing::scratch_dir("checkpoint");
  save_checkpoint(m, dir / "model.json");
  CHECK(load_checkpoint(dir / "model.json") == m);
}

TEST_CASE("malformed checkpoints are rejected") {
  CHECK_THROWS_AS(checkpoint_from_string("not json"), ParseError);
  CHECK_THROWS_AS(checkpoint_from_string("{}"), SchemaError);
  const std::vector<int> dims{2, 3, 2};
  const auto good = nlohmann::json::parse(checkpoint_to_string(init_model(dims, 0.3, Head::softmax, 1)));
  auto wrong_format = good;
  wrong_format["format"] = "something-else";
  CHECK_THROWS_AS(checkpoint_from_string(wrong_format.dump()), SchemaError);
  auto wrong_dims = good;
  wrong_dims["layer_dims"] = {2, 4, 2};
  CHECK_THROWS_AS(checkpoint_from_string(wrong_dims.dump()), SchemaError);
  auto ragged = good;
  ragged["layers"][0]["weight"][1] = {1.0};
  CHECK_THROWS_AS(checkpoint_from_string(ragged.dump()), SchemaError);
}
