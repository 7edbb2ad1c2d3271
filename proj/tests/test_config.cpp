// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <fstream>
#include <string>

#include "test_util.hpp"
#include "ups/config.hpp"

using namespace ups;
using json = nlohmann::json;

namespace {

std::string config_error(const json& j) {
  try {
    parse_run_config(j);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "no error";
}

}  // namespace

TEST_CASE("defaults") {
  const auto cfg = parse_run_config(json::object());
  const auto& p = cfg.pipeline;
  CHECK(p.selection.tau_p == 0.7);
  CHECK(p.selection.tau_n == 0.05);
  CHECK(p.selection.kappa_p == 0.05);
  CHECK(p.selection.kappa_n == 0.005);
  CHECK(p.selection.balance_iters == 10);
  CHECK(p.selection.regime == Regime::ups);
  CHECK(p.selection.negative_learning);
  CHECK(p.model.dropout_rate == 0.3);
  CHECK(p.training.base_lr == 0.03);
  CHECK(p.temperature.T == 2.0);
  CHECK(p.estimator.passes == 10);
  CHECK(p.estimator.estimator == EstimatorKind::mc_dropout);
  CHECK(p.ece_bins == 15);
  CHECK_FALSE(cfg.dataset_mode.has_value());
}

TEST_CASE("unknown keys are rejected with their dotted path") {
  CHECK(config_error({{"selection", {{"tau_q", 0.5}}}}) == "unknown config key 'selection.tau_q'");
  CHECK(config_error({{"extra", 1}}) == "unknown config key 'extra'");
  CHECK(config_error({{"model", 3}}) == "'model' must be an object");
  CHECK(config_error({{"training", {{"batch_size", "many"}}}}) ==
        "invalid value for 'training.batch_size'");
  CHECK(config_error({{"selection", {{"regime", "greedy"}}}}) != "no error");
  CHECK(config_error({{"selection", {{"tau_p", 1.5}}}}).find("invalid config") == 0);
}

TEST_CASE("values are read from every section") {
  const json j = {
      {"dataset", {{"path", "/data/x.csv"}, {"mode", "multi_label"}}},
      {"output_dir", "runs/a"},
      {"master_seed", 77},
      {"model", {{"hidden_dims", {16}}, {"dropout_rate", 0.2}}},
      {"training", {{"epochs_per_iteration", 5}, {"batch_size", 8}, {"base_lr", 0.1}, {"min_lr", 0.01}}},
      {"pipeline",
       {{"max_iterations", 4}, {"convergence_delta", 0.05}, {"temperature", 1.0}, {"selection_probs", "deterministic"}, {"ece_bins", 10}}},
      {"selection",
       {{"regime", "confidence"}, {"tau_p", 0.5}, {"gamma_mode", "fixed"}, {"gamma", 0.4}, {"balance_iters", 0}, {"negative_learning", false}}},
      {"estimator", {{"kind", "input_jitter"}, {"passes", 4}, {"jitter_sigma", 0.2}}},
  };
  const auto cfg = parse_run_config(j);
  const auto& p = cfg.pipeline;
  CHECK(cfg.dataset_path == "/data/x.csv");
  CHECK(cfg.dataset_mode == LabelMode::multi_label);
  CHECK(cfg.output_dir == "runs/a");
  CHECK(p.master_seed == 77);
  CHECK(p.model.hidden_dims == std::vector<int>{16});
  CHECK(p.training.min_lr == 0.01);
  CHECK(p.max_iterations == 4);
  CHECK(p.selection_probs == SelectionProbs::deterministic);
  CHECK(p.selection.regime == Regime::confidence);
  CHECK(p.selection.gamma_mode == GammaMode::fixed);
  CHECK_FALSE(p.selection.negative_learning);
  CHECK(p.estimator.estimator == EstimatorKind::input_jitter);
  CHECK(p.estimator.jitter_sigma == 0.2);

  // The resolved document parses back to the same settings.
  const auto again = parse_run_config(json::parse(to_json(cfg).dump()));
  CHECK(to_json(again) == to_json(cfg));
}

TEST_CASE("overrides") {
  json j = {{"selection", {{"tau_p", 0.7}}}};
  apply_overrides(j, {"selection.tau_p=0.9", "selection.regime=vanilla", "model.hidden_dims=[4,4]"});
  const auto cfg = parse_run_config(j);
  CHECK(cfg.pipeline.selection.tau_p == 0.9);
  CHECK(cfg.pipeline.selection.regime == Regime::vanilla);
  CHECK(cfg.pipeline.model.hidden_dims == std::vector<int>{4, 4});
  CHECK_THROWS_AS(apply_overrides(j, {"novalue"}), ConfigError);
  CHECK_THROWS_AS(apply_overrides(j, {"selection..tau=1"}), ConfigError);
  CHECK_THROWS_AS(apply_overrides(j, {"selection.tau_p.x=1"}), ConfigError);
}

TEST_CASE("config files resolve dataset paths next to themselves") {
  const auto dir = ups::testing::scratch_dir("config");
  std::filesystem::create_directories(dir / "sub");
  std::ofstream(dir / "sub" / "run.json") << R"({"dataset": {"path": "moons.csv"}, "master_seed": 3})";
  const auto cfg = load_run_config(dir / "sub" / "run.json", {"master_seed=4"});
  CHECK(cfg.dataset_path == dir / "sub" / "moons.csv");
  CHECK(cfg.pipeline.master_seed == 4);

  std::ofstream(dir / "abs.json") << R"({"dataset": {"path": "/abs/moons.csv"}})";
  CHECK(load_run_config(dir / "abs.json").dataset_path == "/abs/moons.csv");

  std::ofstream(dir / "nopath.json") << "{}";
  CHECK_THROWS_AS(load_run_config(dir / "nopath.json"), ConfigError);
  std::ofstream(dir / "broken.json") << "{";
  CHECK_THROWS_AS(load_run_config(dir / "broken.json"), ConfigError);
  CHECK_THROWS_AS(load_run_config(dir / "missing.json"), ConfigError);
}
