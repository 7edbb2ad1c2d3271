// SPDX-License-Identifier: Apache-2.0
#include "ups/config.hpp"

#include <fstream>
#include <set>

namespace ups {

namespace {

using json = nlohmann::json;

// Reads keys of one object, remembering which were consumed so leftovers can
// be reported.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError("'" + display() + "' must be an object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    used_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError("invalid value for '" + qualified(key) + "'");
    }
  }

  template <typename T, typename Parse>
  void read_enum(const char* key, T& out, Parse parse) {
    std::string text;
    const bool present = j_.contains(key);
    read(key, text);
    if (present) out = parse(text);
  }

  std::optional<Section> child(const char* key) {
    used_.insert(key);
    if (!j_.contains(key)) return std::nullopt;
    return Section(j_.at(key), qualified(key));
  }

  void finish() const {
    for (const auto& [key, value] : j_.items())
      if (!used_.count(key)) throw ConfigError("unknown config key '" + qualified(key) + "'");
  }

 private:
  std::string qualified(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  std::string display() const { return path_.empty() ? "<root>" : path_; }

  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

}  // namespace

RunConfig parse_run_config(const json& j) {
  RunConfig cfg;
  auto& p = cfg.pipeline;
  Section root(j, "");
  std::string output_dir;
  root.read("output_dir", output_dir);
  if (!output_dir.empty()) cfg.output_dir = output_dir;
  root.read("master_seed", p.master_seed);

  if (auto s = root.child("dataset")) {
    std::string path;
    s->read("path", path);
    cfg.dataset_path = path;
    std::string mode;
    s->read("mode", mode);
    if (!mode.empty()) cfg.dataset_mode = parse_label_mode(mode);
    s->finish();
  }
  if (auto s = root.child("model")) {
    s->read("hidden_dims", p.model.hidden_dims);
    s->read("dropout_rate", p.model.dropout_rate);
    s->finish();
  }
  if (auto s = root.child("training")) {
    s->read("epochs_per_iteration", p.training.epochs_per_iteration);
    s->read("batch_size", p.training.batch_size);
    s->read("base_lr", p.training.base_lr);
    s->read("min_lr", p.training.min_lr);
    s->finish();
  }
  if (auto s = root.child("pipeline")) {
    s->read("max_iterations", p.max_iterations);
    s->read("convergence_delta", p.convergence_delta);
    s->read("temperature", p.temperature.T);
    s->read_enum("selection_probs", p.selection_probs, parse_selection_probs);
    s->read("ece_bins", p.ece_bins);
    s->finish();
  }
  if (auto s = root.child("selection")) {
    auto& sel = p.selection;
    s->read_enum("regime", sel.regime, parse_regime);
    s->read("tau_p", sel.tau_p);
    s->read("tau_n", sel.tau_n);
    s->read("kappa_p", sel.kappa_p);
    s->read("kappa_n", sel.kappa_n);
    s->read_enum("gamma_mode", sel.gamma_mode, parse_gamma_mode);
    s->read("gamma", sel.gamma);
    s->read("balance_iters", sel.balance_iters);
    s->read("negative_learning", sel.negative_learning);
    s->read("negatives_with_positive", sel.negatives_with_positive);
    s->finish();
  }
  if (auto s = root.child("estimator")) {
    s->read_enum("kind", p.estimator.estimator, parse_estimator);
    s->read("passes", p.estimator.passes);
    s->read("jitter_sigma", p.estimator.jitter_sigma);
    s->finish();
  }
  root.finish();
  try {
    p.validate();
  } catch (const UsageError& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  }
  return cfg;
}

void apply_overrides(json& j, const std::vector<std::string>& overrides) {
  for (const auto& item : overrides) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + item + "' is not key=value");
    const std::string key = item.substr(0, eq);
    const std::string text = item.substr(eq + 1);
    json value;
    try {
      value = json::parse(text);
    } catch (const json::exception&) {
      value = text;
    }
    json* node = &j;
    std::size_t start = 0;
    for (;;) {
      const auto dot = key.find('.', start);
      const std::string part = key.substr(start, dot - start);
      if (part.empty()) throw ConfigError("override key '" + key + "' is malformed");
      if (dot == std::string::npos) {
        (*node)[part] = value;
        break;
      }
      node = &(*node)[part];
      if (!node->is_object() && !node->is_null())
        throw ConfigError("override key '" + key + "' descends into a non-object");
      start = dot + 1;
    }
  }
}

RunConfig load_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  apply_overrides(j, overrides);
  RunConfig cfg = parse_run_config(j);
  if (cfg.dataset_path.empty()) throw ConfigError("config is missing 'dataset.path'");
  if (cfg.dataset_path.is_relative()) cfg.dataset_path = path.parent_path() / cfg.dataset_path;
  return cfg;
}

nlohmann::ordered_json to_json(const RunConfig& cfg) {
  const auto& p = cfg.pipeline;
  nlohmann::ordered_json j;
  j["dataset"]["path"] = cfg.dataset_path.string();
  if (cfg.dataset_mode) j["dataset"]["mode"] = to_string(*cfg.dataset_mode);
  j["output_dir"] = cfg.output_dir.string();
  j["master_seed"] = p.master_seed;
  j["model"] = {{"hidden_dims", p.model.hidden_dims}, {"dropout_rate", p.model.dropout_rate}};
  j["training"] = {{"epochs_per_iteration", p.training.epochs_per_iteration},
                   {"batch_size", p.training.batch_size},
                   {"base_lr", p.training.base_lr},
                   {"min_lr", p.training.min_lr}};
  j["pipeline"] = {{"max_iterations", p.max_iterations},
                   {"convergence_delta", p.convergence_delta},
                   {"temperature", p.temperature.T},
                   {"selection_probs", to_string(p.selection_probs)},
                   {"ece_bins", p.ece_bins}};
  const auto& s = p.selection;
  j["selection"] = {{"regime", to_string(s.regime)},
                    {"tau_p", s.tau_p},
                    {"tau_n", s.tau_n},
                    {"kappa_p", s.kappa_p},
                    {"kappa_n", s.kappa_n},
                    {"gamma_mode", to_string(s.gamma_mode)},
                    {"gamma", s.gamma},
                    {"balance_iters", s.balance_iters},
                    {"negative_learning", s.negative_learning},
                    {"negatives_with_positive", s.negatives_with_positive}};
  j["estimator"] = {{"kind", to_string(p.estimator.estimator)},
                    {"passes", p.estimator.passes},
                    {"jitter_sigma", p.estimator.jitter_sigma}};
  return j;
}

}  // namespace ups
