// SPDX-License-Identifier: Apache-2.0
#include "ups/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace ups {

namespace {
constexpr const char* kFormat = "ups-lab-checkpoint";
constexpr int kVersion = 1;
}  // namespace

std::string checkpoint_to_string(const ModelState& model) {
  model.validate();
  nlohmann::ordered_json j;
  j["format"] = kFormat;
  j["version"] = kVersion;
  j["layer_dims"] = model.layer_dims;
  j["head"] = to_string(model.head);
  j["activation"] = "relu";
  j["dropout_rate"] = model.dropout_rate;
  j["init_seed"] = model.init_seed;
  auto& layers = j["layers"] = nlohmann::ordered_json::array();
  for (const auto& layer : model.layers) {
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      std::vector<double> row(layer.weight.row(r).begin(), layer.weight.row(r).end());
      rows.push_back(row);
    }
    std::vector<double> bias(layer.bias.begin(), layer.bias.end());
    layers.push_back({{"weight", rows}, {"bias", bias}});
  }
  return j.dump(1) + "\n";
}

ModelState checkpoint_from_string(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint is not valid JSON: ") + e.what());
  }
  try {
    if (j.at("format").get<std::string>() != kFormat || j.at("version").get<int>() != kVersion)
      throw SchemaError("unsupported checkpoint format or version");
    if (j.at("activation").get<std::string>() != "relu")
      throw SchemaError("unsupported activation in checkpoint");
    ModelState model;
    model.layer_dims = j.at("layer_dims").get<std::vector<int>>();
    model.head = parse_head(j.at("head").get<std::string>());
    model.dropout_rate = j.at("dropout_rate").get<double>();
    model.init_seed = j.at("init_seed").get<std::uint64_t>();
    for (const auto& jl : j.at("layers")) {
      const auto rows = jl.at("weight").get<std::vector<std::vector<double>>>();
      const auto bias = jl.at("bias").get<std::vector<double>>();
      DenseLayer layer;
      const auto fan_out = static_cast<Eigen::Index>(bias.size());
      layer.weight.resize(static_cast<Eigen::Index>(rows.size()), fan_out);
      for (std::size_t r = 0; r < rows.size(); ++r) {
        if (static_cast<Eigen::Index>(rows[r].size()) != fan_out)
          throw SchemaError("ragged weight matrix in checkpoint");
        for (std::size_t c = 0; c < rows[r].size(); ++c)
          layer.weight(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
      }
      layer.bias = Eigen::Map<const RowVector>(bias.data(), fan_out);
      model.layers.push_back(std::move(layer));
    }
    model.validate();
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("malformed checkpoint: ") + e.what());
  } catch (const UsageError& e) {
    throw SchemaError(std::string("inconsistent checkpoint: ") + e.what());
  }
}

void save_checkpoint(const ModelState& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out << checkpoint_to_string(model);
}

ModelState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read checkpoint " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return checkpoint_from_string(buffer.str());
}

}  // namespace ups
