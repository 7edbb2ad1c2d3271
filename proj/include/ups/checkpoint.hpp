// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>

#include "ups/model.hpp"

namespace ups {

/// Checkpoint format "ups-lab-checkpoint", version 1: a JSON object with
/// layer_dims, head, activation, dropout_rate, init_seed and per-layer
/// weight (fan_in rows) and bias arrays. Doubles are written in shortest
/// round-trip form, so save/load is bit-exact for finite values.
std::string checkpoint_to_string(const ModelState& model);
ModelState checkpoint_from_string(const std::string& text);

void save_checkpoint(const ModelState& model, const std::filesystem::path& path);
ModelState load_checkpoint(const std::filesystem::path& path);

}  // namespace ups
