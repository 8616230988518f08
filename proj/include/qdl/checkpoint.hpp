#pragma once

// Checkpoint container: one JSON document per file.
//
//   {
//     "format": "qdl-checkpoint", "version": 1,
//     "spec": { "family": "edlstm", "features": 1, ..., "quantiles": ["0x1.999999999999ap-5", ...] },
//     "parameters": [ { "name": "encoder.w_x", "shape": [1, 400], "data": ["0x1.2p-3", ...] }, ... ],
//     "trainer": { ... }            // optional, present in resumable checkpoints
//   }
//
// Every double is written as a C99 hexadecimal float string ("%a"), so a
// save/load round trip is bit-exact.

#include "qdl/models.hpp"
#include "qdl/trainer.hpp"

#include <filesystem>
#include <string>

#include <json.hpp>

namespace qdl {

std::string encode_double(double value);
double decode_double(const std::string &text);

nlohmann::json tensor_to_json(const Tensor &tensor);
Tensor tensor_from_json(const nlohmann::json &j);

nlohmann::json spec_to_json(const ModelSpec &spec);
ModelSpec spec_from_json(const nlohmann::json &j);

nlohmann::json model_to_json(const Model &model);
Model model_from_json(const nlohmann::json &j);

void save_model(const std::filesystem::path &path, const Model &model);
Model load_model(const std::filesystem::path &path);

void save_trainer_state(const std::filesystem::path &path, const TrainerState &state);
TrainerState load_trainer_state(const std::filesystem::path &path);

} // namespace qdl
