#pragma once

// Binary checkpoint, little-endian:
//   magic "F2SCKPT\0" | u32 version | u64 json_len | json (model config,
//   partition layout, training state, metadata) | u32 tensor_count |
//   tensor_count x { u32 name_len | name | u32 rank | rank x u64 dim |
//   prod(dims) x f32 }
// Tensors are the model parameters followed by the Adam moments, named
// "adam.m/<param>" and "adam.v/<param>".

#include <filesystem>
#include <memory>

#include "f2s/seqmodel.hpp"
#include "f2s/train.hpp"
#include "json.hpp"

namespace f2s::checkpoint {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::unique_ptr<model::Transformer<float>> model;
  train::TrainState state;
  train::TrainConfig train_config;
  nlohmann::json metadata = nlohmann::json::object();
};

void save(const std::filesystem::path& path, const model::Transformer<float>& model, const train::TrainState& state,
          const train::TrainConfig& train_config, const nlohmann::json& metadata = nlohmann::json::object());

// Throws ConfigError on a version mismatch (both versions in the message) and
// DataError on a malformed file.
Checkpoint load(const std::filesystem::path& path);

}  // namespace f2s::checkpoint
