#pragma once

#include <filesystem>

#include "memmamba/model.hpp"

namespace memmamba::checkpoint {

/// On-disk layout: <dir>/manifest.json (config + ordered tensor names) and
/// <dir>/tensors/<name>.mmt, one binary container per parameter.
void save(const std::filesystem::path& dir, const model::ModelConfig& cfg,
          const model::Weights& w);

struct Checkpoint {
  model::ModelConfig config;
  model::Weights weights;
};

Checkpoint load(const std::filesystem::path& dir);

}  // namespace memmamba::checkpoint
