#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "rrl/model/dual_network.hpp"

namespace rrl {

struct Checkpoint {
  DualNetworkState state;
  std::int64_t step = 0;
  std::string config_echo;
};

/// Writes <dir>/manifest.json (names, shapes, byte offsets, model config,
/// step, config echo) and <dir>/params.bin (little-endian float64 payload).
/// Both files are written to temporaries and renamed into place.
void save_checkpoint(const std::filesystem::path& dir, const DualNetworkState& state, std::int64_t step,
                     const std::string& config_echo);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

std::string model_config_json(const ModelConfig& config);
ModelConfig model_config_from_json(const std::string& text);

}  // namespace rrl
