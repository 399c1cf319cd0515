#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "prflow/data.hpp"
#include "prflow/training.hpp"

namespace prflow {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Everything needed to resume training bit-for-bit.
struct Checkpoint {
  TrainConfig config;
  ModelOptions model;
  MaskSpec mask;
  TrainState state;
};

/// Binary layout: "PRFLOWCK", u32 version, then tagged sections
/// (4-byte tag, u64 payload length, payload). Integers and reals are
/// little-endian; reals are IEEE-754 binary64.
std::string encode_checkpoint(const Checkpoint& checkpoint);
Checkpoint decode_checkpoint(std::string_view bytes);

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// JSON text for the configuration section; also used by the CLI.
std::string config_to_json(const TrainConfig& config, const ModelOptions& model,
                           const MaskSpec& mask);

}  // namespace prflow
