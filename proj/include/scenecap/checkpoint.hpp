#pragma once

#include <cstdint>
#include <filesystem>

#include "scenecap/model.hpp"

namespace scenecap {

struct CheckpointMeta {
  uint32_t version = 1;
  ModelConfig config;
  uint64_t vocab_hash = 0;
  uint64_t seed = 0;
};

struct Checkpoint {
  ModelParams params;
  CheckpointMeta meta;
};

/// Binary checkpoint: header (version, config, vocabulary hash, seed)
/// followed by the named parameter arrays in declared order as
/// little-endian 32-bit floats.
void save_checkpoint(const std::filesystem::path& path, const ModelParams& params,
                     const CheckpointMeta& meta);

/// Loads and validates every array shape against the stored config.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace scenecap
