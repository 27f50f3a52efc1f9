#pragma once

#include <cstdint>
#include <filesystem>

#include "fpuq/features.hpp"
#include "fpuq/gnn.hpp"

namespace fpuq {

/// A trained emulator with everything needed to run it on raw features.
///
/// CKP1 layout (little-endian):
///   char[4] "CKP1", u32 version
///   u32 in_channels, u32 latent, u32 rounds, u8 activation, 3 bytes padding
///   u32 patch side, f64 mesh spacing
///   u64 seed, u64 feature (channel) hash, u64 config hash
///   u32 tensor count, then per tensor u32 rows, u32 cols
///   normalizer: C f64 means, C f64 stddevs, C u8 degenerate flags
///   tensors in storage order, each row-major f32
struct Checkpoint {
    ModelParams<float> params;
    std::uint64_t feature_hash = 0;
    std::uint64_t config_hash = 0;
    Normalizer normalizer;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace fpuq
