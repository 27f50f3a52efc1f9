#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fpuq/domain.hpp"
#include "fpuq/synthmet.hpp"

namespace fpuq {

enum class StaticChannel : std::uint8_t {
    terrain,
    land_mask,
    bearing_sin,
    bearing_cos,
    distance,
    release_indicator,
};

/// Which meteorology and static channels make up the per-cell input.
///
/// Channel order: wind variable (u, v) major, then level, then lag, then the
/// statics in the listed order. The default profile has 2 * 7 * 3 + 5 = 47
/// channels; land_mask is available but off by default.
struct FeatureSpec {
    std::vector<double> levels = MetConfig::default_levels();
    std::vector<double> lags_h = {0.0, -6.0, -12.0};
    std::vector<StaticChannel> statics = {StaticChannel::terrain, StaticChannel::bearing_sin,
                                          StaticChannel::bearing_cos, StaticChannel::distance,
                                          StaticChannel::release_indicator};

    std::size_t wind_channels() const { return 2 * levels.size() * lags_h.size(); }
    std::size_t channels() const { return wind_channels() + statics.size(); }
    std::vector<std::string> channel_names() const;
    /// FNV-1a over the comma-joined channel names; stored in FTR1 and CKP1 headers.
    std::uint64_t channel_hash() const;
    void validate() const;
};

std::string static_channel_name(StaticChannel c);
StaticChannel static_channel_from_name(const std::string& name);

/// Per-cell inputs for one release patch, stored [cell][channel] with cells in
/// patch row-major order.
struct FeatureTensor {
    std::size_t side = kDefaultPatchSide;
    std::size_t channels = 0;
    std::uint64_t channel_hash = 0;
    Release release;
    std::vector<double> values;

    std::size_t cells() const { return side * side; }
    double at(std::size_t cell, std::size_t channel) const { return values[cell * channels + channel]; }
};

FeatureTensor extract_features(const Release& release, const MetField& met, const FeatureSpec& spec,
                               std::size_t side = kDefaultPatchSide);

struct Normalizer {
    std::vector<double> mean;
    std::vector<double> stddev;
    std::vector<std::uint8_t> degenerate;

    std::size_t channels() const { return mean.size(); }
};

inline constexpr double kDegenerateStd = 1e-12;

Normalizer fit_normalizer(const std::vector<const FeatureTensor*>& train);
Normalizer fit_normalizer(const std::vector<FeatureTensor>& train);
FeatureTensor apply_normalizer(const FeatureTensor& x, const Normalizer& norm);
void apply_normalizer_inplace(FeatureTensor& x, const Normalizer& norm);

/// FTR1: "FTR1", u32 version, u32 side, u32 channels, u64 channel hash,
/// u64 config hash, u64 release id, f64 lat, lon, altitude, time, then
/// side*side*channels f32 values, cell-major.
void write_features(const std::filesystem::path& path, const FeatureTensor& x, std::uint64_t config_hash = 0);
FeatureTensor read_features(const std::filesystem::path& path);

}  // namespace fpuq
