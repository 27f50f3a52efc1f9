#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "fpuq/domain.hpp"

namespace fpuq {

/// Contents of an FPG1 file.
///
/// Layout (all little-endian):
///   0  char[4] "FPG1"
///   4  u32     version (1)
///   8  u32     n_lat
///  12  u32     n_lon
///  16  u8      space (0 linear, 1 log), 7 bytes padding
///  24  f64     lat0, lon0, d_lat, d_lon
///  56  u64     config hash
///  64  u64     release id, then f64 lat, lon, altitude, time   (40 bytes)
/// 104  f64     n_lat * n_lon values, row-major, row 0 southernmost
///
/// Flux fields use the same container with a zeroed release block.
struct GridFile {
    GridSpec grid;
    Release release;
    Space space = Space::linear;
    std::uint64_t config_hash = 0;
    std::vector<double> values;

    static GridFile from_footprint(const Footprint& fp, std::uint64_t config_hash = 0);
    static GridFile from_flux(const FluxField& flux, std::uint64_t config_hash = 0);
    Footprint to_footprint() const;
    FluxField to_flux() const;
};

inline constexpr std::uint32_t kGridFileVersion = 1;
inline constexpr std::size_t kGridFileHeaderBytes = 64;
inline constexpr std::size_t kGridFileReleaseBytes = 40;

void write_grid_file(const std::filesystem::path& path, const GridFile& file);
GridFile read_grid_file(const std::filesystem::path& path);

}  // namespace fpuq
