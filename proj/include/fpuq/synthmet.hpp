#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "fpuq/domain.hpp"

namespace fpuq {

/// Parameters of the analytic wind generator.
///
/// Winds are a mean zonal flow scaled by (z / z_ref)^shear_exponent plus a sum
/// of n_modes travelling streamfunction harmonics. Each harmonic is exactly
/// divergence-free in (lon, lat) coordinates and bounded by its share of
/// perturbation_amplitude, so max |u|, |v| is known before generation.
struct MetConfig {
    std::uint64_t seed = 7;
    double base_zonal = -6.0;  // m/s; negative is easterly
    double perturbation_amplitude = 6.0;
    std::size_t n_modes = 6;
    double period_h = 96.0;
    double shear_exponent = 0.15;
    double z_ref = 100.0;
    double time_step_h = 6.0;
    double max_wind = 60.0;
    std::vector<double> levels = default_levels();

    /// Seven levels log-spaced from 100 m to 18 km.
    static std::vector<double> default_levels();
    void validate() const;
    /// Upper bound on |u| and |v| implied by the configuration.
    double wind_bound() const;
};

struct TimeRange {
    double start = 0.0;  // hours
    double end = 0.0;
};

/// Gridded winds indexed (time, level, row, col) plus surface statics.
struct MetField {
    GridSpec grid;
    std::vector<double> levels;  // metres, strictly increasing
    std::vector<double> times;   // hours, strictly increasing
    std::vector<double> u;
    std::vector<double> v;
    std::vector<double> terrain;      // metres, per cell
    std::vector<std::uint8_t> land;   // 0/1 per cell
    std::uint64_t config_hash = 0;

    std::size_t offset(std::size_t t, std::size_t l, std::size_t row, std::size_t col) const {
        return ((t * levels.size() + l) * grid.n_lat + row) * grid.n_lon + col;
    }
    void validate() const;
};

struct WindSample {
    double u = 0.0;
    double v = 0.0;
};

struct SurfaceWind {
    double speed = 0.0;
    double direction = 0.0;  // degrees the wind blows FROM, 0 = north, clockwise
    bool calm = false;
};

inline constexpr double kCalmSpeed = 0.1;  // m/s

MetField generate_met(const MetConfig& config, const GridSpec& grid, TimeRange range);

/// Bilinear in space, linear in log-height, linear in time. Height and time are
/// clamped to the stored range; positions outside the domain are rejected.
WindSample wind_at(const MetField& met, double lat, double lon, double height_m, double time_h);

/// Same as wind_at but without the domain check, for callers that already know
/// the position is inside (particle integrator, feature extraction).
WindSample wind_at_unchecked(const MetField& met, double lat, double lon, double height_m,
                             double time_h);

SurfaceWind wind_direction(WindSample w);
SurfaceWind surface_wind(const MetField& met, const Release& release);

void write_met(const std::filesystem::path& path, const MetField& met);
MetField read_met(const std::filesystem::path& path);

}  // namespace fpuq
