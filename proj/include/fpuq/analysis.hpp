#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "fpuq/domain.hpp"
#include "fpuq/synthmet.hpp"

namespace fpuq {

struct MetricReport {
    double nmae = 0.0;
    double mse = 0.0;
    double accuracy = 1.0;
    double iou = 1.0;
    double r2 = 1.0;
    bool r2_defined = true;  // false when truth is constant and the prediction is not

    nlohmann::json to_json() const;
};

/// Cells with value >= active_tau are active.
MetricReport metrics(std::span<const double> pred, std::span<const double> truth, double active_tau);

/// Pools metric sums over many (pred, truth) pairs so the result equals
/// metrics() on the concatenation.
class MetricAccumulator {
public:
    explicit MetricAccumulator(double active_tau) : tau_(active_tau) {}
    void add(std::span<const double> pred, std::span<const double> truth);
    template <typename T>
    void add_values(std::span<const T> pred, std::span<const T> truth);
    MetricReport report() const;
    std::size_t count() const { return n_; }

private:
    double tau_;
    std::size_t n_ = 0;
    double abs_err = 0.0, abs_truth = 0.0, sq_err = 0.0;
    bool have_shift_ = false;
    double shift_ = 0.0, sum_t = 0.0, sum_t2 = 0.0;  // truth moments about shift_
    std::size_t agree = 0, inter = 0, uni = 0;
};

// --- wind rose ---------------------------------------------------------------

inline constexpr std::size_t kRoseSectors = 16;
inline constexpr double kSectorWidth = 22.5;

/// Sector k is centred on k * 22.5 degrees (0 = north) and covers
/// [centre - 11.25, centre + 11.25).
std::size_t wind_sector(double direction_deg);

struct WindRose {
    std::array<std::size_t, kRoseSectors> counts{};
    std::array<double, kRoseSectors> stat_sum{};
    std::size_t calm = 0;
    double calm_stat_sum = 0.0;
    bool has_stat = false;

    std::size_t total() const;
    /// Mean of the attached statistic per sector; NaN for empty sectors.
    double mean_stat(std::size_t sector) const;
};

/// Bins the surface wind at each release into sectors. attach, when non-empty,
/// holds one statistic per release.
WindRose wind_rose(const std::vector<Release>& releases, const MetField& met, std::span<const double> attach = {});

// --- series and aggregates ----------------------------------------------------

struct ScalarMembers {
    std::uint64_t release_id = 0;
    double time = 0.0;
    std::vector<double> members;
};

struct SeriesPoint {
    double time = 0.0;
    std::uint64_t release_id = 0;
    double value = 0.0;
};

/// Per-release CV over members, ordered by (time, release id).
std::vector<SeriesPoint> temporal_cv_series(std::vector<ScalarMembers> records, double eps = 1e-9);

enum class AggStat : std::uint8_t { truth, mean, stddev, cv, error, abs_error };
inline constexpr std::array<AggStat, 6> kAggStats = {AggStat::truth,  AggStat::mean,  AggStat::stddev,
                                                     AggStat::cv,     AggStat::error, AggStat::abs_error};
std::string agg_stat_name(AggStat s);

/// Per-release fields on the common grid. mask marks cells the release
/// contributes to (its patch window inside the domain).
struct ReleaseFields {
    std::vector<double> truth, mean, stddev, cv, error;
    std::vector<std::uint8_t> mask;
};

/// Per-cell arithmetic means over releases. Cells without contributions hold
/// NaN and count 0.
struct SpatialAggregate {
    GridSpec grid;
    std::array<std::vector<double>, kAggStats.size()> values;
    std::vector<std::size_t> count;

    const std::vector<double>& field(AggStat s) const { return values[static_cast<std::size_t>(s)]; }
};

class SpatialAggregator {
public:
    explicit SpatialAggregator(GridSpec grid);
    void add(const ReleaseFields& f);
    SpatialAggregate result() const;

private:
    GridSpec grid_;
    std::array<std::vector<double>, kAggStats.size()> sums_;
    std::vector<std::size_t> count_;
};

SpatialAggregate spatial_aggregate(const std::vector<ReleaseFields>& fields, const GridSpec& grid);

/// Window mask of a release's patch on the grid.
std::vector<std::uint8_t> patch_mask(const GridSpec& grid, const Release& release, std::size_t side);

struct PointValue {
    double lat = 0.0;
    double lon = 0.0;
    double value = 0.0;
};

struct CoarseMap {
    GridSpec grid;
    std::vector<double> value;  // NaN where empty
    std::vector<std::size_t> count;
};

/// Per-cell mean of point values on a coarse grid; points outside are ignored.
CoarseMap scatter_to_grid(const std::vector<PointValue>& points, const GridSpec& coarse);

/// Coarse grid covering the same extent as grid with factor x factor cells merged.
GridSpec coarsen(const GridSpec& grid, std::size_t factor);

struct Correlation {
    double rho = 0.0;
    std::size_t n = 0;
};

/// Average ranks (1-based) with ties sharing the mean of their positions.
std::vector<double> average_ranks(std::span<const double> x);

/// Spearman rank correlation over pairs where both values are finite.
/// Fewer than 10 valid pairs is rejected.
Correlation spread_error_correlation(std::span<const double> spread, std::span<const double> abs_error);

// --- CSV writers ----------------------------------------------------------------

void write_map_csv(const std::filesystem::path& path, const GridSpec& grid, std::span<const double> value,
                   std::span<const std::size_t> count);
void write_rose_csv(const std::filesystem::path& path, const WindRose& rose);
void write_series_csv(const std::filesystem::path& path, const std::vector<SeriesPoint>& series);

/// Shortest round-trip decimal form; NaN as an empty field.
std::string csv_number(double v);

}  // namespace fpuq
