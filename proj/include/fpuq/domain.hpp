#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace fpuq {

inline constexpr double kDefaultEpsLog = 1e-9;
inline constexpr std::size_t kDefaultPatchSide = 50;

struct CellIndex {
    std::ptrdiff_t row = 0;
    std::ptrdiff_t col = 0;
    bool operator==(const CellIndex&) const = default;
};

/// Regular latitude/longitude grid. (lat0, lon0) is the centre of cell (0, 0);
/// row 0 is the southernmost row.
struct GridSpec {
    std::size_t n_lat = 64;
    std::size_t n_lon = 64;
    double lat0 = -20.0;
    double lon0 = -60.0;
    double d_lat = 0.3;
    double d_lon = 0.3;

    void validate() const;
    std::size_t size() const { return n_lat * n_lon; }
    std::size_t index(std::size_t row, std::size_t col) const { return row * n_lon + col; }
    double lat_of(double row) const { return lat0 + row * d_lat; }
    double lon_of(double col) const { return lon0 + col * d_lon; }
    /// Fractional row/column of a coordinate (cell centres at integers).
    double row_of(double lat) const { return (lat - lat0) / d_lat; }
    double col_of(double lon) const { return (lon - lon0) / d_lon; }
    bool contains(double lat, double lon) const;
    bool contains(CellIndex c) const {
        return c.row >= 0 && c.col >= 0 && static_cast<std::size_t>(c.row) < n_lat &&
               static_cast<std::size_t>(c.col) < n_lon;
    }
    /// Cell holding (lat, lon); nullopt outside the domain.
    std::optional<CellIndex> cell_of(double lat, double lon) const;

    bool operator==(const GridSpec&) const = default;
};

/// A sounding location and time from which particles are released backwards.
struct Release {
    std::uint64_t id = 0;
    double lat = 0.0;
    double lon = 0.0;
    double altitude = 0.0;  // metres
    double time = 0.0;      // hours since epoch start

    bool operator==(const Release&) const = default;
};

enum class Space : std::uint8_t { linear = 0, log = 1 };

/// Surface-sensitivity grid of one release. Content is validated against the
/// space flag on construction: linear values are finite and >= 0, log values finite.
class Footprint {
public:
    Footprint(GridSpec grid, Release release, std::vector<double> values, Space space);

    const GridSpec& grid() const { return grid_; }
    const Release& release() const { return release_; }
    const std::vector<double>& values() const { return values_; }
    Space space() const { return space_; }
    double at(std::size_t row, std::size_t col) const { return values_[grid_.index(row, col)]; }
    double sum() const;

private:
    GridSpec grid_;
    Release release_;
    std::vector<double> values_;
    Space space_;
};

/// side x side window of a parent grid centred on a release cell. The release
/// cell sits at patch index (side/2, side/2). Row a of the patch is parent row
/// row0 + a; cells outside the parent are zero with in_domain = 0.
struct Patch {
    std::size_t side = kDefaultPatchSide;
    std::ptrdiff_t row0 = 0;
    std::ptrdiff_t col0 = 0;
    std::vector<double> values;
    std::vector<std::uint8_t> in_domain;

    std::size_t cells() const { return side * side; }
    std::size_t zero_filled() const;
};

struct FluxField {
    GridSpec grid;
    std::vector<double> values;

    void validate() const;
};

Footprint log_transform(const Footprint& fp, double eps_log = kDefaultEpsLog);
Footprint inverse_log_transform(const Footprint& fp, double eps_log = kDefaultEpsLog);

/// Elementwise forms used on patches and pooled values.
double to_log(double s, double eps_log);
double from_log(double t, double eps_log);

CellIndex release_cell(const GridSpec& grid, const Release& release);

Patch crop_patch(const GridSpec& grid, std::span<const double> field, const Release& release,
                 std::size_t side = kDefaultPatchSide);
Patch crop_patch(const Footprint& fp, std::size_t side = kDefaultPatchSide);

/// Inverse of crop_patch on the window; zero everywhere else.
std::vector<double> embed_patch(const Patch& patch, const GridSpec& grid);

// --- dataset manifest -------------------------------------------------------

struct ManifestEntry {
    Release release;
    std::string footprint;  // relative to the manifest directory
    std::string features;
};

/// Time-ordered train/validation/test splits. Paths are stored relative to the
/// manifest file so a run directory can be moved or compared byte-for-byte.
struct DatasetManifest {
    std::vector<ManifestEntry> train;
    std::vector<ManifestEntry> validation;
    std::vector<ManifestEntry> test;
    double train_end = 0.0;       // all train times < train_end <= all validation times
    double validation_end = 0.0;  // all validation times < validation_end <= all test times
    std::filesystem::path base_dir;  // not serialized

    void validate() const;
    std::size_t size() const { return train.size() + validation.size() + test.size(); }
    std::filesystem::path resolve(const std::string& rel) const { return base_dir / rel; }

    nlohmann::json to_json() const;
    static DatasetManifest from_json(const nlohmann::json& j, std::filesystem::path base_dir);
    void save(const std::filesystem::path& path) const;
    static DatasetManifest load(const std::filesystem::path& path);
};

nlohmann::json release_to_json(const Release& r);
Release release_from_json(const nlohmann::json& j);
nlohmann::json grid_to_json(const GridSpec& g);

}  // namespace fpuq
