#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "fpuq/domain.hpp"
#include "fpuq/ensemble.hpp"

namespace fpuq {

/// Footprint-flux inner product over all cells.
double mole_fraction(std::span<const double> footprint, std::span<const double> flux);
double mole_fraction(const Footprint& fp, const FluxField& flux);

/// Hotspot shape parameters for the heterogeneous flux field.
struct FluxConfig {
    std::uint64_t seed = 13;
    std::size_t n_hotspots = 24;
    double background = 1.0;
    double sigma_min_cells = 1.0;   // Gaussian width range, grid cells
    double sigma_max_cells = 4.0;
    double log_amp_mean = 2.3;      // hotspot peak ~ lognormal(mean, sd) above background
    double log_amp_sd = 1.0;

    void validate() const;
};

/// background + sum of Gaussian hotspots with lognormal peak amplitudes.
FluxField synth_bottomup_flux(std::uint64_t seed, const GridSpec& grid, std::size_t n_hotspots, double background,
                              const FluxConfig& shape = {});
FluxField synth_bottomup_flux(const FluxConfig& cfg, const GridSpec& grid);

/// Constant field at the median of the reference's positive cells.
FluxField uniform_flux(const FluxField& reference);

/// Median of the strictly positive values (mean of the two middle values for an even count).
double positive_median(std::span<const double> values);

struct MoleFractionRecord {
    std::uint64_t release_id = 0;
    double time = 0.0;
    double lat = 0.0;
    double lon = 0.0;
    std::string flux_id;
    double truth = 0.0;
    std::vector<double> members;
    ScalarStats stats;
};

struct NamedFlux {
    std::string id;
    FluxField field;
};

/// Per-release output files of an ensemble run.
struct EnsembleIndexEntry {
    Release release;
    std::vector<std::string> members;  // relative to the index directory
    std::string mean, stddev, cv, error;
};

struct EnsembleIndex {
    std::vector<EnsembleIndexEntry> entries;
    std::vector<std::string> checkpoints;
    std::size_t n_members = 0;
    double eps = kDefaultEpsCv;
    CvSpace cv_space = CvSpace::linear;
    std::string split = "test";
    std::filesystem::path base_dir;  // not serialized

    std::filesystem::path resolve(const std::string& rel) const { return base_dir / rel; }
    nlohmann::json to_json() const;
    static EnsembleIndex from_json(const nlohmann::json& j, std::filesystem::path base_dir);
    void save(const std::filesystem::path& path) const;
    static EnsembleIndex load(const std::filesystem::path& path);
};

/// Truth from the LPDM footprints listed in the manifest, members from the
/// ensemble files. One record per (release, flux), releases in time order.
std::vector<MoleFractionRecord> molefrac_dataset(const DatasetManifest& manifest, const EnsembleIndex& ensemble,
                                                 const std::vector<NamedFlux>& fluxes, double eps = kDefaultEpsCv);

/// release_id,time,flux_id,truth,member_0..member_{N-1},mean,std,cv
void write_molefrac_csv(const std::filesystem::path& path, const std::vector<MoleFractionRecord>& records);
std::vector<MoleFractionRecord> read_molefrac_csv(const std::filesystem::path& path);

}  // namespace fpuq
