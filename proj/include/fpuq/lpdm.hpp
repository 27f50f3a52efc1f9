#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <vector>

#include "fpuq/domain.hpp"
#include "fpuq/features.hpp"
#include "fpuq/synthmet.hpp"

namespace fpuq {

inline constexpr double kMetresPerDegreeLat = 111320.0;

struct SimConfig {
    std::size_t n_particles = 2000;
    double dt = 600.0;       // s
    double t_back_h = 72.0;  // h of backward integration
    double k_h = 5000.0;     // horizontal diffusivity, m^2/s
    double sigma_w = 10.0;   // vertical random-walk scale, step std = sigma_w * sqrt(dt)
    double h_surf = 100.0;   // surface-contact depth, m
    double h_top = 2000.0;   // reflecting lid, m
    std::uint64_t seed = 11;

    void validate() const;
    std::size_t n_steps() const;
};

struct ParticleState {
    double lat = 0.0;
    double lon = 0.0;
    double z = 0.0;
    bool alive = true;
};

/// Per-particle random stream. Seeded from (release seed, particle index) so
/// particles can be simulated in any order or partition.
struct ParticleRng {
    explicit ParticleRng(std::uint64_t seed) : engine(seed) {}
    double gauss() { return normal(engine); }

    std::mt19937_64 engine;
    std::normal_distribution<double> normal{0.0, 1.0};
};

/// One backward step of length cfg.dt starting at time t_h. Consumes exactly
/// three normal draws for a live particle regardless of configuration.
ParticleState step_particle(ParticleState p, const MetField& met, double t_h, const SimConfig& cfg,
                            ParticleRng& rng);

std::uint64_t release_seed(const SimConfig& cfg, const Release& release);

Footprint simulate_footprint(const Release& release, const MetField& met, const SimConfig& cfg);

struct SplitCounts {
    std::size_t train = 600;
    std::size_t validation = 150;
    std::size_t test = 250;
    std::size_t total() const { return train + validation + test; }
};

struct DatasetOptions {
    std::filesystem::path out_dir;
    SplitCounts splits;
    FeatureSpec features;
    std::size_t patch_side = kDefaultPatchSide;
    std::uint64_t config_hash = 0;
    std::string manifest_name = "manifest.json";
};

/// Releases at uniformly random in-domain positions and sorted random times.
/// Ids are assigned 0..n-1 in time order.
std::vector<Release> sample_releases(std::uint64_t seed, const GridSpec& grid, std::size_t n,
                                     double t_start, double t_end, double altitude);

/// Simulates and extracts features for every release, writes FPG1/FTR1 files
/// under out_dir and a manifest split by time. Output does not depend on the
/// number of workers.
DatasetManifest generate_dataset(const std::vector<Release>& releases, const MetField& met,
                                 const SimConfig& cfg, const DatasetOptions& options);

std::string footprint_file_name(std::uint64_t id);
std::string feature_file_name(std::uint64_t id);

}  // namespace fpuq
