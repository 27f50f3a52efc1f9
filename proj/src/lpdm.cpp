#include "fpuq/lpdm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "fpuq/common.hpp"
#include "fpuq/gridfile.hpp"

namespace fpuq {

void SimConfig::validate() const {
    if (n_particles < 1) throw ValidationError("sim: n_particles must be >= 1");
    if (!(dt > 0.0)) throw ValidationError("sim: dt must be > 0");
    if (!(t_back_h > 0.0)) throw ValidationError("sim: t_back_h must be > 0");
    if (!(k_h >= 0.0) || !(sigma_w >= 0.0)) throw ValidationError("sim: k_h and sigma_w must be >= 0");
    if (!(h_surf > 0.0 && h_surf < h_top)) throw ValidationError("sim: require 0 < h_surf < h_top");
}

std::size_t SimConfig::n_steps() const {
    return static_cast<std::size_t>(std::llround(t_back_h * 3600.0 / dt));
}

ParticleState step_particle(ParticleState p, const MetField& met, double t_h, const SimConfig& cfg,
                            ParticleRng& rng) {
    if (!p.alive) return p;
    const WindSample w = wind_at_unchecked(met, p.lat, p.lon, p.z, t_h);
    const double sigma_h = std::sqrt(2.0 * cfg.k_h * cfg.dt);
    const double sigma_z = cfg.sigma_w * std::sqrt(cfg.dt);
    const double gx = rng.gauss();
    const double gy = rng.gauss();
    const double gz = rng.gauss();

    // Backward in time: move against the wind.
    const double dx = -w.u * cfg.dt + sigma_h * gx;
    const double dy = -w.v * cfg.dt + sigma_h * gy;
    const double coslat = std::cos(p.lat * std::numbers::pi / 180.0);
    p.lat += dy / kMetresPerDegreeLat;
    p.lon += dx / (kMetresPerDegreeLat * coslat);

    double z = p.z + sigma_z * gz;
    while (z < 0.0 || z > cfg.h_top) {
        if (z < 0.0) z = -z;
        if (z > cfg.h_top) z = 2.0 * cfg.h_top - z;
    }
    p.z = z;
    p.alive = met.grid.contains(p.lat, p.lon);
    return p;
}

std::uint64_t release_seed(const SimConfig& cfg, const Release& release) {
    return derive_seed(cfg.seed, release.id);
}

Footprint simulate_footprint(const Release& release, const MetField& met, const SimConfig& cfg) {
    cfg.validate();
    const GridSpec& grid = met.grid;
    release_cell(grid, release);  // rejects out-of-domain releases

    const std::size_t n_steps = cfg.n_steps();
    const double step_h = cfg.dt / 3600.0;
    const std::uint64_t seed = release_seed(cfg, release);

    // Integer contact counts make the result independent of summation order.
    std::vector<std::uint64_t> counts(grid.size(), 0);
    for (std::size_t n = 0; n < cfg.n_particles; ++n) {
        ParticleRng rng(derive_seed(seed, n));
        ParticleState p{release.lat, release.lon, std::clamp(release.altitude, 0.0, cfg.h_top), true};
        for (std::size_t k = 0; k < n_steps && p.alive; ++k) {
            if (p.z < cfg.h_surf) {
                const auto cell = grid.cell_of(p.lat, p.lon);
                ++counts[grid.index(cell->row, cell->col)];
            }
            p = step_particle(p, met, release.time - static_cast<double>(k) * step_h, cfg, rng);
        }
    }
    std::vector<double> values(grid.size());
    for (std::size_t k = 0; k < values.size(); ++k) {
        values[k] = static_cast<double>(counts[k]) * cfg.dt / static_cast<double>(cfg.n_particles);
    }
    return Footprint(grid, release, std::move(values), Space::linear);
}

std::vector<Release> sample_releases(std::uint64_t seed, const GridSpec& grid, std::size_t n,
                                     double t_start, double t_end, double altitude) {
    grid.validate();
    if (!(t_end > t_start)) throw ValidationError("release time range is empty");
    std::mt19937_64 rng(derive_seed(seed, 3));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<Release> out(n);
    for (auto& r : out) {
        // Stay strictly inside the half-open cell-area domain.
        r.lat = grid.lat_of(-0.5 + 0.999999 * unit(rng) * static_cast<double>(grid.n_lat));
        r.lon = grid.lon_of(-0.5 + 0.999999 * unit(rng) * static_cast<double>(grid.n_lon));
        r.time = t_start + (t_end - t_start) * unit(rng);
        r.altitude = altitude;
    }
    std::stable_sort(out.begin(), out.end(), [](const Release& a, const Release& b) { return a.time < b.time; });
    for (std::size_t k = 0; k < n; ++k) out[k].id = k;
    return out;
}

std::string footprint_file_name(std::uint64_t id) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "footprints/fp_%06llu.fpg", static_cast<unsigned long long>(id));
    return buf;
}

std::string feature_file_name(std::uint64_t id) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "features/ft_%06llu.ftr", static_cast<unsigned long long>(id));
    return buf;
}

DatasetManifest generate_dataset(const std::vector<Release>& releases, const MetField& met,
                                 const SimConfig& cfg, const DatasetOptions& options) {
    cfg.validate();
    for (std::size_t k = 0; k < releases.size(); ++k) {
        release_cell(met.grid, releases[k]);
        if (k > 0 && !(releases[k].time > releases[k - 1].time)) {
            throw ValidationError("generate_dataset: release times must be strictly increasing");
        }
    }

    DatasetManifest m;
    m.base_dir = options.out_dir;
    if (releases.empty()) return m;

    std::vector<ManifestEntry> entries(releases.size());
    parallel_for(releases.size(), [&](std::size_t k) {
        const Release& r = releases[k];
        ManifestEntry& e = entries[k];
        e.release = r;
        e.footprint = footprint_file_name(r.id);
        e.features = feature_file_name(r.id);
        const Footprint fp = simulate_footprint(r, met, cfg);
        write_grid_file(options.out_dir / e.footprint, GridFile::from_footprint(fp, options.config_hash));
        const FeatureTensor x = extract_features(r, met, options.features, options.patch_side);
        write_features(options.out_dir / e.features, x, options.config_hash);
    });

    // Split sizes follow the configured proportions when the release count differs.
    const std::size_t n = releases.size();
    const SplitCounts& s = options.splits;
    std::size_t n_train = s.train, n_val = s.validation;
    if (s.total() != n) {
        const double total = static_cast<double>(std::max<std::size_t>(s.total(), 1));
        n_train = static_cast<std::size_t>(std::llround(n * (s.train / total)));
        n_val = static_cast<std::size_t>(std::llround(n * (s.validation / total)));
        n_train = std::min(n_train, n);
        n_val = std::min(n_val, n - n_train);
    }
    m.train.assign(entries.begin(), entries.begin() + static_cast<std::ptrdiff_t>(n_train));
    m.validation.assign(entries.begin() + static_cast<std::ptrdiff_t>(n_train),
                        entries.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
    m.test.assign(entries.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), entries.end());

    auto boundary = [&](std::size_t idx) {
        // Midpoint between the last time of one split and the first of the next.
        if (idx == 0) return releases.front().time;
        if (idx >= n) return std::nextafter(releases.back().time, INFINITY);
        return 0.5 * (releases[idx - 1].time + releases[idx].time);
    };
    m.train_end = boundary(n_train);
    m.validation_end = boundary(n_train + n_val);
    m.validate();
    m.save(options.out_dir / options.manifest_name);
    return m;
}

}  // namespace fpuq
