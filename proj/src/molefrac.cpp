#include "fpuq/molefrac.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "fpuq/analysis.hpp"
#include "fpuq/common.hpp"
#include "fpuq/gridfile.hpp"

namespace fpuq {

double mole_fraction(std::span<const double> footprint, std::span<const double> flux) {
    if (footprint.size() != flux.size())
        throw ValidationError("mole_fraction: footprint has " + std::to_string(footprint.size()) + " cells, flux has " +
                              std::to_string(flux.size()));
    double s = 0.0;
    for (std::size_t i = 0; i < footprint.size(); ++i) s += footprint[i] * flux[i];
    return s;
}

double mole_fraction(const Footprint& fp, const FluxField& flux) {
    if (fp.space() != Space::linear) throw ValidationError("mole_fraction expects a linear-space footprint");
    if (!(fp.grid() == flux.grid)) throw ValidationError("mole_fraction: footprint and flux grids differ");
    return mole_fraction(fp.values(), flux.values);
}

void FluxConfig::validate() const {
    if (!(background >= 0.0) || !std::isfinite(background)) throw ValidationError("flux.background must be >= 0");
    if (!(sigma_min_cells > 0.0) || !(sigma_max_cells >= sigma_min_cells))
        throw ValidationError("flux: need 0 < sigma_min_cells <= sigma_max_cells");
    if (!std::isfinite(log_amp_mean) || !(log_amp_sd >= 0.0)) throw ValidationError("flux: invalid lognormal amplitude parameters");
}

FluxField synth_bottomup_flux(std::uint64_t seed, const GridSpec& grid, std::size_t n_hotspots, double background,
                              const FluxConfig& shape) {
    grid.validate();
    FluxConfig cfg = shape;
    cfg.background = background;
    cfg.validate();
    FluxField f;
    f.grid = grid;
    f.values.assign(grid.size(), background);
    std::mt19937_64 rng(derive_seed(seed, 0x466c7578));
    std::uniform_real_distribution<double> urow(0.0, static_cast<double>(grid.n_lat - 1));
    std::uniform_real_distribution<double> ucol(0.0, static_cast<double>(grid.n_lon - 1));
    std::uniform_real_distribution<double> usig(cfg.sigma_min_cells, cfg.sigma_max_cells);
    std::normal_distribution<double> nlog(cfg.log_amp_mean, cfg.log_amp_sd);
    for (std::size_t h = 0; h < n_hotspots; ++h) {
        const double r0 = urow(rng), c0 = ucol(rng), sig = usig(rng), amp = std::exp(nlog(rng));
        for (std::size_t r = 0; r < grid.n_lat; ++r)
            for (std::size_t c = 0; c < grid.n_lon; ++c) {
                const double dr = static_cast<double>(r) - r0, dc = static_cast<double>(c) - c0;
                f.values[grid.index(r, c)] += amp * std::exp(-(dr * dr + dc * dc) / (2.0 * sig * sig));
            }
    }
    return f;
}

FluxField synth_bottomup_flux(const FluxConfig& cfg, const GridSpec& grid) {
    return synth_bottomup_flux(cfg.seed, grid, cfg.n_hotspots, cfg.background, cfg);
}

double positive_median(std::span<const double> values) {
    std::vector<double> pos;
    for (double v : values)
        if (v > 0.0) pos.push_back(v);
    if (pos.empty()) throw ValidationError("median of positive cells: reference has no positive cells");
    std::sort(pos.begin(), pos.end());
    const std::size_t n = pos.size();
    return n % 2 == 1 ? pos[n / 2] : 0.5 * (pos[n / 2 - 1] + pos[n / 2]);
}

FluxField uniform_flux(const FluxField& reference) {
    reference.validate();
    FluxField f;
    f.grid = reference.grid;
    f.values.assign(reference.values.size(), positive_median(reference.values));
    return f;
}

// --- ensemble index -------------------------------------------------------------

nlohmann::json EnsembleIndex::to_json() const {
    nlohmann::json entries_j = nlohmann::json::array();
    for (const auto& e : entries)
        entries_j.push_back({{"release", release_to_json(e.release)},
                             {"members", e.members},
                             {"mean", e.mean},
                             {"std", e.stddev},
                             {"cv", e.cv},
                             {"error", e.error}});
    return {{"format", "fpuq-ensemble"},
            {"split", split},
            {"n_members", n_members},
            {"std", "population"},
            {"eps", eps},
            {"cv_space", cv_space == CvSpace::linear ? "linear" : "log"},
            {"checkpoints", checkpoints},
            {"entries", entries_j}};
}

EnsembleIndex EnsembleIndex::from_json(const nlohmann::json& j, std::filesystem::path base_dir) {
    EnsembleIndex idx;
    idx.base_dir = std::move(base_dir);
    try {
        if (j.at("format").get<std::string>() != "fpuq-ensemble") throw ValidationError("not an ensemble index");
        idx.split = j.at("split").get<std::string>();
        idx.n_members = j.at("n_members").get<std::size_t>();
        idx.eps = j.at("eps").get<double>();
        const auto space = j.at("cv_space").get<std::string>();
        if (space != "linear" && space != "log") throw ValidationError("ensemble index: unknown cv_space " + space);
        idx.cv_space = space == "linear" ? CvSpace::linear : CvSpace::log;
        idx.checkpoints = j.at("checkpoints").get<std::vector<std::string>>();
        for (const auto& e : j.at("entries")) {
            EnsembleIndexEntry en;
            en.release = release_from_json(e.at("release"));
            en.members = e.at("members").get<std::vector<std::string>>();
            en.mean = e.at("mean").get<std::string>();
            en.stddev = e.at("std").get<std::string>();
            en.cv = e.at("cv").get<std::string>();
            en.error = e.at("error").get<std::string>();
            if (en.members.size() != idx.n_members) throw ValidationError("ensemble index: member count mismatch");
            idx.entries.push_back(std::move(en));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("ensemble index: ") + e.what());
    }
    return idx;
}

void EnsembleIndex::save(const std::filesystem::path& path) const { write_text(path, to_json().dump(2) + "\n"); }

EnsembleIndex EnsembleIndex::load(const std::filesystem::path& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
    return from_json(j, path.parent_path());
}

// --- records ------------------------------------------------------------------------

std::vector<MoleFractionRecord> molefrac_dataset(const DatasetManifest& manifest, const EnsembleIndex& ensemble,
                                                 const std::vector<NamedFlux>& fluxes, double eps) {
    if (fluxes.empty()) throw ValidationError("molefrac_dataset: no flux fields");
    for (const auto& f : fluxes) f.field.validate();
    std::map<std::uint64_t, const ManifestEntry*> by_id;
    for (const auto* split : {&manifest.train, &manifest.validation, &manifest.test})
        for (const auto& e : *split) by_id[e.release.id] = &e;

    std::vector<const EnsembleIndexEntry*> order;
    for (const auto& e : ensemble.entries) order.push_back(&e);
    std::stable_sort(order.begin(), order.end(), [](const auto* a, const auto* b) {
        return a->release.time < b->release.time || (a->release.time == b->release.time && a->release.id < b->release.id);
    });

    std::vector<MoleFractionRecord> records(order.size() * fluxes.size());
    parallel_for(order.size(), [&](std::size_t i) {
        const auto& en = *order[i];
        const auto it = by_id.find(en.release.id);
        if (it == by_id.end()) throw ValidationError("molefrac: release " + std::to_string(en.release.id) + " is not in the manifest");
        const auto truth_path = manifest.resolve(it->second->footprint);
        if (!std::filesystem::exists(truth_path))
            throw ValidationError("molefrac: missing truth footprint for release " + std::to_string(en.release.id) + ": " +
                                  truth_path.string());
        const Footprint truth = read_grid_file(truth_path).to_footprint();
        std::vector<Footprint> members;
        for (const auto& m : en.members) {
            const auto p = ensemble.resolve(m);
            if (!std::filesystem::exists(p))
                throw ValidationError("molefrac: missing member footprint for release " + std::to_string(en.release.id) + ": " +
                                      p.string());
            members.push_back(read_grid_file(p).to_footprint());
        }
        for (std::size_t f = 0; f < fluxes.size(); ++f) {
            auto& r = records[i * fluxes.size() + f];
            r.release_id = en.release.id;
            r.time = en.release.time;
            r.lat = en.release.lat;
            r.lon = en.release.lon;
            r.flux_id = fluxes[f].id;
            r.truth = mole_fraction(truth, fluxes[f].field);
            for (const auto& m : members) r.members.push_back(mole_fraction(m, fluxes[f].field));
            r.stats = ensemble_stats_scalar(r.members, eps);
        }
    });
    return records;
}

void write_molefrac_csv(const std::filesystem::path& path, const std::vector<MoleFractionRecord>& records) {
    const std::size_t n = records.empty() ? 0 : records.front().members.size();
    std::string out = "release_id,time,flux_id,truth";
    for (std::size_t k = 0; k < n; ++k) out += ",member_" + std::to_string(k);
    out += ",mean,std,cv\n";
    for (const auto& r : records) {
        if (r.members.size() != n) throw ValidationError("write_molefrac_csv: records have different member counts");
        out += std::to_string(r.release_id) + "," + csv_number(r.time) + "," + r.flux_id + "," + csv_number(r.truth);
        for (double m : r.members) out += "," + csv_number(m);
        out += "," + csv_number(r.stats.mean) + "," + csv_number(r.stats.stddev) + "," + csv_number(r.stats.cv) + "\n";
    }
    write_text(path, out);
}

std::vector<MoleFractionRecord> read_molefrac_csv(const std::filesystem::path& path) {
    std::istringstream is(read_text(path));
    std::string line;
    if (!std::getline(is, line)) throw ValidationError(path.string() + ": empty file");
    std::vector<std::string> header;
    {
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) header.push_back(cell);
    }
    if (header.size() < 9 || header[0] != "release_id" || header[3] != "truth" || header[header.size() - 3] != "mean")
        throw ValidationError(path.string() + ": unexpected header");
    const std::size_t n = header.size() - 7;
    std::vector<MoleFractionRecord> out;
    std::size_t line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != header.size())
            throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                                  " fields");
        try {
            MoleFractionRecord r;
            r.release_id = std::stoull(cells[0]);
            r.time = std::stod(cells[1]);
            r.flux_id = cells[2];
            r.truth = std::stod(cells[3]);
            for (std::size_t k = 0; k < n; ++k) r.members.push_back(std::stod(cells[4 + k]));
            r.stats.mean = std::stod(cells[4 + n]);
            r.stats.stddev = std::stod(cells[5 + n]);
            r.stats.cv = std::stod(cells[6 + n]);
            out.push_back(std::move(r));
        } catch (const std::logic_error&) {
            throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": malformed number");
        }
    }
    return out;
}

}  // namespace fpuq
