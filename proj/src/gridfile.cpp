#include "fpuq/gridfile.hpp"

#include <cmath>
#include <fstream>

#include "fpuq/common.hpp"

namespace fpuq {

GridFile GridFile::from_footprint(const Footprint& fp, std::uint64_t config_hash) {
    return {fp.grid(), fp.release(), fp.space(), config_hash, fp.values()};
}

GridFile GridFile::from_flux(const FluxField& flux, std::uint64_t config_hash) {
    return {flux.grid, Release{}, Space::linear, config_hash, flux.values};
}

Footprint GridFile::to_footprint() const { return Footprint(grid, release, values, space); }

FluxField GridFile::to_flux() const {
    FluxField f{grid, values};
    f.validate();
    return f;
}

void write_grid_file(const std::filesystem::path& path, const GridFile& file) {
    if (file.values.size() != file.grid.size()) {
        throw ValidationError("grid file payload does not match grid size: " + path.string());
    }
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write " + path.string());

    os.write("FPG1", 4);
    bin::put<std::uint32_t>(os, kGridFileVersion);
    bin::put<std::uint32_t>(os, static_cast<std::uint32_t>(file.grid.n_lat));
    bin::put<std::uint32_t>(os, static_cast<std::uint32_t>(file.grid.n_lon));
    bin::put<std::uint8_t>(os, static_cast<std::uint8_t>(file.space));
    bin::pad(os, 7);
    bin::put(os, file.grid.lat0);
    bin::put(os, file.grid.lon0);
    bin::put(os, file.grid.d_lat);
    bin::put(os, file.grid.d_lon);
    bin::put<std::uint64_t>(os, file.config_hash);

    bin::put<std::uint64_t>(os, file.release.id);
    bin::put(os, file.release.lat);
    bin::put(os, file.release.lon);
    bin::put(os, file.release.altitude);
    bin::put(os, file.release.time);

    bin::write_bytes(os, file.values.data(), file.values.size() * sizeof(double));
    if (!os) throw IoError("write failed for " + path.string());
}

GridFile read_grid_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string());
    const std::string what = path.string();

    char magic[4];
    bin::read_bytes(is, magic, 4, what);
    if (std::string_view(magic, 4) != "FPG1") throw IoError(what + ": bad magic, expected FPG1");
    const auto version = bin::get<std::uint32_t>(is, what);
    if (version != kGridFileVersion) {
        throw IoError(what + ": unsupported FPG1 version " + std::to_string(version));
    }
    GridFile f;
    f.grid.n_lat = bin::get<std::uint32_t>(is, what);
    f.grid.n_lon = bin::get<std::uint32_t>(is, what);
    const auto space = bin::get<std::uint8_t>(is, what);
    if (space > 1) throw IoError(what + ": invalid space flag");
    f.space = static_cast<Space>(space);
    bin::skip(is, 7, what);
    f.grid.lat0 = bin::get<double>(is, what);
    f.grid.lon0 = bin::get<double>(is, what);
    f.grid.d_lat = bin::get<double>(is, what);
    f.grid.d_lon = bin::get<double>(is, what);
    f.config_hash = bin::get<std::uint64_t>(is, what);
    f.release.id = bin::get<std::uint64_t>(is, what);
    f.release.lat = bin::get<double>(is, what);
    f.release.lon = bin::get<double>(is, what);
    f.release.altitude = bin::get<double>(is, what);
    f.release.time = bin::get<double>(is, what);
    try {
        f.grid.validate();
    } catch (const ValidationError& e) {
        throw IoError(what + ": " + e.what());
    }
    f.values.resize(f.grid.size());
    bin::read_bytes(is, f.values.data(), f.values.size() * sizeof(double), what);
    return f;
}

}  // namespace fpuq
