#include "fpuq/domain.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "fpuq/common.hpp"

namespace fpuq {

void GridSpec::validate() const {
    if (n_lat < 1 || n_lon < 1) throw ValidationError("grid must have at least one cell");
    if (!(d_lat > 0.0) || !(d_lon > 0.0)) throw ValidationError("grid spacing must be positive");
    if (!std::isfinite(lat0) || !std::isfinite(lon0)) throw ValidationError("grid origin must be finite");
}

bool GridSpec::contains(double lat, double lon) const {
    const double r = row_of(lat);
    const double c = col_of(lon);
    return r >= -0.5 && c >= -0.5 && r < static_cast<double>(n_lat) - 0.5 &&
           c < static_cast<double>(n_lon) - 0.5;
}

std::optional<CellIndex> GridSpec::cell_of(double lat, double lon) const {
    if (!contains(lat, lon)) return std::nullopt;
    CellIndex c{static_cast<std::ptrdiff_t>(std::floor(row_of(lat) + 0.5)),
                static_cast<std::ptrdiff_t>(std::floor(col_of(lon) + 0.5))};
    // Guard the half-open upper edge against rounding.
    c.row = std::clamp<std::ptrdiff_t>(c.row, 0, static_cast<std::ptrdiff_t>(n_lat) - 1);
    c.col = std::clamp<std::ptrdiff_t>(c.col, 0, static_cast<std::ptrdiff_t>(n_lon) - 1);
    return c;
}

Footprint::Footprint(GridSpec grid, Release release, std::vector<double> values, Space space)
    : grid_(grid), release_(release), values_(std::move(values)), space_(space) {
    grid_.validate();
    if (values_.size() != grid_.size()) {
        throw ValidationError("footprint has " + std::to_string(values_.size()) +
                              " values for a grid of " + std::to_string(grid_.size()));
    }
    for (std::size_t k = 0; k < values_.size(); ++k) {
        const double v = values_[k];
        if (!std::isfinite(v) || (space_ == Space::linear && v < 0.0)) {
            throw ValidationError("invalid footprint value " + std::to_string(v) + " at cell (" +
                                  std::to_string(k / grid_.n_lon) + ", " +
                                  std::to_string(k % grid_.n_lon) + ")");
        }
    }
}

double Footprint::sum() const { return std::accumulate(values_.begin(), values_.end(), 0.0); }

std::size_t Patch::zero_filled() const {
    return static_cast<std::size_t>(std::count(in_domain.begin(), in_domain.end(), 0));
}

void FluxField::validate() const {
    grid.validate();
    if (values.size() != grid.size()) throw ValidationError("flux field size does not match its grid");
    for (double v : values) {
        if (!std::isfinite(v) || v < 0.0) throw ValidationError("flux values must be finite and >= 0");
    }
}

double to_log(double s, double eps_log) { return std::log(s + eps_log); }

double from_log(double t, double eps_log) {
    // exp(ln(eps)) misses eps by a few ulps; snap that residue to zero
    const double s = std::exp(t) - eps_log;
    return s > 4.0 * std::numeric_limits<double>::epsilon() * eps_log ? s : 0.0;
}

Footprint log_transform(const Footprint& fp, double eps_log) {
    if (fp.space() != Space::linear) throw ValidationError("log_transform expects a linear-space footprint");
    if (!(eps_log > 0.0)) throw ValidationError("eps_log must be positive");
    std::vector<double> out(fp.values().size());
    std::transform(fp.values().begin(), fp.values().end(), out.begin(),
                   [eps_log](double s) { return to_log(s, eps_log); });
    return Footprint(fp.grid(), fp.release(), std::move(out), Space::log);
}

Footprint inverse_log_transform(const Footprint& fp, double eps_log) {
    if (fp.space() != Space::log) throw ValidationError("inverse_log_transform expects a log-space footprint");
    if (!(eps_log > 0.0)) throw ValidationError("eps_log must be positive");
    std::vector<double> out(fp.values().size());
    std::transform(fp.values().begin(), fp.values().end(), out.begin(),
                   [eps_log](double t) { return from_log(t, eps_log); });
    return Footprint(fp.grid(), fp.release(), std::move(out), Space::linear);
}

CellIndex release_cell(const GridSpec& grid, const Release& release) {
    auto cell = grid.cell_of(release.lat, release.lon);
    if (!cell) {
        throw ValidationError("release " + std::to_string(release.id) + " at (" +
                              std::to_string(release.lat) + ", " + std::to_string(release.lon) +
                              ") lies outside the domain");
    }
    return *cell;
}

Patch crop_patch(const GridSpec& grid, std::span<const double> field, const Release& release,
                 std::size_t side) {
    if (side < 1) throw ValidationError("patch side must be >= 1");
    if (field.size() != grid.size()) throw ValidationError("field size does not match grid");
    const CellIndex rc = release_cell(grid, release);
    const auto half = static_cast<std::ptrdiff_t>(side / 2);

    Patch p;
    p.side = side;
    p.row0 = rc.row - half;
    p.col0 = rc.col - half;
    p.values.assign(side * side, 0.0);
    p.in_domain.assign(side * side, 0);
    for (std::size_t a = 0; a < side; ++a) {
        for (std::size_t b = 0; b < side; ++b) {
            const CellIndex parent{p.row0 + static_cast<std::ptrdiff_t>(a),
                                   p.col0 + static_cast<std::ptrdiff_t>(b)};
            if (!grid.contains(parent)) continue;
            const std::size_t k = a * side + b;
            p.values[k] = field[grid.index(parent.row, parent.col)];
            p.in_domain[k] = 1;
        }
    }
    return p;
}

Patch crop_patch(const Footprint& fp, std::size_t side) {
    return crop_patch(fp.grid(), fp.values(), fp.release(), side);
}

std::vector<double> embed_patch(const Patch& patch, const GridSpec& grid) {
    const std::size_t side = patch.side;
    if (patch.values.size() != side * side || patch.in_domain.size() != side * side) {
        throw ValidationError("patch arrays do not match its side");
    }
    std::vector<double> out(grid.size(), 0.0);
    for (std::size_t a = 0; a < side; ++a) {
        for (std::size_t b = 0; b < side; ++b) {
            const CellIndex parent{patch.row0 + static_cast<std::ptrdiff_t>(a),
                                   patch.col0 + static_cast<std::ptrdiff_t>(b)};
            const std::size_t k = a * side + b;
            const bool inside = grid.contains(parent);
            if (inside != (patch.in_domain[k] != 0)) {
                throw ValidationError("patch offset (" + std::to_string(patch.row0) + ", " +
                                      std::to_string(patch.col0) +
                                      ") is inconsistent with its domain mask for this grid");
            }
            if (inside) out[grid.index(parent.row, parent.col)] = patch.values[k];
        }
    }
    return out;
}

// --- manifest ---------------------------------------------------------------

nlohmann::json release_to_json(const Release& r) {
    return {{"id", r.id}, {"lat", r.lat}, {"lon", r.lon}, {"altitude", r.altitude}, {"time", r.time}};
}

Release release_from_json(const nlohmann::json& j) {
    Release r;
    r.id = j.at("id").get<std::uint64_t>();
    r.lat = j.at("lat").get<double>();
    r.lon = j.at("lon").get<double>();
    r.altitude = j.at("altitude").get<double>();
    r.time = j.at("time").get<double>();
    return r;
}

nlohmann::json grid_to_json(const GridSpec& g) {
    return {{"n_lat", g.n_lat}, {"n_lon", g.n_lon}, {"lat0", g.lat0},
            {"lon0", g.lon0},   {"d_lat", g.d_lat}, {"d_lon", g.d_lon}};
}

namespace {

nlohmann::json split_to_json(const std::vector<ManifestEntry>& split) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& e : split) {
        arr.push_back({{"release", release_to_json(e.release)},
                       {"footprint", e.footprint},
                       {"features", e.features}});
    }
    return arr;
}

std::vector<ManifestEntry> split_from_json(const nlohmann::json& arr) {
    std::vector<ManifestEntry> out;
    for (const auto& item : arr) {
        out.push_back({release_from_json(item.at("release")), item.at("footprint").get<std::string>(),
                       item.at("features").get<std::string>()});
    }
    return out;
}

std::pair<double, double> time_range(const std::vector<ManifestEntry>& split) {
    auto [lo, hi] = std::minmax_element(split.begin(), split.end(), [](const auto& a, const auto& b) {
        return a.release.time < b.release.time;
    });
    return {lo->release.time, hi->release.time};
}

}  // namespace

void DatasetManifest::validate() const {
    if (!train.empty()) {
        if (time_range(train).second >= train_end)
            throw ValidationError("training release at or after the train/validation boundary");
    }
    if (!validation.empty()) {
        auto [lo, hi] = time_range(validation);
        if (lo < train_end) throw ValidationError("validation release before the train/validation boundary");
        if (hi >= validation_end)
            throw ValidationError("validation release at or after the validation/test boundary");
    }
    if (!test.empty() && time_range(test).first < validation_end)
        throw ValidationError("test release before the validation/test boundary");
    if (train_end > validation_end) throw ValidationError("split boundaries out of order");
}

nlohmann::json DatasetManifest::to_json() const {
    return {{"format", "fpuq-manifest"},
            {"version", 1},
            {"train_end", train_end},
            {"validation_end", validation_end},
            {"train", split_to_json(train)},
            {"validation", split_to_json(validation)},
            {"test", split_to_json(test)}};
}

DatasetManifest DatasetManifest::from_json(const nlohmann::json& j, std::filesystem::path base) {
    if (j.value("format", "") != "fpuq-manifest") throw ValidationError("not a dataset manifest");
    DatasetManifest m;
    m.train_end = j.at("train_end").get<double>();
    m.validation_end = j.at("validation_end").get<double>();
    m.train = split_from_json(j.at("train"));
    m.validation = split_from_json(j.at("validation"));
    m.test = split_from_json(j.at("test"));
    m.base_dir = std::move(base);
    m.validate();
    return m;
}

void DatasetManifest::save(const std::filesystem::path& path) const {
    write_text(path, to_json().dump(1) + "\n");
}

DatasetManifest DatasetManifest::load(const std::filesystem::path& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text(path));
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
    return from_json(j, path.parent_path());
}

}  // namespace fpuq
