#include "fpuq/features.hpp"

#include <cmath>
#include <fstream>

#include "fpuq/common.hpp"

namespace fpuq {

std::string static_channel_name(StaticChannel c) {
    switch (c) {
        case StaticChannel::terrain: return "terrain";
        case StaticChannel::land_mask: return "land_mask";
        case StaticChannel::bearing_sin: return "bearing_sin";
        case StaticChannel::bearing_cos: return "bearing_cos";
        case StaticChannel::distance: return "distance";
        case StaticChannel::release_indicator: return "release_indicator";
    }
    return "unknown";
}

StaticChannel static_channel_from_name(const std::string& name) {
    for (auto c : {StaticChannel::terrain, StaticChannel::land_mask, StaticChannel::bearing_sin,
                   StaticChannel::bearing_cos, StaticChannel::distance, StaticChannel::release_indicator}) {
        if (static_channel_name(c) == name) return c;
    }
    throw ValidationError("unknown static feature channel '" + name + "'");
}

std::vector<std::string> FeatureSpec::channel_names() const {
    std::vector<std::string> names;
    names.reserve(channels());
    for (const char* var : {"u", "v"}) {
        for (double level : levels) {
            for (double lag : lags_h) {
                char buf[64];
                std::snprintf(buf, sizeof(buf), "%s@%.1fm%+.1fh", var, level, lag);
                names.emplace_back(buf);
            }
        }
    }
    for (auto s : statics) names.push_back(static_channel_name(s));
    return names;
}

std::uint64_t FeatureSpec::channel_hash() const {
    std::string joined;
    for (const auto& n : channel_names()) {
        joined += n;
        joined += ',';
    }
    return fnv1a64(joined);
}

void FeatureSpec::validate() const {
    if (levels.empty() || lags_h.empty()) throw ValidationError("features: levels and lags must be non-empty");
    for (double l : levels)
        if (!(l > 0.0)) throw ValidationError("features: levels must be positive");
}

FeatureTensor extract_features(const Release& release, const MetField& met, const FeatureSpec& spec,
                               std::size_t side) {
    spec.validate();
    const GridSpec& grid = met.grid;
    const CellIndex rc = release_cell(grid, release);
    const auto half = static_cast<std::ptrdiff_t>(side / 2);
    const std::size_t C = spec.channels();
    const std::size_t n_wind = spec.wind_channels();
    const std::size_t per_var = spec.levels.size() * spec.lags_h.size();

    FeatureTensor x;
    x.side = side;
    x.channels = C;
    x.channel_hash = spec.channel_hash();
    x.release = release;
    x.values.assign(side * side * C, 0.0);

    for (std::size_t a = 0; a < side; ++a) {
        for (std::size_t b = 0; b < side; ++b) {
            double* cell = &x.values[(a * side + b) * C];
            const CellIndex parent{rc.row - half + static_cast<std::ptrdiff_t>(a),
                                   rc.col - half + static_cast<std::ptrdiff_t>(b)};
            const bool inside = grid.contains(parent);
            if (inside) {
                const double lat = grid.lat_of(static_cast<double>(parent.row));
                const double lon = grid.lon_of(static_cast<double>(parent.col));
                std::size_t k = 0;
                for (std::size_t l = 0; l < spec.levels.size(); ++l) {
                    for (std::size_t g = 0; g < spec.lags_h.size(); ++g, ++k) {
                        const WindSample w =
                            wind_at_unchecked(met, lat, lon, spec.levels[l], release.time + spec.lags_h[g]);
                        cell[k] = w.u;
                        cell[per_var + k] = w.v;
                    }
                }
            }
            const double dx = static_cast<double>(b) - static_cast<double>(half);
            const double dy = static_cast<double>(a) - static_cast<double>(half);
            const double dist = std::hypot(dx, dy);
            for (std::size_t s = 0; s < spec.statics.size(); ++s) {
                double value = 0.0;
                switch (spec.statics[s]) {
                    case StaticChannel::terrain:
                        value = inside ? met.terrain[grid.index(parent.row, parent.col)] : 0.0;
                        break;
                    case StaticChannel::land_mask:
                        value = inside ? met.land[grid.index(parent.row, parent.col)] : 0.0;
                        break;
                    case StaticChannel::bearing_sin: value = dist > 0.0 ? dx / dist : 0.0; break;
                    case StaticChannel::bearing_cos: value = dist > 0.0 ? dy / dist : 0.0; break;
                    case StaticChannel::distance:
                        value = dist / static_cast<double>(std::max<std::ptrdiff_t>(half, 1));
                        break;
                    case StaticChannel::release_indicator: value = dist == 0.0 ? 1.0 : 0.0; break;
                }
                cell[n_wind + s] = value;
            }
        }
    }
    return x;
}

Normalizer fit_normalizer(const std::vector<const FeatureTensor*>& train) {
    if (train.size() < 2) throw ValidationError("fit_normalizer needs at least two training tensors");
    const std::size_t C = train.front()->channels;
    Normalizer n;
    n.mean.assign(C, 0.0);
    n.stddev.assign(C, 0.0);
    n.degenerate.assign(C, 0);
    std::size_t count = 0;
    for (const auto* x : train) {
        if (x->channels != C || x->channel_hash != train.front()->channel_hash)
            throw ValidationError("fit_normalizer: tensors have different channel layouts");
        for (std::size_t c = 0; c < x->cells(); ++c)
            for (std::size_t k = 0; k < C; ++k) n.mean[k] += x->at(c, k);
        count += x->cells();
    }
    for (auto& m : n.mean) m /= static_cast<double>(count);
    for (const auto* x : train) {
        for (std::size_t c = 0; c < x->cells(); ++c) {
            for (std::size_t k = 0; k < C; ++k) {
                const double d = x->at(c, k) - n.mean[k];
                n.stddev[k] += d * d;
            }
        }
    }
    for (std::size_t k = 0; k < C; ++k) {
        n.stddev[k] = std::sqrt(n.stddev[k] / static_cast<double>(count));
        if (n.stddev[k] < kDegenerateStd) n.degenerate[k] = 1;
    }
    return n;
}

Normalizer fit_normalizer(const std::vector<FeatureTensor>& train) {
    std::vector<const FeatureTensor*> ptrs;
    ptrs.reserve(train.size());
    for (const auto& x : train) ptrs.push_back(&x);
    return fit_normalizer(ptrs);
}

void apply_normalizer_inplace(FeatureTensor& x, const Normalizer& norm) {
    if (x.channels != norm.channels()) {
        throw ValidationError("apply_normalizer: tensor has " + std::to_string(x.channels) +
                              " channels, normalizer has " + std::to_string(norm.channels()));
    }
    const std::size_t C = x.channels;
    for (std::size_t c = 0; c < x.cells(); ++c) {
        double* cell = &x.values[c * C];
        for (std::size_t k = 0; k < C; ++k) {
            if (norm.degenerate[k]) continue;
            cell[k] = (cell[k] - norm.mean[k]) / norm.stddev[k];
        }
    }
}

FeatureTensor apply_normalizer(const FeatureTensor& x, const Normalizer& norm) {
    FeatureTensor out = x;
    apply_normalizer_inplace(out, norm);
    return out;
}

void write_features(const std::filesystem::path& path, const FeatureTensor& x, std::uint64_t config_hash) {
    if (x.values.size() != x.cells() * x.channels) throw ValidationError("feature tensor size mismatch");
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write " + path.string());
    os.write("FTR1", 4);
    bin::put<std::uint32_t>(os, 1);
    bin::put<std::uint32_t>(os, static_cast<std::uint32_t>(x.side));
    bin::put<std::uint32_t>(os, static_cast<std::uint32_t>(x.channels));
    bin::put<std::uint64_t>(os, x.channel_hash);
    bin::put<std::uint64_t>(os, config_hash);
    bin::put<std::uint64_t>(os, x.release.id);
    bin::put(os, x.release.lat);
    bin::put(os, x.release.lon);
    bin::put(os, x.release.altitude);
    bin::put(os, x.release.time);
    std::vector<float> f(x.values.begin(), x.values.end());
    bin::write_bytes(os, f.data(), f.size() * sizeof(float));
    if (!os) throw IoError("write failed for " + path.string());
}

FeatureTensor read_features(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string());
    const std::string what = path.string();
    char magic[4];
    bin::read_bytes(is, magic, 4, what);
    if (std::string_view(magic, 4) != "FTR1") throw IoError(what + ": bad magic, expected FTR1");
    if (bin::get<std::uint32_t>(is, what) != 1) throw IoError(what + ": unsupported FTR1 version");
    FeatureTensor x;
    x.side = bin::get<std::uint32_t>(is, what);
    x.channels = bin::get<std::uint32_t>(is, what);
    x.channel_hash = bin::get<std::uint64_t>(is, what);
    (void)bin::get<std::uint64_t>(is, what);  // config hash
    x.release.id = bin::get<std::uint64_t>(is, what);
    x.release.lat = bin::get<double>(is, what);
    x.release.lon = bin::get<double>(is, what);
    x.release.altitude = bin::get<double>(is, what);
    x.release.time = bin::get<double>(is, what);
    std::vector<float> f(x.cells() * x.channels);
    bin::read_bytes(is, f.data(), f.size() * sizeof(float), what);
    x.values.assign(f.begin(), f.end());
    return x;
}

}  // namespace fpuq
