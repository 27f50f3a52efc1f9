#include "fpuq/synthmet.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include "fpuq/common.hpp"

namespace fpuq {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct Harmonic {
    double kx = 0.0;  // rad per degree of longitude
    double ky = 0.0;  // rad per degree of latitude
    double omega = 0.0;  // rad per hour
    double phase = 0.0;
    double tilt = 0.0;   // rad per unit ln(z / z_ref)
    double amplitude = 0.0;
};

std::vector<Harmonic> draw_harmonics(const MetConfig& cfg, const GridSpec& grid) {
    std::mt19937_64 rng(derive_seed(cfg.seed, 1));
    std::uniform_int_distribution<int> wave(-3, 3);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double span_x = grid.n_lon * grid.d_lon;
    const double span_y = grid.n_lat * grid.d_lat;

    std::vector<Harmonic> modes(cfg.n_modes);
    double weight_sum = 0.0;
    for (auto& m : modes) {
        int nx = 0, ny = 0;
        while (nx == 0 && ny == 0) {
            nx = wave(rng);
            ny = wave(rng);
        }
        m.kx = kTwoPi * nx / span_x;
        m.ky = kTwoPi * ny / span_y;
        m.omega = kTwoPi / cfg.period_h * (0.5 + unit(rng));
        m.phase = kTwoPi * unit(rng);
        m.tilt = unit(rng) - 0.5;
        m.amplitude = 0.5 + unit(rng);
        weight_sum += m.amplitude;
    }
    for (auto& m : modes) m.amplitude *= cfg.perturbation_amplitude / weight_sum;
    return modes;
}

void generate_statics(const MetConfig& cfg, MetField& met) {
    const GridSpec& g = met.grid;
    std::mt19937_64 rng(derive_seed(cfg.seed, 2));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double span_x = g.n_lon * g.d_lon;
    const double span_y = g.n_lat * g.d_lat;

    // A north-south ridge near the western edge, a few isolated hills, and a
    // wavy coastline towards the east with ocean beyond it.
    const double ridge_x = span_x * (0.08 + 0.06 * unit(rng));
    const double ridge_wave = kTwoPi * unit(rng);
    const double ridge_height = 2000.0 + 1500.0 * unit(rng);
    struct Hill {
        double x, y, radius, height;
    };
    std::vector<Hill> hills(3);
    for (auto& h : hills) {
        h.x = span_x * (0.2 + 0.6 * unit(rng));
        h.y = span_y * unit(rng);
        h.radius = span_x * (0.03 + 0.05 * unit(rng));
        h.height = 300.0 + 900.0 * unit(rng);
    }
    const double coast_x = span_x * (0.82 + 0.06 * unit(rng));
    const double coast_phase = kTwoPi * unit(rng);

    met.terrain.assign(g.size(), 0.0);
    met.land.assign(g.size(), 0);
    for (std::size_t i = 0; i < g.n_lat; ++i) {
        const double y = i * g.d_lat;
        const double rx = ridge_x + 0.03 * span_x * std::sin(kTwoPi * y / span_y + ridge_wave);
        const double cx = coast_x + 0.05 * span_x * std::sin(2.0 * kTwoPi * y / span_y + coast_phase);
        for (std::size_t j = 0; j < g.n_lon; ++j) {
            const double x = j * g.d_lon;
            const std::size_t k = g.index(i, j);
            if (x >= cx) continue;
            met.land[k] = 1;
            const double dr = (x - rx) / (0.04 * span_x);
            double h = ridge_height * std::exp(-dr * dr);
            for (const auto& hill : hills) {
                const double dx = (x - hill.x) / hill.radius;
                const double dy = (y - hill.y) / hill.radius;
                h += hill.height * std::exp(-(dx * dx + dy * dy));
            }
            met.terrain[k] = h;
        }
    }
}

}  // namespace

std::vector<double> MetConfig::default_levels() {
    std::vector<double> levels(7);
    const double lo = std::log(100.0), hi = std::log(18000.0);
    for (std::size_t k = 0; k < levels.size(); ++k) {
        levels[k] = std::exp(lo + (hi - lo) * static_cast<double>(k) / 6.0);
    }
    levels.front() = 100.0;
    levels.back() = 18000.0;
    return levels;
}

double MetConfig::wind_bound() const {
    const double top = levels.empty() ? z_ref : std::max(levels.back(), z_ref);
    const double bottom = levels.empty() ? z_ref : std::min(levels.front(), z_ref);
    const double scale = std::max(std::pow(top / z_ref, shear_exponent),
                                  std::pow(bottom / z_ref, shear_exponent));
    return std::abs(base_zonal) * scale + perturbation_amplitude;
}

void MetConfig::validate() const {
    if (!(perturbation_amplitude >= 0.0)) throw ValidationError("met: perturbation_amplitude must be >= 0");
    if (!(period_h > 0.0)) throw ValidationError("met: period_h must be > 0");
    if (!(time_step_h > 0.0)) throw ValidationError("met: time_step_h must be > 0");
    if (!(z_ref > 0.0)) throw ValidationError("met: z_ref must be > 0");
    if (!std::isfinite(base_zonal) || !std::isfinite(shear_exponent))
        throw ValidationError("met: base_zonal and shear_exponent must be finite");
    if (levels.empty()) throw ValidationError("met: at least one level required");
    for (std::size_t k = 0; k < levels.size(); ++k) {
        if (!(levels[k] > 0.0)) throw ValidationError("met: levels must be positive");
        if (k > 0 && !(levels[k] > levels[k - 1])) throw ValidationError("met: levels must be strictly increasing");
    }
    if (wind_bound() > max_wind) {
        throw ValidationError("met: configuration can produce winds up to " + std::to_string(wind_bound()) +
                              " m/s, above max_wind " + std::to_string(max_wind));
    }
}

void MetField::validate() const {
    grid.validate();
    if (levels.empty() || times.empty()) throw ValidationError("met field needs levels and times");
    for (std::size_t k = 1; k < levels.size(); ++k)
        if (!(levels[k] > levels[k - 1])) throw ValidationError("met levels must be strictly increasing");
    for (std::size_t k = 1; k < times.size(); ++k)
        if (!(times[k] > times[k - 1])) throw ValidationError("met times must be strictly increasing");
    const std::size_t n = times.size() * levels.size() * grid.size();
    if (u.size() != n || v.size() != n) throw ValidationError("met wind arrays have the wrong size");
    if (terrain.size() != grid.size() || land.size() != grid.size())
        throw ValidationError("met static arrays have the wrong size");
}

MetField generate_met(const MetConfig& config, const GridSpec& grid, TimeRange range) {
    config.validate();
    grid.validate();
    if (!(range.end >= range.start) || !std::isfinite(range.start) || !std::isfinite(range.end)) {
        throw ValidationError("met: empty time range");
    }

    MetField met;
    met.grid = grid;
    met.levels = config.levels;
    for (double t = range.start;; t += config.time_step_h) {
        met.times.push_back(t);
        if (t >= range.end) break;
    }
    const auto modes = draw_harmonics(config, grid);

    const std::size_t n = met.times.size() * met.levels.size() * grid.size();
    met.u.assign(n, 0.0);
    met.v.assign(n, 0.0);
    for (std::size_t t = 0; t < met.times.size(); ++t) {
        const double time = met.times[t];
        for (std::size_t l = 0; l < met.levels.size(); ++l) {
            const double logz = std::log(met.levels[l] / config.z_ref);
            const double mean_u = config.base_zonal * std::exp(config.shear_exponent * logz);
            for (std::size_t i = 0; i < grid.n_lat; ++i) {
                const double y = i * grid.d_lat;
                for (std::size_t j = 0; j < grid.n_lon; ++j) {
                    const double x = j * grid.d_lon;
                    double u = mean_u, v = 0.0;
                    // psi = A/|k| sin(k.x - omega t + phase + tilt ln z); u = -dpsi/dy, v = dpsi/dx
                    for (const auto& m : modes) {
                        const double knorm = std::hypot(m.kx, m.ky);
                        const double c = std::cos(m.kx * x + m.ky * y - m.omega * time + m.phase + m.tilt * logz);
                        u -= m.amplitude * m.ky / knorm * c;
                        v += m.amplitude * m.kx / knorm * c;
                    }
                    const std::size_t k = met.offset(t, l, i, j);
                    met.u[k] = u;
                    met.v[k] = v;
                }
            }
        }
    }
    generate_statics(config, met);
    return met;
}

namespace {

struct Bracket {
    std::size_t lo = 0;
    std::size_t hi = 0;
    double w = 0.0;  // weight of hi
};

inline Bracket bracket_index(double pos, std::size_t n) {
    if (n == 1 || pos <= 0.0) return {0, 0, 0.0};
    const double last = static_cast<double>(n - 1);
    if (pos >= last) return {n - 1, n - 1, 0.0};
    const auto lo = static_cast<std::size_t>(pos);
    return {lo, lo + 1, pos - static_cast<double>(lo)};
}

inline Bracket bracket_sorted(const std::vector<double>& knots, double x, bool log_axis) {
    if (x <= knots.front()) return {0, 0, 0.0};
    if (x >= knots.back()) return {knots.size() - 1, knots.size() - 1, 0.0};
    const auto it = std::upper_bound(knots.begin(), knots.end(), x);
    const std::size_t hi = static_cast<std::size_t>(it - knots.begin());
    const std::size_t lo = hi - 1;
    double w;
    if (log_axis) {
        w = (std::log(x) - std::log(knots[lo])) / (std::log(knots[hi]) - std::log(knots[lo]));
    } else {
        w = (x - knots[lo]) / (knots[hi] - knots[lo]);
    }
    return {lo, hi, w};
}

}  // namespace

WindSample wind_at_unchecked(const MetField& met, double lat, double lon, double height_m,
                             double time_h) {
    const GridSpec& g = met.grid;
    const Bracket br = bracket_index(g.row_of(lat), g.n_lat);
    const Bracket bc = bracket_index(g.col_of(lon), g.n_lon);
    const Bracket bz = bracket_sorted(met.levels, height_m, true);
    const Bracket bt = bracket_sorted(met.times, time_h, false);

    WindSample out;
    const std::size_t ts[2] = {bt.lo, bt.hi};
    const double tw[2] = {1.0 - bt.w, bt.w};
    const std::size_t ls[2] = {bz.lo, bz.hi};
    const double lw[2] = {1.0 - bz.w, bz.w};
    const double rw0 = 1.0 - br.w, cw0 = 1.0 - bc.w;
    for (int a = 0; a < 2; ++a) {
        if (tw[a] == 0.0) continue;
        for (int b = 0; b < 2; ++b) {
            const double w = tw[a] * lw[b];
            if (w == 0.0) continue;
            const std::size_t o00 = met.offset(ts[a], ls[b], br.lo, bc.lo);
            const std::size_t o01 = met.offset(ts[a], ls[b], br.lo, bc.hi);
            const std::size_t o10 = met.offset(ts[a], ls[b], br.hi, bc.lo);
            const std::size_t o11 = met.offset(ts[a], ls[b], br.hi, bc.hi);
            const double u = rw0 * (cw0 * met.u[o00] + bc.w * met.u[o01]) +
                             br.w * (cw0 * met.u[o10] + bc.w * met.u[o11]);
            const double v = rw0 * (cw0 * met.v[o00] + bc.w * met.v[o01]) +
                             br.w * (cw0 * met.v[o10] + bc.w * met.v[o11]);
            out.u += w * u;
            out.v += w * v;
        }
    }
    return out;
}

WindSample wind_at(const MetField& met, double lat, double lon, double height_m, double time_h) {
    if (!met.grid.contains(lat, lon)) {
        throw ValidationError("wind_at: position (" + std::to_string(lat) + ", " + std::to_string(lon) +
                              ") outside the met grid");
    }
    return wind_at_unchecked(met, lat, lon, height_m, time_h);
}

SurfaceWind wind_direction(WindSample w) {
    SurfaceWind s;
    s.speed = std::hypot(w.u, w.v);
    if (s.speed < kCalmSpeed) {
        s.calm = true;
        s.direction = 0.0;
        return s;
    }
    double deg = std::atan2(-w.u, -w.v) * 180.0 / std::numbers::pi;
    if (deg < 0.0) deg += 360.0;
    if (deg >= 360.0) deg -= 360.0;
    s.direction = deg;
    return s;
}

SurfaceWind surface_wind(const MetField& met, const Release& release) {
    return wind_direction(wind_at(met, release.lat, release.lon, met.levels.front(), release.time));
}

void write_met(const std::filesystem::path& path, const MetField& met) {
    met.validate();
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write " + path.string());
    os.write("MET1", 4);
    bin::put<std::uint32_t>(os, 1);
    bin::put<std::uint32_t>(os, static_cast<std::uint32_t>(met.grid.n_lat));
    bin::put<std::uint32_t>(os, static_cast<std::uint32_t>(met.grid.n_lon));
    bin::put<std::uint32_t>(os, static_cast<std::uint32_t>(met.levels.size()));
    bin::put<std::uint32_t>(os, static_cast<std::uint32_t>(met.times.size()));
    bin::put(os, met.grid.lat0);
    bin::put(os, met.grid.lon0);
    bin::put(os, met.grid.d_lat);
    bin::put(os, met.grid.d_lon);
    bin::put<std::uint64_t>(os, met.config_hash);
    auto put_all = [&os](const std::vector<double>& xs) {
        bin::write_bytes(os, xs.data(), xs.size() * sizeof(double));
    };
    put_all(met.levels);
    put_all(met.times);
    put_all(met.u);
    put_all(met.v);
    put_all(met.terrain);
    std::vector<double> land(met.land.begin(), met.land.end());
    put_all(land);
    if (!os) throw IoError("write failed for " + path.string());
}

MetField read_met(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string());
    const std::string what = path.string();
    char magic[4];
    bin::read_bytes(is, magic, 4, what);
    if (std::string_view(magic, 4) != "MET1") throw IoError(what + ": bad magic, expected MET1");
    if (bin::get<std::uint32_t>(is, what) != 1) throw IoError(what + ": unsupported MET1 version");
    MetField met;
    met.grid.n_lat = bin::get<std::uint32_t>(is, what);
    met.grid.n_lon = bin::get<std::uint32_t>(is, what);
    const std::size_t n_levels = bin::get<std::uint32_t>(is, what);
    const std::size_t n_times = bin::get<std::uint32_t>(is, what);
    met.grid.lat0 = bin::get<double>(is, what);
    met.grid.lon0 = bin::get<double>(is, what);
    met.grid.d_lat = bin::get<double>(is, what);
    met.grid.d_lon = bin::get<double>(is, what);
    met.config_hash = bin::get<std::uint64_t>(is, what);
    auto get_all = [&](std::size_t n) {
        std::vector<double> xs(n);
        bin::read_bytes(is, xs.data(), n * sizeof(double), what);
        return xs;
    };
    met.levels = get_all(n_levels);
    met.times = get_all(n_times);
    const std::size_t n = n_times * n_levels * met.grid.size();
    met.u = get_all(n);
    met.v = get_all(n);
    met.terrain = get_all(met.grid.size());
    const auto land = get_all(met.grid.size());
    met.land.assign(land.begin(), land.end());
    try {
        met.validate();
    } catch (const ValidationError& e) {
        throw IoError(what + ": " + e.what());
    }
    return met;
}

}  // namespace fpuq
