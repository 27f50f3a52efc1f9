#include "fpuq/analysis.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "fpuq/common.hpp"
#include "fpuq/ensemble.hpp"

namespace fpuq {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

void check_aligned(std::size_t a, std::size_t b, const char* what) {
    if (a != b)
        throw ValidationError(std::string(what) + ": shape mismatch (" + std::to_string(a) + " vs " + std::to_string(b) + ")");
}

std::ofstream open_csv(const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write " + path.string());
    return os;
}

}  // namespace

std::string csv_number(double v) {
    if (std::isnan(v)) return "";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

nlohmann::json MetricReport::to_json() const {
    nlohmann::json j = {{"nmae", nmae}, {"mse", mse}, {"accuracy", accuracy}, {"iou", iou}};
    if (r2_defined)
        j["r2"] = r2;
    else
        j["r2"] = nullptr;
    return j;
}

MetricReport metrics(std::span<const double> pred, std::span<const double> truth, double active_tau) {
    check_aligned(pred.size(), truth.size(), "metrics");
    if (!std::isfinite(active_tau)) throw ValidationError("metrics: non-finite active_tau");
    MetricReport m;
    const std::size_t n = pred.size();
    if (n == 0) throw ValidationError("metrics: empty fields");
    double abs_err = 0.0, abs_t = 0.0, ss_res = 0.0, mean_t = 0.0;
    std::size_t agree = 0, inter = 0, uni = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = pred[i] - truth[i];
        abs_err += std::abs(d);
        abs_t += std::abs(truth[i]);
        ss_res += d * d;
        mean_t += truth[i];
        const bool a = pred[i] >= active_tau, b = truth[i] >= active_tau;
        agree += (a == b);
        inter += (a && b);
        uni += (a || b);
    }
    mean_t /= static_cast<double>(n);
    double ss_tot = 0.0;
    for (double t : truth) ss_tot += (t - mean_t) * (t - mean_t);
    m.nmae = abs_err / std::max(abs_t, 1e-12);
    m.mse = ss_res / static_cast<double>(n);
    m.accuracy = static_cast<double>(agree) / static_cast<double>(n);
    m.iou = uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
    if (ss_tot > 0.0) {
        m.r2 = 1.0 - ss_res / ss_tot;
    } else if (ss_res == 0.0) {
        m.r2 = 1.0;
    } else {
        m.r2 = kNan;
        m.r2_defined = false;
    }
    return m;
}

template <typename T>
void MetricAccumulator::add_values(std::span<const T> pred, std::span<const T> truth) {
    check_aligned(pred.size(), truth.size(), "metrics");
    if (!have_shift_ && !truth.empty()) {
        shift_ = static_cast<double>(truth[0]);
        have_shift_ = true;
    }
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double p = static_cast<double>(pred[i]), t = static_cast<double>(truth[i]);
        const double d = p - t;
        abs_err += std::abs(d);
        abs_truth += std::abs(t);
        sq_err += d * d;
        sum_t += t - shift_;
        sum_t2 += (t - shift_) * (t - shift_);
        const bool a = p >= tau_, b = t >= tau_;
        agree += (a == b);
        inter += (a && b);
        uni += (a || b);
    }
    n_ += pred.size();
}

template void MetricAccumulator::add_values<float>(std::span<const float>, std::span<const float>);
template void MetricAccumulator::add_values<double>(std::span<const double>, std::span<const double>);

void MetricAccumulator::add(std::span<const double> pred, std::span<const double> truth) { add_values(pred, truth); }

MetricReport MetricAccumulator::report() const {
    if (n_ == 0) throw ValidationError("metrics: no values accumulated");
    MetricReport m;
    const double n = static_cast<double>(n_);
    m.nmae = abs_err / std::max(abs_truth, 1e-12);
    m.mse = sq_err / n;
    m.accuracy = static_cast<double>(agree) / n;
    m.iou = uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
    const double ss_tot = std::max(sum_t2 - sum_t * sum_t / n, 0.0);
    if (ss_tot > 0.0) {
        m.r2 = 1.0 - sq_err / ss_tot;
    } else if (sq_err == 0.0) {
        m.r2 = 1.0;
    } else {
        m.r2 = kNan;
        m.r2_defined = false;
    }
    return m;
}

// --- wind rose ---------------------------------------------------------------

std::size_t wind_sector(double direction_deg) {
    if (!std::isfinite(direction_deg)) throw ValidationError("wind_sector: non-finite direction");
    double d = std::fmod(direction_deg + kSectorWidth / 2.0, 360.0);
    if (d < 0.0) d += 360.0;
    const auto k = static_cast<std::size_t>(std::floor(d / kSectorWidth));
    return k % kRoseSectors;
}

std::size_t WindRose::total() const { return std::accumulate(counts.begin(), counts.end(), calm); }

double WindRose::mean_stat(std::size_t sector) const {
    if (!has_stat || counts[sector] == 0) return kNan;
    return stat_sum[sector] / static_cast<double>(counts[sector]);
}

WindRose wind_rose(const std::vector<Release>& releases, const MetField& met, std::span<const double> attach) {
    if (!attach.empty()) check_aligned(attach.size(), releases.size(), "wind_rose attach");
    WindRose rose;
    rose.has_stat = !attach.empty();
    for (std::size_t i = 0; i < releases.size(); ++i) {
        const auto& r = releases[i];
        const SurfaceWind w = surface_wind(met, r);
        const double stat = attach.empty() ? 0.0 : attach[i];
        if (w.calm) {
            ++rose.calm;
            rose.calm_stat_sum += stat;
            continue;
        }
        const std::size_t k = wind_sector(w.direction);
        ++rose.counts[k];
        rose.stat_sum[k] += stat;
    }
    return rose;
}

// --- series and aggregates ----------------------------------------------------

std::vector<SeriesPoint> temporal_cv_series(std::vector<ScalarMembers> records, double eps) {
    std::stable_sort(records.begin(), records.end(), [](const ScalarMembers& a, const ScalarMembers& b) {
        return a.time < b.time || (a.time == b.time && a.release_id < b.release_id);
    });
    std::vector<SeriesPoint> out;
    out.reserve(records.size());
    for (const auto& r : records) {
        const auto s = ensemble_stats_scalar(r.members, eps);
        out.push_back({r.time, r.release_id, s.cv});
    }
    return out;
}

std::string agg_stat_name(AggStat s) {
    switch (s) {
        case AggStat::truth: return "truth";
        case AggStat::mean: return "mean";
        case AggStat::stddev: return "std";
        case AggStat::cv: return "cv";
        case AggStat::error: return "error";
        case AggStat::abs_error: return "abs_error";
    }
    return "?";
}

SpatialAggregator::SpatialAggregator(GridSpec grid) : grid_(grid) {
    grid_.validate();
    for (auto& s : sums_) s.assign(grid_.size(), 0.0);
    count_.assign(grid_.size(), 0);
}

void SpatialAggregator::add(const ReleaseFields& f) {
    const std::size_t n = grid_.size();
    for (const auto* v : {&f.truth, &f.mean, &f.stddev, &f.cv, &f.error}) check_aligned(v->size(), n, "spatial_aggregate");
    check_aligned(f.mask.size(), n, "spatial_aggregate mask");
    for (std::size_t c = 0; c < n; ++c) {
        if (!f.mask[c]) continue;
        ++count_[c];
        sums_[0][c] += f.truth[c];
        sums_[1][c] += f.mean[c];
        sums_[2][c] += f.stddev[c];
        sums_[3][c] += f.cv[c];
        sums_[4][c] += f.error[c];
        sums_[5][c] += std::abs(f.error[c]);
    }
}

SpatialAggregate SpatialAggregator::result() const {
    SpatialAggregate agg;
    agg.grid = grid_;
    agg.count = count_;
    for (std::size_t s = 0; s < sums_.size(); ++s) {
        agg.values[s].resize(grid_.size());
        for (std::size_t c = 0; c < grid_.size(); ++c)
            agg.values[s][c] = count_[c] == 0 ? kNan : sums_[s][c] / static_cast<double>(count_[c]);
    }
    return agg;
}

SpatialAggregate spatial_aggregate(const std::vector<ReleaseFields>& fields, const GridSpec& grid) {
    SpatialAggregator acc(grid);
    for (const auto& f : fields) acc.add(f);
    return acc.result();
}

std::vector<std::uint8_t> patch_mask(const GridSpec& grid, const Release& release, std::size_t side) {
    std::vector<double> ones(grid.size(), 1.0);
    const Patch p = crop_patch(grid, ones, release, side);
    const auto window = embed_patch(p, grid);
    std::vector<std::uint8_t> mask(grid.size());
    for (std::size_t c = 0; c < mask.size(); ++c) mask[c] = window[c] > 0.0;
    return mask;
}

GridSpec coarsen(const GridSpec& grid, std::size_t factor) {
    if (factor == 0) throw ValidationError("coarsen: factor must be >= 1");
    GridSpec g;
    g.n_lat = (grid.n_lat + factor - 1) / factor;
    g.n_lon = (grid.n_lon + factor - 1) / factor;
    g.d_lat = grid.d_lat * static_cast<double>(factor);
    g.d_lon = grid.d_lon * static_cast<double>(factor);
    // Keep the southern/western edges aligned with the fine grid.
    g.lat0 = grid.lat0 - grid.d_lat / 2.0 + g.d_lat / 2.0;
    g.lon0 = grid.lon0 - grid.d_lon / 2.0 + g.d_lon / 2.0;
    g.validate();
    return g;
}

CoarseMap scatter_to_grid(const std::vector<PointValue>& points, const GridSpec& coarse) {
    coarse.validate();
    CoarseMap map;
    map.grid = coarse;
    std::vector<double> sum(coarse.size(), 0.0);
    map.count.assign(coarse.size(), 0);
    for (const auto& p : points) {
        const auto cell = coarse.cell_of(p.lat, p.lon);
        if (!cell) continue;
        const std::size_t k = coarse.index(static_cast<std::size_t>(cell->row), static_cast<std::size_t>(cell->col));
        sum[k] += p.value;
        ++map.count[k];
    }
    map.value.resize(coarse.size());
    for (std::size_t k = 0; k < sum.size(); ++k)
        map.value[k] = map.count[k] == 0 ? kNan : sum[k] / static_cast<double>(map.count[k]);
    return map;
}

std::vector<double> average_ranks(std::span<const double> x) {
    std::vector<std::size_t> order(x.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    std::vector<double> rank(x.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
        const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) rank[order[k]] = r;
        i = j + 1;
    }
    return rank;
}

Correlation spread_error_correlation(std::span<const double> spread, std::span<const double> abs_error) {
    check_aligned(spread.size(), abs_error.size(), "spread_error_correlation");
    std::vector<double> a, b;
    for (std::size_t i = 0; i < spread.size(); ++i) {
        if (std::isfinite(spread[i]) && std::isfinite(abs_error[i])) {
            a.push_back(spread[i]);
            b.push_back(abs_error[i]);
        }
    }
    if (a.size() < 10)
        throw ValidationError("spread_error_correlation: need >= 10 valid points, got " + std::to_string(a.size()));
    const auto ra = average_ranks(a), rb = average_ranks(b);
    const double n = static_cast<double>(a.size());
    const double mean = (n + 1.0) / 2.0;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        sab += (ra[i] - mean) * (rb[i] - mean);
        saa += (ra[i] - mean) * (ra[i] - mean);
        sbb += (rb[i] - mean) * (rb[i] - mean);
    }
    Correlation c;
    c.n = a.size();
    c.rho = (saa > 0.0 && sbb > 0.0) ? std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0) : kNan;
    return c;
}

// --- CSV writers ----------------------------------------------------------------

void write_map_csv(const std::filesystem::path& path, const GridSpec& grid, std::span<const double> value,
                   std::span<const std::size_t> count) {
    check_aligned(value.size(), grid.size(), "write_map_csv");
    check_aligned(count.size(), grid.size(), "write_map_csv");
    auto os = open_csv(path);
    os << "lat,lon,value,count\n";
    for (std::size_t r = 0; r < grid.n_lat; ++r)
        for (std::size_t c = 0; c < grid.n_lon; ++c) {
            const std::size_t k = grid.index(r, c);
            os << csv_number(grid.lat_of(static_cast<double>(r))) << ',' << csv_number(grid.lon_of(static_cast<double>(c)))
               << ',' << csv_number(value[k]) << ',' << count[k] << '\n';
        }
    if (!os) throw IoError("write failed: " + path.string());
}

void write_rose_csv(const std::filesystem::path& path, const WindRose& rose) {
    auto os = open_csv(path);
    os << "sector_deg,count,mean_stat\n";
    for (std::size_t k = 0; k < kRoseSectors; ++k)
        os << csv_number(static_cast<double>(k) * kSectorWidth) << ',' << rose.counts[k] << ',' << csv_number(rose.mean_stat(k))
           << '\n';
    if (!os) throw IoError("write failed: " + path.string());
}

void write_series_csv(const std::filesystem::path& path, const std::vector<SeriesPoint>& series) {
    auto os = open_csv(path);
    os << "time,release_id,value\n";
    for (const auto& p : series) os << csv_number(p.time) << ',' << p.release_id << ',' << csv_number(p.value) << '\n';
    if (!os) throw IoError("write failed: " + path.string());
}

}  // namespace fpuq
