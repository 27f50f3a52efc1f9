#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>

#include "fpuq/analysis.hpp"
#include "fpuq/common.hpp"

using namespace fpuq;
namespace fs = std::filesystem;

namespace {

MetField constant_met(const GridSpec& g, double u, double v) {
    MetField met;
    met.grid = g;
    met.levels = {100.0, 1000.0};
    met.times = {0.0, 100.0};
    met.u.assign(2 * 2 * g.size(), u);
    met.v.assign(2 * 2 * g.size(), v);
    met.terrain.assign(g.size(), 0.0);
    met.land.assign(g.size(), 0);
    return met;
}

// Brute-force Spearman: count-based average ranks, then Pearson on ranks.
double spearman_oracle(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t n = x.size();
    auto ranks = [n](const std::vector<double>& v) {
        std::vector<double> r(n);
        for (std::size_t i = 0; i < n; ++i) {
            double less = 0, equal = 0;
            for (std::size_t j = 0; j < n; ++j) {
                if (v[j] < v[i]) ++less;
                if (v[j] == v[i]) ++equal;
            }
            r[i] = less + (equal + 1.0) / 2.0;
        }
        return r;
    };
    const auto rx = ranks(x), ry = ranks(y);
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += rx[i];
        my += ry[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    return sxy / std::sqrt(sxx * syy);
}

}  // namespace

TEST_CASE("perfect prediction metrics") {
    const std::vector<double> t = {0.0, 0.5, 2.0, 3.0, 0.0};
    const auto m = metrics(t, t, 1.0);
    CHECK(m.nmae == 0.0);
    CHECK(m.mse == 0.0);
    CHECK(m.accuracy == 1.0);
    CHECK(m.iou == 1.0);
    CHECK(m.r2 == 1.0);
    CHECK(m.r2_defined);
}

TEST_CASE("constant-mean prediction has R2 = 0") {
    const std::vector<double> t = {1.0, 2.0, 3.0, 6.0};
    const std::vector<double> p(4, 3.0);
    const auto m = metrics(p, t, 2.5);
    CHECK(std::abs(m.r2) <= 1e-15);
    CHECK(m.mse == doctest::Approx(3.5));
    CHECK(m.nmae == doctest::Approx(6.0 / 12.0));
}

TEST_CASE("IoU 1/3 example and accuracy") {
    std::vector<double> a(8, 0.0), b(8, 0.0);
    for (int k : {0, 1, 2, 3}) a[k] = 1.0;
    for (int k : {2, 3, 4, 5}) b[k] = 1.0;
    const auto m = metrics(a, b, 0.5);
    CHECK(m.iou == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    CHECK(m.accuracy == doctest::Approx(4.0 / 8.0));
    CHECK(metrics(std::vector<double>(4, 0.0), std::vector<double>(4, 0.0), 0.5).iou == 1.0);
}

TEST_CASE("R2 undefined for constant truth with a wrong prediction") {
    const std::vector<double> t(4, 2.0), p = {2.0, 2.0, 2.0, 3.0};
    const auto m = metrics(p, t, 1.0);
    CHECK_FALSE(m.r2_defined);
    CHECK(std::isnan(m.r2));
    CHECK(m.to_json().at("r2").is_null());
}

TEST_CASE("metric ranges and shape check") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 3.0);
    std::vector<double> p(200), t(200);
    for (auto& x : p) x = u(rng);
    for (auto& x : t) x = u(rng);
    const auto m = metrics(p, t, 1.0);
    CHECK(m.mse >= 0.0);
    CHECK(m.accuracy >= 0.0);
    CHECK(m.accuracy <= 1.0);
    CHECK(m.iou >= 0.0);
    CHECK(m.iou <= 1.0);
    CHECK(m.r2 <= 1.0);
    const std::vector<double> short_v = {1.0};
    CHECK_THROWS_AS(metrics(p, short_v, 1.0), ValidationError);
    CHECK_THROWS_AS(metrics(p, t, NAN), ValidationError);
}

TEST_CASE("binarized metrics commute with a monotone transform") {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0.0, 5.0);
    std::vector<double> p(300), t(300);
    for (auto& x : p) x = u(rng) < 1.5 ? 0.0 : u(rng);
    for (auto& x : t) x = u(rng) < 1.5 ? 0.0 : u(rng);
    const double tau = 1.7, eps = 1e-9;
    std::vector<double> lp(p.size()), lt(t.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
        lp[i] = std::log(p[i] + eps);
        lt[i] = std::log(t[i] + eps);
    }
    const auto a = metrics(p, t, tau), b = metrics(lp, lt, std::log(tau + eps));
    CHECK(a.iou == b.iou);
    CHECK(a.accuracy == b.accuracy);
}

TEST_CASE("accumulator equals metrics on the concatenation") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n(-8.0, 4.0);
    std::vector<double> all_p, all_t;
    MetricAccumulator acc(-6.0);
    for (int k = 0; k < 7; ++k) {
        std::vector<double> p(50 + k), t(50 + k);
        for (auto& x : p) x = n(rng);
        for (auto& x : t) x = n(rng);
        acc.add(p, t);
        all_p.insert(all_p.end(), p.begin(), p.end());
        all_t.insert(all_t.end(), t.begin(), t.end());
    }
    const auto a = acc.report(), b = metrics(all_p, all_t, -6.0);
    CHECK(acc.count() == all_p.size());
    CHECK(a.nmae == doctest::Approx(b.nmae).epsilon(1e-12));
    CHECK(a.mse == doctest::Approx(b.mse).epsilon(1e-12));
    CHECK(a.accuracy == b.accuracy);
    CHECK(a.iou == b.iou);
    CHECK(a.r2 == doctest::Approx(b.r2).epsilon(1e-10));

    MetricAccumulator fa(0.5);
    const std::vector<float> fp = {1.0f, 0.0f}, ft = {1.0f, 1.0f};
    fa.add_values<float>(fp, ft);
    CHECK(fa.report().iou == 0.5);
}

TEST_CASE("wind sector boundaries") {
    CHECK(wind_sector(0.0) == 0);
    CHECK(wind_sector(11.24) == 0);
    CHECK(wind_sector(11.25) == 1);
    CHECK(wind_sector(348.75) == 0);
    CHECK(wind_sector(348.74) == 15);
    CHECK(wind_sector(90.0) == 4);
    CHECK(wind_sector(101.24) == 4);
    CHECK(wind_sector(101.26) == 5);
    CHECK(wind_sector(359.99) == 0);
    // partition of [0, 360)
    std::array<int, 16> hits{};
    for (int k = 0; k < 36000; ++k) ++hits[wind_sector(k * 0.01)];
    for (int h : hits) CHECK(h == 2250);
}

TEST_CASE("wind rose: easterly winds fill the 90 degree sector; calm bin separate") {
    const GridSpec g{8, 8, 0.0, 0.0, 1.0, 1.0};
    const MetField easterly = constant_met(g, -5.0, 0.0);
    std::vector<Release> rs;
    for (int k = 0; k < 12; ++k) rs.push_back({static_cast<std::uint64_t>(k), 1.0 + 0.4 * k, 2.0, 50.0, 5.0 * k});
    std::vector<double> stat(12);
    for (int k = 0; k < 12; ++k) stat[k] = k;
    const WindRose rose = wind_rose(rs, easterly, stat);
    CHECK(rose.counts[4] == 12);
    CHECK(rose.total() == 12);
    CHECK(rose.calm == 0);
    CHECK(rose.mean_stat(4) == doctest::Approx(5.5));
    CHECK(std::isnan(rose.mean_stat(0)));

    const WindRose calm = wind_rose(rs, constant_met(g, 0.0, 0.0));
    CHECK(calm.calm == 12);
    std::size_t binned = 0;
    for (auto c : calm.counts) binned += c;
    CHECK(binned == 0);
    CHECK(calm.total() == 12);
}

TEST_CASE("temporal CV series") {
    std::vector<ScalarMembers> recs = {{3, 20.0, {1, 1, 3, 3}}, {1, 10.0, {2, 2, 2, 2}}, {2, 20.0, {4, 4, 4, 4}}};
    const auto s = temporal_cv_series(recs, 1e-9);
    REQUIRE(s.size() == 3);
    CHECK(s[0].release_id == 1);
    CHECK(s[0].value == 0.0);
    CHECK(s[1].release_id == 2);
    CHECK(s[2].release_id == 3);
    CHECK(s[2].value == doctest::Approx(1.0 / (2.0 + 1e-9)).epsilon(1e-15));
}

TEST_CASE("spatial aggregate: single, disjoint, and averaged releases") {
    const GridSpec g{2, 2, 0.0, 0.0, 1.0, 1.0};
    auto make = [](double v, std::vector<std::uint8_t> mask) {
        ReleaseFields f;
        f.truth = f.mean = f.stddev = f.cv = std::vector<double>(4, v);
        f.error = std::vector<double>(4, -v);
        f.mask = std::move(mask);
        return f;
    };
    const auto one = spatial_aggregate({make(2.0, {1, 1, 1, 1})}, g);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(one.field(AggStat::mean)[i] == 2.0);
        CHECK(one.field(AggStat::abs_error)[i] == 2.0);
        CHECK(one.count[i] == 1);
    }
    const auto disjoint = spatial_aggregate({make(2.0, {1, 1, 0, 0}), make(4.0, {0, 0, 1, 0})}, g);
    CHECK(disjoint.field(AggStat::truth)[0] == 2.0);
    CHECK(disjoint.field(AggStat::truth)[2] == 4.0);
    CHECK(disjoint.count[2] == 1);
    CHECK(disjoint.count[3] == 0);
    CHECK(std::isnan(disjoint.field(AggStat::truth)[3]));
    const auto both = spatial_aggregate({make(2.0, {1, 1, 1, 1}), make(4.0, {1, 1, 1, 1})}, g);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(both.field(AggStat::mean)[i] == 3.0);
        CHECK(both.field(AggStat::error)[i] == -3.0);
    }
    CHECK(agg_stat_name(AggStat::stddev) == "std");
}

TEST_CASE("patch mask and coarsening") {
    const GridSpec g;
    const auto mask = patch_mask(g, {1, g.lat_of(0), g.lon_of(0), 50, 0}, 50);
    std::size_t on = 0;
    for (auto m : mask) on += m;
    CHECK(on == 625);
    const GridSpec c = coarsen(g, 4);
    CHECK(c.n_lat == 16);
    CHECK(c.n_lon == 16);
    CHECK(c.d_lat == doctest::Approx(1.2));
    // south-west edges coincide
    CHECK(c.lat0 - c.d_lat / 2 == doctest::Approx(g.lat0 - g.d_lat / 2));
    CHECK(c.lon0 - c.d_lon / 2 == doctest::Approx(g.lon0 - g.d_lon / 2));
    CHECK_THROWS_AS(coarsen(g, 0), ValidationError);
}

TEST_CASE("scatter to grid") {
    const GridSpec c{2, 2, 0.0, 0.0, 1.0, 1.0};
    const auto m = scatter_to_grid({{0.1, 0.1, 1.0}, {-0.2, 0.3, 5.0}, {1.0, 1.0, 7.0}, {9.0, 9.0, 100.0}}, c);
    CHECK(m.value[0] == 3.0);
    CHECK(m.count[0] == 2);
    CHECK(m.value[3] == 7.0);
    CHECK(std::isnan(m.value[1]));
    CHECK(m.count[1] == 0);
}

TEST_CASE("average ranks with a tie: 5-point hand-set sample") {
    const std::vector<double> x = {3.0, 1.0, 4.0, 1.0, 5.0};
    const auto r = average_ranks(x);
    CHECK(r == std::vector<double>{3.0, 1.5, 4.0, 1.5, 5.0});
}

TEST_CASE("Spearman against the brute-force oracle and edge cases") {
    std::vector<double> s = {0.3, 0.1, 0.4, 0.1, 0.5, 0.9, 0.2, 0.6, 0.5, 0.35};
    std::vector<double> e = {1.0, 2.0, 2.0, 0.5, 3.0, 4.0, 0.2, 2.0, 1.0, 0.0};
    const auto c = spread_error_correlation(s, e);
    CHECK(c.n == 10);
    CHECK(c.rho == doctest::Approx(spearman_oracle(s, e)).epsilon(1e-12));

    CHECK(spread_error_correlation(s, s).rho == doctest::Approx(1.0));
    std::vector<double> rev(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) rev[i] = 7.0 - s[i];
    CHECK(spread_error_correlation(s, rev).rho == doctest::Approx(-1.0));

    // invariant under increasing transforms
    std::vector<double> es(e.size());
    for (std::size_t i = 0; i < e.size(); ++i) es[i] = std::exp(3.0 * e[i]);
    CHECK(spread_error_correlation(s, es).rho == doctest::Approx(c.rho).epsilon(1e-12));

    // NaN cells are dropped; fewer than 10 remaining is rejected
    auto sn = s;
    sn.push_back(NAN);
    auto en = e;
    en.push_back(1.0);
    CHECK(spread_error_correlation(sn, en).n == 10);
    sn[0] = NAN;
    CHECK_THROWS_AS(spread_error_correlation(sn, en), ValidationError);

    std::mt19937_64 rng(9);
    std::normal_distribution<double> nd;
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> a(40), b(40);
        for (auto& v : a) v = std::round(nd(rng) * 3.0);
        for (auto& v : b) v = std::round(nd(rng) * 3.0);
        const double rho = spread_error_correlation(a, b).rho;
        CHECK(rho == doctest::Approx(spearman_oracle(a, b)).epsilon(1e-12));
        CHECK(rho >= -1.0);
        CHECK(rho <= 1.0);
    }
}

TEST_CASE("CSV writers") {
    const fs::path dir = fs::temp_directory_path() / "fpuq_test_analysis";
    fs::create_directories(dir);
    const GridSpec g{1, 2, 0.0, 0.0, 1.0, 1.0};
    const std::vector<double> v = {0.1, NAN};
    const std::vector<std::size_t> n = {3, 0};
    write_map_csv(dir / "map.csv", g, v, n);
    CHECK(read_text(dir / "map.csv") == "lat,lon,value,count\n0,0,0.1,3\n0,1,,0\n");

    WindRose rose;
    rose.counts[4] = 2;
    rose.stat_sum[4] = 3.0;
    rose.has_stat = true;
    write_rose_csv(dir / "rose.csv", rose);
    const std::string rt = read_text(dir / "rose.csv");
    CHECK(rt.rfind("sector_deg,count,mean_stat\n0,0,\n", 0) == 0);
    CHECK(rt.find("\n90,2,1.5\n") != std::string::npos);

    write_series_csv(dir / "s.csv", {{1.5, 7, 0.25}});
    CHECK(read_text(dir / "s.csv") == "time,release_id,value\n1.5,7,0.25\n");
    CHECK(csv_number(1e-300) == "1e-300");
    CHECK(csv_number(NAN).empty());
    fs::remove_all(dir);
}
