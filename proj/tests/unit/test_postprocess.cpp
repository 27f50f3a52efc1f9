#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>

#include "fpuq/common.hpp"
#include "fpuq/postprocess.hpp"

using namespace fpuq;
namespace fs = std::filesystem;

namespace {

std::vector<double> normal_pool(std::size_t n, double mu, double sd, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> d(mu, sd);
    std::vector<double> v(n);
    for (auto& x : v) x = d(rng);
    return v;
}

}  // namespace

TEST_CASE("threshold: below tau becomes zero, idempotent, tau >= 0") {
    std::vector<double> v = {0.0, 0.25, 0.5, 0.75, 1.0};
    threshold_values(v, 0.5);
    CHECK(v == std::vector<double>{0.0, 0.0, 0.5, 0.75, 1.0});
    auto again = v;
    threshold_values(again, 0.5);
    CHECK(again == v);
    std::vector<double> all = {2.0, 3.0};
    threshold_values(all, 1.0);
    CHECK(all == std::vector<double>{2.0, 3.0});
    CHECK_THROWS_AS(threshold_values(all, -1.0), ValidationError);

    const GridSpec g{1, 2, 0, 0, 1, 1};
    const Footprint fp(g, {}, {0.1, 0.3}, Space::linear);
    CHECK(threshold_footprint(fp, 0.2).values() == std::vector<double>{0.0, 0.3});
    CHECK_THROWS_AS(threshold_footprint(Footprint(g, {}, {0.1, 0.3}, Space::log), 0.2), ValidationError);
}

TEST_CASE("empirical quantile uses the nearest rank") {
    const std::vector<double> s = {1, 2, 3, 4, 5};
    CHECK(empirical_quantile(s, 0.0) == 1);
    CHECK(empirical_quantile(s, 0.5) == 3);
    CHECK(empirical_quantile(s, 1.0) == 5);
    CHECK(empirical_quantile(s, 0.3) == 2);  // round(1.2)
    CHECK(empirical_quantile(s, 0.4) == 3);  // round(1.6)
    CHECK_THROWS_AS(empirical_quantile({}, 0.5), ValidationError);
}

TEST_CASE("same pool gives the identity at every knot") {
    const auto pool = normal_pool(500, -5.0, 3.0, 1);
    const QuantileMap qm = fit_quantile_map(pool, pool, 101);
    CHECK(qm.levels.size() == 101);
    for (std::size_t k = 0; k < 101; ++k) {
        CHECK(qm.source[k] == qm.target[k]);
        CHECK(qm.apply(qm.source[k]) == qm.source[k]);
    }
    CHECK(qm.apply(-4.321) == doctest::Approx(-4.321).epsilon(1e-12));
}

TEST_CASE("constant shift pools: the map subtracts c") {
    const double c = 2.75;
    const auto truth = normal_pool(1000, -8.0, 2.0, 2);
    auto pred = truth;
    for (auto& v : pred) v += c;
    const QuantileMap qm = fit_quantile_map(pred, truth, 101);
    for (std::size_t k = 0; k < 101; ++k) CHECK(std::abs(qm.apply(qm.source[k]) - (qm.source[k] - c)) <= 1e-9);
    // between knots and beyond the ends the shift persists
    CHECK(qm.apply(-5.0) == doctest::Approx(-5.0 - c).epsilon(1e-9));
    CHECK(qm.apply(100.0) == doctest::Approx(100.0 - c).epsilon(1e-9));
    CHECK(qm.apply(-100.0) == doctest::Approx(-100.0 - c).epsilon(1e-9));
}

TEST_CASE("knot exactness and interpolation at fraction 0.3") {
    QuantileMap qm = QuantileMap::identity(101);
    for (std::size_t k = 0; k < 101; ++k) {
        qm.source[k] = static_cast<double>(k) * 0.5 - 10.0;
        qm.target[k] = std::pow(static_cast<double>(k), 1.5);
    }
    qm.validate();
    for (std::size_t k = 0; k < 101; ++k) CHECK(qm.apply(qm.source[k]) == qm.target[k]);
    const double x = qm.source[50] + 0.3 * (qm.source[51] - qm.source[50]);
    CHECK(qm.apply(x) == doctest::Approx(qm.target[50] + 0.3 * (qm.target[51] - qm.target[50])).epsilon(1e-12));
    // end-segment slope extrapolation
    const double slope = (qm.target[100] - qm.target[99]) / (qm.source[100] - qm.source[99]);
    CHECK(qm.apply(qm.source[100] + 2.0) == doctest::Approx(qm.target[100] + 2.0 * slope));
}

TEST_CASE("identity map leaves a footprint unchanged") {
    const GridSpec g{1, 3, 0, 0, 1, 1};
    const Footprint fp(g, {}, {-20.0, 0.5, 3.0}, Space::log);
    const Footprint out = apply_quantile_map(fp, QuantileMap::identity());
    for (std::size_t k = 0; k < 3; ++k) CHECK(out.values()[k] == doctest::Approx(fp.values()[k]).epsilon(1e-12));
    CHECK_THROWS_AS(apply_quantile_map(Footprint(g, {}, {0, 1, 2}, Space::linear), QuantileMap::identity()), ValidationError);
}

TEST_CASE("fitted map is monotone on 1000 random input pairs and knots never decrease") {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(-40.0, 20.0);
    for (int trial = 0; trial < 5; ++trial) {
        auto truth = normal_pool(300, -10.0, 6.0, 10 + trial);
        // tie-heavy truth, like zero-dominated footprints in log space
        for (std::size_t k = 0; k < truth.size(); k += 3) truth[k] = std::log(1e-9);
        auto pred = normal_pool(250, -6.0, 4.0, 20 + trial);
        for (std::size_t k = 0; k < pred.size(); k += 7) pred[k] = 1.0;
        const QuantileMap qm = fit_quantile_map(pred, truth, 101);
        CHECK_NOTHROW(qm.validate());
        for (int i = 0; i < 1000; ++i) {
            double a = u(rng), b = u(rng);
            if (a > b) std::swap(a, b);
            CHECK(qm.apply(a) <= qm.apply(b));
        }
        for (double s : qm.source) CHECK(std::isfinite(qm.apply(s)));
    }
}

TEST_CASE("mapped validation pool matches truth quantiles at interior knots") {
    auto truth = normal_pool(4000, -12.0, 5.0, 30);
    for (std::size_t k = 0; k < truth.size(); k += 4) truth[k] = std::log(1e-9);
    const auto pred = normal_pool(3000, -9.0, 2.5, 31);
    const QuantileMap qm = fit_quantile_map(pred, truth, 101);
    std::vector<double> mapped = pred;
    apply_quantile_map(mapped, qm);
    std::sort(mapped.begin(), mapped.end());
    std::sort(truth.begin(), truth.end());
    for (std::size_t k = 1; k + 1 < 101; ++k) {
        const double p = qm.levels[k];
        CHECK(std::abs(empirical_quantile(mapped, p) - empirical_quantile(truth, p)) <= 1e-6);
    }
}

TEST_CASE("fit rejects empty pools and bad n_q; map validation") {
    CHECK_THROWS_AS(fit_quantile_map({}, {1.0}, 11), ValidationError);
    CHECK_THROWS_AS(fit_quantile_map({1.0}, {}, 11), ValidationError);
    CHECK_THROWS_AS(fit_quantile_map({1.0}, {1.0}, 1), ValidationError);
    CHECK_THROWS_AS(fit_quantile_map({NAN}, {1.0}, 3), ValidationError);
    QuantileMap qm = QuantileMap::identity(5);
    qm.target[2] = -1.0;
    CHECK_THROWS_AS(qm.validate(), ValidationError);
    const QuantileMap single = fit_quantile_map({2.0}, {5.0}, 3);
    CHECK(single.apply(2.0) == 5.0);
    CHECK(single.apply(3.0) == 6.0);
}

TEST_CASE("default tau is the 5th percentile of positive values") {
    std::vector<double> v;
    for (int k = 1; k <= 101; ++k) v.push_back(static_cast<double>(k));
    v.push_back(0.0);
    v.push_back(0.0);
    CHECK(default_tau(v) == 6.0);
    CHECK_THROWS(default_tau({0.0, 0.0}));
}

TEST_CASE("post-processing order: map in log space, invert, then threshold") {
    PostprocessParams pp;
    pp.eps_log = 1e-9;
    pp.tau = 0.5;
    pp.qmap = QuantileMap::identity(3);
    pp.qmap.source = {-30.0, 0.0, 10.0};
    pp.qmap.target = {-30.0, 1.0, 11.0};  // +1 in log space near the middle
    const std::vector<double> log_pred = {std::log(0.2), std::log(1.0), -25.0};
    const auto out = postprocess_prediction(log_pred, pp);
    // ln 0.2 -> ln 0.2 + (ln 0.2 + 30)/30 in log space; exp of that is above tau
    const double t0 = std::log(0.2) + (std::log(0.2) + 30.0) / 30.0;
    CHECK(out[0] == doctest::Approx(std::exp(t0) - 1e-9).epsilon(1e-12));
    CHECK(out[1] == doctest::Approx(std::exp(1.0) - 1e-9).epsilon(1e-12));
    CHECK(out[2] == 0.0);
    for (double v : out) CHECK(v >= 0.0);

    // with tau = 0, threshold and map commute
    pp.tau = 0.0;
    const auto a = postprocess_prediction(log_pred, pp);
    std::vector<double> b(log_pred.begin(), log_pred.end());
    apply_quantile_map(b, pp.qmap);
    for (std::size_t k = 0; k < b.size(); ++k) CHECK(a[k] == from_log(b[k], pp.eps_log));
}

TEST_CASE("post-processing parameters round trip through JSON") {
    PostprocessParams pp;
    pp.tau = 0.3;
    pp.qmap = fit_quantile_map(normal_pool(100, 0, 1, 5), normal_pool(100, 1, 2, 6), 11);
    const fs::path path = fs::temp_directory_path() / "fpuq_test_post.json";
    pp.save(path);
    const auto back = PostprocessParams::load(path);
    CHECK(back.tau == pp.tau);
    CHECK(back.eps_log == pp.eps_log);
    CHECK(back.qmap.source == pp.qmap.source);
    CHECK(back.qmap.target == pp.qmap.target);
    const auto j = pp.qmap.to_json();
    CHECK(j.at("space") == "log");
    write_text(path, "{\"eps_log\": 1e-9}");
    CHECK_THROWS_AS(PostprocessParams::load(path), ValidationError);
    fs::remove(path);

    PostprocessConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.tau = -1.0;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
}
