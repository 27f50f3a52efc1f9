#include "fpuq/postprocess.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fpuq/common.hpp"

namespace fpuq {

namespace {

void check_pool(const std::vector<double>& pool, const char* name) {
    if (pool.empty()) throw ValidationError(std::string("fit_quantile_map: empty ") + name + " pool");
    for (double v : pool)
        if (!std::isfinite(v)) throw ValidationError(std::string("fit_quantile_map: non-finite value in ") + name + " pool");
}

}  // namespace

void PostprocessConfig::validate() const {
    if (!(eps_log > 0.0) || !std::isfinite(eps_log)) throw ValidationError("postprocess.eps_log must be > 0");
    if (tau && !(*tau >= 0.0 && std::isfinite(*tau))) throw ValidationError("postprocess.tau must be >= 0");
    if (n_q < 2) throw ValidationError("postprocess.n_q must be >= 2");
    if (!(eps_cv > 0.0) || !std::isfinite(eps_cv)) throw ValidationError("postprocess.eps_cv must be > 0");
}

double empirical_quantile(const std::vector<double>& sorted, double p) {
    if (sorted.empty()) throw ValidationError("empirical_quantile: empty sample");
    p = std::clamp(p, 0.0, 1.0);
    const auto rank = static_cast<std::size_t>(std::llround(p * static_cast<double>(sorted.size() - 1)));
    return sorted[rank];
}

void QuantileMap::validate() const {
    if (source.size() < 2 || source.size() != target.size() || levels.size() != source.size())
        throw ValidationError("quantile map needs >= 2 knots with equal-length levels/source/target");
    for (std::size_t k = 0; k < source.size(); ++k) {
        if (!std::isfinite(source[k]) || !std::isfinite(target[k])) throw ValidationError("quantile map: non-finite knot");
        if (k > 0 && (source[k] < source[k - 1] || target[k] < target[k - 1]))
            throw ValidationError("quantile map knots must be non-decreasing (knot " + std::to_string(k) + ")");
    }
}

// Piecewise-linear through (source, target). Runs of equal source knots are
// collapsed to their mean target so the transfer stays a function. Outside the
// knot range the end-segment slope is continued.
double QuantileMap::apply(double x) const {
    const std::size_t n = source.size();
    if (source.front() == source.back()) {
        double mean = 0.0;
        for (double t : target) mean += t;
        return mean / static_cast<double>(n) + (x - source.front());
    }
    auto knot_target = [&](std::size_t k) {
        std::size_t lo = k, hi = k;
        while (lo > 0 && source[lo - 1] == source[k]) --lo;
        while (hi + 1 < n && source[hi + 1] == source[k]) ++hi;
        if (lo == hi) return target[k];
        double s = 0.0;
        for (std::size_t j = lo; j <= hi; ++j) s += target[j];
        return s / static_cast<double>(hi - lo + 1);
    };
    // First index whose source is > x.
    const auto it = std::upper_bound(source.begin(), source.end(), x);
    std::size_t right = static_cast<std::size_t>(it - source.begin());
    std::size_t left;
    if (right == 0) {
        // Below the range: slope of the first segment with distinct sources.
        left = 0;
        right = static_cast<std::size_t>(std::upper_bound(source.begin(), source.end(), source.front()) - source.begin());
    } else if (right == n) {
        right = n - 1;
        left = static_cast<std::size_t>(std::lower_bound(source.begin(), source.end(), source.back()) - source.begin()) - 1;
    } else {
        left = right - 1;
        if (x == source[left]) return knot_target(left);
    }
    const double x0 = source[left], x1 = source[right];
    const double y0 = knot_target(left), y1 = knot_target(right);
    return y0 + (y1 - y0) * (x - x0) / (x1 - x0);
}

nlohmann::json QuantileMap::to_json() const {
    return {{"space", "log"}, {"pooling", "global"}, {"levels", levels}, {"source", source}, {"target", target}};
}

QuantileMap QuantileMap::from_json(const nlohmann::json& j) {
    QuantileMap qm;
    try {
        qm.levels = j.at("levels").get<std::vector<double>>();
        qm.source = j.at("source").get<std::vector<double>>();
        qm.target = j.at("target").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("quantile map: ") + e.what());
    }
    qm.validate();
    return qm;
}

QuantileMap QuantileMap::identity(std::size_t n_q) {
    if (n_q < 2) throw ValidationError("quantile map needs n_q >= 2");
    QuantileMap qm;
    for (std::size_t k = 0; k < n_q; ++k) {
        const double p = static_cast<double>(k) / static_cast<double>(n_q - 1);
        qm.levels.push_back(p);
        qm.source.push_back(p);
        qm.target.push_back(p);
    }
    return qm;
}

void threshold_values(std::span<double> values, double tau) {
    if (!(tau >= 0.0)) throw ValidationError("threshold tau must be >= 0");
    for (double& v : values)
        if (v < tau) v = 0.0;
}

Footprint threshold_footprint(const Footprint& fp, double tau) {
    if (fp.space() != Space::linear) throw ValidationError("threshold_footprint expects a linear-space footprint");
    std::vector<double> v = fp.values();
    threshold_values(v, tau);
    return Footprint(fp.grid(), fp.release(), std::move(v), Space::linear);
}

QuantileMap fit_quantile_map(std::vector<double> preds, std::vector<double> truths, std::size_t n_q) {
    if (n_q < 2) throw ValidationError("fit_quantile_map: n_q must be >= 2");
    check_pool(preds, "prediction");
    check_pool(truths, "truth");
    std::sort(preds.begin(), preds.end());
    std::sort(truths.begin(), truths.end());
    QuantileMap qm;
    for (std::size_t k = 0; k < n_q; ++k) {
        const double p = static_cast<double>(k) / static_cast<double>(n_q - 1);
        qm.levels.push_back(p);
        qm.source.push_back(empirical_quantile(preds, p));
        qm.target.push_back(empirical_quantile(truths, p));
    }
    return qm;
}

void apply_quantile_map(std::span<double> log_values, const QuantileMap& qm) {
    for (double& v : log_values) v = qm.apply(v);
}

Footprint apply_quantile_map(const Footprint& fp, const QuantileMap& qm) {
    if (fp.space() != Space::log) throw ValidationError("apply_quantile_map expects a log-space footprint");
    std::vector<double> v = fp.values();
    apply_quantile_map(v, qm);
    return Footprint(fp.grid(), fp.release(), std::move(v), Space::log);
}

double default_tau(std::vector<double> values, double percentile) {
    std::erase_if(values, [](double v) { return !(v > 0.0); });
    if (values.empty()) throw ValidationError("default_tau: no positive values");
    std::sort(values.begin(), values.end());
    return empirical_quantile(values, percentile);
}

std::vector<double> postprocess_prediction(std::span<const double> log_pred, const PostprocessParams& pp) {
    std::vector<double> out(log_pred.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = from_log(pp.qmap.apply(log_pred[i]), pp.eps_log);
    threshold_values(out, pp.tau);
    return out;
}

nlohmann::json PostprocessParams::to_json() const {
    return {{"format", "fpuq-postprocess"},
            {"order", "forward(log) > quantile_map(log) > inverse_log > threshold(linear)"},
            {"eps_log", eps_log},
            {"tau", tau},
            {"quantile_map", qmap.to_json()}};
}

PostprocessParams PostprocessParams::from_json(const nlohmann::json& j) {
    PostprocessParams pp;
    try {
        pp.eps_log = j.at("eps_log").get<double>();
        pp.tau = j.at("tau").get<double>();
        pp.qmap = QuantileMap::from_json(j.at("quantile_map"));
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("postprocess params: ") + e.what());
    }
    if (!(pp.eps_log > 0.0) || !(pp.tau >= 0.0)) throw ValidationError("postprocess params: eps_log > 0 and tau >= 0 required");
    return pp;
}

void PostprocessParams::save(const std::filesystem::path& path) const { write_text(path, to_json().dump(2) + "\n"); }

PostprocessParams PostprocessParams::load(const std::filesystem::path& path) {
    const std::string text = read_text(path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
    return from_json(j);
}

}  // namespace fpuq
