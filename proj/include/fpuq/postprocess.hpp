#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "fpuq/domain.hpp"

namespace fpuq {

/// Monotone piecewise-linear transfer from predicted (source) quantiles to
/// truth (target) quantiles, fitted on pooled log-space values.
struct QuantileMap {
    std::vector<double> levels;
    std::vector<double> source;
    std::vector<double> target;

    void validate() const;
    double apply(double x) const;
    nlohmann::json to_json() const;
    static QuantileMap from_json(const nlohmann::json& j);
    static QuantileMap identity(std::size_t n_q = 101);
};

/// Empirical quantile at level p in [0, 1]: the order statistic at rank
/// round(p * (n - 1)). Always returns a sample value, so a monotone map that
/// sends source knots to target knots reproduces the target quantiles exactly.
double empirical_quantile(const std::vector<double>& sorted, double p);

/// Thresholding on linear-space values: v < tau becomes exactly 0.
Footprint threshold_footprint(const Footprint& fp, double tau);
void threshold_values(std::span<double> values, double tau);

QuantileMap fit_quantile_map(std::vector<double> preds, std::vector<double> truths, std::size_t n_q = 101);

Footprint apply_quantile_map(const Footprint& fp, const QuantileMap& qm);
void apply_quantile_map(std::span<double> log_values, const QuantileMap& qm);

/// Post-processing section of the pipeline configuration. An absent tau means
/// the data-driven default (see default_tau).
struct PostprocessConfig {
    double eps_log = kDefaultEpsLog;
    std::optional<double> tau;
    std::size_t n_q = 101;
    double eps_cv = 1e-9;

    void validate() const;
};

/// Per-model post-processing settings stored next to each checkpoint.
struct PostprocessParams {
    double eps_log = kDefaultEpsLog;
    double tau = 0.0;  // linear-space threshold
    QuantileMap qmap = QuantileMap::identity();

    nlohmann::json to_json() const;
    static PostprocessParams from_json(const nlohmann::json& j);
    void save(const std::filesystem::path& path) const;
    static PostprocessParams load(const std::filesystem::path& path);
};

/// 5th percentile of the strictly positive values (the default near-zero cutoff).
double default_tau(std::vector<double> positive_values, double percentile = 0.05);

/// predict (log) -> quantile map (log) -> inverse log -> threshold (linear).
std::vector<double> postprocess_prediction(std::span<const double> log_pred, const PostprocessParams& pp);

}  // namespace fpuq
