#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "fpuq/checkpoint.hpp"
#include "fpuq/domain.hpp"
#include "fpuq/features.hpp"
#include "fpuq/gnn.hpp"
#include "fpuq/postprocess.hpp"

namespace fpuq {

inline constexpr double kDefaultEpsCv = 1e-9;

/// Per-cell mean, population standard deviation and CV = std / (mean + eps).
struct EnsembleStats {
    std::vector<double> mean;
    std::vector<double> stddev;
    std::vector<double> cv;
    std::size_t members = 0;
    double eps = kDefaultEpsCv;
};

EnsembleStats ensemble_stats(const std::vector<std::span<const double>>& members, double eps = kDefaultEpsCv);
EnsembleStats ensemble_stats(const std::vector<std::vector<double>>& members, double eps = kDefaultEpsCv);

struct ScalarStats {
    double mean = 0.0;
    double stddev = 0.0;
    double cv = 0.0;
};

ScalarStats ensemble_stats_scalar(std::span<const double> members, double eps = kDefaultEpsCv);

/// Signed error mean - truth.
std::vector<double> mean_error(std::span<const double> mean, std::span<const double> truth);

/// A checkpoint together with its post-processing parameters.
struct EnsembleMember {
    Checkpoint checkpoint;
    PostprocessParams post;
};

/// Post-processing parameters live next to the checkpoint: <ckpt>.post.json.
std::filesystem::path post_path_for(const std::filesystem::path& ckpt);
EnsembleMember load_member(const std::filesystem::path& ckpt);

/// Rejects fewer than two members or members whose hyperparameters, feature
/// hash or mesh differ; the message lists every member's values.
void check_compatible(const std::vector<EnsembleMember>& members);

enum class CvSpace : std::uint8_t { linear, log };

struct EnsemblePrediction {
    std::vector<std::vector<double>> members;  // linear, full domain grid
    EnsembleStats stats;                        // mean/std linear; cv in the requested space
};

/// Linear-space patch prediction of one member from raw (unnormalized) features.
std::vector<double> member_patch(const EnsembleMember& m, const FeatureTensor& raw, const Graph& graph);

/// Runs every member on raw features and embeds the post-processed patches in
/// the domain grid (zeros outside the patch).
EnsemblePrediction ensemble_predict(const std::vector<EnsembleMember>& members, const FeatureTensor& raw, const Graph& graph,
                                    const GridSpec& grid, double eps = kDefaultEpsCv, CvSpace cv_space = CvSpace::linear);

}  // namespace fpuq
