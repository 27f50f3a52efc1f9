#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "fpuq/checkpoint.hpp"
#include "fpuq/domain.hpp"
#include "fpuq/gnn.hpp"
#include "fpuq/postprocess.hpp"

namespace fpuq {

struct TrainConfig {
    std::size_t epochs = 30;
    std::size_t batch_size = 8;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t shuffle_seed = 1;

    void validate() const;
};

struct EpochLog {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double nmae = 0.0;
    double mse = 0.0;
    double acc = 0.0;
    double iou = 0.0;
    double r2 = 0.0;
};

/// Mean squared difference over all cells.
double loss_mse_log(std::span<const double> pred, std::span<const double> truth);

template <typename T>
struct AdamState {
    ModelParams<T> m;
    ModelParams<T> v;

    static AdamState zeros_like(const ModelParams<T>& p) { return {zero_like(p), zero_like(p)}; }
};

/// One Adam update with bias correction at step t >= 1.
template <typename T>
void adam_step(ModelParams<T>& params, const ModelParams<T>& grads, AdamState<T>& state, std::size_t t,
               const TrainConfig& cfg);

/// One training or validation example: normalized features (C x cells) and the
/// log-transformed LPDM patch.
struct Sample {
    Release release;
    Mat<float> x;
    Eigen::VectorXf target;
};

struct TrainingData {
    Normalizer normalizer;
    std::uint64_t feature_hash = 0;
    std::size_t side = kDefaultPatchSide;
    std::vector<Sample> train;
    std::vector<Sample> validation;
    double tau = 0.0;  // linear-space threshold (configured or data-driven)
};

/// Fits the normalizer on the train split, loads train and validation
/// samples and resolves tau.
TrainingData load_training_data(const DatasetManifest& manifest, const PostprocessConfig& post);

/// Log-space cells of one sample as the model sees them.
Eigen::VectorXf predict_log(const ModelParams<float>& params, const Mat<float>& x, const Graph& graph);

struct TrainResult {
    Checkpoint checkpoint;         // best validation loss
    std::vector<EpochLog> log;
    std::size_t best_epoch = 0;
    PostprocessParams post;        // quantile map fitted on validation predictions of the best model
};

TrainResult train_model(const TrainingData& data, std::uint64_t seed, const TrainConfig& cfg, const Hyperparams& hp,
                        const PostprocessConfig& post, std::uint64_t config_hash = 0);

void write_epoch_log_csv(const std::filesystem::path& path, const std::vector<EpochLog>& log);

}  // namespace fpuq
