#include "fpuq/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "fpuq/analysis.hpp"
#include "fpuq/common.hpp"
#include "fpuq/gridfile.hpp"

namespace fpuq {

void TrainConfig::validate() const {
    if (epochs < 1) throw ValidationError("train.epochs must be >= 1");
    if (batch_size < 1) throw ValidationError("train.batch_size must be >= 1");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ValidationError("train.learning_rate must be > 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ValidationError("train: Adam betas must be in [0, 1)");
    if (!(adam_eps > 0.0)) throw ValidationError("train.adam_eps must be > 0");
}

double loss_mse_log(std::span<const double> pred, std::span<const double> truth) {
    if (pred.size() != truth.size()) throw ValidationError("loss_mse_log: shape mismatch");
    if (pred.empty()) throw ValidationError("loss_mse_log: empty patch");
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (!std::isfinite(pred[i]) || !std::isfinite(truth[i])) throw ValidationError("loss_mse_log: non-finite input");
        const double d = pred[i] - truth[i];
        s += d * d;
    }
    return s / static_cast<double>(pred.size());
}

template <typename T>
void adam_step(ModelParams<T>& params, const ModelParams<T>& grads, AdamState<T>& state, std::size_t t,
               const TrainConfig& cfg) {
    if (t < 1) throw ValidationError("adam_step: t must be >= 1");
    if (!params.same_shape(grads) || !params.same_shape(state.m) || !params.same_shape(state.v))
        throw ValidationError("adam_step: parameter, gradient and moment shapes differ");
    const auto names = params.tensor_names();
    for (std::size_t k = 0; k < grads.tensors.size(); ++k)
        if (!grads.tensors[k].allFinite()) throw ValidationError("adam_step: non-finite gradient in " + names[k]);
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
    const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
    const T step = static_cast<T>(cfg.learning_rate / c1);
    const T inv_sqrt_c2 = static_cast<T>(1.0 / std::sqrt(c2));
    const T eps = static_cast<T>(cfg.adam_eps);
    for (std::size_t k = 0; k < params.tensors.size(); ++k) {
        auto g = grads.tensors[k].array();
        auto m = state.m.tensors[k].array();
        auto v = state.v.tensors[k].array();
        m = b1 * m + (T(1) - b1) * g;
        v = b2 * v + (T(1) - b2) * g.square();
        params.tensors[k].array() -= step * m / (v.sqrt() * inv_sqrt_c2 + eps);
    }
}

template void adam_step(ModelParams<float>&, const ModelParams<float>&, AdamState<float>&, std::size_t, const TrainConfig&);
template void adam_step(ModelParams<double>&, const ModelParams<double>&, AdamState<double>&, std::size_t, const TrainConfig&);

namespace {

Mat<float> raw_features(const DatasetManifest& manifest, const ManifestEntry& e, std::uint64_t& hash, std::size_t& side) {
    const FeatureTensor ft = read_features(manifest.resolve(e.features));
    if (ft.release.id != e.release.id)
        throw ValidationError(e.features + ": release id " + std::to_string(ft.release.id) + " does not match manifest entry " +
                              std::to_string(e.release.id));
    if (hash == 0) {
        hash = ft.channel_hash;
        side = ft.side;
    } else if (ft.channel_hash != hash || ft.side != side) {
        throw ValidationError(e.features + ": channel layout differs from the rest of the dataset");
    }
    Mat<float> x(static_cast<Eigen::Index>(ft.channels), static_cast<Eigen::Index>(ft.cells()));
    for (std::size_t i = 0; i < ft.values.size(); ++i) x.data()[i] = static_cast<float>(ft.values[i]);
    return x;
}

Patch truth_patch(const DatasetManifest& manifest, const ManifestEntry& e, std::size_t side) {
    const GridFile gf = read_grid_file(manifest.resolve(e.footprint));
    if (gf.release.id != e.release.id)
        throw ValidationError(e.footprint + ": release id does not match manifest entry " + std::to_string(e.release.id));
    return crop_patch(gf.to_footprint(), side);
}

Eigen::VectorXf log_target(const Patch& p, double eps_log) {
    Eigen::VectorXf t(static_cast<Eigen::Index>(p.cells()));
    for (std::size_t i = 0; i < p.cells(); ++i) t[static_cast<Eigen::Index>(i)] = static_cast<float>(to_log(p.values[i], eps_log));
    return t;
}

void normalize(Mat<float>& x, const Normalizer& n) {
    for (Eigen::Index c = 0; c < x.cols(); ++c)
        for (Eigen::Index k = 0; k < x.rows(); ++k) {
            const auto kk = static_cast<std::size_t>(k);
            if (n.degenerate[kk]) continue;
            x(k, c) = static_cast<float>((static_cast<double>(x(k, c)) - n.mean[kk]) / n.stddev[kk]);
        }
}

}  // namespace

TrainingData load_training_data(const DatasetManifest& manifest, const PostprocessConfig& post) {
    manifest.validate();
    post.validate();
    if (manifest.train.size() < 2) throw ValidationError("training needs at least two training footprints");
    if (manifest.validation.empty()) throw ValidationError("training needs a non-empty validation split");
    TrainingData data;
    std::size_t side = 0;
    auto load_split = [&](const std::vector<ManifestEntry>& entries, std::vector<Sample>& out, std::vector<double>* positives) {
        out.resize(entries.size());
        for (std::size_t i = 0; i < entries.size(); ++i) {
            const auto& e = entries[i];
            out[i].release = e.release;
            out[i].x = raw_features(manifest, e, data.feature_hash, side);
            const Patch p = truth_patch(manifest, e, side);
            out[i].target = log_target(p, post.eps_log);
            if (positives)
                for (double v : p.values)
                    if (v > 0.0) positives->push_back(v);
        }
    };
    std::vector<double> positives;
    load_split(manifest.train, data.train, &positives);
    load_split(manifest.validation, data.validation, nullptr);
    data.side = side;

    // Same summation order as fit_normalizer: tensors, then cells, per channel.
    const auto C = static_cast<std::size_t>(data.train.front().x.rows());
    Normalizer& n = data.normalizer;
    n.mean.assign(C, 0.0);
    n.stddev.assign(C, 0.0);
    n.degenerate.assign(C, 0);
    std::size_t count = 0;
    for (const auto& s : data.train) {
        for (Eigen::Index c = 0; c < s.x.cols(); ++c)
            for (std::size_t k = 0; k < C; ++k) n.mean[k] += static_cast<double>(s.x(static_cast<Eigen::Index>(k), c));
        count += static_cast<std::size_t>(s.x.cols());
    }
    for (auto& m : n.mean) m /= static_cast<double>(count);
    for (const auto& s : data.train)
        for (Eigen::Index c = 0; c < s.x.cols(); ++c)
            for (std::size_t k = 0; k < C; ++k) {
                const double d = static_cast<double>(s.x(static_cast<Eigen::Index>(k), c)) - n.mean[k];
                n.stddev[k] += d * d;
            }
    for (std::size_t k = 0; k < C; ++k) {
        n.stddev[k] = std::sqrt(n.stddev[k] / static_cast<double>(count));
        if (n.stddev[k] < kDegenerateStd) n.degenerate[k] = 1;
    }
    for (auto& s : data.train) normalize(s.x, n);
    for (auto& s : data.validation) normalize(s.x, n);

    data.tau = post.tau ? *post.tau : default_tau(std::move(positives));
    return data;
}

Eigen::VectorXf predict_log(const ModelParams<float>& params, const Mat<float>& x, const Graph& graph) {
    return forward(params, x, graph);
}

TrainResult train_model(const TrainingData& data, std::uint64_t seed, const TrainConfig& cfg, const Hyperparams& hp,
                        const PostprocessConfig& post, std::uint64_t config_hash) {
    cfg.validate();
    hp.validate();
    post.validate();
    if (data.train.empty() || data.validation.empty()) throw ValidationError("train_model: empty train or validation split");
    if (hp.in_channels != data.normalizer.channels())
        throw ValidationError("train_model: model expects " + std::to_string(hp.in_channels) + " channels, data has " +
                              std::to_string(data.normalizer.channels()));
    if (hp.side != data.side)
        throw ValidationError("train_model: model patch side " + std::to_string(hp.side) + " differs from data side " +
                              std::to_string(data.side));

    const Graph graph = Graph::build(hp.side, hp.mesh_spacing);
    ModelParams<float> params = init_params(seed, hp).cast<float>();
    // Start the output at the mean training target so early epochs fit structure, not the offset.
    double target_mean = 0.0;
    std::size_t target_n = 0;
    for (const auto& s : data.train) {
        target_mean += s.target.cast<double>().sum();
        target_n += static_cast<std::size_t>(s.target.size());
    }
    params.tensors[tensor::decoder(hp.rounds) + 3](0, 0) = static_cast<float>(target_mean / static_cast<double>(target_n));

    AdamState<float> state = AdamState<float>::zeros_like(params);
    ModelParams<float> grads = zero_like(params);
    ForwardCache<float> cache;
    const double tau_log = to_log(data.tau, post.eps_log);

    TrainResult result;
    ModelParams<float> best = params;
    double best_val = std::numeric_limits<double>::infinity();
    std::vector<std::size_t> order(data.train.size());
    std::size_t step = 0;
    const std::uint64_t shuffle_base = derive_seed(cfg.shuffle_seed, seed);

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        std::mt19937_64 rng(derive_seed(shuffle_base, epoch));
        std::shuffle(order.begin(), order.end(), rng);
        double train_loss = 0.0;
        for (std::size_t b0 = 0, batch = 0; b0 < order.size(); b0 += cfg.batch_size, ++batch) {
            const std::size_t b1 = std::min(order.size(), b0 + cfg.batch_size);
            const auto bsz = static_cast<float>(b1 - b0);
            grads.set_zero();
            double batch_loss = 0.0;
            for (std::size_t i = b0; i < b1; ++i) {
                const Sample& s = data.train[order[i]];
                const Eigen::VectorXf diff = forward(params, s.x, graph, &cache) - s.target;
                batch_loss += diff.cast<double>().squaredNorm() / static_cast<double>(diff.size());
                const Eigen::VectorXf dy = diff * (2.0f / (static_cast<float>(diff.size()) * bsz));
                backward(params, cache, graph, dy, grads);
            }
            if (!std::isfinite(batch_loss))
                throw std::runtime_error("training diverged: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                         std::to_string(batch));
            train_loss += batch_loss;
            adam_step(params, grads, state, ++step, cfg);
        }

        EpochLog log;
        log.epoch = epoch;
        log.train_loss = train_loss / static_cast<double>(data.train.size());
        MetricAccumulator acc(tau_log);
        double val_loss = 0.0;
        for (const auto& s : data.validation) {
            const Eigen::VectorXf pred = forward(params, s.x, graph);
            val_loss += (pred - s.target).cast<double>().squaredNorm() / static_cast<double>(pred.size());
            acc.add_values<float>(std::span<const float>(pred.data(), static_cast<std::size_t>(pred.size())),
                                  std::span<const float>(s.target.data(), static_cast<std::size_t>(s.target.size())));
        }
        log.val_loss = val_loss / static_cast<double>(data.validation.size());
        if (!std::isfinite(log.val_loss))
            throw std::runtime_error("training diverged: non-finite validation loss at epoch " + std::to_string(epoch));
        const MetricReport m = acc.report();
        log.nmae = m.nmae;
        log.mse = m.mse;
        log.acc = m.accuracy;
        log.iou = m.iou;
        log.r2 = m.r2;
        result.log.push_back(log);
        if (log.val_loss < best_val) {
            best_val = log.val_loss;
            best = params;
            result.best_epoch = epoch;
        }
    }

    std::vector<double> preds, truths;
    for (const auto& s : data.validation) {
        const Eigen::VectorXf pred = forward(best, s.x, graph);
        for (Eigen::Index i = 0; i < pred.size(); ++i) {
            preds.push_back(static_cast<double>(pred[i]));
            truths.push_back(static_cast<double>(s.target[i]));
        }
    }
    result.post.eps_log = post.eps_log;
    result.post.tau = data.tau;
    result.post.qmap = fit_quantile_map(std::move(preds), std::move(truths), post.n_q);

    result.checkpoint.params = std::move(best);
    result.checkpoint.feature_hash = data.feature_hash;
    result.checkpoint.config_hash = config_hash;
    result.checkpoint.normalizer = data.normalizer;
    return result;
}

void write_epoch_log_csv(const std::filesystem::path& path, const std::vector<EpochLog>& log) {
    std::string out = "epoch,train_loss,val_loss,nmae,mse,acc,iou,r2\n";
    for (const auto& e : log) {
        out += std::to_string(e.epoch);
        for (double v : {e.train_loss, e.val_loss, e.nmae, e.mse, e.acc, e.iou, e.r2}) out += "," + csv_number(v);
        out += "\n";
    }
    write_text(path, out);
}

}  // namespace fpuq
