#include "fpuq/ensemble.hpp"

#include <cmath>
#include <sstream>

#include "fpuq/common.hpp"

namespace fpuq {

EnsembleStats ensemble_stats(const std::vector<std::span<const double>>& members, double eps) {
    if (members.size() < 2) throw ValidationError("ensemble_stats needs >= 2 members, got " + std::to_string(members.size()));
    if (!(eps > 0.0)) throw ValidationError("ensemble_stats: eps must be > 0");
    const std::size_t n = members.front().size();
    for (const auto& m : members)
        if (m.size() != n) throw ValidationError("ensemble_stats: members have different shapes");
    EnsembleStats s;
    s.members = members.size();
    s.eps = eps;
    s.mean.assign(n, 0.0);
    s.stddev.assign(n, 0.0);
    s.cv.assign(n, 0.0);
    const double N = static_cast<double>(members.size());
    for (std::size_t i = 0; i < n; ++i) {
        double mu = 0.0;
        for (const auto& m : members) mu += m[i];
        mu /= N;
        double ss = 0.0;
        for (const auto& m : members) ss += (m[i] - mu) * (m[i] - mu);
        s.mean[i] = mu;
        s.stddev[i] = std::sqrt(ss / N);
        s.cv[i] = s.stddev[i] / (mu + eps);
    }
    return s;
}

EnsembleStats ensemble_stats(const std::vector<std::vector<double>>& members, double eps) {
    std::vector<std::span<const double>> views(members.begin(), members.end());
    return ensemble_stats(views, eps);
}

ScalarStats ensemble_stats_scalar(std::span<const double> members, double eps) {
    std::vector<std::span<const double>> views;
    for (const double& v : members) views.emplace_back(&v, 1);
    const auto s = ensemble_stats(views, eps);
    return {s.mean[0], s.stddev[0], s.cv[0]};
}

std::vector<double> mean_error(std::span<const double> mean, std::span<const double> truth) {
    if (mean.size() != truth.size()) throw ValidationError("mean_error: shape mismatch");
    std::vector<double> e(mean.size());
    for (std::size_t i = 0; i < e.size(); ++i) e[i] = mean[i] - truth[i];
    return e;
}

std::filesystem::path post_path_for(const std::filesystem::path& ckpt) {
    auto p = ckpt;
    p += ".post.json";
    return p;
}

EnsembleMember load_member(const std::filesystem::path& ckpt) {
    EnsembleMember m;
    m.checkpoint = load_checkpoint(ckpt);
    m.post = PostprocessParams::load(post_path_for(ckpt));
    return m;
}

void check_compatible(const std::vector<EnsembleMember>& members) {
    if (members.size() < 2) throw ValidationError("an ensemble needs >= 2 checkpoints, got " + std::to_string(members.size()));
    const auto& ref = members.front().checkpoint;
    bool ok = true;
    for (const auto& m : members) {
        const auto& c = m.checkpoint;
        ok = ok && c.params.hp == ref.params.hp && c.feature_hash == ref.feature_hash;
    }
    if (ok) return;
    std::ostringstream os;
    os << "incompatible checkpoints:";
    for (std::size_t k = 0; k < members.size(); ++k) {
        const auto& c = members[k].checkpoint;
        const auto& hp = c.params.hp;
        os << "\n  member " << k << ": feature_hash=" << std::hex << c.feature_hash << std::dec << " C=" << hp.in_channels
           << " L=" << hp.latent << " R=" << hp.rounds << " side=" << hp.side << " r=" << hp.mesh_spacing;
    }
    throw ValidationError(os.str());
}

std::vector<double> member_patch(const EnsembleMember& m, const FeatureTensor& raw, const Graph& graph) {
    const auto& ck = m.checkpoint;
    if (raw.channel_hash != ck.feature_hash) throw ValidationError("features do not match the checkpoint's channel layout");
    if (raw.side != ck.params.hp.side) throw ValidationError("feature patch side does not match the checkpoint");
    const FeatureTensor xn = apply_normalizer(raw, ck.normalizer);
    Mat<float> x(static_cast<Eigen::Index>(xn.channels), static_cast<Eigen::Index>(xn.cells()));
    for (std::size_t i = 0; i < xn.values.size(); ++i) x.data()[i] = static_cast<float>(xn.values[i]);
    const Eigen::VectorXf y = forward(ck.params, x, graph);
    std::vector<double> log_pred(static_cast<std::size_t>(y.size()));
    for (std::size_t i = 0; i < log_pred.size(); ++i) log_pred[i] = static_cast<double>(y[static_cast<Eigen::Index>(i)]);
    return postprocess_prediction(log_pred, m.post);
}

EnsemblePrediction ensemble_predict(const std::vector<EnsembleMember>& members, const FeatureTensor& raw, const Graph& graph,
                                    const GridSpec& grid, double eps, CvSpace cv_space) {
    check_compatible(members);
    EnsemblePrediction out;
    out.members.resize(members.size());
    // Window geometry only; values are replaced per member.
    std::vector<double> zeros(grid.size(), 0.0);
    Patch window = crop_patch(grid, zeros, raw.release, raw.side);
    for (std::size_t k = 0; k < members.size(); ++k) {
        Patch p = window;
        p.values = member_patch(members[k], raw, graph);
        for (std::size_t c = 0; c < p.cells(); ++c)
            if (!p.in_domain[c]) p.values[c] = 0.0;
        out.members[k] = embed_patch(p, grid);
    }
    out.stats = ensemble_stats(out.members, eps);
    if (cv_space == CvSpace::log) {
        const double eps_log = members.front().post.eps_log;
        std::vector<std::vector<double>> logs = out.members;
        for (auto& m : logs)
            for (double& v : m) v = to_log(v, eps_log);
        const auto ls = ensemble_stats(logs, eps);
        for (std::size_t i = 0; i < ls.cv.size(); ++i) out.stats.cv[i] = ls.stddev[i] / (std::abs(ls.mean[i]) + eps);
    }
    return out;
}

}  // namespace fpuq
