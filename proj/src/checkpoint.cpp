#include "fpuq/checkpoint.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "fpuq/common.hpp"

namespace fpuq {

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    const auto& p = ckpt.params;
    const auto& hp = p.hp;
    hp.validate();
    if (ckpt.normalizer.channels() != hp.in_channels)
        throw ValidationError("checkpoint: normalizer has " + std::to_string(ckpt.normalizer.channels()) + " channels, model expects " +
                              std::to_string(hp.in_channels));
    const auto shapes = tensor_shapes(hp);
    if (shapes.size() != p.tensors.size()) throw ValidationError("checkpoint: tensor count does not match hyperparameters");

    std::ostringstream os(std::ios::binary);
    os.write("CKP1", 4);
    bin::put<std::uint32_t>(os, kCheckpointVersion);
    bin::put<std::uint32_t>(os, static_cast<std::uint32_t>(hp.in_channels));
    bin::put<std::uint32_t>(os, static_cast<std::uint32_t>(hp.latent));
    bin::put<std::uint32_t>(os, static_cast<std::uint32_t>(hp.rounds));
    bin::put<std::uint8_t>(os, static_cast<std::uint8_t>(hp.activation));
    bin::pad(os, 3);
    bin::put<std::uint32_t>(os, static_cast<std::uint32_t>(hp.side));
    bin::put<double>(os, hp.mesh_spacing);
    bin::put<std::uint64_t>(os, p.seed);
    bin::put<std::uint64_t>(os, ckpt.feature_hash);
    bin::put<std::uint64_t>(os, ckpt.config_hash);
    bin::put<std::uint32_t>(os, static_cast<std::uint32_t>(p.tensors.size()));
    for (std::size_t k = 0; k < shapes.size(); ++k) {
        if (static_cast<std::size_t>(p.tensors[k].rows()) != shapes[k].first ||
            static_cast<std::size_t>(p.tensors[k].cols()) != shapes[k].second)
            throw ValidationError("checkpoint: tensor " + p.tensor_names()[k] + " has the wrong shape");
        bin::put<std::uint32_t>(os, static_cast<std::uint32_t>(shapes[k].first));
        bin::put<std::uint32_t>(os, static_cast<std::uint32_t>(shapes[k].second));
    }
    for (double v : ckpt.normalizer.mean) bin::put<double>(os, v);
    for (double v : ckpt.normalizer.stddev) bin::put<double>(os, v);
    for (auto v : ckpt.normalizer.degenerate) bin::put<std::uint8_t>(os, v);
    for (const auto& t : p.tensors)
        for (Eigen::Index i = 0; i < t.rows(); ++i)
            for (Eigen::Index j = 0; j < t.cols(); ++j) bin::put<float>(os, t(i, j));

    const std::string bytes = os.str();
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path.string());
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    const auto data = read_file(path);
    std::istringstream is(std::string(data.begin(), data.end()), std::ios::binary);
    const std::string where = path.string();
    char magic[4];
    bin::read_bytes(is, magic, 4, where);
    if (std::string(magic, 4) != "CKP1") throw ValidationError(where + ": not a CKP1 checkpoint");
    const auto version = bin::get<std::uint32_t>(is, where);
    if (version != kCheckpointVersion) throw ValidationError(where + ": unsupported checkpoint version " + std::to_string(version));

    Checkpoint ckpt;
    Hyperparams hp;
    hp.in_channels = bin::get<std::uint32_t>(is, where);
    hp.latent = bin::get<std::uint32_t>(is, where);
    hp.rounds = bin::get<std::uint32_t>(is, where);
    const auto act = bin::get<std::uint8_t>(is, where);
    if (act > static_cast<std::uint8_t>(Activation::identity)) throw ValidationError(where + ": unknown activation");
    hp.activation = static_cast<Activation>(act);
    bin::skip(is, 3, where);
    hp.side = bin::get<std::uint32_t>(is, where);
    hp.mesh_spacing = bin::get<double>(is, where);
    hp.validate();
    ckpt.params.hp = hp;
    ckpt.params.seed = bin::get<std::uint64_t>(is, where);
    ckpt.feature_hash = bin::get<std::uint64_t>(is, where);
    ckpt.config_hash = bin::get<std::uint64_t>(is, where);

    const auto shapes = tensor_shapes(hp);
    const auto count = bin::get<std::uint32_t>(is, where);
    if (count != shapes.size()) throw ValidationError(where + ": tensor count does not match hyperparameters");
    for (const auto& s : shapes) {
        const auto r = bin::get<std::uint32_t>(is, where);
        const auto c = bin::get<std::uint32_t>(is, where);
        if (r != s.first || c != s.second) throw ValidationError(where + ": tensor shape table does not match hyperparameters");
    }
    const std::size_t C = hp.in_channels;
    auto& n = ckpt.normalizer;
    n.mean.resize(C);
    n.stddev.resize(C);
    n.degenerate.resize(C);
    for (auto& v : n.mean) v = bin::get<double>(is, where);
    for (auto& v : n.stddev) v = bin::get<double>(is, where);
    for (auto& v : n.degenerate) v = bin::get<std::uint8_t>(is, where);
    for (const auto& s : shapes) {
        Mat<float> t(static_cast<Eigen::Index>(s.first), static_cast<Eigen::Index>(s.second));
        for (Eigen::Index i = 0; i < t.rows(); ++i)
            for (Eigen::Index j = 0; j < t.cols(); ++j) {
                t(i, j) = bin::get<float>(is, where);
                if (!std::isfinite(t(i, j))) throw ValidationError(where + ": non-finite weight");
            }
        ckpt.params.tensors.push_back(std::move(t));
    }
    if (is.peek() != std::char_traits<char>::eof()) throw ValidationError(where + ": trailing bytes after checkpoint payload");
    return ckpt;
}

}  // namespace fpuq
