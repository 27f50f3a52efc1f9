#include "fpuq/gnn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "fpuq/common.hpp"

namespace fpuq {

void Hyperparams::validate() const {
    if (in_channels == 0 || latent == 0) throw ValidationError("model: zero-width layer");
    if (side == 0) throw ValidationError("model: patch side must be >= 1");
    if (!(mesh_spacing >= 1.0) || mesh_spacing > static_cast<double>(side))
        throw ValidationError("model: mesh spacing must lie in [1, side]");
}

std::vector<std::pair<std::size_t, std::size_t>> tensor_shapes(const Hyperparams& hp) {
    const std::size_t C = hp.in_channels, L = hp.latent;
    std::vector<std::pair<std::size_t, std::size_t>> s;
    auto mlp = [&s](std::size_t in, std::size_t hidden, std::size_t out) {
        s.emplace_back(hidden, in);
        s.emplace_back(hidden, 1);
        s.emplace_back(out, hidden);
        s.emplace_back(out, 1);
    };
    mlp(C + 1, L, L);  // encoder, per cell
    mlp(L, L, L);      // encoder, per node
    for (std::size_t r = 0; r < hp.rounds; ++r) {
        mlp(2 * L, L, L);  // message
        mlp(2 * L, L, L);  // update
    }
    mlp(L + 1, L, 1);  // decoder
    return s;
}

std::size_t parameter_count(const Hyperparams& hp) {
    const std::size_t C = hp.in_channels, L = hp.latent, R = hp.rounds;
    const std::size_t enc_cell = (C + 1) * L + L + L * L + L;
    const std::size_t enc_node = 2 * (L * L + L);
    const std::size_t round = 2 * (2 * L * L + L + L * L + L);
    const std::size_t dec = (L + 1) * L + L + L + 1;
    return enc_cell + enc_node + R * round + dec;
}

Graph Graph::build(std::size_t side, double spacing) {
    Graph g;
    g.mesh = build_mesh(side, spacing);
    g.maps = build_maps(g.mesh, side);
    const std::size_t n = g.mesh.size();
    g.in_offset.assign(n + 1, 0);
    for (std::size_t dst = 0; dst < n; ++dst) {
        auto nbrs = g.mesh.neighbors[dst];
        std::sort(nbrs.begin(), nbrs.end());
        for (std::size_t src : nbrs) {
            g.edge_src.push_back(src);
            g.edge_dst.push_back(dst);
        }
        g.in_offset[dst + 1] = g.edge_src.size();
    }
    return g;
}

template <typename T>
std::vector<std::string> ModelParams<T>::tensor_names() const {
    std::vector<std::string> names;
    auto mlp = [&names](const std::string& prefix) {
        for (const char* s : {".W1", ".b1", ".W2", ".b2"}) names.push_back(prefix + s);
    };
    mlp("encoder.cell");
    mlp("encoder.node");
    for (std::size_t r = 0; r < hp.rounds; ++r) {
        mlp("round" + std::to_string(r) + ".message");
        mlp("round" + std::to_string(r) + ".update");
    }
    mlp("decoder");
    return names;
}

template <typename T>
std::size_t ModelParams<T>::size() const {
    std::size_t n = 0;
    for (const auto& t : tensors) n += static_cast<std::size_t>(t.size());
    return n;
}

template <typename T>
void ModelParams<T>::set_zero() {
    for (auto& t : tensors) t.setZero();
}

template <typename T>
bool ModelParams<T>::same_shape(const ModelParams& other) const {
    if (tensors.size() != other.tensors.size()) return false;
    for (std::size_t k = 0; k < tensors.size(); ++k) {
        if (tensors[k].rows() != other.tensors[k].rows() || tensors[k].cols() != other.tensors[k].cols())
            return false;
    }
    return true;
}

ModelParams<double> init_params(std::uint64_t seed, const Hyperparams& hp) {
    hp.validate();
    ModelParams<double> p;
    p.seed = seed;
    p.hp = hp;
    std::mt19937_64 rng(derive_seed(seed, 0));
    const auto shapes = tensor_shapes(hp);
    for (std::size_t k = 0; k < shapes.size(); ++k) {
        const auto [rows, cols] = shapes[k];
        Mat<double> t = Mat<double>::Zero(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
        if (k % 2 == 0) {  // weights; biases stay zero
            const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
            std::uniform_real_distribution<double> dist(-bound, bound);
            for (Eigen::Index i = 0; i < t.rows(); ++i)
                for (Eigen::Index j = 0; j < t.cols(); ++j) t(i, j) = dist(rng);
        }
        p.tensors.push_back(std::move(t));
    }
    return p;
}

namespace {

template <typename T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

template <typename T>
void activate(Mat<T>& z_to_a, Activation a) {
    if (a == Activation::relu) z_to_a = z_to_a.cwiseMax(T(0));
}

/// d <- d * act'(z)
template <typename T>
void activation_grad(Mat<T>& d, const Mat<T>& z, Activation a) {
    if (a == Activation::relu) d = (z.array() > T(0)).select(d, T(0));
}

template <typename T>
void check_input(const ModelParams<T>& params, const Mat<T>& x, const Graph& graph) {
    const auto& hp = params.hp;
    if (params.tensors.size() != tensor::count(hp.rounds))
        throw ValidationError("forward: parameter set has the wrong number of tensors");
    if (static_cast<std::size_t>(x.rows()) != hp.in_channels) {
        throw ValidationError("forward: encoder.cell.W1 expects " + std::to_string(hp.in_channels) +
                              " input channels, got " + std::to_string(x.rows()));
    }
    if (static_cast<std::size_t>(x.cols()) != graph.cells()) {
        throw ValidationError("forward: input has " + std::to_string(x.cols()) + " cells, graph has " +
                              std::to_string(graph.cells()));
    }
}

}  // namespace

template <typename T>
Vec<T> forward(const ModelParams<T>& params, const Mat<T>& x, const Graph& graph, ForwardCache<T>* cache) {
    check_input(params, x, graph);
    const auto& P = params.tensors;
    const Activation act = params.hp.activation;
    const auto C = static_cast<Eigen::Index>(params.hp.in_channels);
    const auto L = static_cast<Eigen::Index>(params.hp.latent);
    const std::size_t n_nodes = graph.nodes();
    const std::size_t n_cells = graph.cells();
    const std::size_t n_edges = graph.edge_src.size();
    const auto& node_of_cell = graph.maps.node_of_cell;
    const auto& cells_of_node = graph.maps.cells_of_node;
    const Eigen::Matrix<T, 1, Eigen::Dynamic> dist =
        Eigen::Map<const Eigen::RowVectorXd>(graph.maps.distance.data(), static_cast<Eigen::Index>(n_cells))
            .template cast<T>();

    ForwardCache<T> c;
    c.input = &x;
    c.tensor_count = P.size();

    // Encoder: per-cell hidden layer, mean over each node's cells, then the
    // cell MLP's output layer (linear, so it commutes with the mean).
    {
        const std::size_t k = tensor::kEncCell;
        c.z_cell.noalias() = P[k].leftCols(C) * x;
        c.z_cell.noalias() += P[k].col(C) * dist;
        c.z_cell.colwise() += P[k + 1].col(0);
        c.a_cell = c.z_cell;
        activate(c.a_cell, act);
        c.g_node = Mat<T>::Zero(L, static_cast<Eigen::Index>(n_nodes));
        for (std::size_t n = 0; n < n_nodes; ++n) {
            const auto& cells = cells_of_node[n];
            if (cells.empty()) continue;
            auto col = c.g_node.col(static_cast<Eigen::Index>(n));
            for (std::size_t cell : cells) col += c.a_cell.col(static_cast<Eigen::Index>(cell));
            col /= static_cast<T>(cells.size());
        }
        c.e_node.noalias() = P[k + 2] * c.g_node;
        c.e_node.colwise() += P[k + 3].col(0);
        for (std::size_t n = 0; n < n_nodes; ++n)
            if (cells_of_node[n].empty()) c.e_node.col(static_cast<Eigen::Index>(n)).setZero();
    }
    Mat<T> h;
    {
        const std::size_t k = tensor::kEncNode;
        c.z_node.noalias() = P[k] * c.e_node;
        c.z_node.colwise() += P[k + 1].col(0);
        c.a_node = c.z_node;
        activate(c.a_node, act);
        h.noalias() = P[k + 2] * c.a_node;
        h.colwise() += P[k + 3].col(0);
    }

    // Processor: mean-aggregated edge messages, residual node updates.
    c.rounds.resize(params.hp.rounds);
    for (std::size_t r = 0; r < params.hp.rounds; ++r) {
        RoundCache<T>& rc = c.rounds[r];
        const std::size_t km = tensor::message(r);
        const std::size_t ku = tensor::update(r);
        rc.h_in = h;
        Mat<T> s, d;
        s.noalias() = P[km].leftCols(L) * h;
        d.noalias() = P[km].rightCols(L) * h;
        d.colwise() += P[km + 1].col(0);
        rc.z_edge.resize(L, static_cast<Eigen::Index>(n_edges));
        for (std::size_t e = 0; e < n_edges; ++e) {
            rc.z_edge.col(static_cast<Eigen::Index>(e)) =
                s.col(static_cast<Eigen::Index>(graph.edge_src[e])) + d.col(static_cast<Eigen::Index>(graph.edge_dst[e]));
        }
        Mat<T> a_edge = rc.z_edge;
        activate(a_edge, act);
        rc.a_bar = Mat<T>::Zero(L, static_cast<Eigen::Index>(n_nodes));
        for (std::size_t n = 0; n < n_nodes; ++n) {
            const std::size_t deg = graph.in_degree(n);
            if (deg == 0) continue;
            auto col = rc.a_bar.col(static_cast<Eigen::Index>(n));
            for (std::size_t e = graph.in_offset[n]; e < graph.in_offset[n + 1]; ++e)
                col += a_edge.col(static_cast<Eigen::Index>(e));
            col /= static_cast<T>(deg);
        }
        rc.msg.noalias() = P[km + 2] * rc.a_bar;
        rc.msg.colwise() += P[km + 3].col(0);
        for (std::size_t n = 0; n < n_nodes; ++n)
            if (graph.in_degree(n) == 0) rc.msg.col(static_cast<Eigen::Index>(n)).setZero();

        rc.z_upd.noalias() = P[ku].leftCols(L) * h;
        rc.z_upd.noalias() += P[ku].rightCols(L) * rc.msg;
        rc.z_upd.colwise() += P[ku + 1].col(0);
        rc.a_upd = rc.z_upd;
        activate(rc.a_upd, act);
        h.noalias() += P[ku + 2] * rc.a_upd;
        h.colwise() += P[ku + 3].col(0);
    }
    c.h_final = h;

    // Decoder: nearest node latent plus distance, per cell.
    {
        const std::size_t k = tensor::decoder(params.hp.rounds);
        Mat<T> q;
        q.noalias() = P[k].leftCols(L) * h;
        const Vec<T> w_dist = P[k].col(L);
        const Vec<T> b1 = P[k + 1].col(0);
        c.z_dec.resize(L, static_cast<Eigen::Index>(n_cells));
        for (std::size_t cell = 0; cell < n_cells; ++cell) {
            c.z_dec.col(static_cast<Eigen::Index>(cell)) =
                q.col(static_cast<Eigen::Index>(node_of_cell[cell])) + w_dist * dist(static_cast<Eigen::Index>(cell)) + b1;
        }
        c.a_dec = c.z_dec;
        activate(c.a_dec, act);
        c.output = (P[k + 2] * c.a_dec).transpose();
        c.output.array() += P[k + 3](0, 0);
    }

    Vec<T> out = c.output;
    if (cache) *cache = std::move(c);
    return out;
}

template <typename T>
void backward(const ModelParams<T>& params, const ForwardCache<T>& cache, const Graph& graph,
              const Vec<T>& grad_output, ModelParams<T>& grads) {
    const auto& P = params.tensors;
    auto& G = grads.tensors;
    if (cache.tensor_count != P.size() || cache.rounds.size() != params.hp.rounds || cache.input == nullptr)
        throw ValidationError("backward: cache does not come from a forward pass with these parameters");
    if (!grads.same_shape(params)) throw ValidationError("backward: gradient buffer shape mismatch");
    if (static_cast<std::size_t>(grad_output.size()) != graph.cells())
        throw ValidationError("backward: upstream gradient has the wrong length");

    const Activation act = params.hp.activation;
    const auto C = static_cast<Eigen::Index>(params.hp.in_channels);
    const auto L = static_cast<Eigen::Index>(params.hp.latent);
    const std::size_t n_nodes = graph.nodes();
    const std::size_t n_cells = graph.cells();
    const std::size_t n_edges = graph.edge_src.size();
    const auto& node_of_cell = graph.maps.node_of_cell;
    const auto& cells_of_node = graph.maps.cells_of_node;
    const Eigen::Matrix<T, 1, Eigen::Dynamic> dist =
        Eigen::Map<const Eigen::RowVectorXd>(graph.maps.distance.data(), static_cast<Eigen::Index>(n_cells))
            .template cast<T>();
    const Eigen::Matrix<T, 1, Eigen::Dynamic> dy = grad_output.transpose();

    Mat<T> dh;
    {
        const std::size_t k = tensor::decoder(params.hp.rounds);
        G[k + 2].noalias() += dy * cache.a_dec.transpose();
        G[k + 3](0, 0) += dy.sum();
        Mat<T> dz = P[k + 2].transpose() * dy;
        activation_grad(dz, cache.z_dec, act);
        G[k + 1].col(0) += dz.rowwise().sum();
        G[k].col(L).noalias() += dz * dist.transpose();
        Mat<T> dq = Mat<T>::Zero(L, static_cast<Eigen::Index>(n_nodes));
        for (std::size_t cell = 0; cell < n_cells; ++cell)
            dq.col(static_cast<Eigen::Index>(node_of_cell[cell])) += dz.col(static_cast<Eigen::Index>(cell));
        G[k].leftCols(L).noalias() += dq * cache.h_final.transpose();
        dh.noalias() = P[k].leftCols(L).transpose() * dq;
    }

    for (std::size_t r = params.hp.rounds; r-- > 0;) {
        const RoundCache<T>& rc = cache.rounds[r];
        const std::size_t km = tensor::message(r);
        const std::size_t ku = tensor::update(r);

        // Update MLP; the residual passes dh through unchanged.
        G[ku + 2].noalias() += dh * rc.a_upd.transpose();
        G[ku + 3].col(0) += dh.rowwise().sum();
        Mat<T> dz_upd = P[ku + 2].transpose() * dh;
        activation_grad(dz_upd, rc.z_upd, act);
        G[ku].leftCols(L).noalias() += dz_upd * rc.h_in.transpose();
        G[ku].rightCols(L).noalias() += dz_upd * rc.msg.transpose();
        G[ku + 1].col(0) += dz_upd.rowwise().sum();
        Mat<T> dh_in = dh;
        dh_in.noalias() += P[ku].leftCols(L).transpose() * dz_upd;
        Mat<T> dmsg = P[ku].rightCols(L).transpose() * dz_upd;
        for (std::size_t n = 0; n < n_nodes; ++n)
            if (graph.in_degree(n) == 0) dmsg.col(static_cast<Eigen::Index>(n)).setZero();

        // Message MLP output layer acts on the mean hidden activation.
        G[km + 2].noalias() += dmsg * rc.a_bar.transpose();
        G[km + 3].col(0) += dmsg.rowwise().sum();
        const Mat<T> da_bar = P[km + 2].transpose() * dmsg;
        Mat<T> dz_edge(L, static_cast<Eigen::Index>(n_edges));
        for (std::size_t e = 0; e < n_edges; ++e) {
            const std::size_t dst = graph.edge_dst[e];
            dz_edge.col(static_cast<Eigen::Index>(e)) =
                da_bar.col(static_cast<Eigen::Index>(dst)) / static_cast<T>(graph.in_degree(dst));
        }
        activation_grad(dz_edge, rc.z_edge, act);
        Mat<T> ds = Mat<T>::Zero(L, static_cast<Eigen::Index>(n_nodes));
        Mat<T> dd = Mat<T>::Zero(L, static_cast<Eigen::Index>(n_nodes));
        for (std::size_t e = 0; e < n_edges; ++e) {
            ds.col(static_cast<Eigen::Index>(graph.edge_src[e])) += dz_edge.col(static_cast<Eigen::Index>(e));
            dd.col(static_cast<Eigen::Index>(graph.edge_dst[e])) += dz_edge.col(static_cast<Eigen::Index>(e));
        }
        G[km].leftCols(L).noalias() += ds * rc.h_in.transpose();
        G[km].rightCols(L).noalias() += dd * rc.h_in.transpose();
        G[km + 1].col(0) += dd.rowwise().sum();
        dh_in.noalias() += P[km].leftCols(L).transpose() * ds;
        dh_in.noalias() += P[km].rightCols(L).transpose() * dd;
        dh = std::move(dh_in);
    }

    Mat<T> de;
    {
        const std::size_t k = tensor::kEncNode;
        G[k + 2].noalias() += dh * cache.a_node.transpose();
        G[k + 3].col(0) += dh.rowwise().sum();
        Mat<T> dz = P[k + 2].transpose() * dh;
        activation_grad(dz, cache.z_node, act);
        G[k].noalias() += dz * cache.e_node.transpose();
        G[k + 1].col(0) += dz.rowwise().sum();
        de.noalias() = P[k].transpose() * dz;
    }
    {
        const std::size_t k = tensor::kEncCell;
        for (std::size_t n = 0; n < n_nodes; ++n)
            if (cells_of_node[n].empty()) de.col(static_cast<Eigen::Index>(n)).setZero();
        G[k + 2].noalias() += de * cache.g_node.transpose();
        G[k + 3].col(0) += de.rowwise().sum();
        const Mat<T> dg = P[k + 2].transpose() * de;
        Mat<T> dz(L, static_cast<Eigen::Index>(n_cells));
        for (std::size_t cell = 0; cell < n_cells; ++cell) {
            const std::size_t n = node_of_cell[cell];
            dz.col(static_cast<Eigen::Index>(cell)) =
                dg.col(static_cast<Eigen::Index>(n)) / static_cast<T>(cells_of_node[n].size());
        }
        activation_grad(dz, cache.z_cell, act);
        G[k].leftCols(C).noalias() += dz * cache.input->transpose();
        G[k].col(C).noalias() += dz * dist.transpose();
        G[k + 1].col(0) += dz.rowwise().sum();
    }
}

namespace {

double mse_loss(const Eigen::VectorXd& pred, const Eigen::VectorXd& target) {
    return (pred - target).squaredNorm() / static_cast<double>(pred.size());
}

bool same_relu_pattern(const ForwardCache<double>& a, const ForwardCache<double>& b) {
    auto same = [](const Mat<double>& x, const Mat<double>& y) {
        return ((x.array() > 0.0) == (y.array() > 0.0)).all();
    };
    if (!same(a.z_cell, b.z_cell) || !same(a.z_node, b.z_node) || !same(a.z_dec, b.z_dec)) return false;
    for (std::size_t r = 0; r < a.rounds.size(); ++r) {
        if (!same(a.rounds[r].z_edge, b.rounds[r].z_edge) || !same(a.rounds[r].z_upd, b.rounds[r].z_upd))
            return false;
    }
    return true;
}

}  // namespace

GradientCheckResult gradient_check(const ModelParams<double>& params, const Mat<double>& x,
                                   const Eigen::VectorXd& target, const Graph& graph, double epsilon,
                                   std::size_t min_samples, std::uint64_t sample_seed) {
    if (!(epsilon >= 1e-7 && epsilon <= 1e-4)) {
        throw ValidationError("gradient_check: epsilon must lie in [1e-7, 1e-4]");
    }
    ForwardCache<double> base;
    const Eigen::VectorXd pred = forward(params, x, graph, &base);
    const double loss0 = mse_loss(pred, target);
    if (!std::isfinite(loss0)) throw ValidationError("gradient_check: non-finite loss");

    ModelParams<double> grads = zero_like(params);
    const Eigen::VectorXd dy = 2.0 * (pred - target) / static_cast<double>(pred.size());
    backward(params, base, graph, dy, grads);

    const auto names = params.tensor_names();
    const std::size_t n_tensors = params.tensors.size();
    std::size_t quota = (min_samples + n_tensors - 1) / n_tensors;
    for (;;) {  // grow the per-tensor quota until the subsample is large enough
        std::size_t total = 0;
        for (const auto& t : params.tensors) total += std::min<std::size_t>(quota, static_cast<std::size_t>(t.size()));
        if (total >= min_samples || quota >= params.size()) break;
        ++quota;
    }

    GradientCheckResult result;
    std::mt19937_64 rng(sample_seed);
    ModelParams<double> probe = params;
    for (std::size_t k = 0; k < n_tensors; ++k) {
        const auto size = static_cast<std::size_t>(params.tensors[k].size());
        std::vector<std::size_t> order(size);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::shuffle(order.begin(), order.end(), rng);
        std::size_t taken = 0;
        for (std::size_t idx : order) {
            if (taken >= std::min(quota, size)) break;
            double* w = probe.tensors[k].data() + idx;
            const double saved = *w;
            ForwardCache<double> plus, minus;
            *w = saved + epsilon;
            const double lp = mse_loss(forward(probe, x, graph, &plus), target);
            *w = saved - epsilon;
            const double lm = mse_loss(forward(probe, x, graph, &minus), target);
            *w = saved;
            if (!std::isfinite(lp) || !std::isfinite(lm)) throw ValidationError("gradient_check: non-finite loss");
            if (params.hp.activation == Activation::relu &&
                (!same_relu_pattern(base, plus) || !same_relu_pattern(base, minus))) {
                ++result.skipped_kinks;
                continue;
            }
            const double fd = (lp - lm) / (2.0 * epsilon);
            const double an = grads.tensors[k].data()[idx];
            const double rel = std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-8});
            if (rel > result.max_relative_error) {
                result.max_relative_error = rel;
                result.worst_tensor = names[k];
            }
            ++result.checked;
            ++taken;
        }
    }
    return result;
}

template struct ModelParams<float>;
template struct ModelParams<double>;
template Vec<float> forward(const ModelParams<float>&, const Mat<float>&, const Graph&, ForwardCache<float>*);
template Vec<double> forward(const ModelParams<double>&, const Mat<double>&, const Graph&, ForwardCache<double>*);
template void backward(const ModelParams<float>&, const ForwardCache<float>&, const Graph&, const Vec<float>&,
                       ModelParams<float>&);
template void backward(const ModelParams<double>&, const ForwardCache<double>&, const Graph&, const Vec<double>&,
                       ModelParams<double>&);

}  // namespace fpuq
