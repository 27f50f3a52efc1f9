#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fpuq/mesh.hpp"

namespace fpuq {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;

enum class Activation : std::uint8_t { relu = 0, identity = 1 };

struct Hyperparams {
    std::size_t in_channels = 47;
    std::size_t latent = 64;
    std::size_t rounds = 4;
    Activation activation = Activation::relu;
    std::size_t side = 50;
    double mesh_spacing = 4.0;

    void validate() const;
    bool operator==(const Hyperparams&) const = default;
};

/// Closed-form parameter count. With C inputs, latent width L and R rounds:
///   encoder cell MLP   (C+1)L + L + L^2 + L
///   encoder node MLP   2(L^2 + L)
///   each round         message (2L^2 + L + L^2 + L) + update (same)
///   decoder            (L+1)L + L + L + 1
std::size_t parameter_count(const Hyperparams& hp);

/// Mesh, grid maps and the directed edge list derived from (side, spacing).
/// Directed edges are grouped by destination node.
struct Graph {
    Mesh mesh;
    GridMeshMap maps;
    std::vector<std::size_t> edge_src;
    std::vector<std::size_t> edge_dst;
    std::vector<std::size_t> in_offset;  // edges of node i: [in_offset[i], in_offset[i+1])

    static Graph build(std::size_t side, double spacing);
    std::size_t nodes() const { return mesh.size(); }
    std::size_t cells() const { return maps.node_of_cell.size(); }
    std::size_t in_degree(std::size_t node) const { return in_offset[node + 1] - in_offset[node]; }
};

// Tensor indices. Every MLP is two linear layers (W1, b1, activation, W2, b2).
namespace tensor {
inline constexpr std::size_t kPerMlp = 4;
inline constexpr std::size_t kEncCell = 0;
inline constexpr std::size_t kEncNode = 4;
inline constexpr std::size_t kRoundBase = 8;
inline constexpr std::size_t kPerRound = 8;  // message MLP then update MLP
inline std::size_t message(std::size_t round) { return kRoundBase + round * kPerRound; }
inline std::size_t update(std::size_t round) { return kRoundBase + round * kPerRound + kPerMlp; }
inline std::size_t decoder(std::size_t rounds) { return kRoundBase + rounds * kPerRound; }
inline std::size_t count(std::size_t rounds) { return decoder(rounds) + kPerMlp; }
}  // namespace tensor

/// All weights of one encoder-processor-decoder emulator.
///
/// Layer inputs are concatenations, stored as one weight matrix each:
///   encoder cell W1: [features | cell-node distance]
///   message W1:      [source latent | destination latent]
///   update W1:       [node latent | mean incoming message]
///   decoder W1:      [node latent | cell-node distance]
template <typename T>
struct ModelParams {
    std::uint64_t seed = 0;
    Hyperparams hp;
    std::vector<Mat<T>> tensors;  // biases are column vectors

    std::vector<std::string> tensor_names() const;
    std::size_t size() const;
    void set_zero();
    template <typename U>
    ModelParams<U> cast() const {
        ModelParams<U> out;
        out.seed = seed;
        out.hp = hp;
        for (const auto& t : tensors) out.tensors.push_back(t.template cast<U>());
        return out;
    }
    bool same_shape(const ModelParams& other) const;
};

/// Shapes of every tensor, in storage order.
std::vector<std::pair<std::size_t, std::size_t>> tensor_shapes(const Hyperparams& hp);

/// Glorot-uniform weights, zero biases; a pure function of (seed, hp).
ModelParams<double> init_params(std::uint64_t seed, const Hyperparams& hp);

template <typename T>
ModelParams<T> zero_like(const ModelParams<T>& p) {
    ModelParams<T> z = p;
    z.set_zero();
    return z;
}

template <typename T>
struct RoundCache {
    Mat<T> h_in;   // L x nodes
    Mat<T> z_edge; // L x edges
    Mat<T> a_bar;  // L x nodes, mean activated edge hidden
    Mat<T> msg;    // L x nodes
    Mat<T> z_upd;  // L x nodes
    Mat<T> a_upd;
};

template <typename T>
struct ForwardCache {
    const Mat<T>* input = nullptr;  // C x cells
    Mat<T> z_cell, a_cell;          // L x cells
    Mat<T> g_node;                  // L x nodes, mean of a_cell per node
    Mat<T> e_node;                  // encoder cell MLP output per node
    Mat<T> z_node, a_node;
    std::vector<RoundCache<T>> rounds;
    Mat<T> h_final;
    Mat<T> z_dec, a_dec;            // L x cells
    Eigen::Matrix<T, Eigen::Dynamic, 1> output;  // cells
    std::size_t tensor_count = 0;
};

/// Forward pass on normalized features x (C x cells). Returns the log-space
/// prediction per patch cell; fills cache when non-null.
template <typename T>
Eigen::Matrix<T, Eigen::Dynamic, 1> forward(const ModelParams<T>& params, const Mat<T>& x,
                                            const Graph& graph, ForwardCache<T>* cache = nullptr);

/// Accumulates dLoss/dparams into grads given dLoss/doutput.
template <typename T>
void backward(const ModelParams<T>& params, const ForwardCache<T>& cache, const Graph& graph,
              const Eigen::Matrix<T, Eigen::Dynamic, 1>& grad_output, ModelParams<T>& grads);

struct GradientCheckResult {
    double max_relative_error = 0.0;
    std::size_t checked = 0;
    std::size_t skipped_kinks = 0;
    std::string worst_tensor;
};

/// Central finite differences over a random subsample of parameters covering
/// every tensor, for loss = mean squared error against target. Parameters whose
/// perturbation flips any ReLU are replaced by another draw from the same tensor.
GradientCheckResult gradient_check(const ModelParams<double>& params, const Mat<double>& x,
                                   const Eigen::VectorXd& target, const Graph& graph, double epsilon,
                                   std::size_t min_samples = 200, std::uint64_t sample_seed = 1);

}  // namespace fpuq
