#pragma once

#include <cstddef>
#include <vector>

namespace fpuq {

struct MeshNode {
    double x = 0.0;  // patch column coordinate
    double y = 0.0;  // patch row coordinate
};

/// Regular triangular lattice over a patch. Cell (a, b) of the patch has
/// coordinates (x = b, y = a).
struct Mesh {
    std::size_t side = 0;
    double spacing = 0.0;
    std::vector<MeshNode> nodes;
    /// Undirected edges with first < second.
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    std::vector<std::vector<std::size_t>> neighbors;

    std::size_t size() const { return nodes.size(); }
    std::size_t degree(std::size_t node) const { return neighbors[node].size(); }
    /// True when all six lattice neighbours of the node fall inside the patch box.
    bool is_interior(std::size_t node) const;
    bool connected() const;
};

/// Rows are r*sqrt(3)/2 apart and odd rows are shifted by r/2. Nodes inside
/// [0, side-1]^2 are kept; nodes at distance r (within 1e-6) are joined.
Mesh build_mesh(std::size_t side, double r = 4.0);

/// Cell <-> node assignment. The encoder and decoder both use the nearest
/// node, so node_of_cell serves both directions.
struct GridMeshMap {
    std::size_t side = 0;
    std::vector<std::vector<std::size_t>> cells_of_node;  // encoder sets
    std::vector<std::size_t> node_of_cell;                // decoder map
    std::vector<double> distance;                         // cell to its node, in cells
};

inline constexpr double kTieTolerance = 1e-9;

/// Nearest node to (x, y); ties within kTieTolerance go to the lowest index.
std::size_t nearest_node(const Mesh& mesh, double x, double y);

GridMeshMap build_maps(const Mesh& mesh, std::size_t side);

}  // namespace fpuq
