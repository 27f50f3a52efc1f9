#include "fpuq/mesh.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "fpuq/common.hpp"

namespace fpuq {

namespace {

constexpr double kLatticeTolerance = 1e-6;

bool in_box(double x, double y, double hi) {
    return x >= -kLatticeTolerance && y >= -kLatticeTolerance && x <= hi + kLatticeTolerance &&
           y <= hi + kLatticeTolerance;
}

}  // namespace

bool Mesh::is_interior(std::size_t node) const {
    const double hi = static_cast<double>(side) - 1.0;
    const double h = spacing * std::sqrt(3.0) / 2.0;
    const auto& n = nodes[node];
    const double offsets[6][2] = {{spacing, 0.0},       {-spacing, 0.0},       {spacing / 2, h},
                                  {-spacing / 2, h},    {spacing / 2, -h},     {-spacing / 2, -h}};
    for (const auto& o : offsets)
        if (!in_box(n.x + o[0], n.y + o[1], hi)) return false;
    return true;
}

bool Mesh::connected() const {
    if (nodes.empty()) return true;
    std::vector<char> seen(nodes.size(), 0);
    std::vector<std::size_t> stack{0};
    seen[0] = 1;
    std::size_t visited = 1;
    while (!stack.empty()) {
        const std::size_t k = stack.back();
        stack.pop_back();
        for (std::size_t nb : neighbors[k]) {
            if (!seen[nb]) {
                seen[nb] = 1;
                ++visited;
                stack.push_back(nb);
            }
        }
    }
    return visited == nodes.size();
}

Mesh build_mesh(std::size_t side, double r) {
    if (!(r >= 1.0)) throw ValidationError("mesh spacing must be >= 1");
    if (r > static_cast<double>(side)) {
        throw ValidationError("mesh spacing " + std::to_string(r) + " exceeds patch side " + std::to_string(side));
    }
    Mesh mesh;
    mesh.side = side;
    mesh.spacing = r;
    const double hi = static_cast<double>(side) - 1.0;
    const double row_step = r * std::sqrt(3.0) / 2.0;
    for (std::size_t row = 0;; ++row) {
        const double y = static_cast<double>(row) * row_step;
        if (y > hi + kLatticeTolerance) break;
        const double shift = (row % 2 == 1) ? r / 2.0 : 0.0;
        for (std::size_t m = 0;; ++m) {
            const double x = shift + static_cast<double>(m) * r;
            if (x > hi + kLatticeTolerance) break;
            mesh.nodes.push_back({x, y});
        }
    }
    mesh.neighbors.assign(mesh.nodes.size(), {});
    for (std::size_t a = 0; a < mesh.nodes.size(); ++a) {
        for (std::size_t b = a + 1; b < mesh.nodes.size(); ++b) {
            const double d = std::hypot(mesh.nodes[a].x - mesh.nodes[b].x, mesh.nodes[a].y - mesh.nodes[b].y);
            if (std::abs(d - r) <= kLatticeTolerance) {
                mesh.edges.emplace_back(a, b);
                mesh.neighbors[a].push_back(b);
                mesh.neighbors[b].push_back(a);
            }
        }
    }
    return mesh;
}

std::size_t nearest_node(const Mesh& mesh, double x, double y) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < mesh.nodes.size(); ++k) {
        const double d = std::hypot(mesh.nodes[k].x - x, mesh.nodes[k].y - y);
        if (d < best_d - kTieTolerance) {
            best = k;
            best_d = d;
        }
    }
    return best;
}

GridMeshMap build_maps(const Mesh& mesh, std::size_t side) {
    if (mesh.nodes.empty()) throw ValidationError("build_maps: empty mesh");
    GridMeshMap map;
    map.side = side;
    map.cells_of_node.assign(mesh.size(), {});
    map.node_of_cell.resize(side * side);
    map.distance.resize(side * side);
    for (std::size_t a = 0; a < side; ++a) {
        for (std::size_t b = 0; b < side; ++b) {
            const std::size_t cell = a * side + b;
            const double x = static_cast<double>(b), y = static_cast<double>(a);
            const std::size_t node = nearest_node(mesh, x, y);
            map.node_of_cell[cell] = node;
            map.distance[cell] = std::hypot(mesh.nodes[node].x - x, mesh.nodes[node].y - y);
            map.cells_of_node[node].push_back(cell);
        }
    }
    return map;
}

}  // namespace fpuq
