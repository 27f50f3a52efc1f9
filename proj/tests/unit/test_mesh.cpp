#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "fpuq/common.hpp"
#include "fpuq/mesh.hpp"

using namespace fpuq;

namespace {

// Lattice points i*(r, 0) + k*(r/2, r*sqrt(3)/2) inside [0, side-1]^2.
std::size_t enumerate_lattice(std::size_t side, double r) {
    const double hi = static_cast<double>(side) - 1.0;
    const int span = static_cast<int>(4 * side / r) + 4;
    std::size_t count = 0;
    for (int k = -span; k <= span; ++k) {
        for (int i = -span; i <= span; ++i) {
            const double x = i * r + k * r / 2.0;
            const double y = k * r * std::sqrt(3.0) / 2.0;
            if (x >= -1e-6 && x <= hi + 1e-6 && y >= -1e-6 && y <= hi + 1e-6) ++count;
        }
    }
    return count;
}

}  // namespace

TEST_CASE("node count matches brute-force lattice enumeration") {
    const Mesh m = build_mesh(50, 4.0);
    CHECK(m.size() == enumerate_lattice(50, 4.0));
    CHECK(m.size() == 188);
    for (std::size_t side : {10u, 17u, 33u})
        for (double r : {1.0, 2.5, 3.0, 4.0}) CHECK(build_mesh(side, r).size() == enumerate_lattice(side, r));
}

TEST_CASE("interior nodes have degree 6; no node exceeds 6") {
    const Mesh m = build_mesh(50, 4.0);
    std::size_t interior = 0;
    for (std::size_t k = 0; k < m.size(); ++k) {
        CHECK(m.degree(k) <= 6);
        CHECK(m.degree(k) >= 2);
        if (m.is_interior(k)) {
            ++interior;
            CHECK(m.degree(k) == 6);
        }
    }
    CHECK(interior > 100);
}

TEST_CASE("edges are symmetric, unique, free of self loops, and length r") {
    const Mesh m = build_mesh(50, 4.0);
    std::set<std::pair<std::size_t, std::size_t>> seen;
    for (const auto& [a, b] : m.edges) {
        CHECK(a < b);
        CHECK(seen.insert({a, b}).second);
        const double d = std::hypot(m.nodes[a].x - m.nodes[b].x, m.nodes[a].y - m.nodes[b].y);
        CHECK(d == doctest::Approx(4.0).epsilon(1e-9));
        CHECK(std::count(m.neighbors[a].begin(), m.neighbors[a].end(), b) == 1);
        CHECK(std::count(m.neighbors[b].begin(), m.neighbors[b].end(), a) == 1);
    }
    std::size_t degree_sum = 0;
    for (std::size_t k = 0; k < m.size(); ++k) degree_sum += m.degree(k);
    CHECK(degree_sum == 2 * m.edges.size());
    CHECK(m.connected());
}

TEST_CASE("degenerate single-row mesh and spacing errors") {
    const Mesh m = build_mesh(4, 4.0);
    CHECK(m.connected());
    for (std::size_t k = 0; k < m.size(); ++k) CHECK(m.degree(k) <= 2);
    const Mesh row = build_mesh(9, 4.0);
    CHECK(row.connected());
    CHECK_THROWS_AS(build_mesh(3, 4.0), ValidationError);
    CHECK_THROWS_AS(build_mesh(10, 0.5), ValidationError);
}

TEST_CASE("encoder map is an exact partition; decoder distance bounded by spacing") {
    const Mesh m = build_mesh(50, 4.0);
    const GridMeshMap map = build_maps(m, 50);
    std::vector<int> hits(2500, 0);
    for (std::size_t node = 0; node < m.size(); ++node) {
        for (std::size_t cell : map.cells_of_node[node]) {
            ++hits[cell];
            CHECK(map.node_of_cell[cell] == node);
        }
    }
    for (int h : hits) CHECK(h == 1);
    for (std::size_t c = 0; c < 2500; ++c) {
        CHECK(map.distance[c] <= m.spacing);
        // brute-force nearest distance
        double best = 1e9;
        for (const auto& n : m.nodes) best = std::min(best, std::hypot(n.x - double(c % 50), n.y - double(c / 50)));
        CHECK(map.distance[c] == doctest::Approx(best).epsilon(1e-12));
    }
    // the cell at the origin node maps to node 0 at distance 0
    CHECK(map.node_of_cell[0] == 0);
    CHECK(map.distance[0] == 0.0);
}

TEST_CASE("nearest-node ties go to the lowest index") {
    Mesh m;
    m.side = 10;
    m.spacing = 2.0;
    for (int k = 0; k < 8; ++k) m.nodes.push_back({100.0 + k, 100.0});
    m.nodes[3] = {2.0, 5.0};
    m.nodes[7] = {6.0, 5.0};
    m.neighbors.assign(8, {});
    CHECK(nearest_node(m, 4.0, 5.0) == 3);
    std::swap(m.nodes[3], m.nodes[7]);
    CHECK(nearest_node(m, 4.0, 5.0) == 3);
    CHECK(nearest_node(m, 4.1, 5.0) == 3);
    CHECK(nearest_node(m, 3.9, 5.0) == 7);
}

TEST_CASE("mesh and maps are pure functions of (side, r)") {
    const Mesh a = build_mesh(50, 4.0), b = build_mesh(50, 4.0);
    CHECK(a.edges == b.edges);
    CHECK(build_maps(a, 50).node_of_cell == build_maps(b, 50).node_of_cell);
}
