#pragma once

#include "hsi/geometry.hpp"

#include <Eigen/SparseCore>

#include <vector>

namespace hsi {

using SparseMap = Eigen::SparseMatrix<double, Eigen::RowMajor>;

// Result of quadric-error half-edge collapse. Surviving vertices keep their
// positions, so the coarse mesh is a vertex subset of the input.
struct Simplified {
    TriMesh mesh;
    std::vector<int> kept; // coarse vertex -> fine vertex
};

Simplified simplify_mesh(const TriMesh& mesh, std::size_t target_vertices);

// Coarse-to-fine pyramid used by the pooling layers.
// down_maps[k]: (|V_{k+1}| x |V_k|), up_maps[k]: (|V_k| x |V_{k+1}|); rows sum to 1.
struct MeshHierarchy {
    std::vector<TriMesh> levels;
    std::vector<SparseMap> down_maps;
    std::vector<SparseMap> up_maps;

    std::size_t level_count() const { return levels.size(); }
};

// Each level has round(|V| / factor) vertices. Down maps select the surviving
// vertex; up maps interpolate barycentrically on the closest coarse triangle.
MeshHierarchy build_hierarchy(const TriMesh& mesh, int factor, int levels);

// Fixed-length spiral sequences per vertex, row-major (vertex_count x length).
struct SpiralIndex {
    int length = 0;
    std::vector<int> indices;

    std::size_t vertex_count() const { return length ? indices.size() / length : 0; }
    const int* row(std::size_t v) const { return indices.data() + v * length; }
    bool operator==(const SpiralIndex&) const = default;
};

// Center, then the 1-ring counter-clockwise from its smallest-index vertex,
// then later rings in continuing rotational order. Short spirals are padded
// with the center vertex.
SpiralIndex build_spirals(const TriMesh& mesh, int length);

// Counter-clockwise (about the outward normal) neighbor cycle of every vertex,
// rotated to start at its smallest-index neighbor.
std::vector<std::vector<int>> ordered_one_rings(const TriMesh& mesh);

} // namespace hsi
