#pragma once

#include "hsi/geometry.hpp"

#include <array>
#include <vector>

namespace hsi {

struct ClosestPointResult {
    Vec3 point = Vec3::Zero();
    double distance = 0.0;
    int face_index = -1;
    std::array<double, 3> barycentric{1.0, 0.0, 0.0};
};

// Closest point on triangle (a, b, c) to p with barycentric weights of the result.
struct TrianglePoint {
    Vec3 point;
    std::array<double, 3> barycentric;
};
TrianglePoint closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);

// Static AABB tree over the triangles of a mesh. Immutable after construction;
// concurrent queries are safe.
class ProximityTree {
public:
    explicit ProximityTree(const TriMesh& mesh);

    // Globally nearest surface point; ties resolved toward the lowest face index.
    ClosestPointResult closest_point(const Vec3& query) const;

    const TriMesh& mesh() const { return mesh_; }
    std::size_t node_count() const { return nodes_.size(); }

private:
    struct Node {
        Aabb box;
        int left = -1;  // child index, or -1 for leaves
        int right = -1;
        int begin = 0;  // range into order_ for leaves
        int end = 0;
    };

    int build(int begin, int end, std::vector<Vec3>& centroids);

    TriMesh mesh_;
    std::vector<Aabb> face_boxes_;
    std::vector<int> order_;
    std::vector<Node> nodes_;
};

inline ClosestPointResult closest_point(const ProximityTree& tree, const Vec3& query)
{
    return tree.closest_point(query);
}

} // namespace hsi
