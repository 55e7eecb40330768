#include "hsi/bvh.hpp"
#include "hsi/parallel.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

namespace hsi {

namespace {
constexpr int kLeafSize = 4;
}

// Region-based closest point (Ericson, Real-Time Collision Detection 5.1.5).
TrianglePoint closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c)
{
    const Vec3 ab = b - a;
    const Vec3 ac = c - a;
    const Vec3 ap = p - a;
    const double d1 = ab.dot(ap);
    const double d2 = ac.dot(ap);
    if (d1 <= 0.0 && d2 <= 0.0) {
        return {a, {1.0, 0.0, 0.0}};
    }
    const Vec3 bp = p - b;
    const double d3 = ab.dot(bp);
    const double d4 = ac.dot(bp);
    if (d3 >= 0.0 && d4 <= d3) {
        return {b, {0.0, 1.0, 0.0}};
    }
    const double vc = d1 * d4 - d3 * d2;
    if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
        const double v = d1 / (d1 - d3);
        return {a + v * ab, {1.0 - v, v, 0.0}};
    }
    const Vec3 cp = p - c;
    const double d5 = ab.dot(cp);
    const double d6 = ac.dot(cp);
    if (d6 >= 0.0 && d5 <= d6) {
        return {c, {0.0, 0.0, 1.0}};
    }
    const double vb = d5 * d2 - d1 * d6;
    if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
        const double w = d2 / (d2 - d6);
        return {a + w * ac, {1.0 - w, 0.0, w}};
    }
    const double va = d3 * d6 - d5 * d4;
    if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
        const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return {b + w * (c - b), {0.0, 1.0 - w, w}};
    }
    const double denom = 1.0 / (va + vb + vc);
    const double v = vb * denom;
    const double w = vc * denom;
    return {a + ab * v + ac * w, {1.0 - v - w, v, w}};
}

ProximityTree::ProximityTree(const TriMesh& mesh) : mesh_(mesh)
{
    if (mesh_.faces.empty()) {
        throw Error("cannot build a proximity structure over an empty mesh");
    }
    mesh_.validate();
    const std::size_t n = mesh_.faces.size();
    face_boxes_.resize(n);
    std::vector<Vec3> centroids(n);
    parallel_for_each(n, [&](std::size_t f) {
        const Face& t = mesh_.faces[f];
        Aabb box;
        for (int i : t) {
            box.extend(mesh_.vertices[i]);
        }
        face_boxes_[f] = box;
        centroids[f] = (mesh_.vertices[t[0]] + mesh_.vertices[t[1]] + mesh_.vertices[t[2]]) / 3.0;
    });
    order_.resize(n);
    std::iota(order_.begin(), order_.end(), 0);
    nodes_.reserve(2 * n / kLeafSize + 2);
    build(0, static_cast<int>(n), centroids);
}

int ProximityTree::build(int begin, int end, std::vector<Vec3>& centroids)
{
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back({});
    Aabb box;
    Aabb centroid_box;
    for (int k = begin; k < end; ++k) {
        box.extend(face_boxes_[order_[k]]);
        centroid_box.extend(centroids[order_[k]]);
    }
    nodes_[id].box = box;
    if (end - begin <= kLeafSize) {
        nodes_[id].begin = begin;
        nodes_[id].end = end;
        return id;
    }
    int axis = 0;
    centroid_box.extent().maxCoeff(&axis);
    const int mid = begin + (end - begin) / 2;
    // Face index as secondary key keeps the split deterministic for equal centroids.
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end, [&](int a, int b) {
        const double ca = centroids[a][axis];
        const double cb = centroids[b][axis];
        return ca < cb || (ca == cb && a < b);
    });
    const int left = build(begin, mid, centroids);
    const int right = build(mid, end, centroids);
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
}

ClosestPointResult ProximityTree::closest_point(const Vec3& query) const
{
    ClosestPointResult best;
    double best_d2 = std::numeric_limits<double>::infinity();
    int stack[128];
    int top = 0;
    stack[top++] = 0;
    while (top > 0) {
        const Node& node = nodes_[stack[--top]];
        if (node.box.squared_distance(query) > best_d2) {
            continue;
        }
        if (node.left < 0) {
            for (int k = node.begin; k < node.end; ++k) {
                const int f = order_[k];
                if (face_boxes_[f].squared_distance(query) > best_d2) {
                    continue;
                }
                const Face& t = mesh_.faces[f];
                const TrianglePoint tp =
                    closest_point_on_triangle(query, mesh_.vertices[t[0]], mesh_.vertices[t[1]], mesh_.vertices[t[2]]);
                const double d2 = (tp.point - query).squaredNorm();
                if (d2 < best_d2 || (d2 == best_d2 && f < best.face_index)) {
                    best_d2 = d2;
                    best.point = tp.point;
                    best.face_index = f;
                    best.barycentric = tp.barycentric;
                }
            }
            continue;
        }
        // Visit the nearer child first.
        const double dl = nodes_[node.left].box.squared_distance(query);
        const double dr = nodes_[node.right].box.squared_distance(query);
        if (dl <= dr) {
            stack[top++] = node.right;
            stack[top++] = node.left;
        } else {
            stack[top++] = node.left;
            stack[top++] = node.right;
        }
    }
    best.distance = std::sqrt(best_d2);
    return best;
}

} // namespace hsi
