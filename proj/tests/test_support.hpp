#pragma once

#include "hsi/geometry.hpp"
#include "hsi/rng.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <filesystem>
#include <limits>
#include <string>

namespace hsi::test {

inline std::filesystem::path temp_dir(const std::string& name)
{
    auto dir = std::filesystem::temp_directory_path() / ("hsi_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

// Triangle soup with random corners in [-1, 1]^3.
inline TriMesh random_mesh(Rng& rng, int vertices, int faces)
{
    TriMesh m;
    for (int i = 0; i < vertices; ++i) {
        m.vertices.emplace_back(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    }
    while (static_cast<int>(m.faces.size()) < faces) {
        const int a = static_cast<int>(rng.below(vertices));
        const int b = static_cast<int>(rng.below(vertices));
        const int c = static_cast<int>(rng.below(vertices));
        if (a != b && b != c && a != c) {
            m.faces.push_back({a, b, c});
        }
    }
    return m;
}

// Closest point on a segment by clamped projection.
inline Vec3 segment_closest(const Vec3& p, const Vec3& a, const Vec3& b)
{
    const Vec3 ab = b - a;
    const double t = std::clamp((p - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
    return a + t * ab;
}

// Plane projection when it lands inside the triangle, else the best of the
// three edges. Deliberately unrelated to the library's region walk.
inline Vec3 triangle_closest(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c)
{
    const Vec3 e0 = b - a, e1 = c - a;
    Eigen::Matrix2d g;
    g << e0.dot(e0), e0.dot(e1), e0.dot(e1), e1.dot(e1);
    const Eigen::Vector2d rhs((p - a).dot(e0), (p - a).dot(e1));
    const Eigen::Vector2d uv = g.ldlt().solve(rhs);
    if (uv[0] >= 0 && uv[1] >= 0 && uv[0] + uv[1] <= 1) {
        return a + uv[0] * e0 + uv[1] * e1;
    }
    Vec3 best = segment_closest(p, a, b);
    for (const Vec3& q : {segment_closest(p, b, c), segment_closest(p, c, a)}) {
        if ((q - p).squaredNorm() < (best - p).squaredNorm()) {
            best = q;
        }
    }
    return best;
}

struct BruteResult {
    Vec3 point;
    double distance = std::numeric_limits<double>::infinity();
    int face = -1;
};

inline BruteResult brute_closest(const TriMesh& m, const Vec3& p)
{
    BruteResult r;
    for (std::size_t f = 0; f < m.faces.size(); ++f) {
        const auto& t = m.faces[f];
        const Vec3 q = triangle_closest(p, m.vertices[t[0]], m.vertices[t[1]], m.vertices[t[2]]);
        const double d = (q - p).norm();
        if (d < r.distance) {
            r = {q, d, static_cast<int>(f)};
        }
    }
    return r;
}

} // namespace hsi::test
