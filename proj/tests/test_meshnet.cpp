#include "hsi/meshnet.hpp"
#include "hsi/primitives.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <numbers>
#include <queue>

using namespace hsi;

namespace {

TriMesh hex_fan()
{
    TriMesh m;
    m.vertices.push_back(Vec3::Zero());
    for (int k = 0; k < 6; ++k) {
        const double a = k * std::numbers::pi / 3;
        m.vertices.emplace_back(std::cos(a), std::sin(a), 0.0);
    }
    for (int k = 1; k <= 6; ++k) {
        m.faces.push_back({0, k, k % 6 + 1});
    }
    return m;
}

Eigen::VectorXd apply(const SparseMap& m, const Eigen::VectorXd& x) { return m * x; }

double rel_rms(const Eigen::VectorXd& got, const Eigen::VectorXd& want)
{
    return (got - want).norm() / want.norm();
}

const MeshHierarchy& sphere_hierarchy()
{
    static const MeshHierarchy h = build_hierarchy(make_icosphere(3), 4, 2);
    return h;
}

} // namespace

TEST(Hierarchy, CollapseReachesQuarterCount)
{
    const MeshHierarchy h = build_hierarchy(make_icosphere(3), 4, 1);
    ASSERT_EQ(h.level_count(), 2u);
    EXPECT_EQ(h.levels[0].vertex_count(), 642u);
    EXPECT_NEAR(static_cast<double>(h.levels[1].vertex_count()), 160.0, 2.0);
    EXPECT_NO_THROW(h.levels[1].validate());
}

TEST(Hierarchy, CoarseMeshIsClosedManifold)
{
    const TriMesh& c = sphere_hierarchy().levels[2];
    // Euler characteristic of a sphere.
    EXPECT_EQ(static_cast<long>(c.vertex_count()) - static_cast<long>(c.face_count()) / 2, 2);
    const auto rings = ordered_one_rings(c);
    for (std::size_t v = 0; v < rings.size(); ++v) {
        EXPECT_GE(rings[v].size(), 3u) << "vertex " << v;
    }
}

TEST(Hierarchy, MapsAreRowStochastic)
{
    const MeshHierarchy& h = sphere_hierarchy();
    for (std::size_t k = 0; k + 1 < h.level_count(); ++k) {
        for (const SparseMap* m : {&h.down_maps[k], &h.up_maps[k]}) {
            const Eigen::VectorXd sums = *m * Eigen::VectorXd::Ones(m->cols());
            EXPECT_LT((sums.array() - 1.0).abs().maxCoeff(), 1e-6);
            for (int r = 0; r < m->outerSize(); ++r) {
                for (SparseMap::InnerIterator it(*m, r); it; ++it) {
                    EXPECT_GE(it.value(), 0.0);
                }
            }
        }
        EXPECT_EQ(h.down_maps[k].rows(), static_cast<Eigen::Index>(h.levels[k + 1].vertex_count()));
        EXPECT_EQ(h.up_maps[k].rows(), static_cast<Eigen::Index>(h.levels[k].vertex_count()));
    }
}

TEST(Hierarchy, ConstantSignalSurvivesDownUp)
{
    const MeshHierarchy& h = sphere_hierarchy();
    const Eigen::VectorXd c = Eigen::VectorXd::Constant(642, 2.5);
    const Eigen::VectorXd back = apply(h.up_maps[0], apply(h.down_maps[0], c));
    EXPECT_LT((back.array() - 2.5).abs().maxCoeff(), 1e-12);
}

TEST(Hierarchy, LinearFieldSurvivesDownUp)
{
    const MeshHierarchy& h = sphere_hierarchy();
    const TriMesh& fine = h.levels[0];
    for (int axis = 0; axis < 3; ++axis) {
        Eigen::VectorXd f(fine.vertex_count());
        for (std::size_t i = 0; i < fine.vertex_count(); ++i) {
            f[i] = fine.vertices[i][axis];
        }
        EXPECT_LT(rel_rms(apply(h.up_maps[0], apply(h.down_maps[0], f)), f), 0.10);
    }
}

TEST(Hierarchy, DownAfterUpIsNearIdentity)
{
    const MeshHierarchy& h = sphere_hierarchy();
    Rng rng(5);
    for (std::size_t k = 0; k + 1 < h.level_count(); ++k) {
        const TriMesh& coarse = h.levels[k + 1];
        for (int trial = 0; trial < 5; ++trial) {
            const Vec3 dir(rng.normal(), rng.normal(), rng.normal());
            Eigen::VectorXd s(coarse.vertex_count());
            for (std::size_t i = 0; i < coarse.vertex_count(); ++i) {
                s[i] = 2.0 + std::sin(coarse.vertices[i].dot(dir));
            }
            EXPECT_LT(rel_rms(apply(h.down_maps[k], apply(h.up_maps[k], s)), s), 0.05);
        }
    }
}

TEST(Hierarchy, Deterministic)
{
    const MeshHierarchy a = build_hierarchy(make_icosphere(3), 4, 2);
    const MeshHierarchy& b = sphere_hierarchy();
    for (std::size_t k = 0; k < a.level_count(); ++k) {
        EXPECT_EQ(a.levels[k].faces, b.levels[k].faces);
    }
}

TEST(Hierarchy, TooFewEdges)
{
    TriMesh tri;
    tri.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
    tri.faces = {{0, 1, 2}};
    EXPECT_THROW(build_hierarchy(tri, 4, 1), Error);
}

TEST(Spirals, HexFanMatchesRotationalOrder)
{
    const TriMesh m = hex_fan();
    const SpiralIndex s = build_spirals(m, 7);
    // Oracle: sort the ring by polar angle (the fan lies in z = 0 with +z
    // normals), then rotate to the smallest index.
    std::vector<std::pair<double, int>> polar;
    for (int v = 1; v <= 6; ++v) {
        polar.emplace_back(std::atan2(m.vertices[v].y(), m.vertices[v].x()), v);
    }
    std::sort(polar.begin(), polar.end());
    std::vector<int> ring;
    for (auto& [a, v] : polar) {
        ring.push_back(v);
    }
    std::rotate(ring.begin(), std::min_element(ring.begin(), ring.end()), ring.end());
    std::vector<int> want{0};
    want.insert(want.end(), ring.begin(), ring.end());
    EXPECT_EQ(std::vector<int>(s.row(0), s.row(0) + 7), want);
}

TEST(Spirals, LengthOneIsCenter)
{
    const TriMesh m = make_icosphere(1);
    const SpiralIndex s = build_spirals(m, 1);
    for (std::size_t i = 0; i < m.vertex_count(); ++i) {
        EXPECT_EQ(s.row(i)[0], static_cast<int>(i));
    }
}

TEST(Spirals, BoundaryPadding)
{
    TriMesh m;
    m.vertices = {{0, 0, 0}, {1, 0, 0}, {0.5, 1, 0}, {-0.5, 1, 0}};
    m.faces = {{0, 1, 2}, {0, 2, 3}};
    const SpiralIndex s = build_spirals(m, 9);
    EXPECT_EQ(std::vector<int>(s.row(0), s.row(0) + 9), (std::vector<int>{0, 1, 2, 3, 0, 0, 0, 0, 0}));
}

TEST(Spirals, IsolatedVertexNamed)
{
    TriMesh m = hex_fan();
    m.vertices.push_back(Vec3(5, 5, 5));
    try {
        build_spirals(m, 9);
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("vertex 7"), std::string::npos);
    }
}

TEST(Spirals, InvariantsOnSphere)
{
    const TriMesh m = make_icosphere(3);
    const SpiralIndex a = build_spirals(m, 9);
    const SpiralIndex b = build_spirals(m, 9);
    EXPECT_EQ(a, b);
    const int n = static_cast<int>(m.vertex_count());
    std::vector<std::vector<int>> adj(n);
    for (const Face& f : m.faces) {
        for (int k = 0; k < 3; ++k) {
            adj[f[k]].push_back(f[(k + 1) % 3]);
        }
    }
    for (int i = 0; i < n; ++i) {
        const int* row = a.row(i);
        EXPECT_EQ(row[0], i);
        // BFS hop distances from i.
        std::vector<int> hops(n, -1);
        std::queue<int> q;
        hops[i] = 0;
        q.push(i);
        while (!q.empty()) {
            const int u = q.front();
            q.pop();
            for (int w : adj[u]) {
                if (hops[w] < 0) {
                    hops[w] = hops[u] + 1;
                    q.push(w);
                }
            }
        }
        const int ring = static_cast<int>(adj[i].size());
        for (int k = 1; k < 9; ++k) {
            ASSERT_GE(row[k], 0);
            ASSERT_LT(row[k], n);
            EXPECT_LE(hops[row[k]], (9 + ring - 1) / ring);
        }
        // The 1-ring comes first and is a permutation of the neighbors.
        std::vector<int> first(row + 1, row + 1 + std::min(ring, 8));
        for (int w : first) {
            EXPECT_EQ(hops[w], 1);
        }
    }
}

TEST(Spirals, RingsAreCounterClockwise)
{
    const TriMesh m = make_icosphere(2);
    const auto rings = ordered_one_rings(m);
    for (std::size_t i = 0; i < m.vertex_count(); ++i) {
        const Vec3 n = m.vertices[i].normalized();
        const auto& r = rings[i];
        EXPECT_EQ(r.front(), *std::min_element(r.begin(), r.end()));
        for (std::size_t k = 0; k < r.size(); ++k) {
            const Vec3 a = m.vertices[r[k]] - m.vertices[i];
            const Vec3 b = m.vertices[r[(k + 1) % r.size()]] - m.vertices[i];
            EXPECT_GT(a.cross(b).dot(n), 0.0);
        }
    }
}
