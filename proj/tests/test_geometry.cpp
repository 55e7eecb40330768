#include "hsi/bvh.hpp"
#include "hsi/geometry.hpp"
#include "hsi/mesh_io.hpp"
#include "hsi/primitives.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <numbers>

using namespace hsi;

namespace {

void write_text(const std::filesystem::path& p, const std::string& s)
{
    std::ofstream(p) << s;
}

TriMesh single_triangle()
{
    TriMesh m;
    m.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
    m.faces = {{0, 1, 2}};
    return m;
}

} // namespace

TEST(MeshIo, MinimalObj)
{
    const auto dir = test::temp_dir("obj_min");
    write_text(dir / "t.obj", "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n");
    const TriMesh m = load_mesh(dir / "t.obj").mesh;
    EXPECT_EQ(m.vertex_count(), 3u);
    EXPECT_EQ(m.face_count(), 1u);
}

TEST(MeshIo, OutOfRangeFaceNamesTheFace)
{
    const auto dir = test::temp_dir("obj_bad");
    write_text(dir / "t.obj", "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 10\n");
    try {
        load_mesh(dir / "t.obj");
        FAIL() << "expected an error";
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("face 0"), std::string::npos) << e.what();
    }
}

TEST(MeshIo, DegenerateFaceRejected)
{
    const auto dir = test::temp_dir("obj_degen");
    write_text(dir / "t.obj", "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\nf 1 1 2\n");
    EXPECT_THROW(load_mesh(dir / "t.obj"), Error);
}

TEST(MeshIo, MalformedObj)
{
    const auto dir = test::temp_dir("obj_garbage");
    write_text(dir / "t.obj", "v 0 zero 0\nf 1 2 3\n");
    EXPECT_THROW(load_mesh(dir / "t.obj"), Error);
}

TEST(MeshIo, PolygonAndSlashForms)
{
    const auto dir = test::temp_dir("obj_quad");
    write_text(dir / "q.obj", "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nvn 0 0 1\nf 1//1 2//1 3//1 -1//1\n");
    const TriMesh m = load_mesh(dir / "q.obj").mesh;
    ASSERT_EQ(m.face_count(), 2u);
    EXPECT_EQ(m.faces[1], (Face{0, 2, 3}));
}

TEST(MeshIo, RoundTripThousandVertices)
{
    Rng rng(7);
    const TriMesh m = test::random_mesh(rng, 1000, 1500);
    const auto dir = test::temp_dir("roundtrip");
    save_obj(dir / "m.obj", m);
    std::vector<int> labels(m.vertex_count());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        labels[i] = static_cast<int>(i % 8);
    }
    save_ply(dir / "m.ply", m, &labels, default_class_names());
    for (const auto& name : {"m.obj", "m.ply"}) {
        const LoadedMesh back = load_mesh(dir / name);
        ASSERT_EQ(back.mesh.vertex_count(), m.vertex_count()) << name;
        ASSERT_EQ(back.mesh.faces, m.faces) << name;
        for (std::size_t i = 0; i < m.vertex_count(); ++i) {
            EXPECT_LT((back.mesh.vertices[i] - m.vertices[i]).cwiseAbs().maxCoeff(), 1e-6) << name << " vertex " << i;
        }
    }
    const LoadedMesh ply = load_mesh(dir / "m.ply");
    ASSERT_TRUE(ply.labels.has_value());
    EXPECT_EQ(*ply.labels, labels);
    EXPECT_EQ(ply.class_names, default_class_names());
}

TEST(MeshIo, AsciiPly)
{
    const auto dir = test::temp_dir("ply_ascii");
    write_text(dir / "a.ply", "ply\nformat ascii 1.0\ncomment class floor\ncomment class wall\n"
                              "element vertex 3\nproperty float x\nproperty float y\nproperty float z\n"
                              "property int label\nelement face 1\nproperty list uchar int vertex_indices\n"
                              "end_header\n0 0 0 1\n1 0 0 1\n0 1 0 0\n3 0 1 2\n");
    const SceneMesh s = load_scene(dir / "a.ply");
    EXPECT_EQ(s.labels, (std::vector<int>{1, 1, 0}));
    EXPECT_EQ(s.class_names, (std::vector<std::string>{"floor", "wall"}));
}

TEST(Bvh, OrthogonalProjection)
{
    const ProximityTree tree(single_triangle());
    const auto r = tree.closest_point({0.25, 0.25, 1.0});
    EXPECT_NEAR((r.point - Vec3(0.25, 0.25, 0)).norm(), 0.0, 1e-12);
    EXPECT_NEAR(r.distance, 1.0, 1e-12);
}

TEST(Bvh, NearestVertex)
{
    const ProximityTree tree(single_triangle());
    const auto r = tree.closest_point({2.0, 0.0, 0.0});
    EXPECT_NEAR((r.point - Vec3(1, 0, 0)).norm(), 0.0, 1e-12);
    EXPECT_NEAR(r.distance, 1.0, 1e-12);
    EXPECT_DOUBLE_EQ(r.barycentric[1], 1.0);
}

TEST(Bvh, EmptyMeshRejected)
{
    EXPECT_THROW(ProximityTree(TriMesh{}), Error);
}

TEST(Bvh, MatchesExhaustiveSearch)
{
    Rng rng(11);
    for (int mesh = 0; mesh < 20; ++mesh) {
        const int faces = 1 + static_cast<int>(rng.below(500));
        const TriMesh m = test::random_mesh(rng, std::max(3, faces / 2 + 3), faces);
        const ProximityTree tree(m);
        for (int q = 0; q < 500; ++q) {
            const Vec3 p(rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5));
            const auto got = tree.closest_point(p);
            const auto want = test::brute_closest(m, p);
            ASSERT_NEAR(got.distance, want.distance, 1e-9) << "mesh " << mesh << " query " << q;
            ASSERT_NEAR((got.point - want.point).norm(), 0.0, 1e-9);
            ASSERT_NEAR((got.point - p).norm(), got.distance, 1e-9);
            double sum = 0.0;
            for (double w : got.barycentric) {
                ASSERT_GE(w, 0.0);
                sum += w;
            }
            ASSERT_NEAR(sum, 1.0, 1e-6);
        }
    }
}

TEST(Bvh, TiesGoToLowestFace)
{
    TriMesh m = single_triangle();
    m.vertices.push_back({0, 0, 0});
    m.vertices.push_back({1, 0, 0});
    m.vertices.push_back({0, 1, 0});
    m.faces.push_back({3, 4, 5});
    m.faces.insert(m.faces.begin(), Face{3, 4, 5});
    const ProximityTree tree(m);
    EXPECT_EQ(tree.closest_point({0.2, 0.2, 0.5}).face_index, 0);
}

TEST(Bvh, DistanceIsLipschitz)
{
    Rng rng(3);
    const TriMesh m = test::random_mesh(rng, 100, 200);
    const ProximityTree tree(m);
    for (int i = 0; i < 500; ++i) {
        const Vec3 a(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2));
        const Vec3 b(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2));
        EXPECT_LE(std::abs(tree.closest_point(a).distance - tree.closest_point(b).distance), (a - b).norm() + 1e-12);
    }
}

TEST(Rigid, IdentityLeavesMeshUnchanged)
{
    Rng rng(1);
    const TriMesh m = test::random_mesh(rng, 20, 10);
    const TriMesh out = apply_rigid(m, Vec3::Zero(), 0.0);
    EXPECT_EQ(out.vertices, m.vertices);
    EXPECT_EQ(out.faces, m.faces);
}

TEST(Rigid, HalfTurn)
{
    const std::vector<Vec3> v{{1, 0, 0}};
    const auto out = apply_rigid(v, Vec3::Zero(), std::numbers::pi);
    EXPECT_NEAR((out[0] - Vec3(-1, 0, 0)).norm(), 0.0, 1e-9);
}

TEST(Rigid, CompositionMatchesSingleTransform)
{
    Rng rng(5);
    const TriMesh m = test::random_mesh(rng, 50, 20);
    const Vec3 t1(0.3, -1.2, 0.5), t2(-2.0, 0.1, 0.7);
    const double y1 = 0.7, y2 = -2.1;
    const TriMesh twice = apply_rigid(apply_rigid(m, t1, y1), t2, y2);
    // R2 (R1 v + t1) + t2 = R(y1 + y2) v + (R2 t1 + t2), computed with explicit matrices.
    const Mat3 r2 = Eigen::AngleAxisd(y2, Vec3::UnitZ()).toRotationMatrix();
    const TriMesh once = apply_rigid(m, r2 * t1 + t2, y1 + y2);
    for (std::size_t i = 0; i < m.vertex_count(); ++i) {
        EXPECT_NEAR((twice.vertices[i] - once.vertices[i]).norm(), 0.0, 1e-9);
    }
}

TEST(Rigid, PreservesPairwiseDistances)
{
    Rng rng(9);
    const TriMesh m = test::random_mesh(rng, 40, 10);
    const TriMesh out = apply_rigid(m, Vec3(3, -4, 1), 1.234);
    for (std::size_t i = 0; i < m.vertex_count(); ++i) {
        for (std::size_t j = i + 1; j < m.vertex_count(); ++j) {
            EXPECT_NEAR((out.vertices[i] - out.vertices[j]).norm(), (m.vertices[i] - m.vertices[j]).norm(), 1e-7);
        }
    }
}

TEST(Rigid, WrapAngle)
{
    EXPECT_DOUBLE_EQ(wrap_angle(std::numbers::pi), std::numbers::pi);
    EXPECT_NEAR(wrap_angle(-std::numbers::pi), std::numbers::pi, 1e-15);
    EXPECT_NEAR(wrap_angle(3 * std::numbers::pi / 2), -std::numbers::pi / 2, 1e-12);
}

TEST(Primitives, ClosedOutwardMeshes)
{
    for (const TriMesh& m : {make_icosphere(2), make_box(Vec3(-1, -2, -3), Vec3(1, 2, 3))}) {
        double volume = 0.0;
        for (const Face& f : m.faces) {
            volume += m.vertices[f[0]].dot(m.vertices[f[1]].cross(m.vertices[f[2]])) / 6.0;
        }
        EXPECT_GT(volume, 0.0);
    }
    EXPECT_EQ(make_icosphere(4).vertex_count(), 2562u);
}

TEST(Skeleton, WeightsMustSumToOne)
{
    Skeleton s;
    s.joints = {{"root", -1, Vec3::Zero()}};
    s.weights = {{{0, 0.5}}};
    EXPECT_THROW(s.validate(1), Error);
    s.weights = {{{0, 1.0}}};
    EXPECT_NO_THROW(s.validate(1));
}
