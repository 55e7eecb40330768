#include "hsi/interaction.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <numbers>

using namespace hsi;

namespace {

SceneMesh floor_scene()
{
    SceneMesh s;
    s.mesh.vertices = {{-5, -5, 0}, {5, -5, 0}, {5, 5, 0}, {-5, 5, 0}};
    s.mesh.faces = {{0, 1, 2}, {0, 2, 3}};
    s.labels = {0, 0, 0, 0};
    s.class_names = default_class_names();
    return s;
}

// Random labeled triangle soup. Faces share no vertices, so every closest
// point has a unique face and the co-transform test cannot hit ties.
SceneMesh random_scene(Rng& rng)
{
    SceneMesh s;
    s.class_names = default_class_names();
    for (int f = 0; f < 80; ++f) {
        const int label = static_cast<int>(rng.below(8));
        for (int k = 0; k < 3; ++k) {
            s.mesh.vertices.emplace_back(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
            s.labels.push_back(label);
        }
        s.mesh.faces.push_back({3 * f, 3 * f + 1, 3 * f + 2});
    }
    return s;
}

BodyMesh point_body(const std::vector<Vec3>& rest)
{
    BodyMesh b;
    b.rest_vertices = rest;
    b.skeleton.joints = {{"pelvis", -1, Vec3::Zero()}};
    b.skeleton.weights.assign(rest.size(), {{0, 1.0}});
    b.joint_angles = {Vec3::Zero()};
    b.update();
    return b;
}

Mat3 rx(double a) { return Eigen::AngleAxisd(a, Vec3::UnitX()).toRotationMatrix(); }

} // namespace

TEST(Features, ThresholdSemantics)
{
    const SceneMesh scene = floor_scene();
    const ProximityTree tree(scene.mesh);
    const std::vector<Vec3> v{{0, 0, 0.03}, {0.5, 0.5, 0.05}, {1, 1, 0.06}};
    const ExtractedFeatures ex = extract_features(v, scene, tree);
    EXPECT_EQ(ex.features.contact[0], 1.0f);
    EXPECT_EQ(ex.features.contact[1], 1.0f);
    EXPECT_EQ(ex.features.contact[2], 0.0f);
    EXPECT_EQ(ex.features.labels(), (std::vector<int>{feature_class(0), feature_class(0), kVoidClass}));
    EXPECT_DOUBLE_EQ(ex.record.distances[1], 0.05);
    EXPECT_EQ(ex.features.class_count(), 9);
    EXPECT_NO_THROW(ex.features.validate_training());
}

TEST(Features, EmptySceneAndBadThreshold)
{
    SceneMesh empty;
    empty.class_names = default_class_names();
    const SceneMesh scene = floor_scene();
    const ProximityTree tree(scene.mesh);
    const std::vector<Vec3> v{{0, 0, 1}};
    EXPECT_THROW(extract_features(v, empty, tree), Error);
    EXPECT_THROW(extract_features(v, scene, tree, 0.0), Error);
}

TEST(Features, FaceLabelMajority)
{
    SceneMesh s = floor_scene();
    s.labels = {3, 3, 1, 2};
    EXPECT_EQ(face_label(s, 0), 3);
    EXPECT_EQ(face_label(s, 1), 1); // 3, 1, 2 all differ: lowest wins
}

TEST(Features, ContactImpliesNonVoid)
{
    Rng rng(21);
    const SceneMesh scene = random_scene(rng);
    const ProximityTree tree(scene.mesh);
    std::vector<Vec3> v;
    for (int i = 0; i < 400; ++i) {
        v.emplace_back(rng.uniform(-1.2, 1.2), rng.uniform(-1.2, 1.2), rng.uniform(-1.2, 1.2));
    }
    const auto lo = extract_features(v, scene, tree, 0.05);
    const auto hi = extract_features(v, scene, tree, 0.1);
    const auto labels = lo.features.labels();
    for (std::size_t i = 0; i < v.size(); ++i) {
        EXPECT_EQ(lo.features.contact[i] == 1.0f, labels[i] != kVoidClass);
        EXPECT_GE(lo.record.distances[i], 0.0);
        if (lo.features.contact[i] == 1.0f) {
            EXPECT_EQ(hi.features.contact[i], 1.0f);
        }
    }
}

TEST(Features, RigidCoTransformInvariance)
{
    Rng rng(31);
    for (int frame = 0; frame < 50; ++frame) {
        const SceneMesh scene = random_scene(rng);
        std::vector<Vec3> body;
        for (int i = 0; i < 200; ++i) {
            body.emplace_back(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
        }
        const Vec3 axis = Vec3(rng.normal(), rng.normal(), rng.normal()).normalized();
        const Mat3 r = Eigen::AngleAxisd(rng.uniform(-3, 3), axis).toRotationMatrix();
        const Vec3 t(rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5));
        SceneMesh moved = scene;
        for (Vec3& p : moved.mesh.vertices) {
            p = r * p + t;
        }
        std::vector<Vec3> moved_body;
        for (const Vec3& p : body) {
            moved_body.push_back(r * p + t);
        }
        const auto a = extract_features(body, scene, ProximityTree(scene.mesh), 0.15);
        const auto b = extract_features(moved_body, moved, ProximityTree(moved.mesh), 0.15);
        ASSERT_EQ(a.features.contact, b.features.contact) << "frame " << frame;
        ASSERT_EQ(a.features.semantics, b.features.semantics) << "frame " << frame;
    }
}

TEST(Canonicalize, YawRemoved)
{
    const BodyMesh base = point_body({{0.1, 0.2, 1.0}, {-0.3, 0.1, 0.4}, {0.0, -0.2, 1.6}});
    BodyMesh yawed = base;
    yawed.root.rotation = Eigen::AngleAxisd(std::numbers::pi / 2, Vec3::UnitZ()).toRotationMatrix();
    yawed.root.translation = Vec3(2.0, -1.0, 0.3);
    yawed.update();
    const BodyMesh c = canonicalize(yawed);
    for (std::size_t i = 0; i < base.vertex_count(); ++i) {
        EXPECT_NEAR((c.mesh.vertices[i] - (base.mesh.vertices[i] + Vec3(0, 0, 0.3))).norm(), 0.0, 1e-6);
    }
}

TEST(Canonicalize, LyingPitchPreserved)
{
    BodyMesh b = point_body({{0, 0, 1}});
    b.root.rotation = rx(std::numbers::pi / 2);
    b.update();
    const BodyMesh c = canonicalize(b);
    EXPECT_NEAR(decompose_root_rotation(c.root.rotation).pitch, std::numbers::pi / 2, 1e-15);
    EXPECT_NEAR((c.root.rotation - b.root.rotation).norm(), 0.0, 1e-15);
}

TEST(Canonicalize, MatchesIndependentDecomposition)
{
    Rng rng(41);
    for (int n = 0; n < 200; ++n) {
        const Vec3 axis = Vec3(rng.normal(), rng.normal(), rng.normal()).normalized();
        const Mat3 r = Eigen::AngleAxisd(rng.uniform(-3.1, 3.1), axis).toRotationMatrix();
        // Eigen returns (yaw, roll, pitch) with yaw in [0, pi]; move to the
        // branch with roll in [-pi/2, pi/2].
        Vec3 e = r.eulerAngles(2, 1, 0);
        if (std::abs(e[1]) > std::numbers::pi / 2) {
            e = Vec3(e[0] + std::numbers::pi, std::numbers::pi - e[1], e[2] + std::numbers::pi);
        }
        BodyMesh b = point_body({{0.2, 0.3, 0.9}});
        b.root.rotation = r;
        const BodyMesh c = canonicalize(b);
        ASSERT_NEAR((c.root.rotation - rx(e[2])).norm(), 0.0, 1e-9) << "sample " << n;
        const EulerZYX mine = decompose_root_rotation(r);
        ASSERT_NEAR((compose_root_rotation(mine) - r).norm(), 0.0, 1e-9);
    }
}

TEST(Canonicalize, GimbalLockResidualGoesToPitch)
{
    const Mat3 r = Eigen::AngleAxisd(std::numbers::pi / 2, Vec3::UnitY()).toRotationMatrix() * rx(0.3);
    const EulerZYX e = decompose_root_rotation(r);
    EXPECT_EQ(e.yaw, 0.0);
    EXPECT_NEAR(e.pitch, 0.3, 1e-9);
    EXPECT_NEAR((compose_root_rotation(e) - r).norm(), 0.0, 1e-9);
}

namespace {

InteractionDataset random_dataset(Rng& rng, int frames, std::uint32_t v)
{
    InteractionDataset ds;
    ds.class_names = default_class_names();
    ds.vertex_count = v;
    for (int f = 0; f < frames; ++f) {
        InteractionFrame fr;
        fr.positions = MatrixRf::Random(v, 3);
        for (std::uint32_t i = 0; i < v; ++i) {
            const bool c = rng.below(2) == 1;
            fr.contact.push_back(c);
            fr.classes.push_back(c ? static_cast<std::uint16_t>(1 + rng.below(8)) : 0);
        }
        ds.frames.push_back(std::move(fr));
    }
    return ds;
}

} // namespace

TEST(Dataset, EmptyIsHeaderOnly)
{
    const auto dir = test::temp_dir("ds_empty");
    InteractionDataset ds;
    ds.class_names = default_class_names();
    ds.vertex_count = 641;
    write_dataset(dir / "e.posa", ds);
    EXPECT_EQ(std::filesystem::file_size(dir / "e.posa"), 6u + 4 + 4 + 4 + 2);
    const InteractionDataset back = read_dataset(dir / "e.posa");
    EXPECT_TRUE(back.frames.empty());
    EXPECT_EQ(back.vertex_count, 641u);
}

TEST(Dataset, RoundTrips)
{
    Rng rng(55);
    const auto dir = test::temp_dir("ds_rt");
    for (int frames : {1, 1000}) {
        const InteractionDataset ds = random_dataset(rng, frames, 40);
        write_dataset(dir / "d.posa", ds);
        const InteractionDataset back = read_dataset(dir / "d.posa");
        ASSERT_EQ(back.frames.size(), ds.frames.size());
        EXPECT_EQ(back.class_names, ds.class_names);
        for (std::size_t f = 0; f < ds.frames.size(); ++f) {
            ASSERT_TRUE(back.frames[f] == ds.frames[f]) << "frame " << f;
        }
    }
}

TEST(Dataset, RejectsBadMagicAndTruncation)
{
    Rng rng(56);
    const auto dir = test::temp_dir("ds_bad");
    write_dataset(dir / "d.posa", random_dataset(rng, 3, 10));
    std::filesystem::resize_file(dir / "d.posa", 60);
    EXPECT_THROW(read_dataset(dir / "d.posa"), Error);
    {
        std::ofstream(dir / "x.posa", std::ios::binary) << "POSA2\n0000000000000000";
    }
    EXPECT_THROW(read_dataset(dir / "x.posa"), Error);
}

TEST(FeatureMap, ValidationRules)
{
    FeatureMap f;
    f.contact = Eigen::VectorXf::Constant(2, 0.5f);
    f.semantics = MatrixRf::Constant(2, 4, 0.25f);
    EXPECT_NO_THROW(f.validate());
    EXPECT_THROW(f.validate_training(), Error);
    f.semantics(1, 0) = 0.5f;
    EXPECT_THROW(f.validate(), Error);
}

TEST(FeatureMapJson, RoundTripIsExact)
{
    hsi::FeatureMap f;
    f.contact = Eigen::VectorXf::Zero(4);
    f.contact << 0.1f, 0.7f, 1.0f / 3.0f, 0.0f;
    f.semantics = hsi::MatrixRf::Zero(4, 3);
    f.semantics.col(0) << 1.0f / 3.0f, 1.0f, 0.5f, 1.0f;
    f.semantics.col(1) << 2.0f / 3.0f, 0.0f, 0.5f, 0.0f;
    const auto back = hsi::feature_maps_from_json(hsi::feature_maps_json({f, f}, {"a", "b"}));
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back[1].contact, f.contact);
    EXPECT_EQ(back[1].semantics, f.semantics);
    EXPECT_THROW(hsi::feature_maps_from_json("{\"maps\": []}"), hsi::Error);
    EXPECT_THROW(hsi::feature_maps_from_json("{\"maps\": [{\"contact\": [0.5], \"semantics\": [[0.2, 0.2]]}]}"),
                 hsi::Error);
}
