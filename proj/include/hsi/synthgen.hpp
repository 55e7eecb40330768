#pragma once

// Procedural rooms, furniture, and ground-truth interaction frames.

#include "hsi/bvh.hpp"
#include "hsi/geometry.hpp"
#include "hsi/interaction.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace hsi {

// Scene labels (indices into default_class_names()).
enum SceneClass : int { kFloor, kWall, kChair, kSofa, kBed, kTable, kShelf, kOther };

struct Box {
    Vec3 min;
    Vec3 max;
};

struct FurnitureItem {
    int label = kOther;
    std::vector<Box> parts;
    Aabb footprint;             // union of the parts
    Vec3 facing = Vec3::UnitY(); // horizontal direction a seated or lying person faces / lies along
    Box support{};              // region of the sitting or lying surface (top face at support.max.z)
    bool has_support = false;
};

struct SceneSpec {
    std::uint64_t seed = 0;
    Vec3 room = Vec3(5, 5, 2.6); // interior extent; the floor top is z = 0
    std::vector<FurnitureItem> items;
};

SceneSpec generate_scene_spec(std::uint64_t seed);
// Floor slab, four walls, and every furniture part as a closed box.
SceneMesh build_scene_mesh(const SceneSpec& spec);
inline SceneMesh generate_scene(std::uint64_t seed) { return build_scene_mesh(generate_scene_spec(seed)); }

struct FramePlacement {
    std::string pose;
    int scene = 0;
    Vec3 translation = Vec3::Zero(); // world offset applied to the canonical body
    double yaw = 0.0;
    std::vector<Vec3> joint_angles;
    double mask_agreement = 0.0;     // fraction of the expected-contact mask extracted as contact
    RigidTransform root;             // canonical skeleton root, before translation and yaw
};

// The canonical body a placement was generated from.
BodyMesh placement_body(const FramePlacement& p);
// Features of the placed body at feature resolution; positions stay canonical.
InteractionFrame extract_frame(const BodyMesh& canonical, const FramePlacement& p, const SceneMesh& scene,
                               const ProximityTree& tree);

std::string placements_to_json(const std::vector<FramePlacement>& placements);
std::vector<FramePlacement> placements_from_json(const std::string& text);
// Joint tree, rest positions and current angles.
std::string skeleton_json(const BodyMesh& body);

struct GeneratedData {
    std::vector<SceneSpec> specs;
    std::vector<SceneMesh> scenes;
    InteractionDataset dataset;
    std::vector<FramePlacement> placements; // one per dataset frame
    int skipped = 0;                        // frames abandoned after bounded retries
};

struct FrameOptions {
    double jitter = 0.05;  // radians of per-joint pose noise
    int max_attempts = 60; // placement retries per frame
};

// Poses are placed on supports (stand on the floor, sit on chairs and sofas,
// lie on beds, touch walls) and features are extracted at feature resolution.
GeneratedData generate_frames(int frames, int scenes, std::uint64_t seed, const FrameOptions& options = {});
inline InteractionDataset generate_frames(int frames, std::uint64_t seed)
{
    return generate_frames(frames, 1, seed).dataset;
}

// Pose drawn for frame `index`; stand, sit, lie, reach and touch-wall in fixed proportions.
std::string frame_pose(std::uint64_t seed, int index);

} // namespace hsi
