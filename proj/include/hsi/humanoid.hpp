#pragma once

// Procedural fixed-topology humanoid: one closed 2562-vertex surface with an
// 11-joint skeleton, its pooling hierarchy, and a small pose library.

#include "hsi/geometry.hpp"
#include "hsi/meshnet.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace hsi {

inline constexpr std::size_t kBodyVertices = 2562;
inline constexpr int kFeatureLevel = 1;   // feature maps live on hierarchy level 1
inline constexpr int kHierarchyLevels = 4; // 2562 -> 641 -> 160 -> 40 -> 10
inline constexpr int kSpiralLength = 9;

// Joint ids of the skeleton.
enum JointId : int {
    kPelvis,
    kSpine,
    kHead,
    kLeftShoulder,
    kLeftElbow,
    kRightShoulder,
    kRightElbow,
    kLeftHip,
    kLeftKnee,
    kRightHip,
    kRightKnee,
    kJointCount
};

// Body part of each rest vertex, used for region masks.
enum class BodyPart : int { Pelvis, Torso, Head, UpperArm, Forearm, Hand, Thigh, Shin, Foot };

struct HumanoidModel {
    BodyMesh rest;                  // A-pose, facing +y, up +z, soles at z = 0
    std::vector<BodyPart> part;     // per rest vertex
    std::vector<int> side;          // per rest vertex: -1 right, +1 left, 0 center
    MeshHierarchy hierarchy;        // built on the rest surface
    std::vector<SpiralIndex> spirals; // one table per hierarchy level

    std::size_t feature_vertex_count() const { return hierarchy.levels[kFeatureLevel].vertex_count(); }
    // Full-resolution vertex id of each feature-level vertex.
    std::vector<int> feature_vertices() const;
};

// Built on first use and shared for the life of the process.
const HumanoidModel& humanoid();

struct PoseSpec {
    std::string name;
    std::vector<Vec3> angles; // per joint, local axis-angle
    Mat3 root_rotation = Mat3::Identity();
};

const std::vector<std::string>& pose_names();
const PoseSpec& pose_spec(const std::string& name);

// Canonical posed body (root rotation is the pose's pitch, no horizontal root
// offset) lifted so its lowest point is at z = 0. Each non-root joint gets an
// independent axis-angle offset of norm at most `jitter` radians.
BodyMesh generate_body(const std::string& pose, std::uint64_t jitter_seed = 0, double jitter = 0.0);

// Named vertex regions (full resolution) of a posed body.
enum class Region { LeftSole, RightSole, Soles, Seat, Back, RightHand };
std::vector<int> region_vertices(const BodyMesh& body, Region region);

// Vertices expected to touch a support for the pose as generated.
std::vector<int> expected_contact_mask(const std::string& pose);

// Height of the seat surface under the base sitting pose when its soles rest on the floor.
double sitting_seat_height();

// Restricts full-resolution vertex ids to the feature level, returning feature-level ids.
std::vector<int> to_feature_level(const std::vector<int>& full_ids);

// Positions of the feature-level vertices of a body.
std::vector<Vec3> feature_positions(const BodyMesh& body);

} // namespace hsi
