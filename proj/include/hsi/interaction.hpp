#pragma once

#include "hsi/bvh.hpp"
#include "hsi/geometry.hpp"

#include <Eigen/Core>

#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace hsi {

using MatrixRf = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr double kContactThreshold = 0.05; // meters

// Per-vertex contact and semantic distribution. Semantics has one column per
// feature class: column 0 is void (no contact), column c + 1 is scene class c.
struct FeatureMap {
    Eigen::VectorXf contact;
    MatrixRf semantics;

    int vertex_count() const { return static_cast<int>(contact.size()); }
    int class_count() const { return static_cast<int>(semantics.cols()); }
    // Argmax feature class per vertex.
    std::vector<int> labels() const;
    // Throws when rows do not sum to 1 (1e-5) or contact leaves [0, 1].
    void validate() const;
    // Additionally requires {0, 1} contact and one-hot rows.
    void validate_training() const;

    static FeatureMap from_labels(std::span<const std::uint8_t> contact, std::span<const std::uint16_t> classes,
                                  int class_count);
};

struct ContactRecord {
    std::vector<double> distances;  // unsigned distance to the closest scene point
    std::vector<int> closest_labels; // scene label at that point
};

struct ExtractedFeatures {
    ContactRecord record;
    FeatureMap features;
};

// Label of the closest triangle: majority of its vertex labels, ties to the lowest id.
int face_label(const SceneMesh& scene, int face);

ExtractedFeatures extract_features(std::span<const Vec3> vertices, const SceneMesh& scene, const ProximityTree& tree,
                                   double threshold = kContactThreshold);
inline ExtractedFeatures extract_features(const BodyMesh& body, const SceneMesh& scene, const ProximityTree& tree,
                                          double threshold = kContactThreshold)
{
    return extract_features(body.mesh.vertices, scene, tree, threshold);
}

// Root rotation R = Rz(yaw) * Ry(roll) * Rx(pitch) about the world axes.
struct EulerZYX {
    double pitch = 0.0; // about x
    double roll = 0.0;  // about y
    double yaw = 0.0;   // about z
};
EulerZYX decompose_root_rotation(const Mat3& r);
Mat3 compose_root_rotation(const EulerZYX& e);

// Keeps only the pitch of the root rotation and the vertical root offset.
BodyMesh canonicalize(const BodyMesh& body);

struct InteractionFrame {
    MatrixRf positions; // V x 3, canonical body vertices at feature resolution
    std::vector<std::uint8_t> contact;
    std::vector<std::uint16_t> classes; // feature class ids, 0 = void

    FeatureMap features(int class_count) const { return FeatureMap::from_labels(contact, classes, class_count); }
    bool operator==(const InteractionFrame& other) const
    {
        return positions == other.positions && contact == other.contact && classes == other.classes;
    }
};

struct InteractionDataset {
    std::vector<InteractionFrame> frames;
    std::vector<std::string> class_names; // N_o scene classes (void excluded)
    std::uint32_t vertex_count = 0;

    int feature_classes() const { return static_cast<int>(class_names.size()) + 1; }
    void validate() const;
};

// "POSA1\n" | u32 version=1 | u32 frames | u32 V | u16 N_o | per frame:
// f32 positions (V x 3), u8 contact (V), u16 class (V). Little-endian.
// Sampled feature maps as JSON: {"class_names": [...], "maps": [{"contact": [...], "semantics": [[...], ...]}]}.
std::string feature_maps_json(const std::vector<FeatureMap>& maps, const std::vector<std::string>& class_names);
std::vector<FeatureMap> feature_maps_from_json(const std::string& text);

void write_dataset(const std::filesystem::path& path, const InteractionDataset& ds);
InteractionDataset read_dataset(const std::filesystem::path& path);

} // namespace hsi
