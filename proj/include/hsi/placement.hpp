#pragma once

// Affordance-driven placement of a posed body: discrete seed search over
// translation and yaw, then gradient refinement of the placement energy.

#include "hsi/bvh.hpp"
#include "hsi/cvae.hpp"
#include "hsi/interaction.hpp"
#include "hsi/sdf.hpp"

#include <atomic>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace hsi {

struct PlacementWeights {
    double contact = 1.0;  // lambda_1
    double semantic = 0.5; // lambda_2
    double pen = 10.0;     // lambda_pen
    double reg = 1.0;      // lambda_reg
    bool gate_semantic = false; // weight per-vertex CCE by predicted contact

    void validate() const;
};

struct PlacementTransform {
    Vec3 translation = Vec3::Zero();
    double yaw = 0.0;                 // wrapped to (-pi, pi]
    std::vector<Vec3> pose_delta;     // per joint (root entry unused); empty means none
};

struct EnergyBreakdown {
    double afford_contact = 0.0;
    double afford_semantic = 0.0;
    double pen = 0.0;
    double reg = 0.0;
    double total = 0.0;
    int clamped = 0; // vertices sampled outside the SDF interior
};

struct PlacementResult {
    PlacementTransform transform;
    EnergyBreakdown energy;
    std::vector<double> trace; // best-so-far energy per iteration
    bool converged = false;
    int sample_index = 0;
    int seed_index = 0;
};

enum class RefineMode { Full, FixedPose };

// Scene inputs shared by every query; all three must describe the same scene.
struct PlacementScene {
    const SceneMesh& mesh;
    const SdfGrid& sdf;
    const ProximityTree& tree;
};

// Feature map lifted from its hierarchy level to full body resolution.
FeatureMap upsample_features(const FeatureMap& f, const ModelTopology& topology, int level);

// Body vertices after the pose delta and the placement transform are applied
// to a canonical body.
std::vector<Vec3> placed_vertices(const BodyMesh& canonical, const PlacementTransform& t);

EnergyBreakdown placement_energy(std::span<const Vec3> vertices, const FeatureMap& fgen, const PlacementScene& scene,
                                 const PlacementWeights& weights, std::span<const Vec3> pose_delta = {});

// Energy of the differentiable terms (contact, pen, reg) and their gradient
// with respect to translation, yaw, and the pose delta of joints 1..n-1.
struct SmoothEnergy {
    double value = 0.0;
    Vec3 d_translation = Vec3::Zero();
    double d_yaw = 0.0;
    std::vector<Vec3> d_pose;
};
SmoothEnergy smooth_energy(const BodyMesh& canonical, const PlacementTransform& t, const FeatureMap& fgen,
                           const SdfGrid& sdf, const PlacementWeights& weights, bool with_pose);

struct SeedOptions {
    int n_seeds = 64;
    std::uint64_t seed = 0;
    double z_step = 0.02; // vertical scan resolution (meters)
};
std::vector<PlacementResult> seed_search(const BodyMesh& canonical, const FeatureMap& fgen,
                                         const PlacementScene& scene, const PlacementWeights& weights,
                                         const SeedOptions& options);

struct RefineOptions {
    int iterations = 150;
    double lr_translation = 0.01;
    double lr_yaw = 0.02;
    double lr_pose = 0.02;
    double pose_cap = 0.3;  // radians per joint
    double tolerance = 1e-7; // relative improvement over `patience` iterations that counts as converged
    int patience = 25;
    // Called after each iteration with (iteration, best-so-far total).
    std::function<void(int, double)> on_iteration;
    const std::atomic<bool>* cancel = nullptr;
};
PlacementResult refine(const BodyMesh& canonical, const FeatureMap& fgen, const PlacementScene& scene,
                       const PlacementWeights& weights, const PlacementTransform& init, RefineMode mode,
                       const RefineOptions& options);

struct PlaceOptions {
    int n_samples = 4;
    int n_seeds = 64;
    int refine_top = 2; // refinements per sampled feature map
    std::uint64_t seed = 0;
    RefineMode mode = RefineMode::FixedPose;
    RefineOptions refine;
    // When set, every feature map refines from this transform and seed search is skipped.
    std::optional<PlacementTransform> init;
};
struct PlaceOutput {
    PlacementResult best;
    std::vector<PlacementResult> alternatives; // ascending energy, best first
    int refinements = 0;
};
PlaceOutput place(const Checkpoint& ckpt, const BodyMesh& body, const PlacementScene& scene,
                  const PlacementWeights& weights, const PlaceOptions& options);

// Same pipeline with precomputed full-resolution feature maps.
PlaceOutput place_with_maps(const BodyMesh& canonical, const std::vector<FeatureMap>& maps,
                            const PlacementScene& scene, const PlacementWeights& weights, const PlaceOptions& options);

std::string placement_json(const PlaceOutput& out);
PlacementTransform transform_from_json(const std::string& text);
std::string transform_json(const PlacementTransform& t);

} // namespace hsi
