#pragma once

// Physical plausibility and diversity of placed bodies.

#include "hsi/placement.hpp"
#include "hsi/sdf.hpp"

#include <Eigen/Core>

#include <span>
#include <string>
#include <vector>

namespace hsi {

// Fraction of vertices with a strictly positive SDF sample.
double non_collision(std::span<const Vec3> vertices, const SdfGrid& sdf);
// 1 when some vertex has a non-positive SDF sample.
int contact_score(std::span<const Vec3> vertices, const SdfGrid& sdf);

struct PlausibilityReport {
    std::vector<double> non_collision;
    std::vector<int> contact;
    double non_collision_mean = 0.0;
    double contact_mean = 0.0;
    int clamped = 0; // vertices outside the SDF interior, over all bodies
};
PlausibilityReport plausibility(const std::vector<std::vector<Vec3>>& bodies, const SdfGrid& sdf);

struct KMeansResult {
    Eigen::MatrixXd centers; // k x dim
    std::vector<int> assignment;
    double inertia = 0.0;    // sum of squared distances to assigned centers
};
// k-means++ seeding then Lloyd iterations, best inertia over `restarts` runs.
KMeansResult kmeans(const Eigen::MatrixXd& samples, int k, std::uint64_t seed, int restarts = 50);

struct DiversityReport {
    int k = 20;
    double entropy = 0.0;      // nats, over the cluster-id histogram
    double cluster_size = 0.0; // mean distance from a sample to its center
    std::vector<int> histogram;
};
// One row per placement: translation, yaw, then the pose deltas (zero where missing).
Eigen::MatrixXd placement_parameters(const std::vector<PlacementTransform>& transforms);

// Rows of `samples` are parameter vectors. Throws when there are fewer rows than k.
DiversityReport diversity(const Eigen::MatrixXd& samples, int k, std::uint64_t seed, int restarts = 50);

} // namespace hsi
