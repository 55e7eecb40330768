#pragma once

#include "hsi/common.hpp"

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace hsi {

struct Aabb {
    Vec3 min = Vec3::Constant(std::numeric_limits<double>::infinity());
    Vec3 max = Vec3::Constant(-std::numeric_limits<double>::infinity());

    void extend(const Vec3& p)
    {
        min = min.cwiseMin(p);
        max = max.cwiseMax(p);
    }
    void extend(const Aabb& b)
    {
        min = min.cwiseMin(b.min);
        max = max.cwiseMax(b.max);
    }
    bool empty() const { return (min.array() > max.array()).any(); }
    Vec3 extent() const { return max - min; }
    Vec3 center() const { return 0.5 * (min + max); }
    double diagonal() const { return extent().norm(); }
    // Squared distance from p to the box (0 inside).
    double squared_distance(const Vec3& p) const
    {
        const Vec3 d = (min - p).cwiseMax(p - max).cwiseMax(Vec3::Zero());
        return d.squaredNorm();
    }
};

struct TriMesh {
    std::vector<Vec3> vertices;
    std::vector<Face> faces;
    std::vector<Vec3> normals; // optional, per vertex

    std::size_t vertex_count() const { return vertices.size(); }
    std::size_t face_count() const { return faces.size(); }
    bool empty() const { return faces.empty(); }

    // Throws Error naming the first offending face.
    void validate() const;
    Aabb bounds() const;
};

struct SceneMesh {
    TriMesh mesh;
    std::vector<int> labels;
    std::vector<std::string> class_names;

    int class_count() const { return static_cast<int>(class_names.size()); }
    void validate() const;
};

struct RigidTransform {
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();

    Vec3 apply(const Vec3& v) const { return rotation * v + translation; }
    RigidTransform then(const RigidTransform& next) const
    {
        return {next.rotation * rotation, next.rotation * translation + next.translation};
    }
};

Mat3 axis_angle_matrix(const Vec3& axis_angle);
Vec3 matrix_to_axis_angle(const Mat3& r);
Mat3 yaw_matrix(double yaw);
// Maps an angle into (-pi, pi].
double wrap_angle(double a);

// v' = R_up(yaw) * v + translation; faces and labels untouched.
TriMesh apply_rigid(const TriMesh& mesh, const Vec3& translation, double yaw);
std::vector<Vec3> apply_rigid(std::span<const Vec3> vertices, const Vec3& translation, double yaw);

struct Joint {
    std::string name;
    int parent = -1;   // -1 for the root
    Vec3 rest_position; // absolute, rest pose
};

struct SkinInfluence {
    int joint;
    double weight;
};

// Articulated skeleton driving linear blend skinning of a fixed-topology mesh.
struct Skeleton {
    std::vector<Joint> joints;
    std::vector<std::vector<SkinInfluence>> weights; // per vertex

    std::size_t joint_count() const { return joints.size(); }

    struct Posed {
        std::vector<Mat3> rotation;  // world rotation of each joint frame
        std::vector<Vec3> position;  // world position of each joint
    };
    // Forward kinematics; angles are local axis-angle rotations per joint.
    Posed forward(std::span<const Vec3> angles) const;
    std::vector<Vec3> skin(std::span<const Vec3> rest_vertices, std::span<const Vec3> angles) const;
    void validate(std::size_t vertex_count) const;
};

struct BodyMesh {
    TriMesh mesh;                    // posed, world coordinates
    std::vector<Vec3> rest_vertices; // unposed, skeleton space
    Skeleton skeleton;
    std::vector<Vec3> joint_angles;  // current pose
    RigidTransform root;             // skeleton space -> world
    std::string pose_name;

    std::size_t vertex_count() const { return mesh.vertices.size(); }
    // Recompute mesh.vertices from rest_vertices, joint_angles and root.
    void update();
};

} // namespace hsi
