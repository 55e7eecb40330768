#include "hsi/geometry.hpp"

#include <cmath>
#include <numbers>

namespace hsi {

void TriMesh::validate() const
{
    const auto n = static_cast<int>(vertices.size());
    for (std::size_t f = 0; f < faces.size(); ++f) {
        const Face& t = faces[f];
        for (int idx : t) {
            if (idx < 0 || idx >= n) {
                throw Error("face " + std::to_string(f) + " references vertex " + std::to_string(idx) +
                            " but mesh has " + std::to_string(n) + " vertices");
            }
        }
        if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2]) {
            throw Error("face " + std::to_string(f) + " is degenerate");
        }
    }
    if (!normals.empty() && normals.size() != vertices.size()) {
        throw Error("normal count does not match vertex count");
    }
}

Aabb TriMesh::bounds() const
{
    Aabb box;
    for (const Vec3& v : vertices) {
        box.extend(v);
    }
    return box;
}

void SceneMesh::validate() const
{
    mesh.validate();
    if (labels.size() != mesh.vertices.size()) {
        throw Error("scene label count " + std::to_string(labels.size()) + " does not match vertex count " +
                    std::to_string(mesh.vertices.size()));
    }
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= class_count()) {
            throw Error("scene vertex " + std::to_string(i) + " has label " + std::to_string(labels[i]) +
                        " outside [0, " + std::to_string(class_count()) + ")");
        }
    }
}

Mat3 axis_angle_matrix(const Vec3& axis_angle)
{
    const double angle = axis_angle.norm();
    if (angle < 1e-300) {
        return Mat3::Identity();
    }
    return Eigen::AngleAxisd(angle, axis_angle / angle).toRotationMatrix();
}

Vec3 matrix_to_axis_angle(const Mat3& r)
{
    const Eigen::AngleAxisd aa(r);
    return aa.axis() * aa.angle();
}

Mat3 yaw_matrix(double yaw)
{
    return Eigen::AngleAxisd(yaw, up_vector()).toRotationMatrix();
}

double wrap_angle(double a)
{
    const double two_pi = 2.0 * std::numbers::pi;
    a = std::fmod(a, two_pi);
    if (a <= -std::numbers::pi) {
        a += two_pi;
    } else if (a > std::numbers::pi) {
        a -= two_pi;
    }
    return a;
}

std::vector<Vec3> apply_rigid(std::span<const Vec3> vertices, const Vec3& translation, double yaw)
{
    const Mat3 r = yaw_matrix(yaw);
    std::vector<Vec3> out;
    out.reserve(vertices.size());
    for (const Vec3& v : vertices) {
        out.push_back(r * v + translation);
    }
    return out;
}

TriMesh apply_rigid(const TriMesh& mesh, const Vec3& translation, double yaw)
{
    TriMesh out = mesh;
    out.vertices = apply_rigid(mesh.vertices, translation, yaw);
    if (!mesh.normals.empty()) {
        const Mat3 r = yaw_matrix(yaw);
        for (Vec3& n : out.normals) {
            n = r * n;
        }
    }
    return out;
}

Skeleton::Posed Skeleton::forward(std::span<const Vec3> angles) const
{
    if (angles.size() != joints.size()) {
        throw Error("pose has " + std::to_string(angles.size()) + " joint angles, skeleton has " +
                    std::to_string(joints.size()));
    }
    Posed posed;
    posed.rotation.resize(joints.size());
    posed.position.resize(joints.size());
    for (std::size_t j = 0; j < joints.size(); ++j) {
        const Mat3 local = axis_angle_matrix(angles[j]);
        const int p = joints[j].parent;
        if (p < 0) {
            posed.rotation[j] = local;
            posed.position[j] = joints[j].rest_position;
        } else {
            // Parents precede children in the joint list.
            posed.rotation[j] = posed.rotation[p] * local;
            posed.position[j] =
                posed.position[p] + posed.rotation[p] * (joints[j].rest_position - joints[p].rest_position);
        }
    }
    return posed;
}

std::vector<Vec3> Skeleton::skin(std::span<const Vec3> rest_vertices, std::span<const Vec3> angles) const
{
    const Posed posed = forward(angles);
    std::vector<Vec3> out(rest_vertices.size(), Vec3::Zero());
    for (std::size_t i = 0; i < rest_vertices.size(); ++i) {
        for (const SkinInfluence& inf : weights[i]) {
            const Joint& jt = joints[inf.joint];
            out[i] += inf.weight *
                      (posed.rotation[inf.joint] * (rest_vertices[i] - jt.rest_position) + posed.position[inf.joint]);
        }
    }
    return out;
}

void Skeleton::validate(std::size_t vertex_count) const
{
    for (std::size_t j = 0; j < joints.size(); ++j) {
        if (joints[j].parent >= static_cast<int>(j)) {
            throw Error("joint " + joints[j].name + " must come after its parent");
        }
    }
    if (weights.size() != vertex_count) {
        throw Error("skinning weights cover " + std::to_string(weights.size()) + " vertices, mesh has " +
                    std::to_string(vertex_count));
    }
    for (std::size_t i = 0; i < weights.size(); ++i) {
        double sum = 0.0;
        for (const SkinInfluence& inf : weights[i]) {
            if (inf.joint < 0 || inf.joint >= static_cast<int>(joints.size())) {
                throw Error("vertex " + std::to_string(i) + " is skinned to unknown joint");
            }
            sum += inf.weight;
        }
        if (std::abs(sum - 1.0) > 1e-6) {
            throw Error("skinning weights of vertex " + std::to_string(i) + " sum to " + std::to_string(sum));
        }
    }
}

void BodyMesh::update()
{
    const std::vector<Vec3> posed = skeleton.skin(rest_vertices, joint_angles);
    mesh.vertices.resize(posed.size());
    for (std::size_t i = 0; i < posed.size(); ++i) {
        mesh.vertices[i] = root.apply(posed[i]);
    }
}

} // namespace hsi
