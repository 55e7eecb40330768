#include "hsi/humanoid.hpp"
#include "hsi/rng.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <unordered_map>

namespace hsi {

namespace {

// A capsule-shaped body part, optionally squashed front-to-back.
struct Capsule {
    Vec3 a;
    Vec3 b;
    double radius;
    double depth_scale; // y axis scale of the cross-section
    int joint;
    BodyPart part;
    int side;

    double distance(const Vec3& p) const
    {
        Vec3 q = p;
        Vec3 qa = a, qb = b;
        q.y() /= depth_scale;
        qa.y() /= depth_scale;
        qb.y() /= depth_scale;
        const Vec3 ab = qb - qa;
        const double t = std::clamp((q - qa).dot(ab) / std::max(ab.squaredNorm(), 1e-12), 0.0, 1.0);
        return ((q - (qa + t * ab)).norm() - radius) * depth_scale;
    }
};

constexpr double kShoulderHeight = 1.42;
constexpr double kHipHeight = 0.92;
constexpr double kKneeHeight = 0.50;
constexpr double kAnkleHeight = 0.09;
const double kArmSpread = std::numbers::pi / 4; // A-pose

Vec3 arm_direction(int side) { return Vec3(side * std::sin(kArmSpread), 0.0, -std::cos(kArmSpread)); }

std::vector<Joint> rest_joints()
{
    const Vec3 ls(0.19, 0, kShoulderHeight), rs(-0.19, 0, kShoulderHeight);
    return {
        {"pelvis", -1, Vec3(0, 0, kHipHeight + 0.03)},
        {"spine", kPelvis, Vec3(0, 0, 1.15)},
        {"head", kSpine, Vec3(0, 0, 1.48)},
        {"left_shoulder", kSpine, ls},
        {"left_elbow", kLeftShoulder, ls + 0.28 * arm_direction(1)},
        {"right_shoulder", kSpine, rs},
        {"right_elbow", kRightShoulder, rs + 0.28 * arm_direction(-1)},
        {"left_hip", kPelvis, Vec3(0.1, 0, kHipHeight)},
        {"left_knee", kLeftHip, Vec3(0.1, 0, kKneeHeight)},
        {"right_hip", kPelvis, Vec3(-0.1, 0, kHipHeight)},
        {"right_knee", kRightHip, Vec3(-0.1, 0, kKneeHeight)},
    };
}

std::vector<Capsule> body_parts(const std::vector<Joint>& j)
{
    std::vector<Capsule> parts = {
        {Vec3(-0.07, 0, 0.93), Vec3(0.07, 0, 0.93), 0.125, 0.8, kPelvis, BodyPart::Pelvis, 0},
        {Vec3(0, 0, 1.0), Vec3(0, 0, 1.3), 0.13, 0.75, kSpine, BodyPart::Torso, 0},
        {Vec3(-0.16, 0, 1.38), Vec3(0.16, 0, 1.38), 0.075, 0.9, kSpine, BodyPart::Torso, 0},
        {Vec3(0, 0, 1.38), Vec3(0, 0, 1.52), 0.05, 1.0, kHead, BodyPart::Head, 0},
        {Vec3(0, 0.01, 1.6), Vec3(0, 0.01, 1.66), 0.095, 1.0, kHead, BodyPart::Head, 0},
    };
    for (int side : {1, -1}) {
        const int shoulder = side > 0 ? kLeftShoulder : kRightShoulder;
        const int elbow = side > 0 ? kLeftElbow : kRightElbow;
        const int hip = side > 0 ? kLeftHip : kRightHip;
        const int knee = side > 0 ? kLeftKnee : kRightKnee;
        const Vec3 d = arm_direction(side);
        const Vec3 wrist = j[elbow].rest_position + 0.25 * d;
        parts.push_back({j[shoulder].rest_position, j[elbow].rest_position, 0.05, 1.0, shoulder, BodyPart::UpperArm,
                         side});
        parts.push_back({j[elbow].rest_position, wrist, 0.04, 1.0, elbow, BodyPart::Forearm, side});
        parts.push_back({wrist + 0.02 * d, wrist + 0.11 * d, 0.035, 0.75, elbow, BodyPart::Hand, side});
        parts.push_back({j[hip].rest_position, j[knee].rest_position, 0.075, 1.0, hip, BodyPart::Thigh, side});
        const Vec3 ankle(side * 0.1, 0, kAnkleHeight);
        parts.push_back({j[knee].rest_position, ankle, 0.055, 1.0, knee, BodyPart::Shin, side});
        parts.push_back({Vec3(side * 0.1, -0.04, 0.045), Vec3(side * 0.1, 0.15, 0.045), 0.045, 1.0, knee,
                         BodyPart::Foot, side});
    }
    return parts;
}

double smooth_min(double a, double b, double k)
{
    const double h = std::max(k - std::abs(a - b), 0.0) / k;
    return std::min(a, b) - h * h * k / 4.0;
}

double body_field(const std::vector<Capsule>& parts, const Vec3& p)
{
    double d = std::numeric_limits<double>::infinity();
    for (const Capsule& c : parts) {
        d = smooth_min(d, c.distance(p), 0.025);
    }
    return d;
}

// Marching tetrahedra over the Kuhn subdivision of a regular grid, with
// triangles oriented toward the positive side of the field.
TriMesh polygonize(const std::vector<Capsule>& parts, const Vec3& lo, const Vec3& hi, double h)
{
    const int nx = static_cast<int>(std::ceil((hi.x() - lo.x()) / h)) + 1;
    const int ny = static_cast<int>(std::ceil((hi.y() - lo.y()) / h)) + 1;
    const int nz = static_cast<int>(std::ceil((hi.z() - lo.z()) / h)) + 1;
    auto gid = [&](int i, int j, int k) { return (static_cast<std::int64_t>(k) * ny + j) * nx + i; };
    auto gpos = [&](std::int64_t g) {
        const int i = static_cast<int>(g % nx);
        const int j = static_cast<int>((g / nx) % ny);
        const int k = static_cast<int>(g / (static_cast<std::int64_t>(nx) * ny));
        return Vec3(lo.x() + i * h, lo.y() + j * h, lo.z() + k * h);
    };
    std::vector<double> field(static_cast<std::size_t>(nx) * ny * nz);
    for (int k = 0; k < nz; ++k) {
        for (int j = 0; j < ny; ++j) {
            for (int i = 0; i < nx; ++i) {
                double f = body_field(parts, Vec3(lo.x() + i * h, lo.y() + j * h, lo.z() + k * h));
                if (std::abs(f) < 1e-7) {
                    f = 1e-7; // keep surface points off grid nodes
                }
                field[gid(i, j, k)] = f;
            }
        }
    }

    TriMesh mesh;
    std::unordered_map<std::int64_t, int> edge_vertex;
    auto crossing = [&](std::int64_t a, std::int64_t b) {
        if (a > b) {
            std::swap(a, b);
        }
        const std::int64_t key = a * static_cast<std::int64_t>(field.size()) + b;
        const auto it = edge_vertex.find(key);
        if (it != edge_vertex.end()) {
            return it->second;
        }
        const double fa = field[a], fb = field[b];
        const double t = fa / (fa - fb);
        mesh.vertices.push_back(gpos(a) + t * (gpos(b) - gpos(a)));
        const int id = static_cast<int>(mesh.vertices.size()) - 1;
        edge_vertex.emplace(key, id);
        return id;
    };
    auto emit = [&](std::array<int, 3> tri, const Vec3& inside, const Vec3& outside) {
        const Vec3& p0 = mesh.vertices[tri[0]];
        const Vec3 n = (mesh.vertices[tri[1]] - p0).cross(mesh.vertices[tri[2]] - p0);
        if (n.dot(outside - inside) < 0.0) {
            std::swap(tri[1], tri[2]);
        }
        if (tri[0] != tri[1] && tri[1] != tri[2] && tri[0] != tri[2]) {
            mesh.faces.push_back(tri);
        }
    };
    static constexpr std::array<std::array<int, 3>, 6> kAxisOrders = {
        {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}}};
    for (int k = 0; k + 1 < nz; ++k) {
        for (int j = 0; j + 1 < ny; ++j) {
            for (int i = 0; i + 1 < nx; ++i) {
                for (const auto& order : kAxisOrders) {
                    std::array<int, 3> c{i, j, k};
                    std::array<std::int64_t, 4> tet;
                    tet[0] = gid(c[0], c[1], c[2]);
                    for (int s = 0; s < 3; ++s) {
                        ++c[order[s]];
                        tet[s + 1] = gid(c[0], c[1], c[2]);
                    }
                    std::array<std::int64_t, 4> in{}, out{};
                    int ni = 0, no = 0;
                    for (std::int64_t g : tet) {
                        if (field[g] < 0.0) {
                            in[ni++] = g;
                        } else {
                            out[no++] = g;
                        }
                    }
                    if (ni == 0 || no == 0) {
                        continue;
                    }
                    Vec3 cin = Vec3::Zero(), cout = Vec3::Zero();
                    for (int s = 0; s < ni; ++s) {
                        cin += gpos(in[s]) / ni;
                    }
                    for (int s = 0; s < no; ++s) {
                        cout += gpos(out[s]) / no;
                    }
                    if (ni == 1) {
                        emit({crossing(in[0], out[0]), crossing(in[0], out[1]), crossing(in[0], out[2])}, cin, cout);
                    } else if (no == 1) {
                        emit({crossing(out[0], in[0]), crossing(out[0], in[1]), crossing(out[0], in[2])}, cin, cout);
                    } else {
                        const int ac = crossing(in[0], out[0]), ad = crossing(in[0], out[1]);
                        const int bd = crossing(in[1], out[1]), bc = crossing(in[1], out[0]);
                        emit({ac, ad, bd}, cin, cout);
                        emit({ac, bd, bc}, cin, cout);
                    }
                }
            }
        }
    }
    return mesh;
}

// Soft part assignment: exponential falloff in surface distance, merged per joint.
std::vector<std::vector<SkinInfluence>> skin_weights(const std::vector<Capsule>& parts,
                                                     const std::vector<Vec3>& vertices)
{
    constexpr double kFalloff = 0.015;
    std::vector<std::vector<SkinInfluence>> weights(vertices.size());
    for (std::size_t v = 0; v < vertices.size(); ++v) {
        std::array<double, kJointCount> w{};
        double best = std::numeric_limits<double>::infinity();
        std::vector<double> d(parts.size());
        for (std::size_t p = 0; p < parts.size(); ++p) {
            d[p] = parts[p].distance(vertices[v]);
            best = std::min(best, d[p]);
        }
        for (std::size_t p = 0; p < parts.size(); ++p) {
            w[parts[p].joint] = std::max(w[parts[p].joint], std::exp(-(d[p] - best) / kFalloff));
        }
        double total = 0.0;
        for (double x : w) {
            total += x > 1e-3 ? x : 0.0;
        }
        for (int j = 0; j < kJointCount; ++j) {
            if (w[j] > 1e-3) {
                weights[v].push_back({j, w[j] / total});
            }
        }
    }
    return weights;
}

HumanoidModel build_humanoid()
{
    HumanoidModel model;
    const std::vector<Joint> joints = rest_joints();
    const std::vector<Capsule> parts = body_parts(joints);

    TriMesh dense = polygonize(parts, Vec3(-0.75, -0.2, -0.05), Vec3(0.75, 0.25, 1.8), 0.012);
    Simplified body = simplify_mesh(dense, kBodyVertices);
    spdlog::debug("humanoid: {} -> {} vertices", dense.vertex_count(), body.mesh.vertex_count());

    // Soles at z = 0.
    double min_z = std::numeric_limits<double>::infinity();
    for (const Vec3& p : body.mesh.vertices) {
        min_z = std::min(min_z, p.z());
    }
    for (Vec3& p : body.mesh.vertices) {
        p.z() -= min_z;
    }
    std::vector<Capsule> shifted = parts;
    std::vector<Joint> shifted_joints = joints;
    for (Capsule& c : shifted) {
        c.a.z() -= min_z;
        c.b.z() -= min_z;
    }
    for (Joint& j : shifted_joints) {
        j.rest_position.z() -= min_z;
    }

    BodyMesh& rest = model.rest;
    rest.mesh = body.mesh;
    rest.rest_vertices = body.mesh.vertices;
    rest.skeleton.joints = shifted_joints;
    rest.skeleton.weights = skin_weights(shifted, rest.rest_vertices);
    rest.joint_angles.assign(kJointCount, Vec3::Zero());
    rest.pose_name = "rest";
    rest.skeleton.validate(rest.vertex_count());

    model.part.resize(rest.vertex_count());
    model.side.resize(rest.vertex_count());
    for (std::size_t v = 0; v < rest.vertex_count(); ++v) {
        std::size_t best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t p = 0; p < shifted.size(); ++p) {
            const double d = shifted[p].distance(rest.rest_vertices[v]);
            if (d < best_d) {
                best_d = d;
                best = p;
            }
        }
        model.part[v] = shifted[best].part;
        model.side[v] = shifted[best].side;
    }

    model.hierarchy = build_hierarchy(rest.mesh, 4, kHierarchyLevels);
    for (const TriMesh& level : model.hierarchy.levels) {
        model.spirals.push_back(build_spirals(level, kSpiralLength));
    }
    return model;
}

// Local rotation turning a rest arm direction into a target direction.
Vec3 aim(const Vec3& from, const Vec3& to)
{
    return matrix_to_axis_angle(Eigen::Quaterniond::FromTwoVectors(from, to).toRotationMatrix());
}

std::vector<PoseSpec> build_poses()
{
    const double half_pi = std::numbers::pi / 2;
    std::vector<PoseSpec> poses;
    auto zero = [] { return std::vector<Vec3>(kJointCount, Vec3::Zero()); };

    PoseSpec stand{"stand", zero()};
    poses.push_back(stand);

    PoseSpec sit{"sit", zero()};
    for (int hip : {kLeftHip, kRightHip}) {
        sit.angles[hip] = Vec3(half_pi, 0, 0);
    }
    for (int knee : {kLeftKnee, kRightKnee}) {
        sit.angles[knee] = Vec3(-half_pi, 0, 0);
    }
    poses.push_back(sit);

    PoseSpec lie{"lie", zero()};
    lie.root_rotation = Eigen::AngleAxisd(half_pi, Vec3::UnitX()).toRotationMatrix();
    poses.push_back(lie);

    PoseSpec reach{"reach", zero()};
    reach.angles[kRightShoulder] = aim(arm_direction(-1), Vec3(0, std::cos(0.5), std::sin(0.5)));
    poses.push_back(reach);

    PoseSpec wall{"touch-wall", zero()};
    wall.angles[kRightShoulder] = aim(arm_direction(-1), Vec3(0, 1, 0));
    poses.push_back(wall);
    return poses;
}

const std::vector<PoseSpec>& pose_library()
{
    static const std::vector<PoseSpec> poses = build_poses();
    return poses;
}

} // namespace

std::vector<int> HumanoidModel::feature_vertices() const
{
    const SparseMap& down = hierarchy.down_maps[0];
    std::vector<int> out(static_cast<std::size_t>(down.rows()));
    for (Eigen::Index r = 0; r < down.rows(); ++r) {
        SparseMap::InnerIterator it(down, r);
        out[r] = static_cast<int>(it.col());
    }
    return out;
}

const HumanoidModel& humanoid()
{
    static const HumanoidModel model = build_humanoid();
    return model;
}

const std::vector<std::string>& pose_names()
{
    static const std::vector<std::string> names = [] {
        std::vector<std::string> out;
        for (const PoseSpec& p : pose_library()) {
            out.push_back(p.name);
        }
        return out;
    }();
    return names;
}

const PoseSpec& pose_spec(const std::string& name)
{
    for (const PoseSpec& p : pose_library()) {
        if (p.name == name) {
            return p;
        }
    }
    throw Error("unknown pose '" + name + "'");
}

BodyMesh generate_body(const std::string& pose, std::uint64_t jitter_seed, double jitter)
{
    const PoseSpec& spec = pose_spec(pose);
    BodyMesh body = humanoid().rest;
    body.pose_name = spec.name;
    body.joint_angles = spec.angles;
    if (jitter > 0.0) {
        Rng rng(Rng::derive_seed(jitter_seed, "pose-jitter"));
        for (int j = 1; j < kJointCount; ++j) {
            Vec3 dir(rng.normal(), rng.normal(), rng.normal());
            dir.normalize();
            body.joint_angles[j] += rng.uniform(0.0, jitter) * dir;
        }
    }
    body.root.rotation = spec.root_rotation;
    body.root.translation = Vec3::Zero();
    body.update();
    double min_z = std::numeric_limits<double>::infinity();
    for (const Vec3& p : body.mesh.vertices) {
        min_z = std::min(min_z, p.z());
    }
    body.root.translation = Vec3(0.0, 0.0, -min_z);
    body.update();
    return body;
}

std::vector<int> region_vertices(const BodyMesh& body, Region region)
{
    const HumanoidModel& m = humanoid();
    const auto& v = body.mesh.vertices;
    auto select = [&](auto member, auto key, bool lowest, double band) {
        double extreme = lowest ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (member(i)) {
                extreme = lowest ? std::min(extreme, key(v[i])) : std::max(extreme, key(v[i]));
            }
        }
        std::vector<int> out;
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (member(i) && (lowest ? key(v[i]) <= extreme + band : key(v[i]) >= extreme - band)) {
                out.push_back(static_cast<int>(i));
            }
        }
        return out;
    };
    auto height = [](const Vec3& p) { return p.z(); };
    switch (region) {
    case Region::LeftSole:
    case Region::RightSole: {
        const int side = region == Region::LeftSole ? 1 : -1;
        return select([&](std::size_t i) { return m.part[i] == BodyPart::Foot && m.side[i] == side; }, height, true,
                      0.015);
    }
    case Region::Soles: {
        auto l = region_vertices(body, Region::LeftSole);
        auto r = region_vertices(body, Region::RightSole);
        l.insert(l.end(), r.begin(), r.end());
        std::sort(l.begin(), l.end());
        return l;
    }
    case Region::Seat: {
        // Buttocks and the back two thirds of the thighs; the knee end overhangs a seat edge.
        const auto posed = body.skeleton.forward(body.joint_angles);
        auto world = [&](int j) { return body.root.apply(posed.position[j]); };
        auto on_seat = [&](std::size_t i) {
            if (m.part[i] == BodyPart::Pelvis) {
                return true;
            }
            if (m.part[i] != BodyPart::Thigh) {
                return false;
            }
            const Vec3 hip = world(m.side[i] > 0 ? kLeftHip : kRightHip);
            const Vec3 knee = world(m.side[i] > 0 ? kLeftKnee : kRightKnee);
            return (v[i] - hip).dot((knee - hip).normalized()) <= 0.3;
        };
        return select(on_seat, height, true, 0.02);
    }
    case Region::Back:
        return select([&](std::size_t i) { return m.part[i] == BodyPart::Pelvis || m.part[i] == BodyPart::Torso; },
                      height, true, 0.03);
    case Region::RightHand: {
        // Fingertip side of the hand along the pointing direction.
        const Vec3 tip = body.root.rotation * body.skeleton.forward(body.joint_angles).rotation[kRightElbow] *
                         arm_direction(-1);
        return select([&](std::size_t i) { return m.part[i] == BodyPart::Hand && m.side[i] == -1; },
                      [&](const Vec3& p) { return p.dot(tip); }, false, 0.02);
    }
    }
    return {};
}

std::vector<int> expected_contact_mask(const std::string& pose)
{
    const BodyMesh body = generate_body(pose);
    std::vector<int> mask;
    auto add = [&](Region r) {
        const auto ids = region_vertices(body, r);
        mask.insert(mask.end(), ids.begin(), ids.end());
    };
    if (pose == "stand" || pose == "reach") {
        add(Region::Soles);
    } else if (pose == "sit") {
        add(Region::Soles);
        add(Region::Seat);
    } else if (pose == "lie") {
        add(Region::Back);
    } else if (pose == "touch-wall") {
        add(Region::Soles);
        add(Region::RightHand);
    } else {
        pose_spec(pose); // throws for unknown names
    }
    std::sort(mask.begin(), mask.end());
    mask.erase(std::unique(mask.begin(), mask.end()), mask.end());
    return mask;
}

double sitting_seat_height()
{
    static const double height = [] {
        const BodyMesh body = generate_body("sit");
        double z = std::numeric_limits<double>::infinity();
        for (int i : region_vertices(body, Region::Seat)) {
            z = std::min(z, body.mesh.vertices[i].z());
        }
        return z;
    }();
    return height;
}

std::vector<int> to_feature_level(const std::vector<int>& full_ids)
{
    const std::vector<int> kept = humanoid().feature_vertices();
    std::vector<int> position(kBodyVertices, -1);
    for (std::size_t c = 0; c < kept.size(); ++c) {
        position[kept[c]] = static_cast<int>(c);
    }
    std::vector<int> out;
    for (int v : full_ids) {
        if (position[v] >= 0) {
            out.push_back(position[v]);
        }
    }
    return out;
}

std::vector<Vec3> feature_positions(const BodyMesh& body)
{
    std::vector<Vec3> out;
    for (int v : humanoid().feature_vertices()) {
        out.push_back(body.mesh.vertices[v]);
    }
    return out;
}

} // namespace hsi
