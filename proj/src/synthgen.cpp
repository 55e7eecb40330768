#include "hsi/synthgen.hpp"
#include "hsi/bvh.hpp"
#include "hsi/humanoid.hpp"
#include "hsi/parallel.hpp"
#include "hsi/primitives.hpp"
#include "hsi/rng.hpp"

#include <json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>

namespace hsi {

namespace {

constexpr double kWallThickness = 0.1;

// Item-local box: u along the width, v from the back (0) toward the front, z up.
struct LocalBox {
    double u0, u1, v0, v1, z0, z1;
};

struct Template {
    int label;
    double width;
    double depth;
    std::vector<LocalBox> boxes;
    std::optional<LocalBox> support;
};

Template chair_template(double seat)
{
    return {kChair, 0.48, 0.50, {{0, 0.48, 0.06, 0.50, 0, seat}, {0, 0.48, 0, 0.06, 0, seat + 0.45}},
            LocalBox{0, 0.48, 0.06, 0.50, seat, seat}};
}

Template sofa_template(double seat)
{
    return {kSofa,
            1.9,
            0.66,
            {{0, 1.9, 0, 0.2, 0, 0.85}, {0, 0.15, 0.2, 0.66, 0, 0.6}, {1.75, 1.9, 0.2, 0.66, 0, 0.6},
             {0.15, 1.75, 0.2, 0.66, 0, seat}},
            LocalBox{0.15, 1.75, 0.2, 0.66, seat, seat}};
}

Template bed_template()
{
    return {kBed, 1.5, 2.1, {{0, 1.5, 0, 0.08, 0, 1.0}, {0, 1.5, 0.08, 2.1, 0, 0.5}},
            LocalBox{0, 1.5, 0.08, 2.1, 0.5, 0.5}};
}

Template table_template()
{
    Template t{kTable, 1.2, 0.7, {{0, 1.2, 0, 0.7, 0.71, 0.75}}, std::nullopt};
    for (double u : {0.0, 1.15}) {
        for (double v : {0.0, 0.65}) {
            t.boxes.push_back({u, u + 0.05, v, v + 0.05, 0, 0.71});
        }
    }
    return t;
}

Template shelf_template() { return {kShelf, 0.8, 0.35, {{0, 0.8, 0, 0.35, 0, 1.8}}, std::nullopt}; }

Template other_template(Rng& rng)
{
    const double w = rng.uniform(0.3, 0.6), d = rng.uniform(0.3, 0.6), h = rng.uniform(0.3, 1.0);
    return {kOther, w, d, {{0, w, 0, d, 0, h}}, std::nullopt};
}

// Maps item-local coordinates to the world for an item whose back-left corner
// sits at `origin` and whose depth axis points along `facing`.
struct Frame2 {
    Vec3 origin;
    Vec3 width_axis;
    Vec3 facing;

    Vec3 at(double u, double v, double z) const { return origin + u * width_axis + v * facing + Vec3(0, 0, z); }
    Box box(const LocalBox& b) const
    {
        const Vec3 p = at(b.u0, b.v0, b.z0), q = at(b.u1, b.v1, b.z1);
        return {p.cwiseMin(q), p.cwiseMax(q)};
    }
};

// Facing index 0..3 -> +y, -x, -y, +x; width axis is facing rotated by -90 degrees.
Vec3 facing_vector(int k)
{
    static const Vec3 dirs[4] = {Vec3(0, 1, 0), Vec3(-1, 0, 0), Vec3(0, -1, 0), Vec3(1, 0, 0)};
    return dirs[k & 3];
}
Vec3 width_vector(int k) { return facing_vector(k + 3); }

FurnitureItem instantiate(const Template& t, const Frame2& f)
{
    FurnitureItem item;
    item.label = t.label;
    item.facing = f.facing;
    for (const LocalBox& b : t.boxes) {
        item.parts.push_back(f.box(b));
        item.footprint.extend(item.parts.back().min);
        item.footprint.extend(item.parts.back().max);
    }
    if (t.support) {
        item.support = f.box(*t.support);
        item.has_support = true;
    }
    return item;
}

bool overlaps_xy(const Aabb& a, const Aabb& b, double clearance)
{
    for (int k = 0; k < 2; ++k) {
        if (a.max[k] + clearance <= b.min[k] || b.max[k] + clearance <= a.min[k]) {
            return false;
        }
    }
    return true;
}

bool inside_room_xy(const Aabb& a, const Vec3& room, double margin)
{
    return a.min.x() >= margin && a.min.y() >= margin && a.max.x() <= room.x() - margin &&
           a.max.y() <= room.y() - margin;
}

bool try_place(SceneSpec& spec, const Template& t, bool against_wall, Rng& rng, int attempts = 200)
{
    for (int a = 0; a < attempts; ++a) {
        const int k = static_cast<int>(rng.below(4));
        const Vec3 facing = facing_vector(k), width = width_vector(k);
        Frame2 frame{Vec3::Zero(), width, facing};
        // Item-local bounding box corners relative to the origin.
        Aabb local;
        local.extend(frame.at(0, 0, 0));
        local.extend(frame.at(t.width, t.depth, 0));
        if (against_wall) {
            // Back flush with the wall behind the facing direction.
            const double gap = 0.01;
            const double along = rng.uniform(0.0, 1.0);
            Vec3 origin = Vec3::Zero();
            for (int axis = 0; axis < 2; ++axis) {
                const double lo = gap - local.min[axis], hi = spec.room[axis] - gap - local.max[axis];
                origin[axis] = lo + along * (hi - lo);
                if (facing[axis] > 0.5) {
                    origin[axis] = lo;
                } else if (facing[axis] < -0.5) {
                    origin[axis] = hi;
                }
            }
            frame.origin = origin;
        } else {
            frame.origin = Vec3(rng.uniform(0, spec.room.x()) - local.center().x(),
                                rng.uniform(0, spec.room.y()) - local.center().y(), 0.0);
        }
        FurnitureItem item = instantiate(t, frame);
        if (!inside_room_xy(item.footprint, spec.room, 0.005)) {
            continue;
        }
        bool clear = true;
        for (const FurnitureItem& other : spec.items) {
            clear = clear && !overlaps_xy(item.footprint, other.footprint, 0.35);
        }
        if (clear) {
            spec.items.push_back(std::move(item));
            return true;
        }
    }
    return false;
}

} // namespace

SceneSpec generate_scene_spec(std::uint64_t seed)
{
    Rng rng(Rng::derive_seed(seed, "scene-layout"));
    SceneSpec spec;
    spec.seed = seed;
    spec.room = Vec3(rng.uniform(4.5, 6.5), rng.uniform(4.5, 6.5), 2.6);
    const double seat = sitting_seat_height();
    try_place(spec, bed_template(), true, rng);
    if (rng.uniform() < 0.7) {
        try_place(spec, sofa_template(seat), true, rng);
    }
    if (rng.uniform() < 0.6) {
        try_place(spec, shelf_template(), true, rng);
    }
    try_place(spec, table_template(), false, rng);
    const int chairs = 1 + static_cast<int>(rng.below(2));
    for (int c = 0; c < chairs; ++c) {
        try_place(spec, chair_template(seat), false, rng);
    }
    if (rng.uniform() < 0.6) {
        Template other = other_template(rng);
        try_place(spec, other, false, rng);
    }
    return spec;
}

SceneMesh build_scene_mesh(const SceneSpec& spec)
{
    SceneMesh scene;
    scene.class_names = default_class_names();
    auto add_box = [&](const Vec3& lo, const Vec3& hi, int label) {
        append_mesh(scene.mesh, make_box(lo, hi));
        scene.labels.resize(scene.mesh.vertex_count(), label);
    };
    const double w = spec.room.x(), d = spec.room.y(), h = spec.room.z(), t = kWallThickness;
    add_box(Vec3(-t, -t, -t), Vec3(w + t, d + t, 0), kFloor);
    add_box(Vec3(-t, -t, 0), Vec3(0, d + t, h), kWall);
    add_box(Vec3(w, -t, 0), Vec3(w + t, d + t, h), kWall);
    add_box(Vec3(0, -t, 0), Vec3(w, 0, h), kWall);
    add_box(Vec3(0, d, 0), Vec3(w, d + t, h), kWall);
    for (const FurnitureItem& item : spec.items) {
        for (const Box& b : item.parts) {
            add_box(b.min, b.max, item.label);
        }
    }
    scene.validate();
    return scene;
}

std::string frame_pose(std::uint64_t seed, int index)
{
    Rng rng(Rng::derive_seed(seed, "frame-pose", static_cast<std::uint64_t>(index)));
    const double u = rng.uniform();
    if (u < 0.30) {
        return "stand";
    }
    if (u < 0.55) {
        return "sit";
    }
    if (u < 0.75) {
        return "lie";
    }
    if (u < 0.85) {
        return "reach";
    }
    return "touch-wall";
}

namespace {

// Yaw that turns the canonical forward axis (+y) into `facing`.
double yaw_toward(const Vec3& facing) { return std::atan2(-facing.x(), facing.y()); }

struct Posed {
    Vec3 translation;
    double yaw;
    const FurnitureItem* support = nullptr;
};

double extreme(const BodyMesh& body, const std::vector<int>& ids, int axis, bool lowest)
{
    double e = lowest ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
    for (int i : ids) {
        e = lowest ? std::min(e, body.mesh.vertices[i][axis]) : std::max(e, body.mesh.vertices[i][axis]);
    }
    return e;
}

// Rejects bodies that leave the room, overlap the footprint of any item other
// than their support, or sink more than a centimeter into any scene box.
bool body_fits(const std::vector<Vec3>& world, const SceneSpec& spec, const FurnitureItem* support)
{
    Aabb bounds;
    for (const Vec3& p : world) {
        bounds.extend(p);
    }
    for (const FurnitureItem& item : spec.items) {
        if (&item != support && overlaps_xy(bounds, item.footprint, 0.0)) {
            return false;
        }
    }
    std::size_t inside = 0;
    for (const Vec3& p : world) {
        if (p.x() < -0.005 || p.y() < -0.005 || p.x() > spec.room.x() + 0.005 || p.y() > spec.room.y() + 0.005 ||
            p.z() < -0.01 || p.z() > spec.room.z()) {
            return false;
        }
        for (const FurnitureItem& item : spec.items) {
            for (const Box& b : item.parts) {
                if ((p.array() > b.min.array() + 0.01).all() && (p.array() < b.max.array() - 0.01).all()) {
                    ++inside;
                }
            }
        }
    }
    return inside <= world.size() / 100;
}

std::optional<Posed> place_pose(const BodyMesh& body, const std::string& pose, const SceneSpec& spec, Rng& rng)
{
    const HumanoidModel& model = humanoid();
    auto items_with = [&](std::initializer_list<int> labels) {
        std::vector<const FurnitureItem*> out;
        for (const FurnitureItem& it : spec.items) {
            if (it.has_support && std::find(labels.begin(), labels.end(), it.label) != labels.end()) {
                out.push_back(&it);
            }
        }
        return out;
    };
    if (pose == "stand" || pose == "reach") {
        const double yaw = rng.uniform(-std::numbers::pi, std::numbers::pi);
        return Posed{Vec3(rng.uniform(0, spec.room.x()), rng.uniform(0, spec.room.y()), 0.0), yaw};
    }
    if (pose == "sit") {
        const auto seats = items_with({kChair, kSofa});
        if (seats.empty()) {
            return std::nullopt;
        }
        const FurnitureItem& seat = *seats[rng.below(seats.size())];
        const double yaw = yaw_toward(seat.facing);
        const auto back_ids = [&] {
            std::vector<int> ids;
            for (std::size_t i = 0; i < body.vertex_count(); ++i) {
                const BodyPart p = model.part[i];
                if (p == BodyPart::Pelvis || p == BodyPart::Torso) {
                    ids.push_back(static_cast<int>(i));
                }
            }
            return ids;
        }();
        const double back_y = extreme(body, back_ids, 1, true);
        // Backrest front line and lateral position on the seat.
        const Vec3 width_axis = seat.facing.cross(Vec3::UnitZ());
        const Vec3 smin = seat.support.min, smax = seat.support.max;
        const Vec3 center = 0.5 * (smin + smax);
        const double half_width = 0.5 * std::abs((smax - smin).dot(width_axis));
        const double slack = std::max(0.0, half_width - 0.3);
        const double depth = std::abs((smax - smin).dot(seat.facing));
        const Vec3 back_line = center - 0.5 * depth * seat.facing + rng.uniform(-slack, slack) * width_axis;
        const Vec3 target = back_line + 0.01 * seat.facing;
        const Vec3 offset = yaw_matrix(yaw) * Vec3(0, back_y, 0);
        const auto seat_ids = region_vertices(body, Region::Seat);
        const auto sole_ids = region_vertices(body, Region::Soles);
        const double z = std::max(seat.support.max.z() - extreme(body, seat_ids, 2, true),
                                  -extreme(body, sole_ids, 2, true)) +
                         0.002;
        return Posed{Vec3(target.x() - offset.x(), target.y() - offset.y(), z), yaw, &seat};
    }
    if (pose == "lie") {
        const auto beds = items_with({kBed});
        if (beds.empty()) {
            return std::nullopt;
        }
        const FurnitureItem& bed = *beds[rng.below(beds.size())];
        const double yaw = yaw_toward(bed.facing);
        const Aabb bb = body.mesh.bounds();
        const Vec3 offset = yaw_matrix(yaw) * Vec3(bb.center().x(), bb.center().y(), 0);
        const Vec3 center = 0.5 * (bed.support.min + bed.support.max);
        const Vec3 jitter(rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05), 0.0);
        return Posed{Vec3(center.x() - offset.x(), center.y() - offset.y(), bed.support.max.z() + 0.002) + jitter,
                     yaw, &bed};
    }
    if (pose == "touch-wall") {
        const int wall = static_cast<int>(rng.below(4));
        // Inward normals of the four walls: south, east, north, west.
        static const Vec3 inward[4] = {Vec3(0, 1, 0), Vec3(-1, 0, 0), Vec3(0, -1, 0), Vec3(1, 0, 0)};
        const Vec3 n = inward[wall];
        const double yaw = yaw_toward(-n);
        const auto hand = region_vertices(body, Region::RightHand);
        const Mat3 r = yaw_matrix(yaw);
        // Fingertip point: the hand vertex reaching furthest toward the wall.
        double reach = -std::numeric_limits<double>::infinity();
        Vec3 tip = Vec3::Zero();
        for (int i : hand) {
            const Vec3 p = r * body.mesh.vertices[i];
            if (-p.dot(n) > reach) {
                reach = -p.dot(n);
                tip = p;
            }
        }
        Vec3 plane_point;
        switch (wall) {
        case 0: plane_point = Vec3(0, 0, 0); break;
        case 1: plane_point = Vec3(spec.room.x(), 0, 0); break;
        case 2: plane_point = Vec3(0, spec.room.y(), 0); break;
        default: plane_point = Vec3(0, 0, 0); break;
        }
        const double along = rng.uniform(0.8, (wall % 2 == 0 ? spec.room.x() : spec.room.y()) - 0.8);
        Vec3 t = Vec3::Zero();
        const int normal_axis = wall % 2 == 0 ? 1 : 0;
        const int along_axis = 1 - normal_axis;
        t[along_axis] = along - tip[along_axis];
        t[normal_axis] = plane_point[normal_axis] + 0.003 * n[normal_axis] - tip[normal_axis];
        return Posed{t, yaw};
    }
    pose_spec(pose);
    return std::nullopt;
}

struct FrameResult {
    bool ok = false;
    InteractionFrame frame;
    FramePlacement placement;
};

} // namespace

BodyMesh placement_body(const FramePlacement& p)
{
    const PoseSpec& spec = pose_spec(p.pose);
    BodyMesh body = humanoid().rest;
    if (p.joint_angles.size() != body.skeleton.joint_count()) {
        throw Error("placement has " + std::to_string(p.joint_angles.size()) + " joint angles, skeleton has " +
                    std::to_string(body.skeleton.joint_count()));
    }
    body.pose_name = spec.name;
    body.joint_angles = p.joint_angles;
    body.root = p.root;
    body.update();
    return body;
}

InteractionFrame extract_frame(const BodyMesh& canonical, const FramePlacement& p, const SceneMesh& scene,
                               const ProximityTree& tree)
{
    static const std::vector<int> feature_ids = humanoid().feature_vertices();
    if (canonical.vertex_count() != kBodyVertices) {
        throw Error("extract_frame: body does not have the humanoid topology");
    }
    std::vector<Vec3> fcanon, fworld;
    for (int v : feature_ids) {
        fcanon.push_back(canonical.mesh.vertices[v]);
    }
    fworld = apply_rigid(fcanon, p.translation, p.yaw);
    const ExtractedFeatures ex = extract_features(fworld, scene, tree);
    const std::vector<int> labels = ex.features.labels();
    InteractionFrame frame;
    frame.positions.resize(static_cast<Eigen::Index>(feature_ids.size()), 3);
    for (std::size_t i = 0; i < feature_ids.size(); ++i) {
        frame.positions.row(static_cast<Eigen::Index>(i)) = fcanon[i].cast<float>().transpose();
        frame.contact.push_back(ex.features.contact[static_cast<Eigen::Index>(i)] > 0.5f ? 1 : 0);
        frame.classes.push_back(static_cast<std::uint16_t>(labels[i]));
    }
    return frame;
}

namespace {

nlohmann::json vec_json(const Vec3& v) { return {v.x(), v.y(), v.z()}; }

Vec3 vec_from(const nlohmann::json& j)
{
    if (!j.is_array() || j.size() != 3) {
        throw Error("expected a 3-vector");
    }
    return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

} // namespace

std::string placements_to_json(const std::vector<FramePlacement>& placements)
{
    nlohmann::json arr = nlohmann::json::array();
    for (const FramePlacement& p : placements) {
        nlohmann::json angles = nlohmann::json::array();
        for (const Vec3& a : p.joint_angles) {
            angles.push_back(vec_json(a));
        }
        nlohmann::json rot = nlohmann::json::array();
        for (int r = 0; r < 3; ++r) {
            rot.push_back(vec_json(p.root.rotation.row(r).transpose()));
        }
        arr.push_back({{"pose", p.pose},
                       {"scene", p.scene},
                       {"translation", vec_json(p.translation)},
                       {"yaw", p.yaw},
                       {"joint_angles", angles},
                       {"root_rotation", rot},
                       {"root_translation", vec_json(p.root.translation)},
                       {"mask_agreement", p.mask_agreement}});
    }
    return nlohmann::json{{"frames", arr}}.dump(1);
}

std::vector<FramePlacement> placements_from_json(const std::string& text)
{
    std::vector<FramePlacement> out;
    try {
        const nlohmann::json j = nlohmann::json::parse(text);
        for (const auto& f : j.at("frames")) {
            FramePlacement p;
            p.pose = f.at("pose").get<std::string>();
            p.scene = f.at("scene").get<int>();
            p.translation = vec_from(f.at("translation"));
            p.yaw = f.at("yaw").get<double>();
            for (const auto& a : f.at("joint_angles")) {
                p.joint_angles.push_back(vec_from(a));
            }
            const auto& rot = f.at("root_rotation");
            if (rot.size() != 3) {
                throw Error("root_rotation must be 3x3");
            }
            for (int r = 0; r < 3; ++r) {
                p.root.rotation.row(r) = vec_from(rot[r]).transpose();
            }
            p.root.translation = vec_from(f.at("root_translation"));
            p.mask_agreement = f.value("mask_agreement", 0.0);
            out.push_back(std::move(p));
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("bad frames file: ") + e.what());
    }
    return out;
}

std::string skeleton_json(const BodyMesh& body)
{
    nlohmann::json joints = nlohmann::json::array();
    for (std::size_t j = 0; j < body.skeleton.joint_count(); ++j) {
        const Joint& jt = body.skeleton.joints[j];
        joints.push_back({{"name", jt.name},
                          {"parent", jt.parent},
                          {"rest_position", vec_json(jt.rest_position)},
                          {"angle", j < body.joint_angles.size() ? vec_json(body.joint_angles[j]) : vec_json(Vec3::Zero())}});
    }
    nlohmann::json rot = nlohmann::json::array();
    for (int r = 0; r < 3; ++r) {
        rot.push_back(vec_json(body.root.rotation.row(r).transpose()));
    }
    return nlohmann::json{{"pose", body.pose_name},
                          {"joints", joints},
                          {"root_rotation", rot},
                          {"root_translation", vec_json(body.root.translation)}}
        .dump(1);
}

GeneratedData generate_frames(int frames, int scenes, std::uint64_t seed, const FrameOptions& options)
{
    if (frames < 1) {
        throw Error("frame count must be at least 1");
    }
    if (scenes < 1) {
        throw Error("scene count must be at least 1");
    }
    GeneratedData out;
    for (int s = 0; s < scenes; ++s) {
        out.specs.push_back(generate_scene_spec(Rng::derive_seed(seed, "scene", static_cast<std::uint64_t>(s))));
        out.scenes.push_back(build_scene_mesh(out.specs.back()));
    }
    std::vector<ProximityTree> trees;
    trees.reserve(out.scenes.size());
    for (const SceneMesh& s : out.scenes) {
        trees.emplace_back(s.mesh);
    }

    const std::size_t feature_count = humanoid().feature_vertex_count();

    std::vector<FrameResult> results(static_cast<std::size_t>(frames));
    parallel_for_each(results.size(), [&](std::size_t f) {
        Rng rng(Rng::derive_seed(seed, "frame", f));
        const std::string pose = frame_pose(seed, static_cast<int>(f));
        const int scene = static_cast<int>(f % static_cast<std::size_t>(scenes));
        const SceneSpec& spec = out.specs[scene];
        const BodyMesh body = generate_body(pose, rng.next_u64(), options.jitter);
        for (int attempt = 0; attempt < options.max_attempts; ++attempt) {
            const auto placed = place_pose(body, pose, spec, rng);
            if (!placed) {
                return;
            }
            const std::vector<Vec3> world = apply_rigid(body.mesh.vertices, placed->translation, placed->yaw);
            if (!body_fits(world, spec, placed->support)) {
                continue;
            }
            FramePlacement fp{pose, scene, placed->translation, placed->yaw, body.joint_angles, 0.0, body.root};
            FrameResult& r = results[f];
            r.frame = extract_frame(body, fp, out.scenes[scene], trees[scene]);
            const std::vector<int> mask = to_feature_level(expected_contact_mask(pose));
            int hit = 0;
            for (int v : mask) {
                hit += r.frame.contact[v];
            }
            if (std::none_of(r.frame.contact.begin(), r.frame.contact.end(), [](std::uint8_t c) { return c != 0; })) {
                continue;
            }
            fp.mask_agreement = mask.empty() ? 1.0 : static_cast<double>(hit) / static_cast<double>(mask.size());
            r.placement = std::move(fp);
            r.ok = true;
            return;
        }
    });

    out.dataset.class_names = default_class_names();
    out.dataset.vertex_count = static_cast<std::uint32_t>(feature_count);
    for (std::size_t f = 0; f < results.size(); ++f) {
        if (!results[f].ok) {
            ++out.skipped;
            spdlog::warn("frame {} ({}) skipped: no valid placement", f, frame_pose(seed, static_cast<int>(f)));
            continue;
        }
        out.dataset.frames.push_back(std::move(results[f].frame));
        out.placements.push_back(std::move(results[f].placement));
    }
    out.dataset.validate();
    return out;
}

} // namespace hsi
