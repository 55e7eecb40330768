#include "hsi/placement.hpp"
#include "hsi/adam.hpp"
#include "hsi/parallel.hpp"
#include "hsi/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace hsi {

using nlohmann::json;

void PlacementWeights::validate() const
{
    for (double w : {contact, semantic, pen, reg}) {
        if (!std::isfinite(w) || w < 0.0) {
            throw Error("placement weights must be finite and non-negative");
        }
    }
}

FeatureMap upsample_features(const FeatureMap& f, const ModelTopology& topology, int level)
{
    if (level < 0 || level >= static_cast<int>(topology.hierarchy.levels.size())) {
        throw Error("upsample: topology has no level " + std::to_string(level));
    }
    if (f.vertex_count() != static_cast<int>(topology.level_vertices(level))) {
        throw Error("upsample: feature map has " + std::to_string(f.vertex_count()) + " vertices, level " +
                    std::to_string(level) + " has " + std::to_string(topology.level_vertices(level)));
    }
    Eigen::MatrixXd c = f.contact.cast<double>();
    Eigen::MatrixXd s = f.semantics.cast<double>();
    for (int k = level - 1; k >= 0; --k) {
        c = topology.hierarchy.up_maps[k] * c;
        s = topology.hierarchy.up_maps[k] * s;
    }
    FeatureMap out;
    out.contact = c.col(0).cast<float>();
    out.semantics = s.cast<float>();
    return out;
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Skinned {
    Skeleton::Posed posed;
    std::vector<Vec3> skeleton_space; // before the root transform
};

Skinned skin_with_delta(const BodyMesh& body, std::span<const Vec3> delta)
{
    std::vector<Vec3> angles = body.joint_angles;
    for (std::size_t j = 1; j < delta.size() && j < angles.size(); ++j) {
        angles[j] += delta[j];
    }
    Skinned s;
    s.posed = body.skeleton.forward(angles);
    s.skeleton_space = body.skeleton.skin(body.rest_vertices, angles);
    return s;
}

Mat3 hat(const Vec3& v)
{
    Mat3 m;
    m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
    return m;
}

// R(phi + d) = R(phi) * exp(J_r(phi) d) to first order.
Mat3 right_jacobian(const Vec3& phi)
{
    const double t = phi.norm();
    const Mat3 k = hat(phi);
    if (t < 1e-6) {
        return Mat3::Identity() - 0.5 * k + k * k / 6.0;
    }
    return Mat3::Identity() - (1.0 - std::cos(t)) / (t * t) * k + (t - std::sin(t)) / (t * t * t) * k * k;
}

bool has_pose(const PlacementTransform& t)
{
    return std::any_of(t.pose_delta.begin(), t.pose_delta.end(), [](const Vec3& d) { return d.squaredNorm() > 0; });
}

} // namespace

std::vector<Vec3> placed_vertices(const BodyMesh& canonical, const PlacementTransform& t)
{
    if (!has_pose(t)) {
        return apply_rigid(canonical.mesh.vertices, t.translation, t.yaw);
    }
    const Skinned s = skin_with_delta(canonical, t.pose_delta);
    std::vector<Vec3> v(s.skeleton_space.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        v[i] = canonical.root.apply(s.skeleton_space[i]);
    }
    return apply_rigid(v, t.translation, t.yaw);
}

EnergyBreakdown placement_energy(std::span<const Vec3> vertices, const FeatureMap& fgen, const PlacementScene& scene,
                                 const PlacementWeights& weights, std::span<const Vec3> pose_delta)
{
    if (fgen.vertex_count() != static_cast<int>(vertices.size())) {
        throw Error("placement energy: feature map has " + std::to_string(fgen.vertex_count()) +
                    " vertices, body has " + std::to_string(vertices.size()));
    }
    EnergyBreakdown e;
    for (std::size_t i = 0; i < vertices.size(); ++i) {
        const double d = scene.sdf.sample(vertices[i]);
        const double c = fgen.contact[static_cast<Eigen::Index>(i)];
        e.afford_contact += c * c * d * d;
        if (d < 0.0) {
            e.pen += d * d;
        }
        e.clamped += scene.sdf.contains(vertices[i]) ? 0 : 1;
    }
    if (weights.semantic > 0.0) {
        const std::vector<int> observed = extract_features(vertices, scene.mesh, scene.tree).features.labels();
        const int classes = fgen.class_count();
        for (std::size_t i = 0; i < vertices.size(); ++i) {
            const Eigen::Index r = static_cast<Eigen::Index>(i);
            const int cls = std::min(observed[i], classes - 1);
            const double q = std::clamp(static_cast<double>(fgen.semantics(r, cls)), ad::kProbEps, 1.0 - ad::kProbEps);
            e.afford_semantic += (weights.gate_semantic ? fgen.contact[r] : 1.0) * -std::log(q);
        }
    }
    for (std::size_t j = 1; j < pose_delta.size(); ++j) {
        e.reg += pose_delta[j].squaredNorm();
    }
    e.afford_contact *= weights.contact;
    e.afford_semantic *= weights.semantic;
    e.pen *= weights.pen;
    e.reg *= weights.reg;
    e.total = e.afford_contact + e.afford_semantic + e.pen + e.reg;
    return e;
}

SmoothEnergy smooth_energy(const BodyMesh& canonical, const PlacementTransform& t, const FeatureMap& fgen,
                           const SdfGrid& sdf, const PlacementWeights& weights, bool with_pose)
{
    const std::size_t n = canonical.vertex_count();
    if (fgen.vertex_count() != static_cast<int>(n)) {
        throw Error("placement energy: feature map has " + std::to_string(fgen.vertex_count()) +
                    " vertices, body has " + std::to_string(n));
    }
    const Mat3 rz = yaw_matrix(t.yaw);
    const Mat3& rroot = canonical.root.rotation;
    Skinned s;
    std::vector<Vec3> local(n); // after the root transform, before yaw and translation
    if (with_pose || has_pose(t)) {
        s = skin_with_delta(canonical, t.pose_delta);
        for (std::size_t i = 0; i < n; ++i) {
            local[i] = canonical.root.apply(s.skeleton_space[i]);
        }
    } else {
        local = canonical.mesh.vertices;
    }

    SmoothEnergy out;
    const std::size_t joints = canonical.skeleton.joint_count();
    std::vector<Vec3> spin(with_pose ? joints : 0, Vec3::Zero()), push(with_pose ? joints : 0, Vec3::Zero());
    const Vec3 up = up_vector();
    for (std::size_t i = 0; i < n; ++i) {
        const Vec3 w = rz * local[i] + t.translation;
        Vec3 g;
        const double d = sdf.sample_with_gradient(w, g);
        const double c = fgen.contact[static_cast<Eigen::Index>(i)];
        const double k = weights.contact * c * c + (d < 0.0 ? weights.pen : 0.0);
        out.value += k * d * d;
        if (k == 0.0) {
            continue;
        }
        const Vec3 e = 2.0 * k * d * g;
        out.d_translation += e;
        out.d_yaw += e.dot(up.cross(w - t.translation));
        if (with_pose) {
            // Gradient in skeleton space; joint j contributes w * (y - p_k) x g' to each ancestor k.
            const Vec3 gs = rroot.transpose() * (rz.transpose() * e);
            for (const SkinInfluence& inf : canonical.skeleton.weights[i]) {
                const Joint& jt = canonical.skeleton.joints[inf.joint];
                const Vec3 y = s.posed.rotation[inf.joint] * (canonical.rest_vertices[i] - jt.rest_position) +
                               s.posed.position[inf.joint];
                spin[inf.joint] += inf.weight * y.cross(gs);
                push[inf.joint] += inf.weight * gs;
            }
        }
    }
    if (with_pose) {
        // Subtree sums, children after parents.
        std::vector<Vec3> sub_spin = spin, sub_push = push;
        for (std::size_t j = joints; j-- > 1;) {
            const int p = canonical.skeleton.joints[j].parent;
            if (p >= 0) {
                sub_spin[p] += sub_spin[j];
                sub_push[p] += sub_push[j];
            }
        }
        out.d_pose.assign(joints, Vec3::Zero());
        for (std::size_t k = 1; k < joints; ++k) {
            const Vec3 delta = k < t.pose_delta.size() ? t.pose_delta[k] : Vec3::Zero();
            const Vec3 acc = sub_spin[k] - s.posed.position[k].cross(sub_push[k]);
            const Vec3 angle = canonical.joint_angles[k] + delta;
            out.d_pose[k] = right_jacobian(angle).transpose() * (s.posed.rotation[k].transpose() * acc) +
                            2.0 * weights.reg * delta;
            out.value += weights.reg * delta.squaredNorm();
        }
    }
    return out;
}

std::vector<PlacementResult> seed_search(const BodyMesh& canonical, const FeatureMap& fgen,
                                         const PlacementScene& scene, const PlacementWeights& weights,
                                         const SeedOptions& options)
{
    if (options.n_seeds < 1) {
        throw Error("seed search needs at least one seed");
    }
    if (!(options.z_step > 0.0)) {
        throw Error("seed search z step must be positive");
    }
    weights.validate();
    const Aabb room = scene.mesh.mesh.bounds();
    const Aabb body = canonical.mesh.bounds();
    const double z_lo = room.min.z() - body.min.z();
    // The lowest body point sweeps the scene's vertical extent.
    const double z_hi = room.max.z() - body.min.z();
    const int z_steps = static_cast<int>(std::floor((z_hi - z_lo) / options.z_step)) + 1;

    std::vector<PlacementResult> results(static_cast<std::size_t>(options.n_seeds));
    parallel_for_each(results.size(), [&](std::size_t s) {
        Rng rng(Rng::derive_seed(options.seed, "placement-seed", s));
        PlacementResult& r = results[s];
        r.seed_index = static_cast<int>(s);
        r.transform.translation = Vec3(rng.uniform(room.min.x(), room.max.x()), rng.uniform(room.min.y(), room.max.y()), 0);
        r.transform.yaw = wrap_angle(rng.uniform(-std::numbers::pi, std::numbers::pi));
        const std::vector<Vec3> base = placed_vertices(canonical, r.transform);
        auto energy_at = [&](double z, double bound) {
            double e = 0.0;
            for (std::size_t i = 0; i < base.size() && e < bound; ++i) {
                const double d = scene.sdf.sample(base[i] + Vec3(0, 0, z));
                const double c = fgen.contact[static_cast<Eigen::Index>(i)];
                e += (weights.contact * c * c + (d < 0 ? weights.pen : 0.0)) * d * d;
            }
            return e;
        };
        double best = std::numeric_limits<double>::infinity();
        double best_z = z_lo;
        for (int k = 0; k < z_steps; ++k) {
            const double z = z_lo + k * options.z_step;
            const double e = energy_at(z, best);
            if (e < best) {
                best = e;
                best_z = z;
            }
        }
        // The grid is aligned with the floor, so the coarse minimum often rests
        // exactly on a surface; polish it within one step.
        constexpr double inv_phi = 0.6180339887498949;
        double a = best_z - options.z_step, b = best_z + options.z_step;
        double x1 = b - inv_phi * (b - a), x2 = a + inv_phi * (b - a);
        double f1 = energy_at(x1, kInf), f2 = energy_at(x2, kInf);
        for (int k = 0; k < 30; ++k) {
            if (f1 < f2) {
                b = x2, x2 = x1, f2 = f1;
                x1 = b - inv_phi * (b - a), f1 = energy_at(x1, kInf);
            } else {
                a = x1, x1 = x2, f1 = f2;
                x2 = a + inv_phi * (b - a), f2 = energy_at(x2, kInf);
            }
        }
        const double polished = f1 < f2 ? x1 : x2;
        if (std::min(f1, f2) < best) {
            best_z = polished;
        }
        r.transform.translation.z() = best_z;
        r.energy = placement_energy(placed_vertices(canonical, r.transform), fgen, scene, weights);
    });
    std::stable_sort(results.begin(), results.end(), [](const PlacementResult& a, const PlacementResult& b) {
        return a.energy.total < b.energy.total;
    });
    if (!std::isfinite(results.front().energy.total)) {
        throw Error("seed search found no seed with finite energy");
    }
    return results;
}

PlacementResult refine(const BodyMesh& canonical, const FeatureMap& fgen, const PlacementScene& scene,
                       const PlacementWeights& weights, const PlacementTransform& init, RefineMode mode,
                       const RefineOptions& options)
{
    weights.validate();
    if (!init.translation.allFinite() || !std::isfinite(init.yaw)) {
        throw Error("refine: initial transform is not finite");
    }
    const bool full = mode == RefineMode::Full;
    const std::size_t joints = canonical.skeleton.joint_count();
    if (full && joints == 0) {
        throw Error("refine: full mode needs a skinned body");
    }
    PlacementTransform cur = init;
    cur.yaw = wrap_angle(cur.yaw);
    if (full) {
        cur.pose_delta.resize(joints, Vec3::Zero());
    }
    const EnergyBreakdown init_energy =
        placement_energy(placed_vertices(canonical, init), fgen, scene, weights, init.pose_delta);

    using M = ad::Matrix<double>;
    M tau(1, 3), yaw(1, 1), pose(static_cast<Eigen::Index>(full ? joints : 0), 3);
    tau.row(0) = cur.translation.transpose();
    yaw(0, 0) = cur.yaw;
    for (std::size_t j = 0; j < (full ? joints : 0); ++j) {
        pose.row(static_cast<Eigen::Index>(j)) = cur.pose_delta[j].transpose();
    }
    ad::AdamState<double> a_tau(options.lr_translation), a_yaw(options.lr_yaw), a_pose(options.lr_pose);

    // The semantic term is piecewise constant in the transform, so it takes no
    // part in the descent direction; iterates are ranked by the full energy.
    PlacementResult result;
    PlacementTransform best = init;
    best.yaw = wrap_angle(best.yaw);
    EnergyBreakdown best_energy = init_energy;
    double best_value = init_energy.total;
    double window_start = best_value;
    bool diverged = false, cancelled = false, converged = false;
    auto consider = [&](const PlacementTransform& t) {
        const EnergyBreakdown e = placement_energy(placed_vertices(canonical, t), fgen, scene, weights, t.pose_delta);
        if (e.total < best_value) {
            best_value = e.total;
            best_energy = e;
            best = t;
        }
    };
    for (int it = 0; it < options.iterations; ++it) {
        if (options.cancel && options.cancel->load()) {
            cancelled = true;
            break;
        }
        const SmoothEnergy se = smooth_energy(canonical, cur, fgen, scene.sdf, weights, full);
        if (!std::isfinite(se.value) || se.value > 1e12) {
            diverged = true;
            break;
        }
        if (it > 0) {
            consider(cur);
        }
        result.trace.push_back(best_value);
        if (options.on_iteration) {
            options.on_iteration(it, best_value);
        }
        if (it % options.patience == 0) {
            if (it > 0 && window_start - best_value <= options.tolerance * std::max(1.0, std::abs(best_value))) {
                converged = true;
                break;
            }
            window_start = best_value;
        }
        // Step sizes shrink so the iterate settles instead of orbiting the minimum.
        const double decay = 1.0 / (1.0 + it / 50.0);
        a_tau.lr = options.lr_translation * decay;
        a_yaw.lr = options.lr_yaw * decay;
        a_pose.lr = options.lr_pose * decay;
        a_tau.update({&tau}, {M(se.d_translation.transpose())});
        a_yaw.update({&yaw}, {M::Constant(1, 1, se.d_yaw)});
        cur.translation = tau.row(0).transpose();
        cur.yaw = wrap_angle(yaw(0, 0));
        if (full) {
            M g(static_cast<Eigen::Index>(joints), 3);
            for (std::size_t j = 0; j < joints; ++j) {
                g.row(static_cast<Eigen::Index>(j)) = se.d_pose[j].transpose();
            }
            g.row(0).setZero();
            a_pose.update({&pose}, {g});
            for (std::size_t j = 1; j < joints; ++j) {
                Vec3 d = pose.row(static_cast<Eigen::Index>(j)).transpose();
                if (d.norm() > options.pose_cap) {
                    d *= options.pose_cap / d.norm();
                    pose.row(static_cast<Eigen::Index>(j)) = d.transpose();
                }
                cur.pose_delta[j] = d;
            }
        }
    }
    if (!diverged && !cancelled && !converged) {
        consider(cur);
        converged = true;
    }
    result.transform = best;
    result.energy = best_energy;
    result.converged = converged && !diverged && !cancelled;
    return result;
}

PlaceOutput place_with_maps(const BodyMesh& canonical, const std::vector<FeatureMap>& maps,
                            const PlacementScene& scene, const PlacementWeights& weights, const PlaceOptions& options)
{
    if (maps.empty()) {
        throw Error("place: no feature maps");
    }
    if (options.refine_top < 1) {
        throw Error("place: refine_top must be at least 1");
    }
    struct Task {
        int sample;
        PlacementResult seed;
    };
    std::vector<Task> tasks;
    for (std::size_t m = 0; m < maps.size() && options.init; ++m) {
        PlacementResult r;
        r.transform = *options.init;
        r.seed_index = -1;
        tasks.push_back({static_cast<int>(m), std::move(r)});
    }
    for (std::size_t m = 0; m < maps.size() && !options.init; ++m) {
        SeedOptions so;
        so.n_seeds = options.n_seeds;
        so.seed = Rng::derive_seed(options.seed, "seeds", m);
        const auto seeds = seed_search(canonical, maps[m], scene, weights, so);
        for (int k = 0; k < std::min<int>(options.refine_top, static_cast<int>(seeds.size())); ++k) {
            tasks.push_back({static_cast<int>(m), seeds[static_cast<std::size_t>(k)]});
        }
    }
    std::vector<PlacementResult> results(tasks.size());
    parallel_for_each(tasks.size(), [&](std::size_t i) {
        results[i] = refine(canonical, maps[static_cast<std::size_t>(tasks[i].sample)], scene, weights,
                            tasks[i].seed.transform, options.mode, options.refine);
        results[i].sample_index = tasks[i].sample;
        results[i].seed_index = tasks[i].seed.seed_index;
    });
    std::stable_sort(results.begin(), results.end(), [](const PlacementResult& a, const PlacementResult& b) {
        return a.energy.total < b.energy.total;
    });
    PlaceOutput out;
    out.refinements = static_cast<int>(results.size());
    out.best = results.front();
    out.alternatives = std::move(results);
    return out;
}

PlaceOutput place(const Checkpoint& ckpt, const BodyMesh& body, const PlacementScene& scene,
                  const PlacementWeights& weights, const PlaceOptions& options)
{
    if (options.n_samples < 1) {
        throw Error("place: n_samples must be at least 1");
    }
    const BodyMesh canonical = canonicalize(body);
    std::vector<FeatureMap> maps = sample(ckpt, canonical, options.n_samples, Rng::derive_seed(options.seed, "fmap"));
    for (FeatureMap& m : maps) {
        m = upsample_features(m, *ckpt.topology, ckpt.config.feature_level);
    }
    return place_with_maps(canonical, maps, scene, weights, options);
}

namespace {

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

json transform_to(const PlacementTransform& t)
{
    json j{{"translation", vec_json(t.translation)}, {"yaw", t.yaw}};
    json pose = json::array();
    for (const Vec3& d : t.pose_delta) {
        pose.push_back(vec_json(d));
    }
    j["pose_delta"] = pose;
    return j;
}

json result_json(const PlacementResult& r)
{
    return {{"transform", transform_to(r.transform)},
            {"energies",
             {{"afford_contact", r.energy.afford_contact},
              {"afford_semantic", r.energy.afford_semantic},
              {"pen", r.energy.pen},
              {"reg", r.energy.reg},
              {"total", r.energy.total},
              {"clamped", r.energy.clamped}}},
            {"converged", r.converged},
            {"iterations", r.trace.size()},
            {"sample", r.sample_index},
            {"seed", r.seed_index}};
}

} // namespace

std::string placement_json(const PlaceOutput& out)
{
    json j = result_json(out.best);
    json alt = json::array();
    for (const PlacementResult& r : out.alternatives) {
        alt.push_back(result_json(r));
    }
    j["alternatives"] = alt;
    j["refinements"] = out.refinements;
    return j.dump(2);
}

std::string transform_json(const PlacementTransform& t) { return transform_to(t).dump(); }

PlacementTransform transform_from_json(const std::string& text)
{
    try {
        json j = json::parse(text);
        if (j.contains("transform")) {
            j = j["transform"];
        }
        PlacementTransform t;
        const auto tr = j.at("translation").get<std::vector<double>>();
        if (tr.size() != 3) {
            throw Error("transform translation must have 3 components");
        }
        t.translation = Vec3(tr[0], tr[1], tr[2]);
        t.yaw = wrap_angle(j.at("yaw").get<double>());
        if (j.contains("pose_delta")) {
            for (const auto& d : j["pose_delta"]) {
                const auto v = d.get<std::vector<double>>();
                if (v.size() != 3) {
                    throw Error("pose delta entries must have 3 components");
                }
                t.pose_delta.emplace_back(v[0], v[1], v[2]);
            }
        }
        if (!t.translation.allFinite() || !std::isfinite(t.yaw)) {
            throw Error("transform is not finite");
        }
        return t;
    } catch (const json::exception& e) {
        throw Error(std::string("malformed transform: ") + e.what());
    }
}

} // namespace hsi
