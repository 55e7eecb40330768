// Acceptance run: one PASS/FAIL line per criterion.
//
//   acceptance [name...]     run only the named criteria
//
// The semantic-sampling and placement criteria need a model trained on at
// least 5000 frames. It is read from $ACCEPTANCE_DIR/model.ckpt (trained on
// $ACCEPTANCE_DIR/data/dataset.posa) and trained there first when missing.

#include "hsi/bvh.hpp"
#include "hsi/cvae.hpp"
#include "hsi/humanoid.hpp"
#include "hsi/interaction.hpp"
#include "hsi/metrics.hpp"
#include "hsi/parallel.hpp"
#include "hsi/placement.hpp"
#include "hsi/primitives.hpp"
#include "hsi/sdf.hpp"
#include "hsi/synthgen.hpp"
#include "gradcheck.hpp"
#include "test_support.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <optional>

using namespace hsi;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

class Clock {
public:
    double seconds() const
    {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

fs::path work_dir()
{
    if (const char* d = std::getenv("ACCEPTANCE_DIR")) {
        return d;
    }
    return HSI_ACCEPTANCE_DIR;
}

std::string read_file(const fs::path& p)
{
    std::ifstream f(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

// Restores the worker cap on scope exit.
struct ThreadCap {
    int saved = thread_count();
    explicit ThreadCap(int n) { set_thread_count(n); }
    ~ThreadCap() { set_thread_count(saved); }
};

// ---- sdf ---------------------------------------------------------------------

double box_distance(const Vec3& p, const Vec3& half)
{
    const Vec3 q = p.cwiseAbs() - half;
    return q.cwiseMax(0.0).norm() + std::min(q.maxCoeff(), 0.0);
}

Outcome sdf_correctness()
{
    struct Case {
        std::string name;
        TriMesh mesh;
        std::function<double(const Vec3&)> exact;
    };
    const std::vector<Case> cases = {
        {"sphere", make_icosphere(4), [](const Vec3& p) { return p.norm() - 1.0; }},
        {"box", make_box(Vec3(-0.6, -0.4, -0.3), Vec3(0.6, 0.4, 0.3)),
         [](const Vec3& p) { return box_distance(p, Vec3(0.6, 0.4, 0.3)); }},
    };
    bool ok = true;
    std::string detail;
    for (const Case& c : cases) {
        for (int res : {64, 128}) {
            Clock clock;
            const SdfGrid g = build_sdf(c.mesh, SdfBuildOptions{res});
            const double build_s = clock.seconds();
            Rng rng(Rng::derive_seed(7, c.name, static_cast<std::uint64_t>(res)));
            const Aabb box = g.interior();
            double worst_value = 0.0, worst_grad = 0.0;
            for (int n = 0; n < 2000; ++n) {
                const Vec3 p(rng.uniform(box.min.x(), box.max.x()), rng.uniform(box.min.y(), box.max.y()),
                             rng.uniform(box.min.z(), box.max.z()));
                worst_value = std::max(worst_value, std::abs(g.sample(p) - c.exact(p)) / g.cell_size);
            }
            // Gradients at points at least a tenth of a cell from every cell face.
            const double h = g.cell_size / 100.0;
            for (int n = 0; n < 1000; ++n) {
                Vec3 p;
                for (int a = 0; a < 3; ++a) {
                    const double u = rng.uniform(box.min[a], box.max[a] - g.cell_size);
                    const double cell = std::floor((u - box.min[a]) / g.cell_size);
                    p[a] = box.min[a] + (cell + rng.uniform(0.1, 0.9)) * g.cell_size;
                }
                const Vec3 grad = g.sample_gradient(p).value;
                Vec3 fd;
                for (int a = 0; a < 3; ++a) {
                    Vec3 e = Vec3::Zero();
                    e[a] = h;
                    fd[a] = (g.sample(p + e) - g.sample(p - e)) / (2 * h);
                }
                worst_grad = std::max(worst_grad, (grad - fd).norm() / std::max(fd.norm(), 1e-3));
            }
            ok = ok && worst_value <= 2.0 && worst_grad < 1e-4 && build_s < 30.0;
            detail += fmt::format("{}@{}: err {:.2f} cells, grad rel {:.1e}, build {:.1f}s; ", c.name, res,
                                  worst_value, worst_grad, build_s);
        }
    }
    return {ok, detail};
}

// ---- proximity ---------------------------------------------------------------

Outcome proximity_oracle()
{
    Rng rng(11);
    double worst = 0.0;
    int mismatched = 0;
    for (int m = 0; m < 20; ++m) {
        const int faces = 50 + static_cast<int>(rng.below(451));
        const TriMesh mesh = test::random_mesh(rng, faces / 2 + 3, faces);
        const ProximityTree tree(mesh);
        for (int q = 0; q < 500; ++q) {
            const Vec3 p(rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5));
            const auto got = tree.closest_point(p);
            const auto want = test::brute_closest(mesh, p);
            const double err = std::abs(got.distance - want.distance);
            worst = std::max(worst, err);
            // The returned point must sit on the returned face at the returned distance.
            const auto& f = mesh.faces[static_cast<std::size_t>(got.face_index)];
            const Vec3 on = test::triangle_closest(p, mesh.vertices[f[0]], mesh.vertices[f[1]], mesh.vertices[f[2]]);
            if (err > 1e-9 || (on - got.point).norm() > 1e-9 || std::abs((got.point - p).norm() - got.distance) > 1e-9) {
                ++mismatched;
            }
        }
    }
    return {mismatched == 0, fmt::format("20 meshes x 500 queries, {} mismatches, max |d - d_exhaustive| {:.1e}",
                                         mismatched, worst)};
}

// ---- features ----------------------------------------------------------------

SceneMesh labeled_plane(int label)
{
    SceneMesh s;
    s.mesh.vertices = {{-5, -5, 0}, {5, -5, 0}, {5, 5, 0}, {-5, 5, 0}};
    s.mesh.faces = {{0, 1, 2}, {0, 2, 3}};
    s.labels.assign(4, label);
    s.class_names = default_class_names();
    return s;
}

Outcome feature_extraction()
{
    bool ok = true;
    std::string detail;
    {
        const SceneMesh plane = labeled_plane(kSofa);
        const ProximityTree tree(plane.mesh);
        const std::vector<Vec3> v{{0, 0, 0.0}, {0, 0, 0.03}, {0.5, 0.5, 0.05}, {1, 1, 0.0500001}, {1, 1, -0.05},
                                  {2, 2, 0.2}};
        const auto ex = extract_features(v, plane, tree);
        const std::vector<float> want_contact{1, 1, 1, 0, 1, 0};
        const int s = feature_class(kSofa);
        const std::vector<int> want_labels{s, s, s, kVoidClass, s, kVoidClass};
        bool thr = ex.features.labels() == want_labels;
        for (std::size_t i = 0; i < v.size(); ++i) {
            thr = thr && ex.features.contact[static_cast<Eigen::Index>(i)] == want_contact[i];
            thr = thr && ex.features.semantics.row(static_cast<Eigen::Index>(i)).sum() == 1.0f;
        }
        ok = ok && thr;
        detail += fmt::format("threshold cases {}; ", thr ? "exact" : "WRONG");
    }
    Rng rng(31);
    int agree = 0;
    for (int frame = 0; frame < 50; ++frame) {
        SceneMesh scene;
        scene.class_names = default_class_names();
        for (int f = 0; f < 80; ++f) {
            const int label = static_cast<int>(rng.below(8));
            for (int k = 0; k < 3; ++k) {
                scene.mesh.vertices.emplace_back(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
                scene.labels.push_back(label);
            }
            scene.mesh.faces.push_back({3 * f, 3 * f + 1, 3 * f + 2});
        }
        std::vector<Vec3> body;
        for (int i = 0; i < 200; ++i) {
            body.emplace_back(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
        }
        const Vec3 axis = Vec3(rng.normal(), rng.normal(), rng.normal()).normalized();
        const Mat3 r = Eigen::AngleAxisd(rng.uniform(-3, 3), axis).toRotationMatrix();
        const Vec3 t(rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5));
        SceneMesh moved = scene;
        for (Vec3& p : moved.mesh.vertices) {
            p = r * p + t;
        }
        std::vector<Vec3> moved_body;
        for (const Vec3& p : body) {
            moved_body.push_back(r * p + t);
        }
        const auto a = extract_features(body, scene, ProximityTree(scene.mesh), 0.15);
        const auto b = extract_features(moved_body, moved, ProximityTree(moved.mesh), 0.15);
        agree += (a.features.contact == b.features.contact && a.features.semantics == b.features.semantics) ? 1 : 0;
    }
    ok = ok && agree == 50;
    detail += fmt::format("co-transform invariance {}/50 frames", agree);
    return {ok, detail};
}

// ---- autodiff ----------------------------------------------------------------

Outcome autodiff_checks()
{
    double worst_op = 0.0;
    std::string worst_name;
    for (std::uint64_t seed : {3u, 4u, 5u}) {
        for (const auto& c : test::operation_cases(seed)) {
            const double e = test::gradient_error(c.graph, c.inputs);
            if (e > worst_op) {
                worst_op = e;
                worst_name = c.name;
            }
        }
    }
    double worst_net = 0.0;
    std::string worst_param;
    for (const auto& [name, rel] : test::cvae_gradient_errors()) {
        if (rel > worst_net) {
            worst_net = rel;
            worst_param = name;
        }
    }
    return {worst_op < 1e-6 && worst_net < 1e-4,
            fmt::format("ops: worst rel err {:.1e} ({}); tiny cVAE (40 vertices, latent 4): worst {:.1e} ({})",
                        worst_op, worst_name, worst_net, worst_param)};
}

// ---- losses ------------------------------------------------------------------

Outcome loss_values()
{
    using test::Md;
    ModelConfig cfg = test::tiny_config();
    cfg.class_count = 2;
    cfg.alpha = 0.1;
    cfg.lambda_c = 0.7;
    cfg.lambda_s = 1.3;
    CvaeNet<double> net(cfg, humanoid_topology());
    ad::Tape<double> tape;
    Md p(2, 1), q(2, 2), mu(1, 2), lv(1, 2), tc(2, 1), ts(2, 2);
    p << 0.8, 0.3;
    tc << 1, 0;
    q << 0.6, 0.4, 0.25, 0.75;
    ts << 0, 1, 1, 0;
    mu << 0.5, -1.0;
    lv << 0.2, -0.3;
    const auto l = net.loss(tape, tape.constant(p), tape.constant(q), tc, ts, tape.constant(mu), tape.constant(lv), 1);
    const double kl = 0.5 * (0.25 + std::exp(0.2) - 1 - 0.2) + 0.5 * (1.0 + std::exp(-0.3) - 1 + 0.3);
    const double rec = 0.7 * (-std::log(0.8) - std::log(0.7)) + 1.3 * (-std::log(0.4) - std::log(0.25));
    const double total = 0.1 * kl + rec;
    const double err = std::max({std::abs(tape.scalar(l.kl) - kl), std::abs(tape.scalar(l.rec) - rec),
                                 std::abs(tape.scalar(l.total) - total)});
    const ad::Var zero = tape.constant(Md::Zero(1, 4));
    const double kl0 = tape.scalar(tape.kl_normal(zero, zero));
    const double bce = tape.scalar(tape.bce(tape.constant(Md::Constant(1, 1, 0.5)), Md::Ones(1, 1)));
    const double bce_err = std::abs(bce - std::numbers::ln2);
    return {err <= 1e-10 && kl0 == 0.0 && bce_err <= 1e-9,
            fmt::format("2-vertex case max err {:.1e}; KL(0,0) = {}; |bce(0.5,1) - ln 2| = {:.1e}", err, kl0, bce_err)};
}

// ---- training ----------------------------------------------------------------

Outcome training()
{
    ThreadCap cap(1);
    const InteractionDataset ds = generate_frames(32, 1, 42).dataset;
    TrainOptions o;
    o.epochs = 2000;
    o.batch_size = 32;
    o.val_fraction = 0.0;
    o.seed = 42;
    o.max_steps = 2000;
    o.target_accuracy = 0.98;
    o.accuracy_every = 25;
    Clock clock;
    const Checkpoint ckpt = train(ds, ModelConfig{}, humanoid_topology(), o);
    const double minutes = clock.seconds() / 60.0;
    const double acc = contact_accuracy(ckpt, ds, test::iota(static_cast<int>(ds.frames.size())));

    TrainOptions r;
    r.epochs = 3;
    r.batch_size = 8;
    r.val_fraction = 0.0;
    r.seed = 9;
    const auto small = generate_frames(24, 1, 7).dataset;
    ModelConfig c;
    c.latent_dim = 16;
    c.conv_width = 16;
    c.fc_width = 32;
    const auto a = train(small, c, humanoid_topology(), r).meta.loss_curve;
    const auto b = train(small, c, humanoid_topology(), r).meta.loss_curve;
    const bool same = !a.empty() && a == b;
    return {acc >= 0.98 && ckpt.meta.steps <= 2000 && minutes < 10.0 && same,
            fmt::format("32-frame overfit: accuracy {:.4f} after {} steps, {:.1f} min single-threaded; repeated seed "
                        "loss curves {}",
                        acc, ckpt.meta.steps, minutes, same ? "identical" : "DIFFER")};
}

// ---- trained model ---------------------------------------------------------------

struct TrainedModel {
    Checkpoint ckpt;
    std::size_t frames = 0;
    double train_minutes = -1.0; // negative when loaded from disk
};

const TrainedModel& trained_model()
{
    static const TrainedModel model = [] {
        const fs::path dir = work_dir();
        const fs::path ckpt_path = dir / "model.ckpt";
        const fs::path data_path = dir / "data" / "dataset.posa";
        TrainedModel m;
        if (fs::exists(ckpt_path) && fs::exists(data_path)) {
            m.ckpt = load_checkpoint(ckpt_path);
            m.frames = read_dataset(data_path).frames.size();
            return m;
        }
        std::cout << "training the semantic model in " << dir.string() << " (about an hour on one core)" << std::endl;
        Clock clock;
        const GeneratedData gd = generate_frames(5050, 8, 42);
        fs::create_directories(dir / "data");
        write_dataset(data_path, gd.dataset);
        TrainOptions o;
        o.epochs = 40;
        o.batch_size = 64;
        o.seed = 42;
        m.ckpt = train(gd.dataset, ModelConfig{}, humanoid_topology(), o);
        save_checkpoint(ckpt_path, m.ckpt);
        m.frames = gd.dataset.frames.size();
        m.train_minutes = clock.seconds() / 60.0;
        return m;
    }();
    return model;
}

// Fraction of the region's feature vertices predicted in contact with one of `classes`.
double region_agreement(const FeatureMap& f, const std::vector<int>& region, std::initializer_list<int> classes)
{
    const auto labels = f.labels();
    int hit = 0;
    for (int v : region) {
        const bool label_ok =
            std::any_of(classes.begin(), classes.end(), [&](int c) { return labels[static_cast<std::size_t>(v)] == feature_class(c); });
        hit += (f.contact[v] > 0.5f && label_ok) ? 1 : 0;
    }
    return static_cast<double>(hit) / static_cast<double>(region.size());
}

Outcome sampling_semantics()
{
    const TrainedModel& m = trained_model();
    int stand_ok = 0, lie_ok = 0;
    for (int i = 0; i < 100; ++i) {
        const BodyMesh stand = generate_body("stand", static_cast<std::uint64_t>(1000 + i), 0.05);
        const FeatureMap fs = sample(m.ckpt, stand, 1, static_cast<std::uint64_t>(i)).front();
        stand_ok += region_agreement(fs, to_feature_level(region_vertices(stand, Region::Soles)), {kFloor}) > 0.5;
        const BodyMesh lie = generate_body("lie", static_cast<std::uint64_t>(2000 + i), 0.05);
        const FeatureMap fl = sample(m.ckpt, lie, 1, static_cast<std::uint64_t>(i)).front();
        lie_ok += region_agreement(fl, to_feature_level(region_vertices(lie, Region::Back)), {kBed, kSofa}) > 0.5;
    }
    std::string budget = m.train_minutes < 0 ? "model loaded" : fmt::format("trained in {:.0f} min", m.train_minutes);
    return {m.frames >= 5000 && stand_ok >= 80 && lie_ok >= 60 && m.train_minutes < 120.0,
            fmt::format("{} frames, {}; standing soles on floor {}/100, lying back on bed/sofa {}/100", m.frames,
                        budget, stand_ok, lie_ok)};
}

// ---- placement ---------------------------------------------------------------

struct PlacementRun {
    std::vector<std::vector<PlacementTransform>> transforms; // per scene
    PlausibilityReport report;
    double minutes = 0.0;
    int threads = 1;
};

const PlacementRun& placement_run()
{
    static const PlacementRun run = [] {
        const TrainedModel& m = trained_model();
        PlacementRun r;
        r.threads = thread_count();
        Clock clock;
        std::vector<std::vector<Vec3>> bodies;
        std::vector<double> nc;
        std::vector<int> contact;
        for (int s = 0; s < 4; ++s) {
            // Rooms never used for training: their seeds come from a separate stream.
            const SceneMesh scene = generate_scene(Rng::derive_seed(42, "held-out-scene", static_cast<std::uint64_t>(s)));
            const SdfGrid sdf = build_sdf(scene, SdfBuildOptions{128});
            const ProximityTree tree(scene.mesh);
            const PlacementScene view{scene, sdf, tree};
            r.transforms.emplace_back();
            std::vector<std::vector<Vec3>> placed;
            for (int i = 0; i < 50; ++i) {
                const std::string& pose = pose_names()[static_cast<std::size_t>(i) % pose_names().size()];
                const auto seed = static_cast<std::uint64_t>(s * 50 + i);
                const BodyMesh body = generate_body(pose, seed, 0.05);
                PlaceOptions o;
                o.seed = seed;
                const PlaceOutput out = place(m.ckpt, body, view, PlacementWeights{}, o);
                placed.push_back(placed_vertices(canonicalize(body), out.best.transform));
                r.transforms.back().push_back(out.best.transform);
            }
            const PlausibilityReport p = plausibility(placed, sdf);
            nc.insert(nc.end(), p.non_collision.begin(), p.non_collision.end());
            contact.insert(contact.end(), p.contact.begin(), p.contact.end());
            spdlog::info("held-out scene {}: non-collision {:.4f}, contact {:.3f}", s, p.non_collision_mean,
                         p.contact_mean);
        }
        r.report.non_collision = nc;
        r.report.contact = contact;
        for (std::size_t i = 0; i < nc.size(); ++i) {
            r.report.non_collision_mean += nc[i] / static_cast<double>(nc.size());
            r.report.contact_mean += contact[i] / static_cast<double>(nc.size());
        }
        r.minutes = clock.seconds() / 60.0;
        return r;
    }();
    return run;
}

Outcome placement_plausibility()
{
    const PlacementRun& r = placement_run();
    return {r.report.non_collision.size() == 200 && r.report.non_collision_mean >= 0.95 &&
                r.report.contact_mean >= 0.95 && r.minutes < 30.0,
            fmt::format("{} placements over 4 held-out scenes: non-collision {:.4f}, contact {:.4f}, {:.1f} min on {} "
                        "thread(s)",
                        r.report.non_collision.size(), r.report.non_collision_mean, r.report.contact_mean, r.minutes,
                        r.threads)};
}

// ---- refinement --------------------------------------------------------------

SceneMesh floor_slab()
{
    SceneMesh s;
    s.class_names = default_class_names();
    s.mesh = make_box(Vec3(-2, -2, -0.5), Vec3(2, 2, 0));
    s.labels.assign(s.mesh.vertex_count(), kFloor);
    return s;
}

Outcome refinement_oracle()
{
    const SceneMesh slab = floor_slab();
    const SdfGrid sdf = build_sdf(slab, SdfBuildOptions{96});
    const ProximityTree tree(slab.mesh);
    const PlacementScene view{slab, sdf, tree};
    const BodyMesh body = generate_body("stand");
    const FeatureMap f = extract_features(placed_vertices(body, PlacementTransform{}), slab, tree).features;
    const PlacementWeights w;
    PlacementTransform init;
    init.translation = Vec3(0.1, 0.1, 0.05);
    const auto r = refine(body, f, view, w, init, RefineMode::FixedPose, RefineOptions{});
    double best_z = 0, best_e = 1e300;
    for (int k = -400; k <= 400; ++k) {
        PlacementTransform t = r.transform;
        t.translation.z() = k * 5e-4;
        const double e = smooth_energy(body, t, f, sdf, w, false).value;
        if (e < best_e) {
            best_e = e;
            best_z = t.translation.z();
        }
    }
    const double dz = std::abs(r.transform.translation.z() - best_z);
    bool never_worse = r.energy.total <= placement_energy(placed_vertices(body, init), f, view, w).total;

    // Seeds on a furnished room, both refinement modes.
    const SceneMesh room = generate_scene(8);
    const SdfGrid room_sdf = build_sdf(room, SdfBuildOptions{128});
    const ProximityTree room_tree(room.mesh);
    const PlacementScene room_view{room, room_sdf, room_tree};
    int refined = 0;
    for (const std::string pose : {"sit", "lie", "stand"}) {
        const BodyMesh b = generate_body(pose);
        FeatureMap fm;
        fm.contact = Eigen::VectorXf::Zero(kBodyVertices);
        fm.semantics = MatrixRf::Zero(kBodyVertices, 9);
        fm.semantics.col(0).setOnes();
        const int label = pose == "sit" ? kChair : pose == "lie" ? kBed : kFloor;
        const Region region = pose == "sit" ? Region::Seat : pose == "lie" ? Region::Back : Region::Soles;
        for (int i : region_vertices(b, region)) {
            fm.contact[i] = 1;
            fm.semantics(i, 0) = 0;
            fm.semantics(i, feature_class(label)) = 1;
        }
        SeedOptions so;
        so.n_seeds = 8;
        so.seed = 3;
        for (const auto& s : seed_search(b, fm, room_view, w, so)) {
            for (RefineMode mode : {RefineMode::FixedPose, RefineMode::Full}) {
                const auto rr = refine(b, fm, room_view, w, s.transform, mode, RefineOptions{});
                never_worse = never_worse && rr.energy.total <= s.energy.total;
                ++refined;
            }
        }
    }
    return {dz <= 2 * kContactThreshold && never_worse,
            fmt::format("vertical drop lands at z {:.4f}, line-search optimum {:.4f} (|dz| {:.4f} m); {} refinements "
                        "never above their seed energy: {}",
                        r.transform.translation.z(), best_z, dz, refined + 1, never_worse ? "yes" : "NO")};
}

// ---- diversity ---------------------------------------------------------------

Outcome diversity_metric()
{
    Rng rng(5);
    Eigen::MatrixXd blobs(40, 3);
    for (int i = 0; i < 40; ++i) {
        const Vec3 c = i < 20 ? Vec3(0, 0, 0) : Vec3(5, 5, 5);
        blobs.row(i) = (c + 1e-4 * Vec3(rng.normal(), rng.normal(), rng.normal())).transpose();
    }
    const DiversityReport two = diversity(blobs, 2, 1);
    const double blob_err = std::abs(two.entropy - std::numbers::ln2);

    const PlacementRun& run = placement_run();
    bool in_range = true;
    std::string entropies;
    for (const auto& t : run.transforms) {
        const DiversityReport d = diversity(placement_parameters(t), 20, 42);
        in_range = in_range && d.entropy >= 0.0 && d.entropy <= std::log(20.0) + 1e-12;
        entropies += fmt::format("{}{:.3f} (cluster size {:.3f})", entropies.empty() ? "" : ", ", d.entropy,
                                 d.cluster_size);
    }
    return {blob_err <= 1e-6 && two.cluster_size < 1e-3 && in_range,
            fmt::format("two blobs: entropy - ln 2 = {:.1e}, cluster size {:.1e}; k=20 per held-out scene: {} (ln 20 = "
                        "{:.3f})",
                        blob_err, two.cluster_size, entropies, std::log(20.0))};
}

// ---- determinism -------------------------------------------------------------

int run_cli(const std::string& args, const fs::path& log)
{
    const std::string cmd = fmt::format("\"{}\" --seed 42 --threads 1 {} >> \"{}\" 2>&1", HSI_CLI, args, log.string());
    return std::system(cmd.c_str());
}

Outcome determinism()
{
    const fs::path root = work_dir() / "determinism";
    fs::remove_all(root);
    Clock clock;
    const std::vector<std::string> outputs = {"data/dataset.posa", "features.posa", "model.ckpt", "place/stand.json",
                                              "place/sit.json", "eval.json"};
    for (const char* run : {"a", "b"}) {
        const fs::path d = root / run;
        fs::create_directories(d / "place");
        const fs::path log = d / "log.txt";
        const std::string D = d.string();
        const std::vector<std::string> steps = {
            fmt::format("gen-data --frames 48 --scenes 2 --out \"{}/data\"", D),
            fmt::format("build-sdf --scene \"{0}/data/scenes/scene_000.ply\" --res 64 --out \"{0}/scene.sdf\"", D),
            fmt::format("extract-features --data \"{0}/data\" --out \"{0}/features.posa\"", D),
            fmt::format("train --data \"{0}/features.posa\" --out \"{0}/model.ckpt\" --epochs 2 --batch 16 "
                        "--latent-dim 16 --conv-width 16 --fc-width 32",
                        D),
            fmt::format("place --model \"{0}/model.ckpt\" --scene \"{0}/data/scenes/scene_000.ply\" --sdf "
                        "\"{0}/scene.sdf\" --pose stand --samples 2 --seeds 16 --iterations 40 --out "
                        "\"{0}/place/stand.json\"",
                        D),
            fmt::format("place --model \"{0}/model.ckpt\" --scene \"{0}/data/scenes/scene_000.ply\" --sdf "
                        "\"{0}/scene.sdf\" --pose sit --samples 2 --seeds 16 --iterations 40 --mode full --out "
                        "\"{0}/place/sit.json\"",
                        D),
            fmt::format("eval --placements \"{0}/place\" --sdf \"{0}/scene.sdf\" --k 2 --out \"{0}/eval.json\"", D),
        };
        for (const std::string& s : steps) {
            if (run_cli(s, log) != 0) {
                return {false, fmt::format("`hsi {}` failed, see {}", s.substr(0, s.find(' ')), log.string())};
            }
        }
    }
    std::string differing;
    for (const std::string& o : outputs) {
        const std::string a = read_file(root / "a" / o);
        if (a.empty() || a != read_file(root / "b" / o)) {
            differing += " " + o;
        }
    }
    const bool same_ply = read_file(root / "a/data/scenes/scene_000.ply") == read_file(root / "b/data/scenes/scene_000.ply");
    return {differing.empty() && same_ply,
            differing.empty() ? fmt::format("two CLI runs byte-identical: dataset, features, checkpoint, 2 placements, "
                                            "eval report ({:.1f} min)",
                                            clock.seconds() / 60.0)
                              : "outputs differ:" + differing};
}

} // namespace

int main(int argc, char** argv)
{
    spdlog::set_level(spdlog::level::warn);
    if (const char* level = std::getenv("HSI_LOG")) {
        spdlog::set_level(spdlog::level::from_str(level));
    }
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"sdf", sdf_correctness},
        {"proximity", proximity_oracle},
        {"features", feature_extraction},
        {"autodiff", autodiff_checks},
        {"losses", loss_values},
        {"training", training},
        {"sampling", sampling_semantics},
        {"placement", placement_plausibility},
        {"refinement", refinement_oracle},
        {"diversity", diversity_metric},
        {"determinism", determinism},
    };
    const std::vector<std::string> only(argv + 1, argv + argc);
    int failed = 0;
    for (const auto& [name, run] : criteria) {
        if (!only.empty() && std::find(only.begin(), only.end(), name) == only.end()) {
            continue;
        }
        Outcome o;
        Clock clock;
        try {
            o = run();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        failed += o.pass ? 0 : 1;
        std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << fmt::format(" [{:.1f}s]", clock.seconds())
                  << std::endl;
    }
    return failed == 0 ? 0 : 1;
}
