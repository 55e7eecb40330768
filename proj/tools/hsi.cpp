// hsi: command-line front end for data generation, training, sampling,
// placement, evaluation and the local service.

#include "hsi/cvae.hpp"
#include "hsi/humanoid.hpp"
#include "hsi/log.hpp"
#include "hsi/mesh_io.hpp"
#include "hsi/metrics.hpp"
#include "hsi/parallel.hpp"
#include "hsi/placement.hpp"
#include "hsi/service.hpp"
#include "hsi/synthgen.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include <chrono>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <thread>

#include <pthread.h>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace hsi;

namespace {

struct Globals {
    std::uint64_t seed = 42;
    int threads = 0;
    std::string up_axis = "z";
    bool json = false;
    std::string log_level;
};

// Files use the chosen up axis; the engine works with z up.
struct UpAxis {
    bool y_up = false;
    Vec3 in(const Vec3& v) const { return y_up ? Vec3(v.x(), -v.z(), v.y()) : v; }
    Vec3 out(const Vec3& v) const { return y_up ? Vec3(v.x(), v.z(), -v.y()) : v; }
    void in(TriMesh& m) const
    {
        for (auto& v : m.vertices) {
            v = in(v);
        }
        for (auto& n : m.normals) {
            n = in(n);
        }
    }
    TriMesh out(TriMesh m) const
    {
        for (auto& v : m.vertices) {
            v = out(v);
        }
        for (auto& n : m.normals) {
            n = out(n);
        }
        return m;
    }
};

std::string read_text(const fs::path& p)
{
    std::ifstream f(p, std::ios::binary);
    if (!f) {
        throw Error("cannot open " + p.string());
    }
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void write_text(const fs::path& p, const std::string& text)
{
    if (p.has_parent_path()) {
        fs::create_directories(p.parent_path());
    }
    std::ofstream f(p, std::ios::binary);
    f << text;
    if (!f) {
        throw Error("cannot write " + p.string());
    }
}

void emit(const Globals& g, const json& summary)
{
    if (g.json) {
        std::cout << summary.dump(2) << "\n";
    } else {
        for (const auto& [k, v] : summary.items()) {
            std::cout << k << ": " << (v.is_string() ? v.get<std::string>() : v.dump()) << "\n";
        }
    }
}

SceneMesh load_scene_file(const fs::path& p, const UpAxis& axis)
{
    SceneMesh s = load_scene(p);
    axis.in(s.mesh);
    return s;
}

struct BodyFlags {
    std::string pose = "stand";
    double jitter = 0.0;
    std::uint64_t jitter_seed = 0;

    void add(CLI::App* app)
    {
        app->add_option("--pose", pose, "Body pose from the library")
            ->check(CLI::IsMember(pose_names()))
            ->capture_default_str();
        app->add_option("--jitter", jitter, "Per-joint pose noise in radians")->capture_default_str();
        app->add_option("--jitter-seed", jitter_seed, "Seed of the pose noise")->capture_default_str();
    }
    BodyMesh body() const { return generate_body(pose, jitter_seed, jitter); }
};

void log_config(const CLI::App& app, const CLI::App& sub)
{
    std::string text = app.config_to_str(true, false);
    text += sub.config_to_str(true, false);
    spdlog::info("{} config:\n{}", sub.get_name(), text);
}

// ---------------------------------------------------------------- gen-data

struct GenData {
    int frames = 5000;
    int scenes = 8;
    double jitter = 0.05;
    fs::path out;

    void add(CLI::App* app)
    {
        app->add_option("--frames", frames, "Interaction frames to generate")->check(CLI::PositiveNumber)->capture_default_str();
        app->add_option("--scenes", scenes, "Rooms to generate")->check(CLI::PositiveNumber)->capture_default_str();
        app->add_option("--jitter", jitter, "Per-joint pose noise in radians")->capture_default_str();
        app->add_option("--out", out, "Output directory")->required();
    }

    json run(const Globals& g, const UpAxis& axis) const
    {
        FrameOptions fo;
        fo.jitter = jitter;
        const GeneratedData data = generate_frames(frames, scenes, g.seed, fo);
        fs::create_directories(out / "scenes");
        fs::create_directories(out / "bodies");
        for (std::size_t s = 0; s < data.scenes.size(); ++s) {
            SceneMesh sm = data.scenes[s];
            sm.mesh = axis.out(sm.mesh);
            char name[32];
            std::snprintf(name, sizeof name, "scene_%03zu.ply", s);
            save_scene(out / "scenes" / name, sm);
        }
        for (const std::string& pose : pose_names()) {
            const BodyMesh b = generate_body(pose);
            save_obj(out / "bodies" / (pose + ".obj"), axis.out(b.mesh));
            write_text(out / "bodies" / (pose + ".skeleton.json"), skeleton_json(b));
        }
        write_text(out / "frames.json", placements_to_json(data.placements));
        write_dataset(out / "dataset.posa", data.dataset);

        std::map<std::string, int> poses;
        double agreement = 0.0;
        for (const FramePlacement& p : data.placements) {
            ++poses[p.pose];
            agreement += p.mask_agreement;
        }
        return {{"frames", data.dataset.frames.size()},
                {"skipped", data.skipped},
                {"scenes", data.scenes.size()},
                {"poses", poses},
                {"mask_agreement_mean", data.placements.empty() ? 0.0 : agreement / data.placements.size()},
                {"dataset", (out / "dataset.posa").string()}};
    }
};

// ---------------------------------------------------------------- build-sdf

struct BuildSdf {
    fs::path scene, out;
    int res = 128;
    double pad = 0.1;

    void add(CLI::App* app)
    {
        app->add_option("--scene", scene, "Scene mesh (PLY or OBJ)")->required()->check(CLI::ExistingFile);
        app->add_option("--res", res, "Voxels along the longest padded axis")->check(CLI::Range(4, 1024))->capture_default_str();
        app->add_option("--pad", pad, "Padding as a fraction of the bounding-box diagonal")
            ->check(CLI::Range(0.0, 2.0))
            ->capture_default_str();
        app->add_option("--out", out, "Output .sdf file")->required();
    }

    json run(const Globals&, const UpAxis& axis) const
    {
        const SceneMesh s = load_scene_file(scene, axis);
        const Aabb b = s.mesh.bounds();
        SdfBuildOptions o;
        o.resolution = res;
        o.padding = pad * (b.max - b.min).norm();
        const auto t0 = std::chrono::steady_clock::now();
        const SdfGrid grid = build_sdf(s, o);
        spdlog::info("sdf built in {:.2f} s",
                     std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
        if (out.has_parent_path()) {
            fs::create_directories(out.parent_path());
        }
        save_sdf(out, grid);
        return {{"dims", {grid.dims[0], grid.dims[1], grid.dims[2]}},
                {"cell_size", grid.cell_size},
                {"origin", {grid.origin.x(), grid.origin.y(), grid.origin.z()}},
                {"out", out.string()}};
    }
};

// ---------------------------------------------------------------- extract-features

struct ExtractFeatures {
    fs::path data, out;

    void add(CLI::App* app)
    {
        app->add_option("--data", data, "Directory written by gen-data (frames.json, scenes/)")
            ->required()
            ->check(CLI::ExistingDirectory);
        app->add_option("--out", out, "Output .posa dataset")->required();
    }

    json run(const Globals&, const UpAxis& axis) const
    {
        const auto placements = placements_from_json(read_text(data / "frames.json"));
        int scene_count = 0;
        for (const FramePlacement& p : placements) {
            scene_count = std::max(scene_count, p.scene + 1);
        }
        std::vector<SceneMesh> scenes;
        std::vector<std::unique_ptr<ProximityTree>> trees;
        for (int s = 0; s < scene_count; ++s) {
            char name[32];
            std::snprintf(name, sizeof name, "scene_%03d.ply", s);
            scenes.push_back(load_scene_file(data / "scenes" / name, axis));
            trees.push_back(std::make_unique<ProximityTree>(scenes.back().mesh));
        }
        InteractionDataset ds;
        ds.class_names = default_class_names();
        ds.vertex_count = static_cast<std::uint32_t>(humanoid().feature_vertex_count());
        ds.frames.resize(placements.size());
        parallel_for_each(placements.size(), [&](std::size_t f) {
            const FramePlacement& p = placements[f];
            ds.frames[f] = extract_frame(placement_body(p), p, scenes.at(p.scene), *trees.at(p.scene));
        });
        ds.validate();
        if (out.has_parent_path()) {
            fs::create_directories(out.parent_path());
        }
        write_dataset(out, ds);
        std::size_t contact = 0;
        for (const auto& fr : ds.frames) {
            for (auto c : fr.contact) {
                contact += c;
            }
        }
        return {{"frames", ds.frames.size()},
                {"vertex_count", ds.vertex_count},
                {"contact_fraction", ds.frames.empty() ? 0.0
                                                       : static_cast<double>(contact) /
                                                             (static_cast<double>(ds.frames.size()) * ds.vertex_count)},
                {"out", out.string()}};
    }
};

// ---------------------------------------------------------------- train

struct Train {
    fs::path data, out, config_file;
    TrainOptions t;
    int latent = 0, conv = 0, fc = 0, pools = 0, dec = 0;
    int log_every = 50;

    void add(CLI::App* app)
    {
        app->add_option("--data", data, "Training dataset (.posa)")->required()->check(CLI::ExistingFile);
        app->add_option("--out", out, "Output checkpoint")->required();
        app->add_option("--config", config_file, "Model config JSON (defaults otherwise)")->check(CLI::ExistingFile);
        app->add_option("--latent-dim", latent, "Override latent size");
        app->add_option("--conv-width", conv, "Override spiral conv width");
        app->add_option("--fc-width", fc, "Override encoder fc width");
        app->add_option("--pool-blocks", pools, "Override encoder pooling blocks");
        app->add_option("--decoder-convs", dec, "Override decoder hidden convs");
        app->add_option("--epochs", t.epochs, "Epochs")->check(CLI::NonNegativeNumber)->capture_default_str();
        app->add_option("--batch", t.batch_size, "Batch size")->check(CLI::PositiveNumber)->capture_default_str();
        app->add_option("--lr", t.lr, "Adam learning rate")->capture_default_str();
        app->add_option("--max-steps", t.max_steps, "Stop after this many steps (-1: no cap)")->capture_default_str();
        app->add_option("--val-fraction", t.val_fraction, "Validation split")->check(CLI::Range(0.0, 0.9))->capture_default_str();
        app->add_option("--patience", t.patience, "Early-stop patience in epochs (0: off)")->capture_default_str();
        app->add_option("--target-accuracy", t.target_accuracy, "Stop once training contact accuracy reaches this (0: off)")
            ->capture_default_str();
        app->add_option("--log-every", log_every, "Log every N steps")->check(CLI::PositiveNumber)->capture_default_str();
    }

    json run(const Globals& g, const UpAxis&)
    {
        const InteractionDataset ds = read_dataset(data);
        ModelConfig config;
        if (!config_file.empty()) {
            config = ModelConfig::from_json(read_text(config_file));
        }
        for (auto [flag, field] : {std::pair{latent, &config.latent_dim}, {conv, &config.conv_width},
                                   {fc, &config.fc_width}, {pools, &config.pool_blocks}, {dec, &config.decoder_convs}}) {
            if (flag > 0) {
                *field = flag;
            }
        }
        config.validate();
        spdlog::info("model config {}", config.to_json());
        const auto topology = config.spiral_length == kSpiralLength ? humanoid_topology()
                                                                    : make_topology(humanoid().hierarchy, config.spiral_length);
        t.seed = g.seed;
        t.on_step = [this](long step, int epoch, double loss) {
            if (step % log_every == 0) {
                spdlog::info("epoch {} step {} loss {:.5f}", epoch + 1, step, loss);
            }
        };
        const auto t0 = std::chrono::steady_clock::now();
        const Checkpoint ckpt = train(ds, config, topology, t);
        spdlog::info("trained {} steps in {:.1f} s", ckpt.meta.steps,
                     std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
        if (out.has_parent_path()) {
            fs::create_directories(out.parent_path());
        }
        save_checkpoint(out, ckpt);
        std::vector<int> val;
        for (std::size_t f = 0; f < ds.frames.size(); ++f) {
            if (is_validation_frame(f, t.val_fraction)) {
                val.push_back(static_cast<int>(f));
            }
        }
        json summary{{"steps", ckpt.meta.steps},
                     {"epochs", ckpt.meta.epochs},
                     {"final_loss", ckpt.meta.loss_curve.empty() ? json(nullptr) : json(ckpt.meta.loss_curve.back())},
                     {"out", out.string()}};
        if (!ckpt.meta.val_curve.empty()) {
            summary["val_loss"] = ckpt.meta.val_curve.back();
        }
        if (!val.empty()) {
            summary["val_contact_accuracy"] = contact_accuracy(ckpt, ds, val);
        }
        return summary;
    }
};

// ---------------------------------------------------------------- sample

struct Sample {
    fs::path model, out;
    BodyFlags body;
    int n = 10;
    bool mode = false;

    void add(CLI::App* app)
    {
        app->add_option("--model", model, "Trained checkpoint")->required()->check(CLI::ExistingFile);
        body.add(app);
        app->add_option("--n", n, "Feature maps to draw")->check(CLI::PositiveNumber)->capture_default_str();
        app->add_flag("--mode", mode, "Decode z = 0 instead of random draws");
        app->add_option("--out", out, "Output feature-map JSON")->required();
    }

    json run(const Globals& g, const UpAxis&) const
    {
        const Checkpoint ckpt = load_checkpoint(model);
        const auto maps = sample(ckpt, body.body(), n, g.seed, mode);
        write_text(out, feature_maps_json(maps, ckpt.class_names));
        json per = json::array();
        for (const FeatureMap& m : maps) {
            const auto labels = m.labels();
            std::map<std::string, int> classes;
            int contact = 0;
            for (int i = 0; i < m.vertex_count(); ++i) {
                if (m.contact[i] > 0.5f) {
                    ++contact;
                    if (labels[i] > 0) {
                        ++classes[ckpt.class_names.at(static_cast<std::size_t>(labels[i] - 1))];
                    }
                }
            }
            per.push_back({{"contact_vertices", contact}, {"contact_classes", classes}});
        }
        return {{"samples", per}, {"out", out.string()}};
    }
};

// ---------------------------------------------------------------- place

struct Place {
    fs::path model, scene, sdf, init, fmap, out;
    BodyFlags body;
    int sdf_res = 128;
    int fmap_index = 0;
    std::string mode = "fixed";
    PlaceOptions o;
    PlacementWeights w;

    void add(CLI::App* app)
    {
        app->add_option("--model", model, "Trained checkpoint")->required()->check(CLI::ExistingFile);
        app->add_option("--scene", scene, "Scene mesh with labels")->required()->check(CLI::ExistingFile);
        app->add_option("--sdf", sdf, "Scene SDF from build-sdf (built on the fly otherwise)")->check(CLI::ExistingFile);
        app->add_option("--sdf-res", sdf_res, "Resolution when building the SDF here")->capture_default_str();
        body.add(app);
        app->add_option("--samples", o.n_samples, "Feature maps to sample")->check(CLI::PositiveNumber)->capture_default_str();
        app->add_option("--seeds", o.n_seeds, "Seed-search candidates per map")->check(CLI::PositiveNumber)->capture_default_str();
        app->add_option("--refine-top", o.refine_top, "Seeds refined per map")->check(CLI::PositiveNumber)->capture_default_str();
        app->add_option("--iterations", o.refine.iterations, "Refinement iterations")->check(CLI::PositiveNumber)->capture_default_str();
        app->add_option("--mode", mode, "fixed: rigid only; full: also pose deltas")
            ->check(CLI::IsMember({"fixed", "full"}))
            ->capture_default_str();
        app->add_option("--init", init, "Initial transform JSON; skips seed search")->check(CLI::ExistingFile);
        app->add_option("--fmap", fmap, "Feature maps from `sample` instead of sampling here")->check(CLI::ExistingFile);
        app->add_option("--fmap-index", fmap_index, "Which map of --fmap to use")->capture_default_str();
        app->add_option("--w-contact", w.contact, "Contact weight")->capture_default_str();
        app->add_option("--w-semantic", w.semantic, "Semantic weight")->capture_default_str();
        app->add_option("--w-pen", w.pen, "Penetration weight")->capture_default_str();
        app->add_option("--w-reg", w.reg, "Pose regularizer weight")->capture_default_str();
        app->add_option("--out", out, "Output placement JSON; the placed body goes next to it as .obj")->required();
    }

    json run(const Globals& g, const UpAxis& axis)
    {
        const Checkpoint ckpt = load_checkpoint(model);
        const SceneMesh s = load_scene_file(scene, axis);
        const SdfGrid grid = sdf.empty() ? build_sdf(s, SdfBuildOptions{sdf_res}) : load_sdf(sdf);
        const ProximityTree tree(s.mesh);
        const PlacementScene view{s, grid, tree};
        o.seed = g.seed;
        o.mode = mode == "full" ? RefineMode::Full : RefineMode::FixedPose;
        if (!init.empty()) {
            PlacementTransform t = transform_from_json(read_text(init));
            t.translation = axis.in(t.translation);
            o.init = t;
        }
        const BodyMesh b = body.body();
        PlaceOutput result;
        if (!fmap.empty()) {
            const auto maps = feature_maps_from_json(read_text(fmap));
            if (fmap_index < 0 || fmap_index >= static_cast<int>(maps.size())) {
                throw Error("--fmap-index " + std::to_string(fmap_index) + " out of range (" +
                            std::to_string(maps.size()) + " maps)");
            }
            o.n_samples = 1;
            const FeatureMap full =
                upsample_features(maps[static_cast<std::size_t>(fmap_index)], *ckpt.topology, ckpt.config.feature_level);
            result = place_with_maps(canonicalize(b), {full}, view, w, o);
        } else {
            result = place(ckpt, b, view, w, o);
        }
        const BodyMesh canonical = canonicalize(b);
        TriMesh placed = canonical.mesh;
        placed.vertices = placed_vertices(canonical, result.best.transform);
        placed.normals.clear();
        for (auto* r : {&result.best}) {
            r->transform.translation = axis.out(r->transform.translation);
        }
        for (auto& r : result.alternatives) {
            r.transform.translation = axis.out(r.transform.translation);
        }
        write_text(out, placement_json(result));
        save_obj(fs::path(out).replace_extension(".obj"), axis.out(placed));
        const auto& e = result.best.energy;
        return {{"translation", {result.best.transform.translation.x(), result.best.transform.translation.y(),
                                 result.best.transform.translation.z()}},
                {"yaw", result.best.transform.yaw},
                {"energy", e.total},
                {"pen", e.pen},
                {"refinements", result.refinements},
                {"non_collision", non_collision(placed.vertices, grid)},
                {"contact", contact_score(placed.vertices, grid)},
                {"out", out.string()}};
    }
};

// ---------------------------------------------------------------- eval

struct Eval {
    fs::path placements, sdf, out;
    int k = 20;
    int restarts = 50;

    void add(CLI::App* app)
    {
        app->add_option("--placements", placements, "Directory of placement JSON + OBJ pairs from `place`")
            ->required()
            ->check(CLI::ExistingDirectory);
        app->add_option("--sdf", sdf, "Scene SDF")->required()->check(CLI::ExistingFile);
        app->add_option("--out", out, "Report JSON")->required();
        app->add_option("--k", k, "Clusters for the diversity metric")->check(CLI::PositiveNumber)->capture_default_str();
        app->add_option("--restarts", restarts, "k-means restarts")->check(CLI::PositiveNumber)->capture_default_str();
    }

    json run(const Globals& g, const UpAxis& axis) const
    {
        const SdfGrid grid = load_sdf(sdf);
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(placements)) {
            if (e.path().extension() == ".json" && fs::exists(fs::path(e.path()).replace_extension(".obj"))) {
                files.push_back(e.path());
            }
        }
        std::sort(files.begin(), files.end());
        if (files.empty()) {
            throw Error("no placement JSON/OBJ pairs in " + placements.string());
        }
        std::vector<std::vector<Vec3>> bodies;
        std::vector<PlacementTransform> transforms;
        for (const auto& f : files) {
            TriMesh m = load_mesh(fs::path(f).replace_extension(".obj")).mesh;
            axis.in(m);
            bodies.push_back(std::move(m.vertices));
            PlacementTransform t = transform_from_json(read_text(f));
            t.translation = axis.in(t.translation);
            transforms.push_back(std::move(t));
        }
        const PlausibilityReport p = plausibility(bodies, grid);
        const DiversityReport d = diversity(placement_parameters(transforms), k, g.seed, restarts);
        json per = json::array();
        for (std::size_t i = 0; i < files.size(); ++i) {
            per.push_back({{"file", files[i].filename().string()}, {"non_collision", p.non_collision[i]},
                           {"contact", p.contact[i]}});
        }
        const json report{{"count", files.size()},
                          {"non_collision_mean", p.non_collision_mean},
                          {"contact_mean", p.contact_mean},
                          {"entropy", d.entropy},
                          {"entropy_base", "e"},
                          {"cluster_size", d.cluster_size},
                          {"k", d.k},
                          {"histogram", d.histogram},
                          {"clamped_vertices", p.clamped},
                          {"placements", per}};
        write_text(out, report.dump(2) + "\n");
        return report;
    }
};

// ---------------------------------------------------------------- serve

struct Serve {
    ServiceOptions s;

    void add(CLI::App* app)
    {
        app->add_option("--port", s.port, "TCP port (0 picks one)")->capture_default_str();
        app->add_option("--address", s.address, "Bind address")->capture_default_str();
        app->add_option("--data", s.data, "Directory with scenes/ and a .ckpt")->required()->check(CLI::ExistingDirectory);
        app->add_option("--sdf-res", s.sdf_resolution, "SDF resolution for scenes without a stored .sdf")
            ->capture_default_str();
    }

    int run(const Globals& g)
    {
        if (g.up_axis != "z") {
            throw Error("serve only supports --up-axis z");
        }
        // Signals are taken synchronously on this thread; workers inherit the mask.
        sigset_t set;
        sigemptyset(&set);
        sigaddset(&set, SIGINT);
        sigaddset(&set, SIGTERM);
        pthread_sigmask(SIG_BLOCK, &set, nullptr);
        Service service(s);
        const unsigned short port = service.start();
        std::cout << json{{"port", port}}.dump() << std::endl;
        int sig = 0;
        sigwait(&set, &sig);
        spdlog::info("signal {}, shutting down", sig);
        service.stop();
        return 0;
    }
};

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Human-scene interaction: learn contact maps on a body mesh and place bodies in scenes"};
    app.require_subcommand(1);
    app.fallthrough();
    app.failure_message(CLI::FailureMessage::help);
    Globals g;
    app.add_option("--seed", g.seed, "Root seed; child seeds derive from it")->capture_default_str();
    app.add_option("--threads", g.threads, "Worker threads (0: all cores, 1: bit-deterministic)")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    app.add_option("--up-axis", g.up_axis, "Up axis of mesh files")->check(CLI::IsMember({"z", "y"}))->capture_default_str();
    app.add_flag("--json", g.json, "Machine-readable summary on stdout");
    app.add_option("--log-level", g.log_level, "trace|debug|info|warn|error|off (default: HSI_LOG or info)");

    GenData gen;
    BuildSdf bsdf;
    ExtractFeatures ext;
    Train tr;
    Sample smp;
    Place plc;
    Eval ev;
    Serve srv;
    gen.add(app.add_subcommand("gen-data", "Generate synthetic rooms, bodies and interaction frames"));
    bsdf.add(app.add_subcommand("build-sdf", "Voxelize a scene into a signed distance field"));
    ext.add(app.add_subcommand("extract-features", "Recompute the interaction dataset from gen-data output"));
    tr.add(app.add_subcommand("train", "Train the conditional VAE"));
    smp.add(app.add_subcommand("sample", "Sample feature maps for a posed body"));
    plc.add(app.add_subcommand("place", "Place a posed body in a scene"));
    ev.add(app.add_subcommand("eval", "Physical plausibility and diversity of placements"));
    srv.add(app.add_subcommand("serve", "Run the local HTTP/WebSocket service"));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        init_logging(g.log_level.empty() ? std::nullopt : std::optional<std::string>(g.log_level));
        set_thread_count(g.threads > 0 ? g.threads : static_cast<int>(std::max(1u, std::thread::hardware_concurrency())));
        const UpAxis axis{g.up_axis == "y"};
        CLI::App* sub = app.get_subcommands().front();
        log_config(app, *sub);
        const std::string name = sub->get_name();
        json summary;
        if (name == "gen-data") {
            summary = gen.run(g, axis);
        } else if (name == "build-sdf") {
            summary = bsdf.run(g, axis);
        } else if (name == "extract-features") {
            summary = ext.run(g, axis);
        } else if (name == "train") {
            summary = tr.run(g, axis);
        } else if (name == "sample") {
            summary = smp.run(g, axis);
        } else if (name == "place") {
            summary = plc.run(g, axis);
        } else if (name == "eval") {
            summary = ev.run(g, axis);
        } else if (name == "serve") {
            return srv.run(g);
        }
        emit(g, summary);
        return 0;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        if (g.json) {
            std::cout << json{{"error", e.what()}}.dump() << "\n";
        }
        return 2;
    }
}
