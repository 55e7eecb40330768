#include "hsi/service.hpp"
#include "hsi/binary_io.hpp"
#include "hsi/humanoid.hpp"
#include "hsi/mesh_io.hpp"
#include "hsi/placement.hpp"

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include <condition_variable>
#include <deque>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

namespace hsi {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;
using nlohmann::json;

std::string encode_mesh(const TriMesh& mesh, const std::vector<int>* labels)
{
    std::ostringstream os;
    binio::write<std::uint32_t>(os, static_cast<std::uint32_t>(mesh.vertices.size()));
    binio::write<std::uint32_t>(os, static_cast<std::uint32_t>(mesh.faces.size()));
    for (const Vec3& v : mesh.vertices) {
        for (int a = 0; a < 3; ++a) {
            binio::write<float>(os, static_cast<float>(v[a]));
        }
    }
    for (const auto& f : mesh.faces) {
        for (int a = 0; a < 3; ++a) {
            binio::write<std::uint32_t>(os, static_cast<std::uint32_t>(f[a]));
        }
    }
    for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
        binio::write<std::uint16_t>(os, labels ? static_cast<std::uint16_t>((*labels)[i]) : std::uint16_t{0});
    }
    return os.str();
}

DecodedMesh decode_mesh(std::string_view bytes)
{
    std::istringstream is{std::string(bytes)};
    DecodedMesh d;
    const auto nv = binio::read<std::uint32_t>(is, "vertex count");
    const auto nf = binio::read<std::uint32_t>(is, "face count");
    if (bytes.size() != 8 + 12ull * nv + 12ull * nf + 2ull * nv) {
        throw Error("mesh payload size does not match its header");
    }
    d.mesh.vertices.resize(nv);
    for (auto& v : d.mesh.vertices) {
        for (int a = 0; a < 3; ++a) {
            v[a] = binio::read<float>(is, "positions");
        }
    }
    d.mesh.faces.resize(nf);
    for (auto& f : d.mesh.faces) {
        for (int a = 0; a < 3; ++a) {
            f[a] = static_cast<int>(binio::read<std::uint32_t>(is, "indices"));
        }
    }
    d.labels.resize(nv);
    for (auto& l : d.labels) {
        l = binio::read<std::uint16_t>(is, "labels");
    }
    return d;
}

namespace detail {

struct HttpError : std::runtime_error {
    HttpError(http::status s, const std::string& m) : std::runtime_error(m), status(s), message(m) {}
    http::status status;
    std::string message;
};

enum class JobState { Queued, Running, Done, Failed, Cancelled };

const char* state_name(JobState s)
{
    switch (s) {
    case JobState::Queued: return "queued";
    case JobState::Running: return "running";
    case JobState::Done: return "done";
    case JobState::Failed: return "failed";
    case JobState::Cancelled: return "cancelled";
    }
    return "?";
}

bool finished(JobState s) { return s == JobState::Done || s == JobState::Failed || s == JobState::Cancelled; }

struct SceneEntry {
    std::string id;
    SceneMesh mesh;
    std::unique_ptr<ProximityTree> tree;
    std::filesystem::path sdf_path;
    std::unique_ptr<SdfGrid> sdf;
    std::mutex sdf_mutex;
};

struct StoredMap {
    std::string body;
    FeatureMap map; // full body resolution
};

struct Job {
    int id = 0;
    JobState state = JobState::Queued;
    std::string body, scene;
    int fmap = 0;
    PlaceOptions options;
    std::string result; // placement JSON once finished (partial best when cancelled)
    std::string error;
    std::atomic<bool> cancel{false};
    long steps = 0;
    double best = std::numeric_limits<double>::infinity();
};

class WsSession;

} // namespace detail

using namespace detail;

struct Service::Impl {
    ServiceOptions options;
    std::map<std::string, std::unique_ptr<SceneEntry>> scenes;
    std::optional<Checkpoint> ckpt;

    std::mutex mutex; // guards everything below
    std::vector<StoredMap> fmaps;
    std::map<int, std::shared_ptr<Job>> jobs;
    int next_job = 1;
    std::deque<int> queue;
    std::condition_variable queue_cv;
    std::map<int, std::vector<std::weak_ptr<WsSession>>> subscribers;
    bool stopping = false;

    net::io_context ioc;
    std::unique_ptr<tcp::acceptor> acceptor;
    std::vector<std::thread> io_threads;
    std::thread worker;
    std::mutex stop_mutex;
    std::condition_variable stop_cv;
    bool stopped = false;

    void load();
    const SdfGrid& scene_sdf(SceneEntry& s);
    http::response<http::string_body> handle(const http::request<http::string_body>& req);
    std::string route(const http::request<http::string_body>& req, std::string& content_type);
    void subscribe(int job, const std::shared_ptr<WsSession>& session);
    void publish(int job, const std::string& event);
    void run_worker();
    void run_job(const std::shared_ptr<Job>& job);
    void do_accept();

    SceneEntry& scene(const std::string& id)
    {
        const auto it = scenes.find(id);
        if (it == scenes.end()) {
            throw HttpError{http::status::not_found, "unknown scene '" + id + "'"};
        }
        return *it->second;
    }
    static const PoseSpec& body_pose(const std::string& id)
    {
        for (const std::string& name : pose_names()) {
            if (name == id) {
                return pose_spec(name);
            }
        }
        throw HttpError{http::status::not_found, "unknown body '" + id + "'"};
    }
    std::shared_ptr<Job> job(int id)
    {
        const auto it = jobs.find(id);
        if (it == jobs.end()) {
            throw HttpError{http::status::not_found, "unknown job " + std::to_string(id)};
        }
        return it->second;
    }
    json job_json(const Job& j) const
    {
        json out{{"id", j.id}, {"state", state_name(j.state)}, {"steps", j.steps}};
        if (std::isfinite(j.best)) {
            out["best_energy"] = j.best;
        }
        if (!j.result.empty()) {
            out["result"] = json::parse(j.result);
        }
        if (!j.error.empty()) {
            out["error"] = j.error;
        }
        return out;
    }
};

namespace detail {

class WsSession : public std::enable_shared_from_this<WsSession> {
public:
    WsSession(tcp::socket&& socket, Service::Impl* svc) : ws_(std::move(socket)), svc_(svc) {}

    void run(http::request<http::string_body> req)
    {
        ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
        ws_.async_accept(req, [self = shared_from_this()](beast::error_code ec) {
            if (!ec) {
                self->read();
            }
        });
    }

    void send(std::string text)
    {
        net::post(ws_.get_executor(), [self = shared_from_this(), text = std::move(text)]() mutable {
            self->out_.push_back(std::move(text));
            if (self->out_.size() == 1) {
                self->write();
            }
        });
    }

private:
    void read()
    {
        ws_.async_read(buf_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
            if (ec) {
                return;
            }
            const std::string text = beast::buffers_to_string(self->buf_.data());
            self->buf_.consume(self->buf_.size());
            try {
                const json j = json::parse(text);
                if (j.value("type", "") == "subscribe") {
                    self->svc_->subscribe(j.at("job").get<int>(), self);
                } else {
                    self->send(json{{"type", "error"}, {"message", "expected a subscribe message"}}.dump());
                }
            } catch (const std::exception& e) {
                self->send(json{{"type", "error"}, {"message", e.what()}}.dump());
            }
            self->read();
        });
    }

    void write()
    {
        ws_.text(true);
        ws_.async_write(net::buffer(out_.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
            if (ec) {
                self->out_.clear();
                return;
            }
            self->out_.pop_front();
            if (!self->out_.empty()) {
                self->write();
            }
        });
    }

    websocket::stream<beast::tcp_stream> ws_;
    beast::flat_buffer buf_;
    std::deque<std::string> out_;
    Service::Impl* svc_;
};

class HttpSession : public std::enable_shared_from_this<HttpSession> {
public:
    HttpSession(tcp::socket&& socket, Service::Impl* svc)
        : stream_(std::move(socket)), svc_(svc)
    {
    }

    void read()
    {
        req_ = {};
        stream_.expires_after(std::chrono::seconds(60));
        http::async_read(stream_, buf_, req_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
            if (ec) {
                beast::error_code ignored;
                self->stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
                return;
            }
            if (websocket::is_upgrade(self->req_)) {
                self->stream_.expires_never();
                std::make_shared<WsSession>(self->stream_.release_socket(), self->svc_)->run(std::move(self->req_));
                return;
            }
            auto res = std::make_shared<http::response<http::string_body>>(self->svc_->handle(self->req_));
            http::async_write(self->stream_, *res, [self, res](beast::error_code wec, std::size_t) {
                if (!wec && res->keep_alive()) {
                    self->read();
                } else {
                    beast::error_code ignored;
                    self->stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
                }
            });
        });
    }

private:
    beast::tcp_stream stream_;
    beast::flat_buffer buf_;
    http::request<http::string_body> req_;
    Service::Impl* svc_;
};

} // namespace detail

namespace {

std::vector<std::string> split_path(std::string_view target)
{
    const auto q = target.find('?');
    if (q != std::string_view::npos) {
        target = target.substr(0, q);
    }
    std::vector<std::string> parts;
    std::size_t start = 0;
    while (start <= target.size()) {
        const auto slash = target.find('/', start);
        const auto end = slash == std::string_view::npos ? target.size() : slash;
        if (end > start) {
            parts.emplace_back(target.substr(start, end - start));
        }
        if (slash == std::string_view::npos) {
            break;
        }
        start = slash + 1;
    }
    return parts;
}

int parse_id(const std::string& s, const char* what)
{
    try {
        std::size_t used = 0;
        const int v = std::stoi(s, &used);
        if (used == s.size()) {
            return v;
        }
    } catch (const std::exception&) {
    }
    throw HttpError{http::status::not_found, std::string("bad ") + what + " id '" + s + "'"};
}

json parse_body(const std::string& body)
{
    try {
        json j = json::parse(body);
        if (!j.is_object()) {
            throw HttpError{http::status::unprocessable_entity, "request body must be a JSON object"};
        }
        return j;
    } catch (const json::exception& e) {
        throw HttpError{http::status::unprocessable_entity, std::string("malformed request body: ") + e.what()};
    }
}

template <class T>
T field(const json& j, const char* key)
{
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw HttpError{http::status::unprocessable_entity, std::string("missing or malformed field '") + key + "'"};
    }
}

template <class T>
T field_or(const json& j, const char* key, T fallback)
{
    return j.contains(key) ? field<T>(j, key) : fallback;
}

} // namespace

void Service::Impl::load()
{
    const auto scene_dir = options.data / "scenes";
    if (std::filesystem::is_directory(scene_dir)) {
        std::vector<std::filesystem::path> files;
        for (const auto& e : std::filesystem::directory_iterator(scene_dir)) {
            const auto ext = e.path().extension().string();
            if (ext == ".ply" || ext == ".obj") {
                files.push_back(e.path());
            }
        }
        std::sort(files.begin(), files.end());
        for (const auto& f : files) {
            auto s = std::make_unique<SceneEntry>();
            s->id = f.stem().string();
            s->mesh = load_scene(f);
            s->tree = std::make_unique<ProximityTree>(s->mesh.mesh);
            s->sdf_path = std::filesystem::path(f).replace_extension(".sdf");
            spdlog::info("service: scene {} ({} vertices)", s->id, s->mesh.mesh.vertex_count());
            scenes.emplace(s->id, std::move(s));
        }
    }
    std::vector<std::filesystem::path> ckpts;
    if (std::filesystem::is_directory(options.data)) {
        for (const auto& e : std::filesystem::directory_iterator(options.data)) {
            if (e.path().extension() == ".ckpt") {
                ckpts.push_back(e.path());
            }
        }
    }
    std::sort(ckpts.begin(), ckpts.end());
    if (!ckpts.empty()) {
        ckpt = load_checkpoint(ckpts.front());
        spdlog::info("service: model {}", ckpts.front().string());
        if (ckpts.size() > 1) {
            spdlog::warn("service: {} checkpoints in {}, using the first", ckpts.size(), options.data.string());
        }
    } else {
        spdlog::warn("service: no checkpoint in {}; sampling is unavailable", options.data.string());
    }
    if (scenes.empty()) {
        spdlog::warn("service: no scenes in {}", scene_dir.string());
    }
}

const SdfGrid& Service::Impl::scene_sdf(SceneEntry& s)
{
    std::lock_guard lock(s.sdf_mutex);
    if (!s.sdf) {
        if (std::filesystem::exists(s.sdf_path)) {
            s.sdf = std::make_unique<SdfGrid>(load_sdf(s.sdf_path));
        } else {
            spdlog::info("service: building SDF for {} at {}", s.id, options.sdf_resolution);
            s.sdf = std::make_unique<SdfGrid>(build_sdf(s.mesh, SdfBuildOptions{options.sdf_resolution}));
        }
    }
    return *s.sdf;
}

void Service::Impl::subscribe(int id, const std::shared_ptr<WsSession>& session)
{
    std::string snapshot;
    {
        std::lock_guard lock(mutex);
        const auto j = job(id);
        subscribers[id].push_back(session);
        snapshot = json{{"type", "state"}, {"job", id}, {"state", state_name(j->state)}}.dump();
    }
    session->send(json{{"type", "subscribed"}, {"job", id}}.dump());
    session->send(snapshot);
}

void Service::Impl::publish(int id, const std::string& event)
{
    std::vector<std::shared_ptr<WsSession>> live;
    {
        std::lock_guard lock(mutex);
        auto& subs = subscribers[id];
        std::erase_if(subs, [](const auto& w) { return w.expired(); });
        for (const auto& w : subs) {
            if (auto s = w.lock()) {
                live.push_back(std::move(s));
            }
        }
    }
    for (const auto& s : live) {
        s->send(event);
    }
}

void Service::Impl::run_worker()
{
    for (;;) {
        std::shared_ptr<Job> j;
        {
            std::unique_lock lock(mutex);
            queue_cv.wait(lock, [&] { return stopping || !queue.empty(); });
            if (stopping) {
                return;
            }
            j = jobs.at(queue.front());
            queue.pop_front();
            if (j->state != JobState::Queued) {
                continue; // cancelled while queued
            }
            j->state = JobState::Running;
        }
        publish(j->id, json{{"type", "state"}, {"job", j->id}, {"state", "running"}}.dump());
        run_job(j);
        std::string event;
        {
            std::lock_guard lock(mutex);
            event = json{{"type", "state"}, {"job", j->id}, {"state", state_name(j->state)}}.dump();
        }
        publish(j->id, event);
    }
}

void Service::Impl::run_job(const std::shared_ptr<Job>& j)
{
    std::string result, error;
    try {
        SceneEntry& s = scene(j->scene);
        const SdfGrid& sdf = scene_sdf(s);
        const BodyMesh body = canonicalize(generate_body(j->body));
        FeatureMap map;
        {
            std::lock_guard lock(mutex);
            map = fmaps.at(static_cast<std::size_t>(j->fmap)).map;
        }
        PlaceOptions o = j->options;
        std::mutex progress_mutex;
        o.refine.cancel = &j->cancel;
        o.refine.on_iteration = [&](int, double energy) {
            std::string event;
            {
                std::lock_guard lock(progress_mutex);
                std::lock_guard state_lock(mutex);
                j->best = std::min(j->best, energy);
                ++j->steps;
                event = json{{"type", "progress"}, {"job", j->id}, {"step", j->steps}, {"total_energy", j->best}}.dump();
            }
            publish(j->id, event);
        };
        result = placement_json(place_with_maps(body, {map}, PlacementScene{s.mesh, sdf, *s.tree}, PlacementWeights{}, o));
    } catch (const HttpError& e) {
        error = e.message;
    } catch (const std::exception& e) {
        error = e.what();
    }
    std::lock_guard lock(mutex);
    if (!error.empty()) {
        j->state = JobState::Failed;
        j->error = error;
        spdlog::warn("service: job {} failed: {}", j->id, error);
    } else {
        j->result = std::move(result);
        j->state = j->cancel ? JobState::Cancelled : JobState::Done;
        spdlog::info("service: job {} {}", j->id, state_name(j->state));
    }
}

std::string Service::Impl::route(const http::request<http::string_body>& req, std::string& content_type)
{
    const auto parts = split_path(std::string_view(req.target().data(), req.target().size()));
    const auto method = req.method();
    const auto is = [&](std::initializer_list<const char*> p) {
        if (parts.size() != p.size()) {
            return false;
        }
        std::size_t i = 0;
        for (const char* s : p) {
            if (*s != '*' && parts[i] != s) {
                return false;
            }
            ++i;
        }
        return true;
    };
    const auto expect = [&](http::verb v) {
        if (method != v) {
            throw HttpError{http::status::method_not_allowed, "method not allowed"};
        }
    };
    content_type = "application/json";

    if (is({"api", "scenes"})) {
        expect(http::verb::get);
        json arr = json::array();
        for (const auto& [id, s] : scenes) {
            const Aabb b = s->mesh.mesh.bounds();
            arr.push_back({{"id", id},
                           {"vertices", s->mesh.mesh.vertex_count()},
                           {"faces", s->mesh.mesh.faces.size()},
                           {"class_names", s->mesh.class_names},
                           {"bounds", {{b.min.x(), b.min.y(), b.min.z()}, {b.max.x(), b.max.y(), b.max.z()}}}});
        }
        return arr.dump();
    }
    if (is({"api", "scene", "*", "mesh"})) {
        expect(http::verb::get);
        const SceneEntry& s = scene(parts[2]);
        content_type = "application/octet-stream";
        return encode_mesh(s.mesh.mesh, &s.mesh.labels);
    }
    if (is({"api", "scene", "*", "sdf"})) {
        expect(http::verb::post);
        SceneEntry& s = scene(parts[2]);
        const json body = parse_body(req.body());
        const auto points = field<std::vector<std::vector<double>>>(body, "points");
        const SdfGrid& sdf = scene_sdf(s);
        std::vector<double> values;
        for (const auto& p : points) {
            if (p.size() != 3) {
                throw HttpError{http::status::unprocessable_entity, "points must be 3-vectors"};
            }
            values.push_back(sdf.sample(Vec3(p[0], p[1], p[2])));
        }
        return json{{"values", values}}.dump();
    }
    if (is({"api", "bodies"})) {
        expect(http::verb::get);
        json arr = json::array();
        for (const std::string& name : pose_names()) {
            arr.push_back({{"id", name}, {"vertices", kBodyVertices}, {"joints", static_cast<int>(kJointCount)}});
        }
        return arr.dump();
    }
    if (is({"api", "body", "*", "mesh"})) {
        expect(http::verb::get);
        body_pose(parts[2]);
        content_type = "application/octet-stream";
        return encode_mesh(canonicalize(generate_body(parts[2])).mesh, nullptr);
    }
    if (is({"api", "sample"})) {
        expect(http::verb::post);
        const json body = parse_body(req.body());
        const auto body_id = field<std::string>(body, "body_id");
        const int n = field_or<int>(body, "n", 1);
        const auto seed = field_or<std::uint64_t>(body, "seed", 0);
        body_pose(body_id);
        if (n < 1 || n > 64) {
            throw HttpError{http::status::unprocessable_entity, "n must be in [1, 64]"};
        }
        if (!ckpt) {
            throw HttpError{http::status::not_found, "no model loaded"};
        }
        std::vector<FeatureMap> maps = sample(*ckpt, generate_body(body_id), n, seed);
        json out = json::array();
        std::lock_guard lock(mutex);
        for (FeatureMap& m : maps) {
            m = upsample_features(m, *ckpt->topology, ckpt->config.feature_level);
            const std::vector<int> labels = m.labels();
            std::vector<float> contact(m.contact.begin(), m.contact.end());
            std::map<std::string, int> histogram;
            for (std::size_t i = 0; i < labels.size(); ++i) {
                if (contact[i] > 0.5f && labels[i] > 0) {
                    ++histogram[ckpt->class_names.at(static_cast<std::size_t>(labels[i] - 1))];
                }
            }
            const int id = static_cast<int>(fmaps.size());
            fmaps.push_back({body_id, m});
            out.push_back({{"id", id}, {"contact", contact}, {"labels", labels}, {"contact_classes", histogram}});
        }
        return json{{"body_id", body_id}, {"class_names", ckpt->class_names}, {"fmaps", out}}.dump();
    }
    if (is({"api", "place"})) {
        expect(http::verb::post);
        const json body = parse_body(req.body());
        auto j = std::make_shared<Job>();
        j->body = field<std::string>(body, "body_id");
        j->scene = field<std::string>(body, "scene_id");
        j->fmap = field<int>(body, "fmap_id");
        body_pose(j->body);
        scene(j->scene);
        const std::string mode = field_or<std::string>(body, "mode", "fixed");
        if (mode != "fixed" && mode != "full") {
            throw HttpError{http::status::unprocessable_entity, "mode must be 'fixed' or 'full'"};
        }
        j->options.mode = mode == "full" ? RefineMode::Full : RefineMode::FixedPose;
        j->options.seed = field_or<std::uint64_t>(body, "seed", 0);
        j->options.n_seeds = field_or<int>(body, "n_seeds", 64);
        j->options.refine_top = field_or<int>(body, "refine_top", 2);
        j->options.refine.iterations = field_or<int>(body, "iterations", j->options.refine.iterations);
        j->options.n_samples = 1;
        if (j->options.n_seeds < 1 || j->options.refine_top < 1 || j->options.refine.iterations < 1) {
            throw HttpError{http::status::unprocessable_entity, "n_seeds, refine_top and iterations must be positive"};
        }
        if (body.contains("init") && !body["init"].is_null()) {
            try {
                j->options.init = transform_from_json(body["init"].dump());
            } catch (const Error& e) {
                throw HttpError{http::status::unprocessable_entity, e.what()};
            }
        }
        std::lock_guard lock(mutex);
        if (j->fmap < 0 || j->fmap >= static_cast<int>(fmaps.size())) {
            throw HttpError{http::status::not_found, "unknown feature map " + std::to_string(j->fmap)};
        }
        if (fmaps[static_cast<std::size_t>(j->fmap)].body != j->body) {
            throw HttpError{http::status::conflict, "feature map " + std::to_string(j->fmap) + " was sampled for body '" +
                                                        fmaps[static_cast<std::size_t>(j->fmap)].body + "'"};
        }
        j->id = next_job++;
        jobs.emplace(j->id, j);
        queue.push_back(j->id);
        queue_cv.notify_all();
        return json{{"job", j->id}, {"state", "queued"}}.dump();
    }
    if (is({"api", "job", "*"})) {
        expect(http::verb::get);
        std::lock_guard lock(mutex);
        return job_json(*job(parse_id(parts[2], "job"))).dump();
    }
    if (is({"api", "job", "*", "result"})) {
        expect(http::verb::get);
        std::lock_guard lock(mutex);
        const auto j = job(parse_id(parts[2], "job"));
        if (j->result.empty()) {
            throw HttpError{http::status::conflict, std::string("job is ") + state_name(j->state) + ", no result"};
        }
        return j->result;
    }
    if (is({"api", "job", "*", "cancel"})) {
        expect(http::verb::post);
        int id = 0;
        bool now = false;
        json out;
        {
            std::lock_guard lock(mutex);
            const auto j = job(parse_id(parts[2], "job"));
            id = j->id;
            if (!finished(j->state)) {
                j->cancel = true;
                if (j->state == JobState::Queued) {
                    j->state = JobState::Cancelled;
                    now = true;
                }
            }
            out = job_json(*j);
        }
        if (now) {
            publish(id, json{{"type", "state"}, {"job", id}, {"state", "cancelled"}}.dump());
        }
        return out.dump();
    }
    throw HttpError{http::status::not_found, "no route for " + std::string(req.target())};
}

http::response<http::string_body> Service::Impl::handle(const http::request<http::string_body>& req)
{
    http::response<http::string_body> res;
    res.version(req.version());
    res.keep_alive(req.keep_alive());
    res.set(http::field::server, "hsi");
    std::string content_type;
    try {
        res.body() = route(req, content_type);
        res.result(http::status::ok);
    } catch (const HttpError& e) {
        res.result(e.status);
        res.body() = json{{"error", e.message}}.dump();
        content_type = "application/json";
    } catch (const Error& e) {
        const std::string msg = e.what();
        res.result(msg.find("topology mismatch") != std::string::npos ? http::status::conflict
                                                                      : http::status::unprocessable_entity);
        res.body() = json{{"error", msg}}.dump();
        content_type = "application/json";
    } catch (const std::exception& e) {
        res.result(http::status::internal_server_error);
        res.body() = json{{"error", e.what()}}.dump();
        content_type = "application/json";
    }
    res.set(http::field::content_type, content_type);
    res.set(http::field::access_control_allow_origin, "*");
    res.prepare_payload();
    spdlog::debug("service: {} {} -> {}", std::string(req.method_string()), std::string(req.target()),
                  res.result_int());
    return res;
}

void Service::Impl::do_accept()
{
    acceptor->async_accept(net::make_strand(ioc), [this](beast::error_code ec, tcp::socket socket) {
        if (ec) {
            return; // acceptor closed
        }
        std::make_shared<HttpSession>(std::move(socket), this)->read();
        do_accept();
    });
}

Service::Service(ServiceOptions options) : impl_(std::make_shared<Impl>())
{
    impl_->options = std::move(options);
    impl_->load();
}

Service::~Service() { stop(); }

unsigned short Service::start()
{
    Impl& s = *impl_;
    const tcp::endpoint ep(net::ip::make_address(s.options.address), s.options.port);
    s.acceptor = std::make_unique<tcp::acceptor>(s.ioc);
    s.acceptor->open(ep.protocol());
    s.acceptor->set_option(net::socket_base::reuse_address(true));
    s.acceptor->bind(ep);
    s.acceptor->listen();
    const unsigned short port = s.acceptor->local_endpoint().port();
    s.do_accept();
    s.worker = std::thread([&s] { s.run_worker(); });
    for (int i = 0; i < std::max(1, s.options.io_threads); ++i) {
        s.io_threads.emplace_back([&s] { s.ioc.run(); });
    }
    spdlog::info("service: listening on {}:{}", s.options.address, port);
    return port;
}

void Service::wait()
{
    std::unique_lock lock(impl_->stop_mutex);
    impl_->stop_cv.wait(lock, [&] { return impl_->stopped; });
}

void Service::stop()
{
    Impl& s = *impl_;
    {
        std::lock_guard lock(s.stop_mutex);
        if (s.stopped) {
            return;
        }
        s.stopped = true;
    }
    {
        std::lock_guard lock(s.mutex);
        s.stopping = true;
        for (auto& [id, j] : s.jobs) {
            j->cancel = true;
        }
    }
    s.queue_cv.notify_all();
    s.ioc.stop();
    for (auto& t : s.io_threads) {
        if (t.joinable()) {
            t.join();
        }
    }
    if (s.worker.joinable()) {
        s.worker.join();
    }
    s.stop_cv.notify_all();
}

} // namespace hsi
