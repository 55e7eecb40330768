#include "hsi/cvae.hpp"
#include "hsi/adam.hpp"
#include "hsi/binary_io.hpp"
#include "hsi/humanoid.hpp"
#include "hsi/parallel.hpp"
#include "hsi/rng.hpp"

#include <json.hpp>
#include <spdlog/spdlog.h>

#include <cmath>
#include <fstream>
#include <mutex>
#include <numeric>
#include <sstream>

namespace hsi {

using nlohmann::json;

// ---- config -----------------------------------------------------------------

void ModelConfig::validate() const
{
    auto positive = [](int v, const char* name) {
        if (v <= 0) {
            throw Error(std::string("model config: ") + name + " must be positive, got " + std::to_string(v));
        }
    };
    positive(latent_dim, "latent_dim");
    positive(conv_width, "conv_width");
    positive(fc_width, "fc_width");
    positive(pool_blocks, "pool_blocks");
    positive(decoder_convs, "decoder_convs");
    positive(spiral_length, "spiral_length");
    positive(class_count, "class_count");
    if (feature_level < 0) {
        throw Error("model config: feature_level must be non-negative");
    }
    if (!(alpha >= 0.0) || !(lambda_c >= 0.0) || !(lambda_s >= 0.0)) {
        throw Error("model config: alpha, lambda_c and lambda_s must be non-negative");
    }
}

namespace {

json config_json(const ModelConfig& c)
{
    return json{{"latent_dim", c.latent_dim},   {"conv_width", c.conv_width},     {"fc_width", c.fc_width},
                {"pool_blocks", c.pool_blocks}, {"decoder_convs", c.decoder_convs}, {"spiral_length", c.spiral_length},
                {"feature_level", c.feature_level}, {"class_count", c.class_count}, {"alpha", c.alpha},
                {"lambda_c", c.lambda_c},       {"lambda_s", c.lambda_s}};
}

ModelConfig config_from(const json& j)
{
    ModelConfig c;
    try {
        c.latent_dim = j.at("latent_dim");
        c.conv_width = j.at("conv_width");
        c.fc_width = j.at("fc_width");
        c.pool_blocks = j.at("pool_blocks");
        c.decoder_convs = j.at("decoder_convs");
        c.spiral_length = j.at("spiral_length");
        c.feature_level = j.at("feature_level");
        c.class_count = j.at("class_count");
        c.alpha = j.at("alpha");
        c.lambda_c = j.at("lambda_c");
        c.lambda_s = j.at("lambda_s");
    } catch (const json::exception& e) {
        throw Error(std::string("model config: ") + e.what());
    }
    c.validate();
    return c;
}

} // namespace

std::string ModelConfig::to_json() const { return config_json(*this).dump(); }

ModelConfig ModelConfig::from_json(const std::string& text)
{
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw Error(std::string("model config: ") + e.what());
    }
    return config_from(j);
}

// ---- topology ---------------------------------------------------------------

std::vector<int> ModelTopology::level_vertex_ids(int level) const
{
    if (level < 0 || level >= static_cast<int>(hierarchy.levels.size())) {
        throw Error("topology has no level " + std::to_string(level));
    }
    std::vector<int> ids(body_vertices());
    std::iota(ids.begin(), ids.end(), 0);
    for (int k = 0; k < level; ++k) {
        const SparseMap& d = hierarchy.down_maps[k];
        std::vector<int> next(static_cast<std::size_t>(d.rows()));
        for (Eigen::Index r = 0; r < d.rows(); ++r) {
            double best = -1.0;
            for (SparseMap::InnerIterator it(d, r); it; ++it) {
                if (it.value() > best) {
                    best = it.value();
                    next[r] = ids[it.col()];
                }
            }
        }
        ids = std::move(next);
    }
    return ids;
}

std::shared_ptr<const ModelTopology> make_topology(MeshHierarchy hierarchy, int spiral_length)
{
    auto t = std::make_shared<ModelTopology>();
    t->hierarchy = std::move(hierarchy);
    for (const TriMesh& level : t->hierarchy.levels) {
        t->spirals.push_back(build_spirals(level, spiral_length));
    }
    return t;
}

std::shared_ptr<const ModelTopology> humanoid_topology()
{
    static const std::shared_ptr<const ModelTopology> topology = [] {
        const HumanoidModel& m = humanoid();
        auto t = std::make_shared<ModelTopology>();
        t->hierarchy = m.hierarchy;
        t->spirals = m.spirals;
        return std::shared_ptr<const ModelTopology>(t);
    }();
    return topology;
}

// ---- network ----------------------------------------------------------------

template <class T>
CvaeNet<T>::CvaeNet(const ModelConfig& config, std::shared_ptr<const ModelTopology> topology)
    : config_(config), topology_(std::move(topology))
{
    config_.validate();
    if (!topology_) {
        throw Error("cvae: missing topology");
    }
    const int levels = static_cast<int>(topology_->hierarchy.levels.size());
    if (config_.feature_level + config_.pool_blocks >= levels) {
        throw Error("cvae: feature level " + std::to_string(config_.feature_level) + " with " +
                    std::to_string(config_.pool_blocks) + " pooling blocks needs " +
                    std::to_string(config_.feature_level + config_.pool_blocks + 1) + " hierarchy levels, topology has " +
                    std::to_string(levels));
    }
    for (int l = config_.feature_level; l < config_.feature_level + config_.pool_blocks; ++l) {
        if (topology_->spirals.at(l).length != config_.spiral_length) {
            throw Error("cvae: topology spirals have length " + std::to_string(topology_->spirals[l].length) +
                        ", config wants " + std::to_string(config_.spiral_length));
        }
        down_.push_back(topology_->hierarchy.down_maps.at(l).template cast<T>());
    }

    const int L = config_.spiral_length, w = config_.conv_width;
    auto add = [&](const std::string& name, int rows, int cols) {
        names.push_back(name);
        params.push_back(Mat::Zero(rows, cols));
    };
    for (int i = 0; i < config_.pool_blocks; ++i) {
        const int in = i == 0 ? config_.input_channels() : w;
        add("enc.conv" + std::to_string(i) + ".w", in * L, w);
        add("enc.conv" + std::to_string(i) + ".b", 1, w);
    }
    const int coarse = static_cast<int>(topology_->level_vertices(config_.feature_level + config_.pool_blocks));
    add("enc.fc.w", coarse * w, config_.fc_width);
    add("enc.fc.b", 1, config_.fc_width);
    add("enc.mu.w", config_.fc_width, config_.latent_dim);
    add("enc.mu.b", 1, config_.latent_dim);
    add("enc.logvar.w", config_.fc_width, config_.latent_dim);
    add("enc.logvar.b", 1, config_.latent_dim);
    add("dec.xyz.w", 3 * L, w);
    add("dec.xyz.b", 1, w);
    add("dec.z.w", config_.latent_dim, w);
    for (int i = 1; i < config_.decoder_convs; ++i) {
        add("dec.conv" + std::to_string(i) + ".w", w * L, w);
        add("dec.conv" + std::to_string(i) + ".b", 1, w);
    }
    add("dec.out.w", w * L, config_.output_channels());
    add("dec.out.b", 1, config_.output_channels());
}

template <class T>
std::size_t CvaeNet<T>::index_of(const std::string& name) const
{
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (names[i] == name) {
            return i;
        }
    }
    throw Error("cvae: no parameter " + name);
}

template <class T>
void CvaeNet<T>::initialize(std::uint64_t seed)
{
    for (std::size_t i = 0; i < params.size(); ++i) {
        Mat& p = params[i];
        if (names[i].ends_with(".b")) {
            p.setZero();
            continue;
        }
        Rng rng(Rng::derive_seed(seed, names[i]));
        const bool head = names[i].starts_with("enc.mu") || names[i].starts_with("enc.logvar") ||
                          names[i].starts_with("dec.out");
        const double sd = std::sqrt((head ? 1.0 : 2.0) / static_cast<double>(p.rows()));
        for (Eigen::Index k = 0; k < p.size(); ++k) {
            p.data()[k] = static_cast<T>(sd * rng.normal());
        }
    }
}

template <class T>
void CvaeNet<T>::zero_final_layers()
{
    for (const char* n : {"enc.mu.w", "enc.mu.b", "enc.logvar.w", "enc.logvar.b", "dec.out.w", "dec.out.b"}) {
        params[index_of(n)].setZero();
    }
}

template <class T>
typename CvaeNet<T>::Bound CvaeNet<T>::bind(Tape& tape, bool trainable) const
{
    Bound b;
    for (const Mat& p : params) {
        b.p.push_back(trainable ? tape.parameter(p) : tape.constant(p));
    }
    return b;
}

template <class T>
ad::Var CvaeNet<T>::spiral_conv(Tape& tape, ad::Var x, ad::Var w, ad::Var b, int level, int batch) const
{
    const SpiralIndex& s = topology_->spirals[level];
    const int v = static_cast<int>(s.vertex_count());
    std::vector<int> idx(static_cast<std::size_t>(batch) * s.indices.size());
    for (int k = 0; k < batch; ++k) {
        for (std::size_t i = 0; i < s.indices.size(); ++i) {
            idx[k * s.indices.size() + i] = k * v + s.indices[i];
        }
    }
    return tape.linear(tape.gather(x, idx, s.length), w, b);
}

template <class T>
std::pair<ad::Var, ad::Var> CvaeNet<T>::encode(Tape& tape, const Bound& b, ad::Var input, int batch) const
{
    const Mat& in = tape.value(input);
    const Eigen::Index expect = static_cast<Eigen::Index>(batch) * feature_vertices();
    if (in.rows() != expect || in.cols() != config_.input_channels()) {
        throw Error("encode: input is " + std::to_string(in.rows()) + "x" + std::to_string(in.cols()) + ", expected " +
                    std::to_string(expect) + "x" + std::to_string(config_.input_channels()) + " (" +
                    std::to_string(batch) + " frames of " + std::to_string(feature_vertices()) + " vertices)");
    }
    std::size_t k = 0;
    ad::Var h = input;
    for (int i = 0; i < config_.pool_blocks; ++i) {
        h = tape.relu(spiral_conv(tape, h, b.p[k], b.p[k + 1], config_.feature_level + i, batch));
        h = tape.sparse_left(down_[i], h, batch);
        k += 2;
    }
    const Eigen::Index coarse = tape.value(h).rows() / batch;
    h = tape.reshape(h, batch, coarse * config_.conv_width);
    h = tape.relu(tape.linear(h, b.p[k], b.p[k + 1]));
    ad::Var mu = tape.linear(h, b.p[k + 2], b.p[k + 3]);
    ad::Var logvar = tape.linear(h, b.p[k + 4], b.p[k + 5]);
    return {mu, logvar};
}

template <class T>
std::pair<ad::Var, ad::Var> CvaeNet<T>::decode(Tape& tape, const Bound& b, ad::Var z, ad::Var positions,
                                               int batch) const
{
    const int v = feature_vertices();
    if (tape.value(positions).rows() != static_cast<Eigen::Index>(batch) * v || tape.value(positions).cols() != 3) {
        throw Error("decode: positions are " + std::to_string(tape.value(positions).rows()) + "x" +
                    std::to_string(tape.value(positions).cols()) + ", expected " + std::to_string(batch * v) + "x3");
    }
    if (tape.value(z).rows() != batch || tape.value(z).cols() != config_.latent_dim) {
        throw Error("decode: z is " + std::to_string(tape.value(z).rows()) + "x" +
                    std::to_string(tape.value(z).cols()) + ", expected " + std::to_string(batch) + "x" +
                    std::to_string(config_.latent_dim));
    }
    const int level = config_.feature_level;
    std::size_t k = 2 * static_cast<std::size_t>(config_.pool_blocks) + 6;
    // The latent vector is attached to every vertex; its contribution to a
    // spiral convolution is the same linear image at each vertex.
    ad::Var h = spiral_conv(tape, positions, b.p[k], b.p[k + 1], level, batch);
    h = tape.relu(tape.add(h, tape.repeat_rows(tape.matmul(z, b.p[k + 2]), v)));
    k += 3;
    for (int i = 1; i < config_.decoder_convs; ++i) {
        h = tape.relu(spiral_conv(tape, h, b.p[k], b.p[k + 1], level, batch));
        k += 2;
    }
    ad::Var out = spiral_conv(tape, h, b.p[k], b.p[k + 1], level, batch);
    ad::Var contact = tape.sigmoid(tape.slice_cols(out, 0, 1));
    ad::Var semantics = tape.softmax(tape.slice_cols(out, 1, config_.class_count));
    return {contact, semantics};
}

template <class T>
typename CvaeNet<T>::Losses CvaeNet<T>::loss(Tape& tape, ad::Var contact, ad::Var semantics,
                                             const Mat& contact_target, const Mat& semantic_target, ad::Var mu,
                                             ad::Var logvar, int batch, T weight) const
{
    const T per = weight / static_cast<T>(batch);
    ad::Var kl = tape.scale(tape.kl_normal(mu, logvar), per);
    ad::Var bce = tape.bce(contact, contact_target);
    ad::Var cce = tape.cce(semantics, semantic_target);
    ad::Var rec = tape.scale(
        tape.add(tape.scale(bce, static_cast<T>(config_.lambda_c)), tape.scale(cce, static_cast<T>(config_.lambda_s))),
        per);
    ad::Var total = tape.add(tape.scale(kl, static_cast<T>(config_.alpha)), rec);
    return {total, kl, rec};
}

template class CvaeNet<float>;
template class CvaeNet<double>;

template <class T>
BatchTensors<T> make_batch(const InteractionDataset& ds, std::span<const int> frames, int class_count)
{
    const Eigen::Index v = ds.vertex_count;
    const Eigen::Index rows = static_cast<Eigen::Index>(frames.size()) * v;
    BatchTensors<T> t;
    t.input = ad::Matrix<T>::Zero(rows, 4 + class_count);
    t.positions.resize(rows, 3);
    t.contact.resize(rows, 1);
    t.semantics = ad::Matrix<T>::Zero(rows, class_count);
    for (std::size_t f = 0; f < frames.size(); ++f) {
        const InteractionFrame& fr = ds.frames.at(static_cast<std::size_t>(frames[f]));
        for (Eigen::Index i = 0; i < v; ++i) {
            const Eigen::Index r = static_cast<Eigen::Index>(f) * v + i;
            const int cls = fr.classes[i];
            if (cls >= class_count) {
                throw Error("frame " + std::to_string(frames[f]) + " has class " + std::to_string(cls) +
                            " but the model has " + std::to_string(class_count));
            }
            for (int a = 0; a < 3; ++a) {
                t.positions(r, a) = static_cast<T>(fr.positions(i, a));
                t.input(r, a) = t.positions(r, a);
            }
            t.contact(r, 0) = static_cast<T>(fr.contact[i]);
            t.input(r, 3) = t.contact(r, 0);
            t.semantics(r, cls) = T(1);
            t.input(r, 4 + cls) = T(1);
        }
    }
    return t;
}

template BatchTensors<float> make_batch<float>(const InteractionDataset&, std::span<const int>, int);
template BatchTensors<double> make_batch<double>(const InteractionDataset&, std::span<const int>, int);

// ---- checkpoint -------------------------------------------------------------

CvaeNet<float> Checkpoint::network() const
{
    CvaeNet<float> net(config, topology);
    if (net.names != param_names || net.params.size() != params.size()) {
        throw Error("checkpoint parameters do not match the model config");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].rows() != net.params[i].rows() || params[i].cols() != net.params[i].cols()) {
            throw Error("checkpoint parameter " + param_names[i] + " has the wrong shape");
        }
    }
    net.params = params;
    return net;
}

namespace {

constexpr char kCheckpointMagic[] = "HSICKPT1";

json sparse_header(const SparseMap& m) { return {m.rows(), m.cols(), m.nonZeros()}; }

void write_sparse(std::ostream& os, SparseMap m)
{
    m.makeCompressed();
    binio::write_span<int>(os, {m.outerIndexPtr(), static_cast<std::size_t>(m.rows() + 1)});
    binio::write_span<int>(os, {m.innerIndexPtr(), static_cast<std::size_t>(m.nonZeros())});
    binio::write_span<double>(os, {m.valuePtr(), static_cast<std::size_t>(m.nonZeros())});
}

SparseMap read_sparse(std::istream& is, const json& h)
{
    const Eigen::Index rows = h.at(0), cols = h.at(1), nnz = h.at(2);
    std::vector<int> outer(static_cast<std::size_t>(rows + 1)), inner(static_cast<std::size_t>(nnz));
    std::vector<double> values(static_cast<std::size_t>(nnz));
    binio::read_into<int>(is, outer, "sparse map");
    binio::read_into<int>(is, inner, "sparse map");
    binio::read_into<double>(is, values, "sparse map");
    std::vector<Eigen::Triplet<double>> trip;
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (int k = outer[r]; k < outer[r + 1]; ++k) {
            if (k < 0 || k >= nnz || inner[k] < 0 || inner[k] >= cols) {
                throw Error("checkpoint: corrupt sparse map");
            }
            trip.emplace_back(static_cast<int>(r), inner[k], values[k]);
        }
    }
    SparseMap m(rows, cols);
    m.setFromTriplets(trip.begin(), trip.end());
    return m;
}

} // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt)
{
    const ModelTopology& topo = *ckpt.topology;
    json header;
    header["config"] = config_json(ckpt.config);
    header["class_names"] = ckpt.class_names;
    header["meta"] = {{"seed", ckpt.meta.seed},
                      {"steps", ckpt.meta.steps},
                      {"epochs", ckpt.meta.epochs},
                      {"loss_curve", ckpt.meta.loss_curve},
                      {"val_curve", ckpt.meta.val_curve}};
    json params = json::array();
    for (std::size_t i = 0; i < ckpt.params.size(); ++i) {
        params.push_back({ckpt.param_names[i], ckpt.params[i].rows(), ckpt.params[i].cols()});
    }
    header["params"] = params;
    json levels = json::array(), down = json::array(), up = json::array(), spirals = json::array();
    for (const TriMesh& m : topo.hierarchy.levels) {
        levels.push_back({m.vertex_count(), m.face_count()});
    }
    for (const SparseMap& m : topo.hierarchy.down_maps) {
        down.push_back(sparse_header(m));
    }
    for (const SparseMap& m : topo.hierarchy.up_maps) {
        up.push_back(sparse_header(m));
    }
    for (const SpiralIndex& s : topo.spirals) {
        spirals.push_back({s.length, s.vertex_count()});
    }
    header["topology"] = {{"levels", levels}, {"down", down}, {"up", up}, {"spirals", spirals}};
    const std::string text = header.dump();

    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw Error("cannot write " + path.string());
    }
    binio::write_bytes(os, {kCheckpointMagic, 8});
    binio::write<std::uint64_t>(os, text.size());
    binio::write_bytes(os, text);
    for (const auto& p : ckpt.params) {
        binio::write_span<float>(os, {p.data(), static_cast<std::size_t>(p.size())});
    }
    for (const TriMesh& m : topo.hierarchy.levels) {
        for (const Vec3& v : m.vertices) {
            binio::write_span<double>(os, {v.data(), 3});
        }
        for (const Face& f : m.faces) {
            binio::write_span<int>(os, {f.data(), 3});
        }
    }
    for (const SparseMap& m : topo.hierarchy.down_maps) {
        write_sparse(os, m);
    }
    for (const SparseMap& m : topo.hierarchy.up_maps) {
        write_sparse(os, m);
    }
    for (const SpiralIndex& s : topo.spirals) {
        binio::write_span<int>(os, s.indices);
    }
    if (!os) {
        throw Error("failed writing " + path.string());
    }
}

Checkpoint load_checkpoint(const std::filesystem::path& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw Error("cannot open checkpoint " + path.string());
    }
    if (binio::read_bytes(is, 8, "checkpoint magic") != std::string_view(kCheckpointMagic, 8)) {
        throw Error(path.string() + " is not a checkpoint (bad magic)");
    }
    const auto size = binio::read<std::uint64_t>(is, "checkpoint header size");
    if (size > (std::uint64_t{1} << 30)) {
        throw Error("checkpoint header too large");
    }
    json header;
    try {
        header = json::parse(binio::read_bytes(is, size, "checkpoint header"));
    } catch (const json::exception& e) {
        throw Error(std::string("checkpoint header: ") + e.what());
    }
    Checkpoint c;
    try {
        c.config = config_from(header.at("config"));
        c.class_names = header.at("class_names").get<std::vector<std::string>>();
        const json& meta = header.at("meta");
        c.meta.seed = meta.at("seed");
        c.meta.steps = meta.at("steps");
        c.meta.epochs = meta.at("epochs");
        c.meta.loss_curve = meta.at("loss_curve").get<std::vector<double>>();
        c.meta.val_curve = meta.at("val_curve").get<std::vector<double>>();
        for (const json& p : header.at("params")) {
            c.param_names.push_back(p.at(0));
            ad::Matrix<float> m(p.at(1).get<Eigen::Index>(), p.at(2).get<Eigen::Index>());
            c.params.push_back(std::move(m));
        }
        for (auto& m : c.params) {
            binio::read_into<float>(is, {m.data(), static_cast<std::size_t>(m.size())}, "parameters");
        }
        auto topo = std::make_shared<ModelTopology>();
        const json& t = header.at("topology");
        for (const json& l : t.at("levels")) {
            TriMesh m;
            m.vertices.resize(l.at(0).get<std::size_t>());
            m.faces.resize(l.at(1).get<std::size_t>());
            for (Vec3& v : m.vertices) {
                binio::read_into<double>(is, {v.data(), 3}, "hierarchy vertices");
            }
            for (Face& f : m.faces) {
                binio::read_into<int>(is, {f.data(), 3}, "hierarchy faces");
            }
            m.validate();
            topo->hierarchy.levels.push_back(std::move(m));
        }
        for (const json& h : t.at("down")) {
            topo->hierarchy.down_maps.push_back(read_sparse(is, h));
        }
        for (const json& h : t.at("up")) {
            topo->hierarchy.up_maps.push_back(read_sparse(is, h));
        }
        for (const json& h : t.at("spirals")) {
            SpiralIndex s;
            s.length = h.at(0);
            s.indices.resize(static_cast<std::size_t>(s.length) * h.at(1).get<std::size_t>());
            binio::read_into<int>(is, s.indices, "spiral tables");
            topo->spirals.push_back(std::move(s));
        }
        c.topology = std::move(topo);
    } catch (const json::exception& e) {
        throw Error(std::string("checkpoint header: ") + e.what());
    }
    c.network(); // validates parameter names and shapes against the config
    return c;
}

// ---- training ---------------------------------------------------------------

bool is_validation_frame(std::size_t index, double fraction)
{
    if (fraction <= 0.0) {
        return false;
    }
    const std::uint64_t h = Rng::mix(index ^ 0x5bd1e9955bd1e995ULL);
    return static_cast<double>(h >> 11) * 0x1.0p-53 < fraction;
}

namespace {

using MatF = ad::Matrix<float>;

struct ShardResult {
    std::vector<MatF> grads;
    double loss = 0.0;
};

// Evaluates the batch in fixed-size shards; shard gradients are summed in shard order.
ShardResult batch_step(const CvaeNet<float>& net, const InteractionDataset& ds, std::span<const int> frames,
                       const MatF& noise, int micro, bool with_grad)
{
    const int total = static_cast<int>(frames.size());
    const int shards = (total + micro - 1) / micro;
    std::vector<ShardResult> parts(static_cast<std::size_t>(shards));
    parallel_for_each(parts.size(), [&](std::size_t s) {
        const int begin = static_cast<int>(s) * micro, count = std::min(micro, total - begin);
        const auto ids = frames.subspan(static_cast<std::size_t>(begin), static_cast<std::size_t>(count));
        const BatchTensors<float> t = make_batch<float>(ds, ids, net.config().class_count);
        ad::Tape<float> tape;
        const auto bound = net.bind(tape, with_grad);
        const auto [mu, logvar] = net.encode(tape, bound, tape.constant(t.input), count);
        const ad::Var z = tape.reparameterize(mu, logvar, noise.middleRows(begin, count));
        const auto [contact, semantics] = net.decode(tape, bound, z, tape.constant(t.positions), count);
        const auto losses = net.loss(tape, contact, semantics, t.contact, t.semantics, mu, logvar, count,
                                     static_cast<float>(count) / static_cast<float>(total));
        parts[s].loss = tape.scalar(losses.total);
        if (with_grad) {
            tape.backward(losses.total);
            for (const ad::Var p : bound.p) {
                parts[s].grads.push_back(tape.grad(p));
            }
        }
    });
    ShardResult out;
    for (ShardResult& p : parts) {
        out.loss += p.loss;
        if (out.grads.empty()) {
            out.grads = std::move(p.grads);
            continue;
        }
        for (std::size_t i = 0; i < out.grads.size(); ++i) {
            if (p.grads[i].size() == 0) {
                continue;
            }
            if (out.grads[i].size() == 0) {
                out.grads[i] = p.grads[i];
            } else {
                out.grads[i] += p.grads[i];
            }
        }
    }
    return out;
}

std::string last_losses(const std::vector<double>& curve)
{
    std::ostringstream s;
    const std::size_t from = curve.size() > 5 ? curve.size() - 5 : 0;
    for (std::size_t i = from; i < curve.size(); ++i) {
        s << (i > from ? ", " : "") << curve[i];
    }
    return curve.empty() ? "none" : s.str();
}

} // namespace

Checkpoint train(const InteractionDataset& ds, const ModelConfig& config, std::shared_ptr<const ModelTopology> topology,
                 const TrainOptions& options)
{
    ds.validate();
    CvaeNet<float> net(config, std::move(topology));
    if (ds.frames.empty()) {
        throw Error("train: dataset has no frames");
    }
    if (static_cast<int>(ds.vertex_count) != net.feature_vertices()) {
        throw Error("train: dataset has " + std::to_string(ds.vertex_count) + " vertices per frame, model expects " +
                    std::to_string(net.feature_vertices()));
    }
    if (ds.feature_classes() != config.class_count) {
        throw Error("train: dataset has " + std::to_string(ds.feature_classes()) + " feature classes, model expects " +
                    std::to_string(config.class_count));
    }
    if (options.batch_size < 1 || options.micro_batch < 1 || options.epochs < 0 || !(options.lr > 0.0)) {
        throw Error("train: batch sizes and learning rate must be positive, epochs non-negative");
    }
    net.initialize(Rng::derive_seed(options.seed, "init"));

    std::vector<int> train_ids, val_ids;
    for (std::size_t i = 0; i < ds.frames.size(); ++i) {
        (is_validation_frame(i, options.val_fraction) ? val_ids : train_ids).push_back(static_cast<int>(i));
    }
    if (train_ids.empty()) {
        throw Error("train: validation split left no training frames");
    }

    Checkpoint ckpt;
    ckpt.config = config;
    ckpt.topology = net.topology_ptr();
    ckpt.param_names = net.names;
    ckpt.class_names = ds.class_names;
    ckpt.meta.seed = options.seed;

    ad::AdamState<float> adam(options.lr);
    std::vector<MatF*> ptrs;
    for (MatF& p : net.params) {
        ptrs.push_back(&p);
    }
    double best_val = std::numeric_limits<double>::infinity();
    std::vector<MatF> best_params = net.params;
    int stale = 0;
    long step = 0;
    bool stop = false;
    for (int epoch = 0; epoch < options.epochs && !stop; ++epoch) {
        Rng shuffle(Rng::derive_seed(options.seed, "shuffle", static_cast<std::uint64_t>(epoch)));
        std::vector<int> order = train_ids;
        for (std::size_t i = order.size(); i > 1; --i) {
            std::swap(order[i - 1], order[shuffle.below(i)]);
        }
        for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(options.batch_size)) {
            if (options.max_steps >= 0 && step >= options.max_steps) {
                stop = true;
                break;
            }
            const std::size_t count = std::min(order.size() - begin, static_cast<std::size_t>(options.batch_size));
            const std::span<const int> frames(order.data() + begin, count);
            Rng noise_rng(Rng::derive_seed(options.seed, "noise", static_cast<std::uint64_t>(step)));
            MatF noise(static_cast<Eigen::Index>(count), config.latent_dim);
            for (Eigen::Index k = 0; k < noise.size(); ++k) {
                noise.data()[k] = static_cast<float>(noise_rng.normal());
            }
            ShardResult r = batch_step(net, ds, frames, noise, options.micro_batch, true);
            if (!std::isfinite(r.loss)) {
                throw Error("training diverged at step " + std::to_string(step) + " (loss " + std::to_string(r.loss) +
                            "); last finite losses: " + last_losses(ckpt.meta.loss_curve));
            }
            adam.update(ptrs, r.grads);
            ckpt.meta.loss_curve.push_back(r.loss);
            ++step;
            if (options.on_step) {
                options.on_step(step, epoch, r.loss);
            }
            if (options.target_accuracy > 0.0 && step % std::max(options.accuracy_every, 1) == 0) {
                ckpt.params = net.params;
                const double acc = contact_accuracy(ckpt, ds, train_ids);
                spdlog::debug("step {} training contact accuracy {:.4f}", step, acc);
                if (acc >= options.target_accuracy) {
                    spdlog::info("step {}: training contact accuracy {:.4f} reached target", step, acc);
                    stop = true;
                    break;
                }
            }
        }
        ckpt.meta.epochs = epoch + 1;
        if (!val_ids.empty()) {
            const MatF zero = MatF::Zero(static_cast<Eigen::Index>(val_ids.size()), config.latent_dim);
            const double val = batch_step(net, ds, val_ids, zero, options.micro_batch, false).loss;
            ckpt.meta.val_curve.push_back(val);
            spdlog::info("epoch {} step {} validation loss {:.4f}", epoch + 1, step, val);
            if (val < best_val) {
                best_val = val;
                best_params = net.params;
                stale = 0;
            } else if (options.patience > 0 && ++stale >= options.patience) {
                spdlog::info("stopping early: no validation improvement for {} epochs", stale);
                net.params = best_params;
                stop = true;
            }
        }
    }
    ckpt.meta.steps = step;
    ckpt.params = net.params;
    return ckpt;
}

// ---- inference --------------------------------------------------------------

double contact_accuracy(const Checkpoint& ckpt, const InteractionDataset& ds, std::span<const int> frames)
{
    const CvaeNet<float> net = ckpt.network();
    std::vector<double> part(frames.size());
    std::vector<double> count(frames.size());
    parallel_for_each(frames.size(), [&](std::size_t f) {
        const BatchTensors<float> t = make_batch<float>(ds, frames.subspan(f, 1), ckpt.config.class_count);
        ad::Tape<float> tape;
        const auto bound = net.bind(tape, false);
        const auto [mu, logvar] = net.encode(tape, bound, tape.constant(t.input), 1);
        const auto [contact, semantics] = net.decode(tape, bound, mu, tape.constant(t.positions), 1);
        const MatF& c = tape.value(contact);
        for (Eigen::Index i = 0; i < c.rows(); ++i) {
            part[f] += ((c(i, 0) > 0.5f) == (t.contact(i, 0) > 0.5f)) ? 1.0 : 0.0;
        }
        count[f] = static_cast<double>(c.rows());
    });
    const double n = std::accumulate(count.begin(), count.end(), 0.0);
    return n > 0 ? std::accumulate(part.begin(), part.end(), 0.0) / n : 0.0;
}

FeatureMap decode_map(const Checkpoint& ckpt, const MatrixRf& positions, const Eigen::VectorXf& z)
{
    const CvaeNet<float> net = ckpt.network();
    ad::Tape<float> tape;
    const auto bound = net.bind(tape, false);
    const auto [contact, semantics] =
        net.decode(tape, bound, tape.constant(MatF(z.transpose())), tape.constant(positions), 1);
    FeatureMap m;
    m.contact = tape.value(contact).col(0);
    m.semantics = tape.value(semantics);
    return m;
}

MatrixRf canonical_feature_positions(const Checkpoint& ckpt, const BodyMesh& body)
{
    if (body.vertex_count() != ckpt.topology->body_vertices()) {
        throw Error("topology mismatch: body has " + std::to_string(body.vertex_count()) +
                    " vertices, model expects " + std::to_string(ckpt.topology->body_vertices()));
    }
    const BodyMesh canon = canonicalize(body);
    const std::vector<int> ids = ckpt.topology->level_vertex_ids(ckpt.config.feature_level);
    MatrixRf pos(static_cast<Eigen::Index>(ids.size()), 3);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        pos.row(static_cast<Eigen::Index>(i)) = canon.mesh.vertices[ids[i]].cast<float>().transpose();
    }
    return pos;
}

std::vector<FeatureMap> sample(const Checkpoint& ckpt, const BodyMesh& body, int n, std::uint64_t seed, bool mode)
{
    if (n < 0) {
        throw Error("sample count must be non-negative");
    }
    const MatrixRf pos = canonical_feature_positions(ckpt, body);
    std::vector<FeatureMap> out(static_cast<std::size_t>(n));
    parallel_for_each(out.size(), [&](std::size_t i) {
        Eigen::VectorXf z = Eigen::VectorXf::Zero(ckpt.config.latent_dim);
        if (!mode) {
            Rng rng(Rng::derive_seed(seed, "sample", i));
            for (Eigen::Index k = 0; k < z.size(); ++k) {
                z[k] = static_cast<float>(rng.normal());
            }
        }
        out[i] = decode_map(ckpt, pos, z);
    });
    return out;
}

} // namespace hsi
