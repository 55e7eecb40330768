#include "hsi/interaction.hpp"
#include "hsi/binary_io.hpp"
#include "hsi/parallel.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>

namespace hsi {

std::vector<int> FeatureMap::labels() const
{
    std::vector<int> out(static_cast<std::size_t>(semantics.rows()));
    for (Eigen::Index i = 0; i < semantics.rows(); ++i) {
        Eigen::Index best = 0;
        semantics.row(i).maxCoeff(&best);
        out[i] = static_cast<int>(best);
    }
    return out;
}

void FeatureMap::validate() const
{
    if (semantics.rows() != contact.size()) {
        throw Error("feature map contact and semantics disagree on vertex count");
    }
    for (Eigen::Index i = 0; i < contact.size(); ++i) {
        if (!(contact[i] >= 0.0f && contact[i] <= 1.0f)) {
            throw Error("contact of vertex " + std::to_string(i) + " outside [0, 1]");
        }
        const double sum = semantics.row(i).cast<double>().sum();
        if (std::abs(sum - 1.0) > 1e-5) {
            throw Error("semantic row " + std::to_string(i) + " sums to " + std::to_string(sum));
        }
    }
}

void FeatureMap::validate_training() const
{
    validate();
    for (Eigen::Index i = 0; i < contact.size(); ++i) {
        if (contact[i] != 0.0f && contact[i] != 1.0f) {
            throw Error("training contact of vertex " + std::to_string(i) + " is not binary");
        }
        const auto row = semantics.row(i);
        if ((row.array() == 1.0f).count() != 1 || (row.array() == 0.0f).count() != row.size() - 1) {
            throw Error("training semantics of vertex " + std::to_string(i) + " is not one-hot");
        }
    }
}

FeatureMap FeatureMap::from_labels(std::span<const std::uint8_t> contact, std::span<const std::uint16_t> classes,
                                   int class_count)
{
    FeatureMap f;
    const auto n = static_cast<Eigen::Index>(contact.size());
    f.contact.resize(n);
    f.semantics = MatrixRf::Zero(n, class_count);
    for (Eigen::Index i = 0; i < n; ++i) {
        f.contact[i] = contact[i] ? 1.0f : 0.0f;
        if (classes[i] >= class_count) {
            throw Error("feature class " + std::to_string(classes[i]) + " out of range");
        }
        f.semantics(i, classes[i]) = 1.0f;
    }
    return f;
}

int face_label(const SceneMesh& scene, int face)
{
    const Face& t = scene.mesh.faces[face];
    const int a = scene.labels[t[0]], b = scene.labels[t[1]], c = scene.labels[t[2]];
    if (a == b || a == c) {
        return a;
    }
    if (b == c) {
        return b;
    }
    return std::min({a, b, c});
}

ExtractedFeatures extract_features(std::span<const Vec3> vertices, const SceneMesh& scene, const ProximityTree& tree,
                                   double threshold)
{
    if (scene.mesh.faces.empty()) {
        throw Error("cannot extract features against an empty scene");
    }
    if (!(threshold > 0.0)) {
        throw Error("contact threshold must be positive");
    }
    const auto n = vertices.size();
    ExtractedFeatures out;
    out.record.distances.resize(n);
    out.record.closest_labels.resize(n);
    out.features.contact = Eigen::VectorXf::Zero(static_cast<Eigen::Index>(n));
    out.features.semantics = MatrixRf::Zero(static_cast<Eigen::Index>(n), scene.class_count() + 1);
    parallel_for_each(n, [&](std::size_t i) {
        const ClosestPointResult cp = tree.closest_point(vertices[i]);
        const int label = face_label(scene, cp.face_index);
        out.record.distances[i] = cp.distance;
        out.record.closest_labels[i] = label;
        const bool touching = cp.distance <= threshold;
        out.features.contact[static_cast<Eigen::Index>(i)] = touching ? 1.0f : 0.0f;
        out.features.semantics(static_cast<Eigen::Index>(i), touching ? feature_class(label) : kVoidClass) = 1.0f;
    });
    return out;
}

EulerZYX decompose_root_rotation(const Mat3& r)
{
    EulerZYX e;
    const double s = std::clamp(-r(2, 0), -1.0, 1.0);
    if (std::abs(s) > 1.0 - 1e-7) {
        // Gimbal lock: yaw and pitch are coupled; the residual goes to pitch.
        e.roll = std::asin(s);
        e.yaw = 0.0;
        e.pitch = std::atan2(-r(1, 2), r(1, 1));
        return e;
    }
    e.roll = std::asin(s);
    e.pitch = std::atan2(r(2, 1), r(2, 2));
    e.yaw = std::atan2(r(1, 0), r(0, 0));
    return e;
}

Mat3 compose_root_rotation(const EulerZYX& e)
{
    return (Eigen::AngleAxisd(e.yaw, Vec3::UnitZ()) * Eigen::AngleAxisd(e.roll, Vec3::UnitY()) *
            Eigen::AngleAxisd(e.pitch, Vec3::UnitX()))
        .toRotationMatrix();
}

BodyMesh canonicalize(const BodyMesh& body)
{
    BodyMesh out = body;
    const EulerZYX e = decompose_root_rotation(body.root.rotation);
    out.root.rotation = Eigen::AngleAxisd(e.pitch, Vec3::UnitX()).toRotationMatrix();
    const int up = up_index();
    for (int a = 0; a < 3; ++a) {
        if (a != up) {
            out.root.translation[a] = 0.0;
        }
    }
    out.update();
    return out;
}

void InteractionDataset::validate() const
{
    const int classes = feature_classes();
    for (std::size_t f = 0; f < frames.size(); ++f) {
        const InteractionFrame& fr = frames[f];
        if (fr.positions.rows() != vertex_count || fr.positions.cols() != 3 || fr.contact.size() != vertex_count ||
            fr.classes.size() != vertex_count) {
            throw Error("frame " + std::to_string(f) + " does not match the dataset vertex count " +
                        std::to_string(vertex_count));
        }
        for (std::uint16_t c : fr.classes) {
            if (c >= classes) {
                throw Error("frame " + std::to_string(f) + " has class " + std::to_string(c) + " out of range");
            }
        }
    }
}

namespace {
constexpr std::string_view kDatasetMagic = "POSA1\n";
constexpr std::uint32_t kDatasetVersion = 1;
} // namespace

void write_dataset(const std::filesystem::path& path, const InteractionDataset& ds)
{
    ds.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error("cannot write " + path.string());
    }
    binio::write_bytes(out, kDatasetMagic);
    binio::write(out, kDatasetVersion);
    binio::write(out, static_cast<std::uint32_t>(ds.frames.size()));
    binio::write(out, ds.vertex_count);
    binio::write(out, static_cast<std::uint16_t>(ds.class_names.size()));
    for (const InteractionFrame& fr : ds.frames) {
        binio::write_span<float>(out, std::span<const float>(fr.positions.data(), fr.positions.size()));
        binio::write_span<std::uint8_t>(out, fr.contact);
        binio::write_span<std::uint16_t>(out, fr.classes);
    }
}

InteractionDataset read_dataset(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("cannot open " + path.string());
    }
    if (binio::read_bytes(in, kDatasetMagic.size(), "dataset magic") != kDatasetMagic) {
        throw Error(path.string() + " is not a POSA1 dataset (bad magic)");
    }
    const auto version = binio::read<std::uint32_t>(in, "dataset version");
    if (version != kDatasetVersion) {
        throw Error("unsupported dataset version " + std::to_string(version));
    }
    const auto frames = binio::read<std::uint32_t>(in, "frame count");
    InteractionDataset ds;
    ds.vertex_count = binio::read<std::uint32_t>(in, "vertex count");
    const auto classes = binio::read<std::uint16_t>(in, "class count");
    ds.class_names = default_class_names();
    if (ds.class_names.size() != classes) {
        ds.class_names.clear();
        for (int c = 0; c < classes; ++c) {
            ds.class_names.push_back("class" + std::to_string(c));
        }
    }
    ds.frames.resize(frames);
    for (InteractionFrame& fr : ds.frames) {
        fr.positions.resize(ds.vertex_count, 3);
        fr.contact.resize(ds.vertex_count);
        fr.classes.resize(ds.vertex_count);
        binio::read_into<float>(in, std::span<float>(fr.positions.data(), fr.positions.size()), "frame positions");
        binio::read_into<std::uint8_t>(in, fr.contact, "frame contact");
        binio::read_into<std::uint16_t>(in, fr.classes, "frame classes");
    }
    ds.validate();
    return ds;
}

std::string feature_maps_json(const std::vector<FeatureMap>& maps, const std::vector<std::string>& class_names)
{
    nlohmann::json arr = nlohmann::json::array();
    for (const FeatureMap& m : maps) {
        nlohmann::json sem = nlohmann::json::array();
        for (Eigen::Index i = 0; i < m.semantics.rows(); ++i) {
            sem.push_back(std::vector<float>(m.semantics.row(i).begin(), m.semantics.row(i).end()));
        }
        arr.push_back({{"contact", std::vector<float>(m.contact.begin(), m.contact.end())}, {"semantics", sem}});
    }
    return nlohmann::json{{"class_names", class_names}, {"maps", arr}}.dump();
}

std::vector<FeatureMap> feature_maps_from_json(const std::string& text)
{
    std::vector<FeatureMap> out;
    try {
        const nlohmann::json j = nlohmann::json::parse(text);
        for (const auto& m : j.at("maps")) {
            const auto contact = m.at("contact").get<std::vector<float>>();
            const auto& sem = m.at("semantics");
            if (sem.size() != contact.size() || contact.empty()) {
                throw Error("feature map contact and semantics disagree on vertex count");
            }
            FeatureMap f;
            f.contact = Eigen::Map<const Eigen::VectorXf>(contact.data(), static_cast<Eigen::Index>(contact.size()));
            const auto cols = sem[0].size();
            f.semantics.resize(static_cast<Eigen::Index>(sem.size()), static_cast<Eigen::Index>(cols));
            for (std::size_t i = 0; i < sem.size(); ++i) {
                const auto row = sem[i].get<std::vector<float>>();
                if (row.size() != cols) {
                    throw Error("ragged semantics rows");
                }
                for (std::size_t c = 0; c < cols; ++c) {
                    f.semantics(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = row[c];
                }
            }
            f.validate();
            out.push_back(std::move(f));
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("malformed feature maps: ") + e.what());
    }
    if (out.empty()) {
        throw Error("feature map file holds no maps");
    }
    return out;
}

} // namespace hsi
