#include "hsi/mesh_io.hpp"
#include "hsi/binary_io.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace hsi {

namespace {

[[noreturn]] void parse_error(const std::filesystem::path& path, const std::string& what)
{
    throw Error("failed to parse " + path.string() + ": " + what);
}

LoadedMesh load_obj(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot open " + path.string());
    }
    LoadedMesh out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ss(line);
        std::string tag;
        if (!(ss >> tag) || tag[0] == '#') {
            continue;
        }
        if (tag == "v") {
            Vec3 v;
            if (!(ss >> v.x() >> v.y() >> v.z())) {
                parse_error(path, "bad vertex on line " + std::to_string(line_no));
            }
            out.mesh.vertices.push_back(v);
        } else if (tag == "vn") {
            Vec3 n;
            if (!(ss >> n.x() >> n.y() >> n.z())) {
                parse_error(path, "bad normal on line " + std::to_string(line_no));
            }
            out.mesh.normals.push_back(n);
        } else if (tag == "f") {
            std::vector<int> poly;
            std::string token;
            while (ss >> token) {
                // "v", "v/vt", "v//vn", "v/vt/vn"
                const std::string head = token.substr(0, token.find('/'));
                int idx = 0;
                try {
                    idx = std::stoi(head);
                } catch (const std::exception&) {
                    parse_error(path, "bad face index '" + token + "' on line " + std::to_string(line_no));
                }
                idx = idx < 0 ? static_cast<int>(out.mesh.vertices.size()) + idx : idx - 1;
                poly.push_back(idx);
            }
            if (poly.size() < 3) {
                parse_error(path, "face with fewer than 3 vertices on line " + std::to_string(line_no));
            }
            for (std::size_t k = 1; k + 1 < poly.size(); ++k) {
                out.mesh.faces.push_back({poly[0], poly[k], poly[k + 1]});
            }
        }
    }
    if (!out.mesh.normals.empty() && out.mesh.normals.size() != out.mesh.vertices.size()) {
        out.mesh.normals.clear(); // per-corner normals are not supported; drop them
    }
    out.mesh.validate();
    return out;
}

enum class PlyType { I8, U8, I16, U16, I32, U32, F32, F64 };

PlyType ply_type(const std::string& name, const std::filesystem::path& path)
{
    if (name == "char" || name == "int8") return PlyType::I8;
    if (name == "uchar" || name == "uint8") return PlyType::U8;
    if (name == "short" || name == "int16") return PlyType::I16;
    if (name == "ushort" || name == "uint16") return PlyType::U16;
    if (name == "int" || name == "int32") return PlyType::I32;
    if (name == "uint" || name == "uint32") return PlyType::U32;
    if (name == "float" || name == "float32") return PlyType::F32;
    if (name == "double" || name == "float64") return PlyType::F64;
    parse_error(path, "unknown property type " + name);
}

double read_binary_value(std::istream& in, PlyType t)
{
    switch (t) {
    case PlyType::I8: return binio::read<std::int8_t>(in, "ply value");
    case PlyType::U8: return binio::read<std::uint8_t>(in, "ply value");
    case PlyType::I16: return binio::read<std::int16_t>(in, "ply value");
    case PlyType::U16: return binio::read<std::uint16_t>(in, "ply value");
    case PlyType::I32: return binio::read<std::int32_t>(in, "ply value");
    case PlyType::U32: return binio::read<std::uint32_t>(in, "ply value");
    case PlyType::F32: return binio::read<float>(in, "ply value");
    case PlyType::F64: return binio::read<double>(in, "ply value");
    }
    return 0.0;
}

struct PlyProperty {
    std::string name;
    PlyType type = PlyType::F32;
    bool is_list = false;
    PlyType count_type = PlyType::U8;
};

struct PlyElement {
    std::string name;
    std::size_t count = 0;
    std::vector<PlyProperty> props;
};

LoadedMesh load_ply(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("cannot open " + path.string());
    }
    std::string line;
    if (!std::getline(in, line) || line.rfind("ply", 0) != 0) {
        parse_error(path, "missing ply magic");
    }
    bool binary = false;
    std::vector<PlyElement> elements;
    LoadedMesh out;
    while (true) {
        if (!std::getline(in, line)) {
            parse_error(path, "header ends before end_header");
        }
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        std::istringstream ss(line);
        std::string tag;
        ss >> tag;
        if (tag == "format") {
            std::string fmt;
            ss >> fmt;
            if (fmt == "ascii") {
                binary = false;
            } else if (fmt == "binary_little_endian") {
                binary = true;
            } else {
                parse_error(path, "unsupported format " + fmt);
            }
        } else if (tag == "comment") {
            std::string kind, name;
            if (ss >> kind >> name && kind == "class") {
                out.class_names.push_back(name);
            }
        } else if (tag == "element") {
            PlyElement e;
            ss >> e.name >> e.count;
            elements.push_back(e);
        } else if (tag == "property") {
            if (elements.empty()) {
                parse_error(path, "property before element");
            }
            std::string type;
            ss >> type;
            PlyProperty p;
            if (type == "list") {
                std::string ct, it;
                ss >> ct >> it >> p.name;
                p.is_list = true;
                p.count_type = ply_type(ct, path);
                p.type = ply_type(it, path);
            } else {
                p.type = ply_type(type, path);
                ss >> p.name;
            }
            elements.back().props.push_back(p);
        } else if (tag == "end_header") {
            break;
        }
    }

    auto value_reader = [&](std::istringstream* ascii_line) {
        return [&, ascii_line](PlyType t) -> double {
            if (binary) {
                return read_binary_value(in, t);
            }
            double v = 0.0;
            if (!(*ascii_line >> v)) {
                parse_error(path, "truncated ascii record");
            }
            return v;
        };
    };

    for (const PlyElement& e : elements) {
        const bool is_vertex = e.name == "vertex";
        const bool is_face = e.name == "face";
        int ix = -1, iy = -1, iz = -1, inx = -1, iny = -1, inz = -1, ilabel = -1, ilist = -1;
        for (std::size_t k = 0; k < e.props.size(); ++k) {
            const std::string& n = e.props[k].name;
            const int ki = static_cast<int>(k);
            if (n == "x") ix = ki;
            else if (n == "y") iy = ki;
            else if (n == "z") iz = ki;
            else if (n == "nx") inx = ki;
            else if (n == "ny") iny = ki;
            else if (n == "nz") inz = ki;
            else if (n == "label") ilabel = ki;
            else if (n == "vertex_indices" || n == "vertex_index") ilist = ki;
        }
        if (is_vertex && (ix < 0 || iy < 0 || iz < 0)) {
            parse_error(path, "vertex element lacks x/y/z");
        }
        if (is_vertex && ilabel >= 0) {
            out.labels.emplace();
        }
        const bool has_normals = is_vertex && inx >= 0 && iny >= 0 && inz >= 0;
        for (std::size_t r = 0; r < e.count; ++r) {
            std::istringstream ascii_line;
            if (!binary) {
                if (!std::getline(in, line)) {
                    parse_error(path, "truncated ascii body in element " + e.name);
                }
                ascii_line.str(line);
            }
            auto read_value = value_reader(&ascii_line);
            std::vector<double> scalars(e.props.size(), 0.0);
            std::vector<int> list;
            for (std::size_t k = 0; k < e.props.size(); ++k) {
                const PlyProperty& p = e.props[k];
                if (p.is_list) {
                    const auto count = static_cast<std::size_t>(read_value(p.count_type));
                    std::vector<int> values(count);
                    for (std::size_t c = 0; c < count; ++c) {
                        values[c] = static_cast<int>(read_value(p.type));
                    }
                    if (static_cast<int>(k) == ilist) {
                        list = std::move(values);
                    }
                } else {
                    scalars[k] = read_value(p.type);
                }
            }
            if (is_vertex) {
                out.mesh.vertices.emplace_back(scalars[ix], scalars[iy], scalars[iz]);
                if (has_normals) {
                    out.mesh.normals.emplace_back(scalars[inx], scalars[iny], scalars[inz]);
                }
                if (ilabel >= 0) {
                    out.labels->push_back(static_cast<int>(scalars[ilabel]));
                }
            } else if (is_face) {
                if (list.size() < 3) {
                    parse_error(path, "face " + std::to_string(r) + " has fewer than 3 indices");
                }
                for (std::size_t k = 1; k + 1 < list.size(); ++k) {
                    out.mesh.faces.push_back({list[0], list[k], list[k + 1]});
                }
            }
        }
    }
    out.mesh.validate();
    return out;
}

} // namespace

MeshFormat format_from_path(const std::filesystem::path& path)
{
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".obj") {
        return MeshFormat::Obj;
    }
    if (ext == ".ply") {
        return MeshFormat::Ply;
    }
    throw Error("unknown mesh extension '" + ext + "' (expected .obj or .ply)");
}

LoadedMesh load_mesh(const std::filesystem::path& path, MeshFormat format)
{
    return format == MeshFormat::Obj ? load_obj(path) : load_ply(path);
}

void save_obj(const std::filesystem::path& path, const TriMesh& mesh)
{
    std::ofstream out(path);
    if (!out) {
        throw Error("cannot write " + path.string());
    }
    char buf[128];
    for (const Vec3& v : mesh.vertices) {
        std::snprintf(buf, sizeof buf, "v %.9g %.9g %.9g\n", v.x(), v.y(), v.z());
        out << buf;
    }
    for (const Face& f : mesh.faces) {
        out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
    }
}

void save_ply(const std::filesystem::path& path, const TriMesh& mesh, const std::vector<int>* labels,
              const std::vector<std::string>& class_names)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error("cannot write " + path.string());
    }
    const bool normals = !mesh.normals.empty();
    out << "ply\nformat binary_little_endian 1.0\n";
    for (const std::string& name : class_names) {
        out << "comment class " << name << '\n';
    }
    out << "element vertex " << mesh.vertices.size() << '\n'
        << "property float x\nproperty float y\nproperty float z\n";
    if (normals) {
        out << "property float nx\nproperty float ny\nproperty float nz\n";
    }
    if (labels) {
        out << "property int label\n";
    }
    out << "element face " << mesh.faces.size() << '\n'
        << "property list uchar int vertex_indices\nend_header\n";
    for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
        const Vec3& v = mesh.vertices[i];
        binio::write(out, static_cast<float>(v.x()));
        binio::write(out, static_cast<float>(v.y()));
        binio::write(out, static_cast<float>(v.z()));
        if (normals) {
            const Vec3& n = mesh.normals[i];
            binio::write(out, static_cast<float>(n.x()));
            binio::write(out, static_cast<float>(n.y()));
            binio::write(out, static_cast<float>(n.z()));
        }
        if (labels) {
            binio::write(out, static_cast<std::int32_t>((*labels)[i]));
        }
    }
    for (const Face& f : mesh.faces) {
        binio::write(out, static_cast<std::uint8_t>(3));
        for (int idx : f) {
            binio::write(out, static_cast<std::int32_t>(idx));
        }
    }
}

SceneMesh load_scene(const std::filesystem::path& path, const std::vector<std::string>& fallback_classes)
{
    LoadedMesh loaded = load_mesh(path);
    SceneMesh scene;
    scene.mesh = std::move(loaded.mesh);
    scene.class_names = loaded.class_names.empty() ? fallback_classes : loaded.class_names;
    if (loaded.labels) {
        scene.labels = std::move(*loaded.labels);
    } else {
        // Unlabeled meshes get the last class ("other" in the default list).
        scene.labels.assign(scene.mesh.vertices.size(), scene.class_count() - 1);
    }
    scene.validate();
    return scene;
}

void save_scene(const std::filesystem::path& path, const SceneMesh& scene)
{
    save_ply(path, scene.mesh, &scene.labels, scene.class_names);
}

} // namespace hsi
