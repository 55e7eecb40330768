#pragma once

#include "hsi/geometry.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace hsi {

enum class MeshFormat { Obj, Ply };

// Mesh plus whatever optional per-vertex data the file carried.
struct LoadedMesh {
    TriMesh mesh;
    std::optional<std::vector<int>> labels;
    std::vector<std::string> class_names; // from "comment class <name>" PLY lines
};

MeshFormat format_from_path(const std::filesystem::path& path);

// OBJ: positions and faces (polygons are fan-triangulated). PLY: ascii or
// binary_little_endian with x/y/z, optional nx/ny/nz and an integer "label".
LoadedMesh load_mesh(const std::filesystem::path& path, MeshFormat format);
inline LoadedMesh load_mesh(const std::filesystem::path& path) { return load_mesh(path, format_from_path(path)); }

void save_obj(const std::filesystem::path& path, const TriMesh& mesh);
// Binary little-endian PLY; labels written as an int property when given.
void save_ply(const std::filesystem::path& path, const TriMesh& mesh, const std::vector<int>* labels = nullptr,
              const std::vector<std::string>& class_names = {});

// Class names come from the file when present, else from the fallback list.
SceneMesh load_scene(const std::filesystem::path& path,
                     const std::vector<std::string>& fallback_classes = default_class_names());
void save_scene(const std::filesystem::path& path, const SceneMesh& scene);

} // namespace hsi
