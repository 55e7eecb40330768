#pragma once

#include "hsi/bvh.hpp"
#include "hsi/geometry.hpp"

#include <array>
#include <filesystem>
#include <vector>

namespace hsi {

// Dense signed distance field. Voxel (i, j, k) has its centroid at
// origin + (index + 0.5) * cell_size; values are stored x-fastest.
// Positive in free space, negative inside closed geometry.
struct SdfGrid {
    Vec3 origin = Vec3::Zero();
    double cell_size = 1.0;
    std::array<int, 3> dims{0, 0, 0};
    std::vector<float> values;
    double padding = 0.0;

    std::size_t voxel_count() const
    {
        return static_cast<std::size_t>(dims[0]) * static_cast<std::size_t>(dims[1]) * static_cast<std::size_t>(dims[2]);
    }
    std::size_t index(int i, int j, int k) const
    {
        return (static_cast<std::size_t>(k) * dims[1] + j) * dims[0] + i;
    }
    float at(int i, int j, int k) const { return values[index(i, j, k)]; }
    Vec3 centroid(int i, int j, int k) const
    {
        return origin + cell_size * Vec3(i + 0.5, j + 0.5, k + 0.5);
    }
    // Box spanned by the first and last voxel centroids; trilinear sampling is exact inside it.
    Aabb interior() const;
    bool contains(const Vec3& p) const;

    // Trilinear interpolation. Outside the interior the value at the clamped
    // point plus the Euclidean distance to it is returned.
    double sample(const Vec3& p) const;

    struct Gradient {
        Vec3 value = Vec3::Zero();
        bool clamped = false; // query was outside the interior
    };
    // Exact spatial gradient of sample().
    Gradient sample_gradient(const Vec3& p) const;
    // Value and gradient in one lookup.
    double sample_with_gradient(const Vec3& p, Vec3& gradient) const;
};

struct SdfBuildOptions {
    int resolution = 128;                       // voxels along the longest padded axis
    double padding = -1.0;                      // meters; negative means 10% of the bbox diagonal
    std::size_t max_voxels = std::size_t{1} << 28;
};

SdfGrid build_sdf(const TriMesh& mesh, const SdfBuildOptions& options);
inline SdfGrid build_sdf(const SceneMesh& scene, const SdfBuildOptions& options)
{
    return build_sdf(scene.mesh, options);
}

// "SDF1" | u32 dims[3] | f32 origin[3] | f32 cell_size | f32 values (x-fastest). Little-endian.
void save_sdf(const std::filesystem::path& path, const SdfGrid& grid);
SdfGrid load_sdf(const std::filesystem::path& path);

} // namespace hsi
