#include "hsi/sdf.hpp"
#include "hsi/binary_io.hpp"
#include "hsi/parallel.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <fstream>
#include <map>

namespace hsi {

Aabb SdfGrid::interior() const
{
    Aabb box;
    box.extend(centroid(0, 0, 0));
    box.extend(centroid(dims[0] - 1, dims[1] - 1, dims[2] - 1));
    return box;
}

bool SdfGrid::contains(const Vec3& p) const
{
    const Aabb box = interior();
    return (p.array() >= box.min.array()).all() && (p.array() <= box.max.array()).all();
}

double SdfGrid::sample_with_gradient(const Vec3& p, Vec3& gradient) const
{
    const Aabb box = interior();
    const Vec3 q = p.cwiseMax(box.min).cwiseMin(box.max);
    int idx[3];
    double t[3];
    for (int a = 0; a < 3; ++a) {
        const double u = (q[a] - origin[a]) / cell_size - 0.5;
        int i = static_cast<int>(std::floor(u));
        i = std::clamp(i, 0, dims[a] - 2);
        idx[a] = i;
        t[a] = std::clamp(u - i, 0.0, 1.0);
    }
    double c[2][2][2];
    for (int dz = 0; dz < 2; ++dz) {
        for (int dy = 0; dy < 2; ++dy) {
            for (int dx = 0; dx < 2; ++dx) {
                c[dx][dy][dz] = at(idx[0] + dx, idx[1] + dy, idx[2] + dz);
            }
        }
    }
    const double tx = t[0], ty = t[1], tz = t[2];
    // Interpolate along x, then y, then z.
    const double c00 = c[0][0][0] * (1 - tx) + c[1][0][0] * tx;
    const double c10 = c[0][1][0] * (1 - tx) + c[1][1][0] * tx;
    const double c01 = c[0][0][1] * (1 - tx) + c[1][0][1] * tx;
    const double c11 = c[0][1][1] * (1 - tx) + c[1][1][1] * tx;
    const double c0 = c00 * (1 - ty) + c10 * ty;
    const double c1 = c01 * (1 - ty) + c11 * ty;
    double value = c0 * (1 - tz) + c1 * tz;

    const double gx = ((c[1][0][0] - c[0][0][0]) * (1 - ty) * (1 - tz) + (c[1][1][0] - c[0][1][0]) * ty * (1 - tz) +
                       (c[1][0][1] - c[0][0][1]) * (1 - ty) * tz + (c[1][1][1] - c[0][1][1]) * ty * tz);
    const double gy = (c10 - c00) * (1 - tz) + (c11 - c01) * tz;
    const double gz = c1 - c0;
    gradient = Vec3(gx, gy, gz) / cell_size;

    const Vec3 outside = p - q;
    const double dist = outside.norm();
    if (dist > 0.0) {
        // Clamped axes contribute only through the distance term.
        for (int a = 0; a < 3; ++a) {
            if (outside[a] != 0.0) {
                gradient[a] = 0.0;
            }
        }
        gradient += outside / dist;
        value += dist;
    }
    return value;
}

double SdfGrid::sample(const Vec3& p) const
{
    Vec3 g;
    return sample_with_gradient(p, g);
}

SdfGrid::Gradient SdfGrid::sample_gradient(const Vec3& p) const
{
    Gradient out;
    sample_with_gradient(p, out.value);
    out.clamped = !contains(p);
    return out;
}

namespace {

struct Crossing {
    double t;
    int winding; // +1 entering, -1 leaving
};

// Inclusion test for a sample on a counter-clockwise 2D triangle with a
// top-left fill rule, so points on shared edges are claimed exactly once.
bool covers(const Eigen::Vector2d& p, const std::array<Eigen::Vector2d, 3>& tri, double& l0, double& l1, double& l2)
{
    auto edge = [&](int i, int j) {
        const Eigen::Vector2d e = tri[j] - tri[i];
        const Eigen::Vector2d d = p - tri[i];
        const double w = e.x() * d.y() - e.y() * d.x();
        if (w > 0.0) {
            return std::pair{true, w};
        }
        if (w < 0.0) {
            return std::pair{false, w};
        }
        const bool top_left = e.y() < 0.0 || (e.y() == 0.0 && e.x() < 0.0);
        return std::pair{top_left, w};
    };
    const auto [in0, w0] = edge(1, 2);
    if (!in0) return false;
    const auto [in1, w1] = edge(2, 0);
    if (!in1) return false;
    const auto [in2, w2] = edge(0, 1);
    if (!in2) return false;
    const double sum = w0 + w1 + w2;
    l0 = w0 / sum;
    l1 = w1 / sum;
    l2 = w2 / sum;
    return true;
}

// For every voxel, whether the winding number along +axis says "inside".
void axis_votes(const TriMesh& mesh, const SdfGrid& grid, int axis, std::vector<std::uint8_t>& votes)
{
    const int b = (axis + 1) % 3;
    const int c = (axis + 2) % 3;
    const int nb = grid.dims[b];
    const int nc = grid.dims[c];
    std::vector<std::vector<Crossing>> lines(static_cast<std::size_t>(nb) * nc);
    const double h = grid.cell_size;

    for (const Face& f : mesh.faces) {
        std::array<Eigen::Vector2d, 3> tri;
        std::array<double, 3> depth;
        for (int k = 0; k < 3; ++k) {
            const Vec3& v = mesh.vertices[f[k]];
            tri[k] = {v[b], v[c]};
            depth[k] = v[axis];
        }
        const double area = (tri[1] - tri[0]).x() * (tri[2] - tri[0]).y() - (tri[1] - tri[0]).y() * (tri[2] - tri[0]).x();
        if (area == 0.0) {
            continue; // parallel to the ray direction
        }
        // Positive projected area means the face normal points along +axis: the ray leaves.
        const int winding = area > 0.0 ? -1 : 1;
        if (area < 0.0) {
            std::swap(tri[1], tri[2]);
            std::swap(depth[1], depth[2]);
        }
        const Eigen::Vector2d lo = tri[0].cwiseMin(tri[1]).cwiseMin(tri[2]);
        const Eigen::Vector2d hi = tri[0].cwiseMax(tri[1]).cwiseMax(tri[2]);
        const int j0 = std::max(0, static_cast<int>(std::ceil((lo.x() - grid.origin[b]) / h - 0.5)));
        const int j1 = std::min(nb - 1, static_cast<int>(std::floor((hi.x() - grid.origin[b]) / h - 0.5)));
        const int k0 = std::max(0, static_cast<int>(std::ceil((lo.y() - grid.origin[c]) / h - 0.5)));
        const int k1 = std::min(nc - 1, static_cast<int>(std::floor((hi.y() - grid.origin[c]) / h - 0.5)));
        for (int k = k0; k <= k1; ++k) {
            for (int j = j0; j <= j1; ++j) {
                const Eigen::Vector2d p(grid.origin[b] + (j + 0.5) * h, grid.origin[c] + (k + 0.5) * h);
                double l0, l1, l2;
                if (covers(p, tri, l0, l1, l2)) {
                    lines[static_cast<std::size_t>(k) * nb + j].push_back(
                        {l0 * depth[0] + l1 * depth[1] + l2 * depth[2], winding});
                }
            }
        }
    }

    const int na = grid.dims[axis];
    parallel_for_each(lines.size(), [&](std::size_t line) {
        auto& xs = lines[line];
        std::sort(xs.begin(), xs.end(), [](const Crossing& x, const Crossing& y) {
            return x.t < y.t || (x.t == y.t && x.winding < y.winding);
        });
        const int j = static_cast<int>(line % nb);
        const int k = static_cast<int>(line / nb);
        int wind = 0;
        std::size_t next = 0;
        for (int i = 0; i < na; ++i) {
            const double coord = grid.origin[axis] + (i + 0.5) * h;
            while (next < xs.size() && xs[next].t < coord) {
                wind += xs[next].winding;
                ++next;
            }
            int ijk[3];
            ijk[axis] = i;
            ijk[b] = j;
            ijk[c] = k;
            if (wind > 0) {
                votes[grid.index(ijk[0], ijk[1], ijk[2])] |= static_cast<std::uint8_t>(1u << axis);
            }
        }
    });
}

// Angle-weighted pseudo-normals (Baerentzen & Aanaes) for sign fallback.
struct PseudoNormals {
    std::vector<Vec3> face;
    std::vector<Vec3> vertex;
    std::map<std::pair<int, int>, Vec3> edge;

    explicit PseudoNormals(const TriMesh& mesh)
    {
        face.resize(mesh.faces.size());
        vertex.assign(mesh.vertices.size(), Vec3::Zero());
        for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
            const Face& t = mesh.faces[f];
            const Vec3 n = (mesh.vertices[t[1]] - mesh.vertices[t[0]]).cross(mesh.vertices[t[2]] - mesh.vertices[t[0]]);
            const double len = n.norm();
            face[f] = len > 0.0 ? Vec3(n / len) : Vec3::Zero();
            for (int k = 0; k < 3; ++k) {
                const Vec3 e1 = mesh.vertices[t[(k + 1) % 3]] - mesh.vertices[t[k]];
                const Vec3 e2 = mesh.vertices[t[(k + 2) % 3]] - mesh.vertices[t[k]];
                const double denom = e1.norm() * e2.norm();
                if (denom > 0.0) {
                    const double angle = std::acos(std::clamp(e1.dot(e2) / denom, -1.0, 1.0));
                    vertex[t[k]] += angle * face[f];
                }
                const int a = std::min(t[k], t[(k + 1) % 3]);
                const int b = std::max(t[k], t[(k + 1) % 3]);
                auto [it, inserted] = edge.try_emplace({a, b}, Vec3::Zero());
                it->second += face[f];
            }
        }
    }

    Vec3 at(const TriMesh& mesh, const ClosestPointResult& cp) const
    {
        const Face& t = mesh.faces[cp.face_index];
        const auto& w = cp.barycentric;
        const int zeros = (w[0] == 0.0) + (w[1] == 0.0) + (w[2] == 0.0);
        if (zeros == 2) {
            for (int k = 0; k < 3; ++k) {
                if (w[k] != 0.0) {
                    return vertex[t[k]];
                }
            }
        }
        if (zeros == 1) {
            for (int k = 0; k < 3; ++k) {
                if (w[k] == 0.0) {
                    const int a = t[(k + 1) % 3];
                    const int b = t[(k + 2) % 3];
                    return edge.at({std::min(a, b), std::max(a, b)});
                }
            }
        }
        return face[cp.face_index];
    }
};

} // namespace

SdfGrid build_sdf(const TriMesh& mesh, const SdfBuildOptions& options)
{
    if (mesh.faces.empty()) {
        throw Error("cannot build an SDF over an empty mesh");
    }
    if (options.resolution < 8) {
        throw Error("SDF resolution must be at least 8, got " + std::to_string(options.resolution));
    }
    const Aabb bounds = mesh.bounds();
    const double pad = options.padding >= 0.0 ? options.padding : 0.1 * bounds.diagonal();
    const Vec3 lo = bounds.min - Vec3::Constant(pad);
    const Vec3 extent = bounds.extent() + Vec3::Constant(2.0 * pad);

    SdfGrid grid;
    grid.padding = pad;
    // Float-representable origin and cell size so a saved grid samples identically.
    grid.cell_size = static_cast<float>(extent.maxCoeff() / options.resolution);
    for (int a = 0; a < 3; ++a) {
        grid.origin[a] = static_cast<float>(lo[a]);
        grid.dims[a] = std::max(2, static_cast<int>(std::ceil(extent[a] / grid.cell_size - 1e-9)));
    }
    if (grid.voxel_count() > options.max_voxels) {
        throw Error("SDF of " + std::to_string(grid.voxel_count()) + " voxels exceeds the cap of " +
                    std::to_string(options.max_voxels));
    }
    grid.values.assign(grid.voxel_count(), 0.0f);

    std::vector<std::uint8_t> votes(grid.voxel_count(), 0);
    for (int axis = 0; axis < 3; ++axis) {
        axis_votes(mesh, grid, axis, votes);
    }

    const ProximityTree tree(mesh);
    const PseudoNormals normals(mesh);
    std::atomic<std::size_t> fallbacks{0};
    parallel_for(static_cast<std::size_t>(grid.dims[2]), [&](std::size_t kb, std::size_t ke, int) {
        std::size_t local_fallbacks = 0;
        for (int k = static_cast<int>(kb); k < static_cast<int>(ke); ++k) {
            for (int j = 0; j < grid.dims[1]; ++j) {
                for (int i = 0; i < grid.dims[0]; ++i) {
                    const std::size_t id = grid.index(i, j, k);
                    const Vec3 c = grid.centroid(i, j, k);
                    const ClosestPointResult cp = tree.closest_point(c);
                    const int inside_votes = std::popcount(static_cast<unsigned>(votes[id]));
                    bool inside = inside_votes == 3;
                    if (inside_votes == 1 || inside_votes == 2) {
                        // Axes disagree (holes, open geometry): fall back to the pseudo-normal side test.
                        ++local_fallbacks;
                        inside = (c - cp.point).dot(normals.at(mesh, cp)) < 0.0;
                    }
                    grid.values[id] = static_cast<float>(inside ? -cp.distance : cp.distance);
                }
            }
        }
        fallbacks += local_fallbacks;
    });
    spdlog::debug("sdf: {}x{}x{} voxels, cell {:.4f} m, {} pseudo-normal fallbacks", grid.dims[0], grid.dims[1],
                  grid.dims[2], grid.cell_size, fallbacks.load());
    return grid;
}

void save_sdf(const std::filesystem::path& path, const SdfGrid& grid)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error("cannot write " + path.string());
    }
    binio::write_bytes(out, "SDF1");
    for (int a = 0; a < 3; ++a) {
        binio::write(out, static_cast<std::uint32_t>(grid.dims[a]));
    }
    for (int a = 0; a < 3; ++a) {
        binio::write(out, static_cast<float>(grid.origin[a]));
    }
    binio::write(out, static_cast<float>(grid.cell_size));
    binio::write_span<float>(out, grid.values);
}

SdfGrid load_sdf(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("cannot open " + path.string());
    }
    if (binio::read_bytes(in, 4, "sdf magic") != "SDF1") {
        throw Error(path.string() + " is not an SDF1 file");
    }
    SdfGrid grid;
    for (int a = 0; a < 3; ++a) {
        grid.dims[a] = static_cast<int>(binio::read<std::uint32_t>(in, "sdf dims"));
        if (grid.dims[a] < 2) {
            throw Error("sdf dimension below 2 in " + path.string());
        }
    }
    for (int a = 0; a < 3; ++a) {
        grid.origin[a] = binio::read<float>(in, "sdf origin");
    }
    grid.cell_size = binio::read<float>(in, "sdf cell size");
    grid.values.resize(grid.voxel_count());
    binio::read_into<float>(in, grid.values, "sdf values");
    return grid;
}

} // namespace hsi
