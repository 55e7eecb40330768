#include "hsi/meshnet.hpp"
#include "hsi/bvh.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <queue>
#include <set>
#include <tuple>

namespace hsi {

namespace {

using Quadric = Eigen::Matrix4d;

Quadric plane_quadric(const Vec3& n, const Vec3& p, double weight)
{
    const Eigen::Vector4d plane(n.x(), n.y(), n.z(), -n.dot(p));
    return weight * plane * plane.transpose();
}

double quadric_cost(const Quadric& q, const Vec3& p)
{
    const Eigen::Vector4d h(p.x(), p.y(), p.z(), 1.0);
    return std::max(0.0, h.dot(q * h));
}

class EdgeCollapser {
public:
    explicit EdgeCollapser(const TriMesh& mesh)
        : pos_(mesh.vertices), faces_(mesh.faces), face_alive_(mesh.faces.size(), 1),
          vertex_alive_(mesh.vertices.size(), 1), stamp_(mesh.vertices.size(), 0),
          incident_(mesh.vertices.size()), quadric_(mesh.vertices.size(), Quadric::Zero())
    {
        for (std::size_t f = 0; f < faces_.size(); ++f) {
            for (int v : faces_[f]) {
                incident_[v].push_back(static_cast<int>(f));
            }
        }
        for (std::size_t f = 0; f < faces_.size(); ++f) {
            const Face& t = faces_[f];
            const Vec3 n = (pos_[t[1]] - pos_[t[0]]).cross(pos_[t[2]] - pos_[t[0]]);
            const double len = n.norm();
            if (len == 0.0) {
                continue;
            }
            const Quadric q = plane_quadric(n / len, pos_[t[0]], 1.0);
            for (int v : t) {
                quadric_[v] += q;
            }
        }
        // Boundary edges get a stiff perpendicular plane so open borders keep their shape.
        std::map<std::pair<int, int>, int> edge_faces;
        for (std::size_t f = 0; f < faces_.size(); ++f) {
            for (int k = 0; k < 3; ++k) {
                const int a = faces_[f][k], b = faces_[f][(k + 1) % 3];
                ++edge_faces[{std::min(a, b), std::max(a, b)}];
            }
        }
        boundary_.assign(pos_.size(), 0);
        for (std::size_t f = 0; f < faces_.size(); ++f) {
            const Face& t = faces_[f];
            const Vec3 n = (pos_[t[1]] - pos_[t[0]]).cross(pos_[t[2]] - pos_[t[0]]);
            for (int k = 0; k < 3; ++k) {
                const int a = t[k], b = t[(k + 1) % 3];
                if (edge_faces[{std::min(a, b), std::max(a, b)}] != 1) {
                    continue;
                }
                boundary_[a] = boundary_[b] = 1;
                const Vec3 e = pos_[b] - pos_[a];
                Vec3 side = e.cross(n);
                if (side.norm() == 0.0) {
                    continue;
                }
                side.normalize();
                const Quadric q = plane_quadric(side, pos_[a], 1e3 * e.squaredNorm());
                quadric_[a] += q;
                quadric_[b] += q;
            }
        }
        alive_count_ = pos_.size();
    }

    void run(std::size_t target)
    {
        for (std::size_t v = 0; v < pos_.size(); ++v) {
            for (int w : neighbors(static_cast<int>(v))) {
                if (static_cast<int>(v) < w) {
                    push_edge(static_cast<int>(v), w);
                }
            }
        }
        while (alive_count_ > target) {
            if (queue_.empty()) {
                throw Error("edge collapse stalled at " + std::to_string(alive_count_) + " vertices (target " +
                            std::to_string(target) + "): too few collapsible edges");
            }
            const Candidate c = queue_.top();
            queue_.pop();
            if (!vertex_alive_[c.from] || !vertex_alive_[c.to] || stamp_[c.from] != c.stamp_from ||
                stamp_[c.to] != c.stamp_to) {
                continue;
            }
            if (collapsible(c.from, c.to)) {
                collapse(c.from, c.to);
            } else if (collapsible(c.to, c.from)) {
                collapse(c.to, c.from);
            }
        }
    }

    Simplified result() const
    {
        Simplified out;
        std::vector<int> remap(pos_.size(), -1);
        for (std::size_t v = 0; v < pos_.size(); ++v) {
            if (vertex_alive_[v]) {
                remap[v] = static_cast<int>(out.kept.size());
                out.kept.push_back(static_cast<int>(v));
                out.mesh.vertices.push_back(pos_[v]);
            }
        }
        for (std::size_t f = 0; f < faces_.size(); ++f) {
            if (face_alive_[f]) {
                const Face& t = faces_[f];
                out.mesh.faces.push_back({remap[t[0]], remap[t[1]], remap[t[2]]});
            }
        }
        return out;
    }

private:
    struct Candidate {
        double cost;
        int from;
        int to;
        int stamp_from;
        int stamp_to;
        bool operator<(const Candidate& o) const
        {
            // std::priority_queue is a max-heap; invert for the cheapest collapse first.
            return std::tie(cost, from, to) > std::tie(o.cost, o.from, o.to);
        }
    };

    std::vector<int> neighbors(int v) const
    {
        std::vector<int> out;
        for (int f : incident_[v]) {
            for (int w : faces_[f]) {
                if (w != v) {
                    out.push_back(w);
                }
            }
        }
        std::sort(out.begin(), out.end());
        out.erase(std::unique(out.begin(), out.end()), out.end());
        return out;
    }

    void push_edge(int a, int b)
    {
        const Quadric q = quadric_[a] + quadric_[b];
        const double cost_ab = quadric_cost(q, pos_[b]); // a removed, b kept
        const double cost_ba = quadric_cost(q, pos_[a]);
        if (cost_ab <= cost_ba) {
            queue_.push({cost_ab, a, b, stamp_[a], stamp_[b]});
        } else {
            queue_.push({cost_ba, b, a, stamp_[b], stamp_[a]});
        }
    }

    bool collapsible(int u, int v) const
    {
        if (boundary_[u] && !boundary_[v]) {
            return false;
        }
        const std::vector<int> nu = neighbors(u);
        const std::vector<int> nv = neighbors(v);
        std::vector<int> common;
        std::set_intersection(nu.begin(), nu.end(), nv.begin(), nv.end(), std::back_inserter(common));
        std::vector<int> opposite;
        for (int f : incident_[u]) {
            const Face& t = faces_[f];
            if (t[0] == v || t[1] == v || t[2] == v) {
                for (int w : t) {
                    if (w != u && w != v) {
                        opposite.push_back(w);
                    }
                }
            }
        }
        std::sort(opposite.begin(), opposite.end());
        if (opposite.empty() || common != opposite) {
            return false; // link condition
        }
        if (boundary_[u] && opposite.size() != 1) {
            return false; // interior edge between two boundary vertices
        }
        for (int w : opposite) {
            if (neighbors(w).size() <= 3) {
                return false;
            }
        }
        if (nu.size() + nv.size() < 7) {
            return false;
        }
        for (int f : incident_[u]) {
            const Face& t = faces_[f];
            if (t[0] == v || t[1] == v || t[2] == v) {
                continue;
            }
            Face moved = t;
            for (int& w : moved) {
                if (w == u) {
                    w = v;
                }
            }
            const Vec3 n_old = (pos_[t[1]] - pos_[t[0]]).cross(pos_[t[2]] - pos_[t[0]]);
            const Vec3 n_new = (pos_[moved[1]] - pos_[moved[0]]).cross(pos_[moved[2]] - pos_[moved[0]]);
            const double len = n_old.norm() * n_new.norm();
            if (n_new.norm() < 1e-14 || n_old.dot(n_new) < 0.2 * len) {
                return false; // fold-over or sliver
            }
        }
        return true;
    }

    void collapse(int u, int v)
    {
        for (int f : incident_[u]) {
            Face& t = faces_[f];
            if (t[0] == v || t[1] == v || t[2] == v) {
                face_alive_[f] = 0;
                for (int w : t) {
                    if (w != u) {
                        auto& inc = incident_[w];
                        inc.erase(std::remove(inc.begin(), inc.end(), f), inc.end());
                    }
                }
                continue;
            }
            for (int& w : t) {
                if (w == u) {
                    w = v;
                }
            }
            incident_[v].push_back(f);
        }
        incident_[u].clear();
        vertex_alive_[u] = 0;
        quadric_[v] += quadric_[u];
        --alive_count_;
        ++stamp_[v];
        for (int w : neighbors(v)) {
            push_edge(v, w);
        }
    }

    std::vector<Vec3> pos_;
    std::vector<Face> faces_;
    std::vector<char> face_alive_;
    std::vector<char> vertex_alive_;
    std::vector<char> boundary_;
    std::vector<int> stamp_;
    std::vector<std::vector<int>> incident_;
    std::vector<Quadric> quadric_;
    std::priority_queue<Candidate> queue_;
    std::size_t alive_count_ = 0;
};

} // namespace

Simplified simplify_mesh(const TriMesh& mesh, std::size_t target_vertices)
{
    mesh.validate();
    if (target_vertices >= mesh.vertices.size()) {
        Simplified out;
        out.mesh = mesh;
        out.kept.resize(mesh.vertices.size());
        for (std::size_t i = 0; i < out.kept.size(); ++i) {
            out.kept[i] = static_cast<int>(i);
        }
        return out;
    }
    EdgeCollapser collapser(mesh);
    collapser.run(target_vertices);
    return collapser.result();
}

MeshHierarchy build_hierarchy(const TriMesh& mesh, int factor, int levels)
{
    if (factor < 2) {
        throw Error("downsampling factor must be at least 2");
    }
    MeshHierarchy h;
    h.levels.push_back(mesh);
    for (int k = 0; k < levels; ++k) {
        const TriMesh& fine = h.levels.back();
        const auto target = static_cast<std::size_t>(std::lround(static_cast<double>(fine.vertices.size()) / factor));
        if (target < 4) {
            throw Error("cannot reach " + std::to_string(target) + " vertices at level " + std::to_string(k + 1));
        }
        Simplified coarse = simplify_mesh(fine, target);

        const auto nf = static_cast<Eigen::Index>(fine.vertices.size());
        const auto nc = static_cast<Eigen::Index>(coarse.mesh.vertices.size());
        SparseMap down(nc, nf);
        std::vector<Eigen::Triplet<double>> triplets;
        for (Eigen::Index c = 0; c < nc; ++c) {
            triplets.emplace_back(c, coarse.kept[c], 1.0);
        }
        down.setFromTriplets(triplets.begin(), triplets.end());

        const ProximityTree tree(coarse.mesh);
        SparseMap up(nf, nc);
        triplets.clear();
        for (Eigen::Index f = 0; f < nf; ++f) {
            const ClosestPointResult cp = tree.closest_point(fine.vertices[f]);
            const Face& t = coarse.mesh.faces[cp.face_index];
            for (int k = 0; k < 3; ++k) {
                if (cp.barycentric[k] != 0.0) {
                    triplets.emplace_back(f, t[k], cp.barycentric[k]);
                }
            }
        }
        up.setFromTriplets(triplets.begin(), triplets.end());

        h.down_maps.push_back(std::move(down));
        h.up_maps.push_back(std::move(up));
        h.levels.push_back(std::move(coarse.mesh));
    }
    return h;
}

std::vector<std::vector<int>> ordered_one_rings(const TriMesh& mesh)
{
    const std::size_t n = mesh.vertices.size();
    // For face (i, a, b) wound counter-clockwise, b follows a around i.
    std::vector<std::map<int, int>> next(n);
    for (const Face& t : mesh.faces) {
        for (int k = 0; k < 3; ++k) {
            next[t[k]][t[(k + 1) % 3]] = t[(k + 2) % 3];
        }
    }
    std::vector<std::vector<int>> rings(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& succ = next[i];
        if (succ.empty()) {
            continue;
        }
        std::set<int> members;
        std::set<int> has_pred;
        for (const auto& [a, b] : succ) {
            members.insert(a);
            members.insert(b);
            has_pred.insert(b);
        }
        // Open fans start at the neighbor without a predecessor.
        int start = *members.begin();
        for (int m : members) {
            if (!has_pred.count(m)) {
                start = m;
                break;
            }
        }
        std::vector<int> ring;
        std::set<int> seen;
        int cur = start;
        while (!seen.count(cur)) {
            ring.push_back(cur);
            seen.insert(cur);
            const auto it = succ.find(cur);
            if (it == succ.end()) {
                break;
            }
            cur = it->second;
        }
        // Non-manifold leftovers are appended in index order.
        for (int m : members) {
            if (!seen.count(m)) {
                ring.push_back(m);
            }
        }
        const auto smallest = std::min_element(ring.begin(), ring.end());
        std::rotate(ring.begin(), smallest, ring.end());
        rings[i] = std::move(ring);
    }
    return rings;
}

SpiralIndex build_spirals(const TriMesh& mesh, int length)
{
    if (length < 1) {
        throw Error("spiral length must be positive");
    }
    const auto rings = ordered_one_rings(mesh);
    const std::size_t n = mesh.vertices.size();
    SpiralIndex out;
    out.length = length;
    out.indices.assign(n * length, 0);
    std::vector<int> mark(n, -1);
    for (std::size_t i = 0; i < n; ++i) {
        if (rings[i].empty()) {
            throw Error("vertex " + std::to_string(i) + " is isolated; cannot build a spiral around it");
        }
        const int center = static_cast<int>(i);
        std::vector<int> seq{center};
        mark[center] = center;
        std::vector<int> ring;
        for (int w : rings[i]) {
            ring.push_back(w);
            mark[w] = center;
        }
        while (!ring.empty() && static_cast<int>(seq.size()) < length) {
            seq.insert(seq.end(), ring.begin(), ring.end());
            std::vector<int> outer;
            for (int u : ring) {
                const auto& ru = rings[u];
                // Continue rotating: start right after the last already-visited neighbor.
                std::size_t start = 0;
                for (std::size_t k = 0; k < ru.size(); ++k) {
                    if (mark[ru[k]] == center && mark[ru[(k + 1) % ru.size()]] != center) {
                        start = (k + 1) % ru.size();
                        break;
                    }
                }
                for (std::size_t k = 0; k < ru.size(); ++k) {
                    const int w = ru[(start + k) % ru.size()];
                    if (mark[w] != center) {
                        mark[w] = center;
                        outer.push_back(w);
                    }
                }
            }
            ring = std::move(outer);
        }
        for (int s = 0; s < length; ++s) {
            out.indices[i * length + s] = s < static_cast<int>(seq.size()) ? seq[s] : center;
        }
    }
    return out;
}

} // namespace hsi
