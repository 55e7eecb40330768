#include "hsi/metrics.hpp"
#include "hsi/rng.hpp"

#include <algorithm>
#include <cmath>

namespace hsi {

double non_collision(std::span<const Vec3> vertices, const SdfGrid& sdf)
{
    if (vertices.empty()) {
        return 1.0;
    }
    std::size_t free = 0;
    for (const Vec3& v : vertices) {
        free += sdf.sample(v) > 0.0 ? 1 : 0;
    }
    return static_cast<double>(free) / static_cast<double>(vertices.size());
}

Eigen::MatrixXd placement_parameters(const std::vector<PlacementTransform>& transforms)
{
    std::size_t pose_dims = 0;
    for (const auto& t : transforms) {
        pose_dims = std::max(pose_dims, t.pose_delta.size());
    }
    Eigen::MatrixXd x = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(transforms.size()),
                                              static_cast<Eigen::Index>(4 + 3 * pose_dims));
    for (std::size_t i = 0; i < transforms.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        x.block<1, 3>(r, 0) = transforms[i].translation.transpose();
        x(r, 3) = transforms[i].yaw;
        for (std::size_t j = 0; j < transforms[i].pose_delta.size(); ++j) {
            x.block<1, 3>(r, static_cast<Eigen::Index>(4 + 3 * j)) = transforms[i].pose_delta[j].transpose();
        }
    }
    return x;
}

int contact_score(std::span<const Vec3> vertices, const SdfGrid& sdf)
{
    for (const Vec3& v : vertices) {
        if (sdf.sample(v) <= 0.0) {
            return 1;
        }
    }
    return 0;
}

PlausibilityReport plausibility(const std::vector<std::vector<Vec3>>& bodies, const SdfGrid& sdf)
{
    PlausibilityReport r;
    for (const auto& b : bodies) {
        r.non_collision.push_back(non_collision(b, sdf));
        r.contact.push_back(contact_score(b, sdf));
        for (const Vec3& v : b) {
            r.clamped += sdf.contains(v) ? 0 : 1;
        }
    }
    if (!bodies.empty()) {
        double nc = 0.0, c = 0.0;
        for (std::size_t i = 0; i < bodies.size(); ++i) {
            nc += r.non_collision[i];
            c += r.contact[i];
        }
        r.non_collision_mean = nc / static_cast<double>(bodies.size());
        r.contact_mean = c / static_cast<double>(bodies.size());
    }
    return r;
}

namespace {

KMeansResult lloyd(const Eigen::MatrixXd& x, int k, Rng& rng)
{
    const Eigen::Index n = x.rows();
    KMeansResult r;
    r.centers.resize(k, x.cols());
    // k-means++: each new center drawn with probability proportional to D^2.
    r.centers.row(0) = x.row(static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n))));
    Eigen::VectorXd d2 = (x.rowwise() - r.centers.row(0)).rowwise().squaredNorm();
    for (int c = 1; c < k; ++c) {
        const double total = d2.sum();
        Eigen::Index pick = 0;
        if (total > 0.0) {
            double u = rng.uniform() * total;
            pick = n - 1;
            for (Eigen::Index i = 0; i < n; ++i) {
                u -= d2[i];
                if (u < 0.0) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)));
        }
        r.centers.row(c) = x.row(pick);
        d2 = d2.cwiseMin((x.rowwise() - r.centers.row(c)).rowwise().squaredNorm());
    }
    r.assignment.assign(static_cast<std::size_t>(n), -1);
    for (int iter = 0; iter < 300; ++iter) {
        bool changed = false;
        for (Eigen::Index i = 0; i < n; ++i) {
            int best = 0;
            double bd = std::numeric_limits<double>::infinity();
            for (int c = 0; c < k; ++c) {
                const double d = (x.row(i) - r.centers.row(c)).squaredNorm();
                if (d < bd) {
                    bd = d;
                    best = c;
                }
            }
            if (r.assignment[i] != best) {
                r.assignment[i] = best;
                changed = true;
            }
        }
        if (!changed) {
            break;
        }
        Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(k, x.cols());
        std::vector<int> count(static_cast<std::size_t>(k), 0);
        for (Eigen::Index i = 0; i < n; ++i) {
            sum.row(r.assignment[i]) += x.row(i);
            ++count[r.assignment[i]];
        }
        for (int c = 0; c < k; ++c) {
            if (count[c] > 0) { // empty clusters keep their previous center
                r.centers.row(c) = sum.row(c) / count[c];
            }
        }
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        r.inertia += (x.row(i) - r.centers.row(r.assignment[i])).squaredNorm();
    }
    return r;
}

} // namespace

KMeansResult kmeans(const Eigen::MatrixXd& samples, int k, std::uint64_t seed, int restarts)
{
    if (k < 1) {
        throw Error("k-means needs k >= 1");
    }
    if (samples.rows() < k) {
        throw Error("k-means needs at least k = " + std::to_string(k) + " samples, got " +
                    std::to_string(samples.rows()));
    }
    if (!samples.allFinite()) {
        throw Error("k-means samples must be finite");
    }
    KMeansResult best;
    best.inertia = std::numeric_limits<double>::infinity();
    for (int r = 0; r < std::max(1, restarts); ++r) {
        Rng rng(Rng::derive_seed(seed, "kmeans", static_cast<std::uint64_t>(r)));
        KMeansResult run = lloyd(samples, k, rng);
        if (run.inertia < best.inertia) {
            best = std::move(run);
        }
    }
    return best;
}

DiversityReport diversity(const Eigen::MatrixXd& samples, int k, std::uint64_t seed, int restarts)
{
    const KMeansResult km = kmeans(samples, k, seed, restarts);
    DiversityReport r;
    r.k = k;
    r.histogram.assign(static_cast<std::size_t>(k), 0);
    for (int a : km.assignment) {
        ++r.histogram[a];
    }
    const double n = static_cast<double>(samples.rows());
    for (int h : r.histogram) {
        if (h > 0) {
            const double p = h / n;
            r.entropy -= p * std::log(p);
        }
    }
    for (Eigen::Index i = 0; i < samples.rows(); ++i) {
        r.cluster_size += (samples.row(i) - km.centers.row(km.assignment[i])).norm();
    }
    r.cluster_size /= n;
    return r;
}

} // namespace hsi
