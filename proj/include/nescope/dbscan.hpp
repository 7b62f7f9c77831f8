#ifndef NESCOPE_DBSCAN_HPP
#define NESCOPE_DBSCAN_HPP

#include <algorithm>
#include <vector>

#include "nescope/core.hpp"

namespace nescope {

enum class DbscanRole : std::uint8_t { Core = 0, Border = 1, Noise = 2 };

struct DbscanResult {
    IntVector labels;                  // cluster id per point, -1 for noise
    std::vector<DbscanRole> roles;
    int n_clusters = 0;

    /// Periphery = border + noise; the complement of cluster cores.
    std::vector<std::uint8_t> periphery_mask() const {
        std::vector<std::uint8_t> mask(roles.size());
        for (std::size_t i = 0; i < roles.size(); ++i) mask[i] = roles[i] != DbscanRole::Core;
        return mask;
    }
};

/// Plain O(n^2) DBSCAN. A point is core when at least min_pts points
/// (including itself) lie within eps; expansion scans points in index order,
/// so results are deterministic.
inline DbscanResult dbscan(const Matrix& points, double eps, int min_pts) {
    require(eps > 0.0, "dbscan: eps must be positive");
    require(min_pts >= 1, "dbscan: min_pts must be positive");
    const Eigen::Index n = points.rows();
    const double eps2 = eps * eps;

    std::vector<std::vector<int>> neighbors(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            if ((points.row(i) - points.row(j)).squaredNorm() <= eps2) neighbors[i].push_back(static_cast<int>(j));
        }
    }

    DbscanResult out;
    out.labels = IntVector::Constant(n, -1);
    out.roles.assign(n, DbscanRole::Noise);

    std::vector<std::uint8_t> visited(n, 0);
    int cluster = 0;
    std::vector<int> queue;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (visited[i]) continue;
        visited[i] = 1;
        if (static_cast<int>(neighbors[i].size()) < min_pts) continue;  // resolved later as border or noise

        out.labels(i) = cluster;
        out.roles[i] = DbscanRole::Core;
        queue.assign(neighbors[i].begin(), neighbors[i].end());
        for (std::size_t qi = 0; qi < queue.size(); ++qi) {
            const int j = queue[qi];
            if (out.labels(j) == -1) {
                out.labels(j) = cluster;
                out.roles[j] = DbscanRole::Border;
            }
            if (visited[j]) continue;
            visited[j] = 1;
            if (static_cast<int>(neighbors[j].size()) >= min_pts) {
                out.roles[j] = DbscanRole::Core;
                for (int k : neighbors[j]) queue.push_back(k);
            }
        }
        ++cluster;
    }
    out.n_clusters = cluster;
    return out;
}

/// Distance to the k-th nearest neighbor (excluding the point itself).
inline Vector k_distances(const Matrix& points, int k) {
    const Eigen::Index n = points.rows();
    require(k >= 1 && k < n, "k_distances: k out of range");
    Vector out(n);
    std::vector<double> d2(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) d2[j] = (points.row(i) - points.row(j)).squaredNorm();
        std::nth_element(d2.begin(), d2.begin() + k, d2.end());
        out(i) = std::sqrt(d2[k]);
    }
    return out;
}

/// Knee of the sorted k-distance curve: the index farthest from the chord
/// between the curve endpoints. Standard heuristic for picking a DBSCAN radius.
inline double k_distance_knee(const Matrix& points, int k) {
    Vector kd = k_distances(points, k);
    std::sort(kd.data(), kd.data() + kd.size());
    const Eigen::Index n = kd.size();
    const double x0 = 0.0, y0 = kd(0);
    const double x1 = static_cast<double>(n - 1), y1 = kd(n - 1);
    const double len = std::sqrt((x1 - x0) * (x1 - x0) + (y1 - y0) * (y1 - y0));
    if (len <= 0.0 || y1 <= y0) return std::max(y1, 1e-12);
    double best = -1.0;
    Eigen::Index best_i = n - 1;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double dist = std::abs((y1 - y0) * i - (x1 - x0) * kd(i) + x1 * y0 - y1 * x0) / len;
        if (dist > best) {
            best = dist;
            best_i = i;
        }
    }
    return std::max(kd(best_i), 1e-12);
}

/// Mean position of each cluster (noise excluded).
inline Matrix cluster_centroids(const Matrix& points, const IntVector& labels, int n_clusters) {
    Matrix centroids = Matrix::Zero(n_clusters, points.cols());
    std::vector<int> counts(n_clusters, 0);
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
        const int c = labels(i);
        if (c < 0) continue;
        centroids.row(c) += points.row(i);
        ++counts[c];
    }
    for (int c = 0; c < n_clusters; ++c)
        if (counts[c] > 0) centroids.row(c) /= static_cast<double>(counts[c]);
    return centroids;
}

} // namespace nescope

#endif
