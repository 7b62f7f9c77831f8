#ifndef NESCOPE_HESSIAN_HPP
#define NESCOPE_HESSIAN_HPP

#include <cmath>
#include <limits>
#include <vector>

#include "nescope/core.hpp"
#include "nescope/tsne.hpp"

namespace nescope {

/// Symmetric 2x2 Hessian with closed-form eigenvalues.
struct Hessian2 {
    Mat2 h = Mat2::Zero();
    double lambda_min = 0.0;
    double lambda_max = 0.0;

    static Hessian2 from_matrix(const Mat2& m) {
        Hessian2 out;
        out.h = 0.5 * (m + m.transpose());
        const double a = out.h(0, 0), b = out.h(0, 1), d = out.h(1, 1);
        const double mean = 0.5 * (a + d);
        const double r = std::sqrt(0.25 * (a - d) * (a - d) + b * b);
        out.lambda_min = mean - r;
        out.lambda_max = mean + r;
        return out;
    }
};

/// Extras for the UMAP loss: w = (1 + a |dy|^(2b))^-1.
struct UmapParams {
    double a = 1.0;
    double b = 1.0;
};

/// Extras for the LargeVis loss: positive edges E with weight v, negative
/// pairs weighted gamma.
struct LargeVisParams {
    std::vector<std::pair<int, int>> edges;
    double gamma = 0.0;
};

namespace detail {

/// Core of the t-SNE per-point Hessian given a precomputed kernel matrix.
inline Mat2 hessian_tsne_from_kernel(const Points2& y, const Matrix& v, const Matrix& w, double s,
                                     Eigen::Index i) {
    const Eigen::Index n = y.rows();
    Mat2 h = Mat2::Zero();
    Vec2 g = Vec2::Zero();
    double sum_vw = 0.0, sum_w2 = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
        if (j == i) continue;
        const Vec2 d = (y.row(i) - y.row(j)).transpose();
        const double wij = w(i, j);
        const double w2 = wij * wij;
        const Mat2 outer = d * d.transpose();
        sum_vw += v(i, j) * wij;
        sum_w2 += w2;
        h.noalias() += (-8.0 * v(i, j) * w2 + 16.0 * w2 * wij / s) * outer;
        g += w2 * d;
    }
    h += (4.0 * sum_vw - 4.0 * sum_w2 / s) * Mat2::Identity();
    h.noalias() -= (16.0 / (s * s)) * (g * g.transpose());
    return h;
}

} // namespace detail

/// Hessian of the t-SNE total loss with respect to y_i, evaluated at Y.
///
///   H_i = 4 sum_j v_ij w_ij I - 8 sum_j v_ij w_ij^2 d d^T
///       - (4/S) sum_j w_ij^2 I + (16/S) sum_j w_ij^3 d d^T - (16/S^2) g g^T
///
/// with d = y_i - y_j, S = sum_{k != l} w_kl and g = sum_j w_ij^2 d.
inline Hessian2 singularity_hessian_tsne(const Points2& y, const Matrix& v, Eigen::Index i) {
    const Eigen::Index n = y.rows();
    require(v.rows() == n && v.cols() == n, "singularity_hessian_tsne: shape mismatch");
    require(i >= 0 && i < n, "singularity_hessian_tsne: index out of range");
    require(y.allFinite(), "singularity_hessian_tsne: non-finite embedding");

    Matrix w;
    const double s = detail::fill_kernel_matrix(y, w);
    return Hessian2::from_matrix(detail::hessian_tsne_from_kernel(y, v, w, s, i));
}

/// UMAP total loss: sum_{i<j} [-v log w - (1 - v) log(1 - w)],
/// w = (1 + a |dy|^(2b))^-1, no normalizer.
inline double umap_total_loss(const Points2& y, const Matrix& v, const UmapParams& p) {
    const Eigen::Index n = y.rows();
    double loss = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const double r2 = (y.row(i) - y.row(j)).squaredNorm();
            const double w = 1.0 / (1.0 + p.a * std::pow(r2, p.b));
            loss += -v(i, j) * std::log(w) - (1.0 - v(i, j)) * std::log1p(-w);
        }
    }
    return loss;
}

inline Hessian2 singularity_hessian_umap(const Points2& y, const Matrix& v, Eigen::Index i, const UmapParams& p) {
    const Eigen::Index n = y.rows();
    require(v.rows() == n && v.cols() == n, "singularity_hessian_umap: shape mismatch");
    require(i >= 0 && i < n, "singularity_hessian_umap: index out of range");
    require(p.a > 0.0 && p.b > 0.0, "singularity_hessian_umap: a and b must be positive");

    const double a = p.a, b = p.b;
    Mat2 h = Mat2::Zero();
    for (Eigen::Index k = 0; k < n; ++k) {
        if (k == i) continue;
        const Vec2 d = (y.row(i) - y.row(k)).transpose();
        const double r2 = d.squaredNorm();
        if (r2 <= 0.0)
            throw numeric_error("singularity_hessian_umap: coincident points " + std::to_string(i) + " and " +
                                std::to_string(k));
        const double vik = v(i, k);
        const double w = 1.0 / (1.0 + a * std::pow(r2, b));
        const double p1 = std::pow(r2, b - 1.0);   // |d|^(2(b-1))
        const double p2 = p1 * p1;                 // |d|^(4(b-1))
        const double p3 = std::pow(r2, b - 2.0);   // |d|^(2(b-2))
        const Mat2 outer = d * d.transpose();

        h += 2.0 * a * b * vik * w * p1 * Mat2::Identity();
        h.noalias() -= 4.0 * a * a * b * b * vik * w * w * p2 * outer;
        h.noalias() += 4.0 * a * b * (b - 1.0) * vik * w * p3 * outer;
        h -= 2.0 * a * b * (1.0 - vik) * w * w / (1.0 - w) * p1 * Mat2::Identity();
        h.noalias() += a * a * b * b * std::pow(w, 4) * (8.0 / w - 4.0) / ((1.0 - w) * (1.0 - w)) * (1.0 - vik) *
                       p2 * outer;
        h.noalias() -= 4.0 * a * b * (b - 1.0) * w * w / (1.0 - w) * (1.0 - vik) * p3 * outer;
    }
    return Hessian2::from_matrix(h);
}

/// LargeVis total loss: sum_{i<j} [1{(i,j) in E} v_ij log w + gamma 1{not in E} log(1 - w)],
/// w = (1 + |dy|^2)^-1.
inline double largevis_total_loss(const Points2& y, const Matrix& v, const LargeVisParams& p) {
    const Eigen::Index n = y.rows();
    Matrix in_e = Matrix::Zero(n, n);
    for (auto [a, b] : p.edges) {
        in_e(a, b) = 1.0;
        in_e(b, a) = 1.0;
    }
    double loss = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const double w = 1.0 / (1.0 + (y.row(i) - y.row(j)).squaredNorm());
            if (in_e(i, j) != 0.0)
                loss += v(i, j) * std::log(w);
            else
                loss += p.gamma * std::log1p(-w);
        }
    }
    return loss;
}

inline Hessian2 singularity_hessian_largevis(const Points2& y, const Matrix& v, Eigen::Index i,
                                             const LargeVisParams& p) {
    const Eigen::Index n = y.rows();
    require(v.rows() == n && v.cols() == n, "singularity_hessian_largevis: shape mismatch");
    require(i >= 0 && i < n, "singularity_hessian_largevis: index out of range");
    require(p.gamma >= 0.0, "singularity_hessian_largevis: gamma must be >= 0");

    std::vector<std::uint8_t> in_e(n, 0);
    for (auto [a, b] : p.edges) {
        if (a == i) in_e[b] = 1;
        if (b == i) in_e[a] = 1;
    }

    Mat2 h = Mat2::Zero();
    for (Eigen::Index k = 0; k < n; ++k) {
        if (k == i) continue;
        const Vec2 d = (y.row(i) - y.row(k)).transpose();
        const double r2 = d.squaredNorm();
        const double w = 1.0 / (1.0 + r2);
        const Mat2 outer = d * d.transpose();
        const bool positive = in_e[k] != 0;
        const double m = positive ? v(i, k) : p.gamma;
        h -= m * (2.0 * w * Mat2::Identity() - 4.0 * w * w * outer);
        if (!positive && p.gamma != 0.0) {
            if (r2 <= 0.0)
                throw numeric_error("singularity_hessian_largevis: coincident points " + std::to_string(i) +
                                    " and " + std::to_string(k) + " in a repulsive term");
            h += p.gamma * (2.0 / r2 * Mat2::Identity() - 4.0 / (r2 * r2) * outer);
        }
    }
    return Hessian2::from_matrix(h);
}

} // namespace nescope

#endif
