#ifndef NESCOPE_LOO_HPP
#define NESCOPE_LOO_HPP

#include <cmath>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "nescope/affinity.hpp"
#include "nescope/core.hpp"
#include "nescope/dataset.hpp"
#include "nescope/dbscan.hpp"
#include "nescope/rng.hpp"
#include "nescope/tsne.hpp"

namespace nescope {

/// Loss of a single free 2-D point against a frozen embedding: the similarity
/// column u holds the input-space affinities of the varied point to every
/// frozen point, z_frozen the kernel normalizer of the frozen pairs.
///
///   L(y) = sum_i -2 u_i log w(f_i, y) + log(z_frozen + 2 sum_i w(f_i, y))
struct LooProblem {
    std::shared_ptr<const Points2> frozen;
    Vector u;
    double z_frozen = 0.0;
    double scale = 1.0;  // frozen bounding-box diagonal, used for tolerances

    void validate() const {
        require(frozen && frozen->rows() == u.size(), "LooProblem: frozen/u size mismatch");
        require(frozen->allFinite(), "LooProblem: non-finite frozen embedding");
        require(u.minCoeff() >= 0.0, "LooProblem: negative similarity entry");
        require(u.maxCoeff() > 0.0, "LooProblem: similarity column has no positive entry");
        require(z_frozen >= 0.0, "LooProblem: negative frozen normalizer");
    }
};

inline double loo_loss(const LooProblem& p, const Vec2& y) {
    require(y.allFinite(), "loo_loss: non-finite point");
    const Points2& f = *p.frozen;
    const auto w = (1.0 + (f.rowwise() - y.transpose()).rowwise().squaredNorm().array()).inverse();
    const double z = p.z_frozen + 2.0 * w.sum();
    double attract = 0.0;
    for (Eigen::Index i = 0; i < f.rows(); ++i)
        if (p.u(i) != 0.0) attract -= 2.0 * p.u(i) * std::log(w(i));
    return attract + std::log(z);
}

/// Gradient of the LOO loss; equals -(F_a + F_r) with
/// F_a = 4 sum u_i w_i (f_i - y) and F_r = -(4/Z) sum w_i^2 (f_i - y).
inline Vec2 loo_gradient(const LooProblem& p, const Vec2& y) {
    require(y.allFinite(), "loo_gradient: non-finite point");
    const Points2& f = *p.frozen;
    const Eigen::Index m = f.rows();
    double gx = 0.0, gy = 0.0, wsum = 0.0, rx = 0.0, ry = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
        const double dx = y(0) - f(i, 0), dy = y(1) - f(i, 1);
        const double w = 1.0 / (1.0 + dx * dx + dy * dy);
        const double w2 = w * w;
        gx += p.u(i) * w * dx;
        gy += p.u(i) * w * dy;
        rx += w2 * dx;
        ry += w2 * dy;
        wsum += w;
    }
    const double z = p.z_frozen + 2.0 * wsum;
    return Vec2(4.0 * gx - 4.0 * rx / z, 4.0 * gy - 4.0 * ry / z);
}

/// Analytic 2x2 Hessian of the LOO loss, for Newton descent and curvature
/// classification of stationary points.
inline Mat2 loo_hessian(const LooProblem& p, const Vec2& y) {
    const Points2& f = *p.frozen;
    const Eigen::Index m = f.rows();
    Mat2 h = Mat2::Zero();
    Vec2 g = Vec2::Zero();
    double wsum = 0.0, sum_uw = 0.0, sum_w2 = 0.0;
    Mat2 outer_acc = Mat2::Zero();
    for (Eigen::Index i = 0; i < m; ++i) {
        const Vec2 d(y(0) - f(i, 0), y(1) - f(i, 1));
        const double w = 1.0 / (1.0 + d.squaredNorm());
        const double w2 = w * w;
        const Mat2 outer = d * d.transpose();
        sum_uw += p.u(i) * w;
        h.noalias() -= 8.0 * p.u(i) * w2 * outer;
        outer_acc.noalias() += w2 * w * outer;
        g += w2 * d;
        sum_w2 += w2;
        wsum += w;
    }
    const double z = p.z_frozen + 2.0 * wsum;
    h += (4.0 * sum_uw - 4.0 * sum_w2 / z) * Mat2::Identity();
    h.noalias() += (16.0 / z) * outer_acc;
    h.noalias() -= (16.0 / (z * z)) * (g * g.transpose());
    return h;
}

struct LocalMinimum {
    Vec2 y;
    double loss = 0.0;
};

struct LooSolution {
    Vec2 y_star;
    double loss = 0.0;
    std::vector<LocalMinimum> minima;  // deduplicated, sorted by loss
    int converged_starts = 0;
    int total_starts = 0;
};

/// Raised when no descent start converges; carries the best iterate seen.
class loo_solve_error : public numeric_error {
public:
    loo_solve_error(const std::string& what, Vec2 best, double best_loss)
        : numeric_error(what), best_iterate(std::move(best)), best_iterate_loss(best_loss) {}
    Vec2 best_iterate;
    double best_iterate_loss = 0.0;
};

/// Multi-start configuration for the LOO-map argmin search.
///
/// Full strategy (the default): descend from every frozen embedding point,
/// from density-cluster centroids of the frozen embedding, and from a coarse
/// grid over the bounding box inflated by 20%. The fast strategy thins the
/// frozen starts to one representative per coarse cell, which preserves basin
/// coverage at a fraction of the cost; batch scoring uses it.
struct SolveStrategy {
    bool thin_frozen_starts = false;
    double thin_cell = 0.05;          // cell size as a fraction of the bbox diagonal
    int grid_resolution = 7;          // coarse start grid per axis
    double inflate = 0.2;
    int centroid_min_pts = 10;
    int max_newton_iter = 100;
    double grad_tol = 1e-8;           // |grad| < grad_tol * (1 + |loss|)
    double dedup_radius = 1e-3;       // as a fraction of the frozen bbox diagonal

    static SolveStrategy full() { return {}; }
    static SolveStrategy fast() {
        SolveStrategy s;
        s.thin_frozen_starts = true;
        return s;
    }
};

/// Start points for the multi-start descent, built once per frozen embedding
/// and reused across problems that share it.
struct StartSet {
    std::vector<Vec2> points;
    double scale = 1.0;
};

inline StartSet make_start_set(const Points2& y, const SolveStrategy& strategy = {}) {
    StartSet out;
    out.scale = bbox_diagonal(y);
    const Eigen::Index n = y.rows();

    if (strategy.thin_frozen_starts) {
        // One representative per coarse grid cell, in index order.
        const double cell = std::max(strategy.thin_cell * out.scale, 1e-12);
        std::vector<std::pair<long long, long long>> seen;
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto key = std::make_pair(static_cast<long long>(std::floor(y(i, 0) / cell)),
                                            static_cast<long long>(std::floor(y(i, 1) / cell)));
            bool found = false;
            for (const auto& k : seen)
                if (k == key) {
                    found = true;
                    break;
                }
            if (!found) {
                seen.push_back(key);
                out.points.emplace_back(y(i, 0), y(i, 1));
            }
        }
    } else {
        for (Eigen::Index i = 0; i < n; ++i) out.points.emplace_back(y(i, 0), y(i, 1));
    }

    // Density-cluster centroids of the frozen embedding.
    if (n > strategy.centroid_min_pts) {
        const double eps = k_distance_knee(y, strategy.centroid_min_pts);
        const DbscanResult db = dbscan(y, eps, strategy.centroid_min_pts);
        if (db.n_clusters > 0) {
            const Matrix centroids = cluster_centroids(y, db.labels, db.n_clusters);
            for (Eigen::Index c = 0; c < centroids.rows(); ++c)
                out.points.emplace_back(centroids(c, 0), centroids(c, 1));
        }
    }

    // Coarse grid over the inflated bounding box.
    const Vec2 lo = y.colwise().minCoeff();
    const Vec2 hi = y.colwise().maxCoeff();
    const Vec2 pad = strategy.inflate * (hi - lo).cwiseMax(1e-6);
    const Vec2 a = lo - pad, b = hi + pad;
    const int res = std::max(strategy.grid_resolution, 2);
    for (int ix = 0; ix < res; ++ix) {
        for (int iy = 0; iy < res; ++iy) {
            out.points.emplace_back(a(0) + (b(0) - a(0)) * ix / (res - 1.0),
                                    a(1) + (b(1) - a(1)) * iy / (res - 1.0));
        }
    }
    return out;
}

namespace detail {

struct DescentResult {
    Vec2 y;
    double loss = 0.0;
    double grad_norm = 0.0;
    double lambda_min = 0.0;
    bool converged = false;
};

/// Damped-Newton descent on the LOO loss from a single start.
inline DescentResult loo_descend(const LooProblem& p, Vec2 y, const SolveStrategy& strategy) {
    DescentResult out;
    double loss = loo_loss(p, y);
    for (int it = 0; it < strategy.max_newton_iter; ++it) {
        const Vec2 g = loo_gradient(p, y);
        const double gnorm = g.norm();
        if (gnorm <= strategy.grad_tol * (1.0 + std::abs(loss))) {
            const Hessian2 h = Hessian2::from_matrix(loo_hessian(p, y));
            out = {y, loss, gnorm, h.lambda_min, true};
            return out;
        }

        const Hessian2 h = Hessian2::from_matrix(loo_hessian(p, y));
        const double damp = std::max(0.0, 1e-8 * (1.0 + std::abs(h.lambda_max)) - h.lambda_min);
        Mat2 hd = h.h + damp * Mat2::Identity();
        Vec2 step = -hd.inverse() * g;
        if (!step.allFinite() || g.dot(step) >= 0.0) step = -g;

        double t = 1.0;
        bool accepted = false;
        for (int ls = 0; ls < 60; ++ls) {
            const Vec2 trial = y + t * step;
            const double trial_loss = loo_loss(p, trial);
            if (trial_loss <= loss + 1e-4 * t * g.dot(step)) {
                y = trial;
                loss = trial_loss;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if (!accepted) break;  // flat within rounding
    }
    const Vec2 g = loo_gradient(p, y);
    const Hessian2 h = Hessian2::from_matrix(loo_hessian(p, y));
    out = {y, loss, g.norm(), h.lambda_min, g.norm() <= strategy.grad_tol * (1.0 + std::abs(loss))};
    return out;
}

} // namespace detail

/// Global argmin search for the LOO-map: multi-start damped-Newton descent,
/// saddle filtering by the curvature at convergence, deduplication of minima
/// at 1e-3 of the embedding scale. Returns the lowest-loss minimum together
/// with every distinct local minimum found.
inline LooSolution solve_loo_map(const LooProblem& p, const StartSet& starts, const SolveStrategy& strategy = {}) {
    p.validate();
    require(!starts.points.empty(), "solve_loo_map: empty start set");

    LooSolution out;
    out.total_starts = static_cast<int>(starts.points.size());

    Vec2 best_iterate = starts.points.front();
    double best_iterate_loss = std::numeric_limits<double>::infinity();
    const double dedup = strategy.dedup_radius * starts.scale;
    const double pd_tol = 0.0;

    for (const Vec2& s0 : starts.points) {
        const auto r = detail::loo_descend(p, s0, strategy);
        if (r.loss < best_iterate_loss) {
            best_iterate_loss = r.loss;
            best_iterate = r.y;
        }
        if (!r.converged) continue;
        ++out.converged_starts;
        if (r.lambda_min <= pd_tol) continue;  // saddle or degenerate curvature
        bool merged = false;
        for (auto& m : out.minima) {
            if ((m.y - r.y).norm() <= dedup) {
                if (r.loss < m.loss) m = {r.y, r.loss};
                merged = true;
                break;
            }
        }
        if (!merged) out.minima.push_back({r.y, r.loss});
    }

    if (out.minima.empty())
        throw loo_solve_error("solve_loo_map: no start converged to a local minimum", best_iterate,
                              best_iterate_loss);

    std::sort(out.minima.begin(), out.minima.end(),
              [](const LocalMinimum& a, const LocalMinimum& b) { return a.loss < b.loss; });
    out.y_star = out.minima.front().y;
    out.loss = out.minima.front().loss;
    return out;
}

inline LooSolution solve_loo_map(const LooProblem& p, const SolveStrategy& strategy = {}) {
    return solve_loo_map(p, make_start_set(*p.frozen, strategy), strategy);
}

enum class SimilarityMode { Exact, Approx2 };

namespace detail {

/// Conditional probabilities of a single new row against fixed points:
/// solves the row bandwidth and returns p_{j|new} over the fixed points.
inline Vector single_row_conditional(const Vector& sq_dists, double perplexity, double tol, double& sigma_out) {
    const Eigen::Index m = sq_dists.size();
    require(perplexity > 1.0 && perplexity < static_cast<double>(m + 1),
            "single_row_conditional: perplexity out of range");
    double min_pos = -1.0;
    for (Eigen::Index j = 0; j < m; ++j)
        if (sq_dists(j) > 0.0 && (min_pos < 0.0 || sq_dists(j) < min_pos)) min_pos = sq_dists(j);
    if (min_pos < 0.0) throw numeric_error("single_row_conditional: new point duplicates every existing point");

    Eigen::Index pos_count = 0;
    for (Eigen::Index j = 0; j < m; ++j) pos_count += sq_dists(j) > 0.0;
    Vector delta(pos_count);
    Eigen::Index k = 0;
    for (Eigen::Index j = 0; j < m; ++j)
        if (sq_dists(j) > 0.0) delta(k++) = sq_dists(j) - min_pos;

    const double guess = std::sqrt(std::max(delta.mean() + min_pos, min_pos) * 0.5);
    const auto cal = solve_row_bandwidth(delta, std::log2(perplexity), tol, guess, -1);
    sigma_out = cal.sigma;

    const double beta = 1.0 / (2.0 * cal.sigma * cal.sigma);
    const double shift = sq_dists.minCoeff();
    Vector e = (-beta * (sq_dists.array() - shift)).exp().matrix();
    return e / e.sum();
}

} // namespace detail

/// Builds the LOO problem for a new input point appended to X.
///
/// Exact mode recalibrates the whole augmented similarity matrix; Approx2
/// reuses the stored per-row bandwidths and solves a single bandwidth for the
/// new row. s_frozen, when non-negative, supplies the precomputed kernel
/// normalizer of Y.
inline LooProblem make_loo_problem(const Matrix& x, const Points2& y, const SimilarityMatrix& sim,
                                   const Vector& x_new, SimilarityMode mode = SimilarityMode::Approx2,
                                   double s_frozen = -1.0, double entropy_tol = 1e-9) {
    const Eigen::Index n = x.rows();
    require(y.rows() == n && sim.v.rows() == n, "make_loo_problem: inconsistent inputs");
    require(x_new.size() == x.cols(), "make_loo_problem: new point has wrong dimension");

    LooProblem p;
    p.frozen = std::make_shared<Points2>(y);
    p.scale = bbox_diagonal(y);
    if (s_frozen < 0.0) {
        Matrix w;
        s_frozen = detail::fill_kernel_matrix(y, w);
    }
    p.z_frozen = s_frozen;
    p.u.resize(n);

    if (mode == SimilarityMode::Exact) {
        Matrix x_aug(n + 1, x.cols());
        x_aug.topRows(n) = x;
        x_aug.row(n) = x_new.transpose();
        Vector warm(n + 1);
        warm.head(n) = sim.sigma;
        warm(n) = 0.0;
        const SimilarityMatrix aug = similarity_matrix(x_aug, sim.perplexity, entropy_tol, &warm);
        p.u = aug.v.col(n).head(n);
    } else {
        const Vector d2 = (x.rowwise() - x_new.transpose()).rowwise().squaredNorm();
        double sigma_new = 0.0;
        const Vector p_new = detail::single_row_conditional(d2, sim.perplexity, entropy_tol, sigma_new);
        for (Eigen::Index i = 0; i < n; ++i) {
            const double beta = 1.0 / (2.0 * sim.sigma(i) * sim.sigma(i));
            const double e = std::exp(-beta * (d2(i) - sim.row_shift(i)));
            const double p_new_given_i = e / (sim.row_den(i) + e);
            p.u(i) = (p_new_given_i + p_new(i)) / (2.0 * static_cast<double>(n + 1));
        }
    }
    return p;
}

namespace detail {

/// Frozen-embedding frame of a partial problem: every embedding point except
/// row i, with the pair normalizer reduced by both ordered pairs touching i.
inline LooProblem partial_frame(const Points2& y, Eigen::Index i, double s_full) {
    const Eigen::Index n = y.rows();
    LooProblem p;
    auto frozen = std::make_shared<Points2>(n - 1, 2);
    for (Eigen::Index k = 0, r = 0; k < n; ++k)
        if (k != i) frozen->row(r++) = y.row(k);
    p.frozen = frozen;
    p.scale = bbox_diagonal(y);

    if (s_full < 0.0) {
        Matrix w;
        s_full = fill_kernel_matrix(y, w);
    }
    double cross = 0.0;
    for (Eigen::Index k = 0; k < n; ++k)
        if (k != i) cross += 1.0 / (1.0 + (y.row(k) - y.row(i)).squaredNorm());
    p.z_frozen = s_full - 2.0 * cross;
    p.u = Vector::Zero(n - 1);
    return p;
}

} // namespace detail

/// Builds the partial LOO problem: input row i replaced by x_replacement, all
/// embedding points except row i frozen.
inline LooProblem partial_loo_problem(const Matrix& x, const Points2& y, const SimilarityMatrix& sim,
                                      Eigen::Index i, const Vector& x_replacement,
                                      SimilarityMode mode = SimilarityMode::Approx2, double s_full = -1.0,
                                      double entropy_tol = 1e-9) {
    const Eigen::Index n = x.rows();
    require(i >= 0 && i < n, "partial_loo_problem: index out of range");
    require(y.rows() == n && sim.v.rows() == n, "partial_loo_problem: inconsistent inputs");
    require(x_replacement.size() == x.cols(), "partial_loo_problem: replacement has wrong dimension");

    LooProblem p = detail::partial_frame(y, i, s_full);
    if (mode == SimilarityMode::Exact) {
        Matrix x_bar = x;
        x_bar.row(i) = x_replacement.transpose();
        const SimilarityMatrix bar = similarity_matrix(x_bar, sim.perplexity, entropy_tol, &sim.sigma);
        for (Eigen::Index k = 0, r = 0; k < n; ++k)
            if (k != i) p.u(r++) = bar.v(k, i);
    } else {
        Vector d2_new(n - 1), d2_old(n - 1);
        for (Eigen::Index k = 0, r = 0; k < n; ++k) {
            if (k == i) continue;
            d2_new(r) = (x.row(k).transpose() - x_replacement).squaredNorm();
            d2_old(r) = (x.row(k) - x.row(i)).squaredNorm();
            ++r;
        }
        double sigma_i = 0.0;
        const Vector p_row = detail::single_row_conditional(d2_new, sim.perplexity, entropy_tol, sigma_i);
        for (Eigen::Index k = 0, r = 0; k < n; ++k) {
            if (k == i) continue;
            const double beta = 1.0 / (2.0 * sim.sigma(k) * sim.sigma(k));
            const double e_old = std::exp(-beta * (d2_old(r) - sim.row_shift(k)));
            const double e_new = std::exp(-beta * (d2_new(r) - sim.row_shift(k)));
            const double den = sim.row_den(k) - e_old + e_new;
            const double p_i_given_k = e_new / den;
            p.u(r) = (p_i_given_k + p_row(r)) / (2.0 * static_cast<double>(n));
            ++r;
        }
    }
    return p;
}

/// Dense evaluation of the LOO loss and its negative gradient over a grid,
/// with local minima located by descent seeded from every cell.
struct LandscapeGrid {
    double x_min = 0.0, x_max = 0.0, y_min = 0.0, y_max = 0.0;
    int res_x = 0, res_y = 0;
    Matrix loss;      // res_y x res_x, row index = y cell
    Matrix neg_grad_x;
    Matrix neg_grad_y;
    std::vector<LocalMinimum> minima;
};

inline LandscapeGrid landscape(const LooProblem& p, double x_min, double x_max, double y_min, double y_max,
                               int res_x, int res_y, const SolveStrategy& strategy = {}) {
    p.validate();
    require(res_x >= 2 && res_y >= 2, "landscape: resolution must be at least 2 per axis");
    require(x_max > x_min && y_max > y_min, "landscape: empty bounds");

    LandscapeGrid grid;
    grid.x_min = x_min;
    grid.x_max = x_max;
    grid.y_min = y_min;
    grid.y_max = y_max;
    grid.res_x = res_x;
    grid.res_y = res_y;
    grid.loss.resize(res_y, res_x);
    grid.neg_grad_x.resize(res_y, res_x);
    grid.neg_grad_y.resize(res_y, res_x);

    std::vector<detail::DescentResult> results(static_cast<std::size_t>(res_x) * res_y);
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 4)
#endif
    for (int cell = 0; cell < res_x * res_y; ++cell) {
        const int ix = cell % res_x;
        const int iy = cell / res_x;
        const Vec2 pos(x_min + (x_max - x_min) * ix / (res_x - 1.0),
                       y_min + (y_max - y_min) * iy / (res_y - 1.0));
        grid.loss(iy, ix) = loo_loss(p, pos);
        const Vec2 g = loo_gradient(p, pos);
        grid.neg_grad_x(iy, ix) = -g(0);
        grid.neg_grad_y(iy, ix) = -g(1);
        results[cell] = detail::loo_descend(p, pos, strategy);
    }

    const double dedup = strategy.dedup_radius * p.scale;
    for (const auto& r : results) {
        if (!r.converged || r.lambda_min <= 0.0) continue;
        bool merged = false;
        for (auto& m : grid.minima) {
            if ((m.y - r.y).norm() <= dedup) {
                if (r.loss < m.loss) m = {r.y, r.loss};
                merged = true;
                break;
            }
        }
        if (!merged) grid.minima.push_back({r.y, r.loss});
    }
    std::sort(grid.minima.begin(), grid.minima.end(),
              [](const LocalMinimum& a, const LocalMinimum& b) { return a.loss < b.loss; });
    return grid;
}

/// Landscape over the frozen embedding's bounding box inflated by 20%.
inline LandscapeGrid landscape(const LooProblem& p, int res_x, int res_y, const SolveStrategy& strategy = {}) {
    const Vec2 lo = p.frozen->colwise().minCoeff();
    const Vec2 hi = p.frozen->colwise().maxCoeff();
    const Vec2 pad = 0.2 * (hi - lo).cwiseMax(1e-6);
    return landscape(p, lo(0) - pad(0), hi(0) + pad(0), lo(1) - pad(1), hi(1) + pad(1), res_x, res_y, strategy);
}

struct Trajectory {
    Vector t;         // interpolation coefficients
    Points2 y;        // LOO-map image per coefficient
    Vector jump;      // consecutive displacement, jump(0) = 0
    double max_jump = 0.0;
};

/// Tracks the LOO-map along the segment x(t) = t c1 + (1 - t) c2 on an evenly
/// spaced t-grid and records consecutive embedding jumps.
inline Trajectory interpolation_trajectory(const Matrix& x, const Points2& y, const SimilarityMatrix& sim,
                                           const Vector& c1, const Vector& c2, int steps,
                                           SimilarityMode mode = SimilarityMode::Approx2,
                                           const SolveStrategy& strategy = {}) {
    require(steps >= 2, "interpolation_trajectory: need at least 2 steps");

    Matrix w;
    const double s_frozen = detail::fill_kernel_matrix(y, w);
    const StartSet starts = make_start_set(y, strategy);

    Trajectory out;
    out.t.resize(steps);
    out.y.resize(steps, 2);
    out.jump = Vector::Zero(steps);

#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
    for (int k = 0; k < steps; ++k) {
        const double t = static_cast<double>(k) / (steps - 1.0);
        const Vector xt = t * c1 + (1.0 - t) * c2;
        const LooProblem p = make_loo_problem(x, y, sim, xt, mode, s_frozen);
        const LooSolution sol = solve_loo_map(p, starts, strategy);
        out.t(k) = t;
        out.y.row(k) = sol.y_star.transpose();
    }
    for (int k = 1; k < steps; ++k) {
        out.jump(k) = (out.y.row(k) - out.y.row(k - 1)).norm();
        out.max_jump = std::max(out.max_jump, out.jump(k));
    }
    return out;
}

/// Closed-form limiting negative-gradient field around the midpoint of two
/// balanced, well-separated embedding clusters at +-theta:
///
///   field(y) = (y_par - y_perp) / |theta|^2 + eps * theta / |theta|^2
///
/// where y_par is the projection of y onto theta. The first term is
/// hyperbolic (pull toward the theta axis, push along it), the second tilts
/// the field toward one cluster.
inline Vec2 theoretical_field(const Vec2& theta, double eps, const Vec2& y) {
    const double t2 = theta.squaredNorm();
    require(t2 > 0.0, "theoretical_field: theta must be nonzero");
    const Vec2 y_par = theta * (theta.dot(y) / t2);
    const Vec2 y_perp = y - y_par;
    return (y_par - y_perp) / t2 + eps * theta / t2;
}

struct LooValidationReport {
    Vector eps;        // per-trial values
    double mean = 0.0;
    double stddev = 0.0;
    int n = 0;
    double perplexity = 0.0;
};

/// Empirical check of the LOO assumption. X is embedded once; each trial
/// appends one sampled point, re-embeds the augmented data warm-started from
/// the original embedding (no early exaggeration), and reports the normalized
/// Frobenius error between the original and re-optimized first n rows.
///
/// Trial k draws from substream (seed, 1000 + k), so trials are independent
/// and parallelizable.
inline LooValidationReport validate_loo(const InputMatrix& x, const TsneConfig& config, int trials,
                                        const std::function<Vector(Rng&)>& sample_point,
                                        int second_run_iters = 250) {
    require(trials >= 1, "validate_loo: need at least one trial");
    x.validate();

    const Eigen::Index n = x.n();
    const SimilarityMatrix sim = similarity_matrix(x.values, config.perplexity, config.entropy_tol);
    const Embedding base = run_tsne(sim, config, nullptr, &x.values);
    const double base_norm = base.y.norm();
    require(base_norm > 0.0, "validate_loo: degenerate base embedding");

    LooValidationReport report;
    report.eps.resize(trials);
    report.n = static_cast<int>(n);
    report.perplexity = config.perplexity;

    std::string failure;
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
    for (int k = 0; k < trials; ++k) {
        try {
            Rng rng(config.seed, 1000 + static_cast<std::uint64_t>(k));
            const Vector x_new = sample_point(rng);

            Matrix x_aug(n + 1, x.values.cols());
            x_aug.topRows(n) = x.values;
            x_aug.row(n) = x_new.transpose();
            Vector warm(n + 1);
            warm.head(n) = sim.sigma;
            warm(n) = 0.0;
            const SimilarityMatrix sim_aug =
                similarity_matrix(x_aug, config.perplexity, config.entropy_tol, &warm);

            Points2 y0(n + 1, 2);
            y0.topRows(n) = base.y;
            y0(n, 0) = 1e-4 * rng.normal();
            y0(n, 1) = 1e-4 * rng.normal();

            TsneConfig warm_cfg = config;
            warm_cfg.init = TsneInit::Given;
            warm_cfg.max_iter = second_run_iters;
            warm_cfg.exaggeration_iters = 0;
            warm_cfg.momentum_switch_iter = 0;
            const Embedding second = run_tsne(sim_aug, warm_cfg, &y0);

            report.eps(k) = (base.y - second.y.topRows(n)).norm() / base_norm;
        } catch (const std::exception& ex) {
#ifdef _OPENMP
#pragma omp critical
#endif
            if (failure.empty()) failure = ex.what();
        }
    }
    if (!failure.empty()) throw numeric_error(failure);

    report.mean = report.eps.mean();
    if (trials > 1) {
        const double var = (report.eps.array() - report.mean).square().sum() / (trials - 1.0);
        report.stddev = std::sqrt(var);
    }
    return report;
}

} // namespace nescope

#endif
