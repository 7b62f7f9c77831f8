#ifndef NESCOPE_SCORES_HPP
#define NESCOPE_SCORES_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "nescope/core.hpp"
#include "nescope/dbscan.hpp"
#include "nescope/hessian.hpp"
#include "nescope/loo.hpp"
#include "nescope/pca.hpp"
#include "nescope/tsne.hpp"

namespace nescope {

enum class ApproxLevel { Exact, Approx1, Approx2 };

struct PerturbationConfig {
    double lambda = 0.0;             // <= 0: 10% of the input-space data diameter
    int num_directions = 3;          // top-k principal directions, searched with negations
    ApproxLevel level = ApproxLevel::Approx2;
    bool prescreen = false;
    int prescreen_min_pts = 10;
    double prescreen_radius = 0.0;   // <= 0: knee of the k-distance curve
    int pca_dim = 0;                 // similarity-space PCA width; 0 = raw input space
    double entropy_tol = 1e-9;
    SolveStrategy strategy = SolveStrategy::fast();
};

/// Per-point diagnostic values. A masked point was skipped by pre-screening;
/// a flagged point carries a non-finite score (singularity: non-positive
/// curvature) or a per-point error message.
struct ScoreReport {
    Vector scores;
    std::vector<std::uint8_t> flagged;
    std::vector<std::uint8_t> masked;
    std::string kind;
    std::string config_snapshot;
    std::vector<std::string> errors;

    Eigen::Index n() const { return scores.size(); }
};

namespace detail {

inline double max_pairwise_distance(const Matrix& x) {
    double best = 0.0;
    for (Eigen::Index i = 0; i < x.rows(); ++i)
        for (Eigen::Index j = i + 1; j < x.rows(); ++j)
            best = std::max(best, (x.row(i) - x.row(j)).squaredNorm());
    return std::sqrt(best);
}

/// Shared state for a batch of perturbation-score evaluations.
struct PerturbationContext {
    const Matrix* x_orig = nullptr;
    Matrix x_space;            // matrix the embedding similarities live on
    PcaModel pca;              // fitted on x_orig; supplies directions (and projection when pca_dim > 0)
    bool projected = false;
    const Points2* y = nullptr;
    const SimilarityMatrix* sim = nullptr;
    double s_full = 0.0;
    StartSet starts;
    double lambda = 0.0;
    int k = 0;
};

inline PerturbationContext make_perturbation_context(const Matrix& x, const Points2& y,
                                                     const SimilarityMatrix& sim,
                                                     const PerturbationConfig& cfg) {
    require(cfg.num_directions >= 1, "perturbation: need at least one direction");
    require(x.rows() == y.rows() && sim.v.rows() == x.rows(), "perturbation: inconsistent inputs");

    PerturbationContext ctx;
    ctx.x_orig = &x;
    ctx.y = &y;
    ctx.sim = &sim;
    ctx.k = static_cast<int>(std::min<Eigen::Index>(cfg.num_directions, std::min(x.cols(), x.rows())));

    const int fit_dim = std::max(cfg.pca_dim, ctx.k);
    ctx.pca = fit_pca(x, static_cast<int>(std::min<Eigen::Index>(fit_dim, std::min(x.cols(), x.rows()))));
    if (cfg.pca_dim > 0) {
        ctx.projected = true;
        ctx.x_space = (x.rowwise() - ctx.pca.mean.transpose()) * ctx.pca.directions.leftCols(cfg.pca_dim);
    } else {
        ctx.x_space = x;
    }

    Matrix w;
    ctx.s_full = fill_kernel_matrix(y, w);
    ctx.starts = make_start_set(y, cfg.strategy);
    ctx.lambda = cfg.lambda > 0.0 ? cfg.lambda : 0.1 * max_pairwise_distance(x);
    require(ctx.lambda > 0.0, "perturbation: data has zero diameter");
    return ctx;
}

/// Partial LOO problem for point i displaced by lambda * direction dir_idx,
/// honoring the requested approximation level.
inline LooProblem perturbed_problem(const PerturbationContext& ctx, const PerturbationConfig& cfg,
                                    Eigen::Index i, int dir_idx, double sign) {
    const Vector e = ctx.pca.directions.col(dir_idx);
    const double lam = sign * ctx.lambda;

    if (cfg.level == ApproxLevel::Exact && ctx.projected) {
        // Honest pipeline: refit the preprocessing PCA on the perturbed data.
        Matrix x_bar = *ctx.x_orig;
        x_bar.row(i) += lam * e.transpose();
        PcaModel pca_bar = fit_pca(x_bar, static_cast<int>(ctx.x_space.cols()));
        Matrix xb_space = pca_bar.project(x_bar);
        Vector warm = ctx.sim->sigma;
        const SimilarityMatrix bar = similarity_matrix(xb_space, ctx.sim->perplexity, cfg.entropy_tol, &warm);
        LooProblem p = partial_frame(*ctx.y, i, ctx.s_full);
        for (Eigen::Index k = 0, r = 0; k < ctx.x_space.rows(); ++k)
            if (k != i) p.u(r++) = bar.v(k, i);
        return p;
    }

    Vector x_new;
    if (ctx.projected) {
        // Directions are principal axes of the original data, so their
        // projection is a unit coordinate vector in the PCA space.
        x_new = ctx.x_space.row(i).transpose();
        if (dir_idx < ctx.x_space.cols()) x_new(dir_idx) += lam;
    } else {
        x_new = ctx.x_space.row(i).transpose() + lam * e;
    }
    const SimilarityMode mode =
        cfg.level == ApproxLevel::Approx2 ? SimilarityMode::Approx2 : SimilarityMode::Exact;
    return partial_loo_problem(ctx.x_space, *ctx.y, *ctx.sim, i, x_new, mode, ctx.s_full, cfg.entropy_tol);
}

inline double perturbation_score_point(const PerturbationContext& ctx, const PerturbationConfig& cfg,
                                       Eigen::Index i) {
    double best = 0.0;
    for (int d = 0; d < ctx.k; ++d) {
        for (double sign : {1.0, -1.0}) {
            LooProblem p;
            try {
                p = perturbed_problem(ctx, cfg, i, d, sign);
            } catch (const std::exception& ex) {
                throw numeric_error("perturbation score point " + std::to_string(i + 1) + ", direction " +
                                    (sign > 0 ? std::string("+e") : std::string("-e")) + std::to_string(d + 1) +
                                    ": " + ex.what());
            }
            try {
                const LooSolution sol = solve_loo_map(p, ctx.starts, cfg.strategy);
                best = std::max(best, (sol.y_star - ctx.y->row(i).transpose()).norm());
            } catch (const loo_solve_error& ex) {
                throw numeric_error("perturbation score point " + std::to_string(i + 1) + ", direction " +
                                    (sign > 0 ? std::string("+e") : std::string("-e")) + std::to_string(d + 1) +
                                    ": " + ex.what());
            }
        }
    }
    return best;
}

} // namespace detail

/// Embedding displacement of point i under moderate input perturbations:
/// max over the +-top-k principal directions of |f_i(x_i + lambda e) - y_i|.
inline double perturbation_score(const Matrix& x, const Points2& y, const SimilarityMatrix& sim, Eigen::Index i,
                                 const PerturbationConfig& cfg = {}) {
    require(i >= 0 && i < x.rows(), "perturbation_score: index out of range");
    const auto ctx = detail::make_perturbation_context(x, y, sim, cfg);
    return detail::perturbation_score_point(ctx, cfg, i);
}

/// Batch perturbation scores. With pre-screening enabled, only periphery
/// points of the embedding (density-cluster border and noise points) are
/// computed; interior cores are masked. Per-point failures land in the error
/// slots instead of aborting the batch.
inline ScoreReport perturbation_scores_batch(const Matrix& x, const Points2& y, const SimilarityMatrix& sim,
                                             const PerturbationConfig& cfg = {}) {
    const Eigen::Index n = x.rows();
    const auto ctx = detail::make_perturbation_context(x, y, sim, cfg);

    ScoreReport report;
    report.kind = "perturbation";
    report.scores = Vector::Zero(n);
    report.flagged.assign(n, 0);
    report.masked.assign(n, 0);
    report.errors.assign(n, "");

    if (cfg.prescreen) {
        const double eps =
            cfg.prescreen_radius > 0.0 ? cfg.prescreen_radius : k_distance_knee(y, cfg.prescreen_min_pts);
        const DbscanResult db = dbscan(y, eps, cfg.prescreen_min_pts);
        for (Eigen::Index i = 0; i < n; ++i)
            report.masked[i] = db.roles[i] == DbscanRole::Core;
    }

#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
    for (Eigen::Index i = 0; i < n; ++i) {
        if (report.masked[i]) continue;
        try {
            report.scores(i) = detail::perturbation_score_point(ctx, cfg, i);
        } catch (const std::exception& ex) {
            report.scores(i) = std::numeric_limits<double>::quiet_NaN();
            report.flagged[i] = 1;
            report.errors[i] = ex.what();
        }
    }
    return report;
}

enum class NeMethod { Tsne, Umap, LargeVis };

/// Singularity scores: 1 / lambda_min of the per-point loss Hessian. A
/// non-positive smallest eigenvalue means the frozen point is not at a local
/// minimum; the score is +inf and the point is flagged.
inline ScoreReport singularity_scores(const Points2& y, const Matrix& v, NeMethod method = NeMethod::Tsne,
                                      const UmapParams& umap = {}, const LargeVisParams& largevis = {}) {
    const Eigen::Index n = y.rows();
    require(v.rows() == n && v.cols() == n, "singularity_scores: shape mismatch");

    ScoreReport report;
    report.kind = "singularity";
    report.scores = Vector::Zero(n);
    report.flagged.assign(n, 0);
    report.masked.assign(n, 0);
    report.errors.assign(n, "");

    Matrix w;
    double s = 0.0;
    if (method == NeMethod::Tsne) s = detail::fill_kernel_matrix(y, w);

#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 16)
#endif
    for (Eigen::Index i = 0; i < n; ++i) {
        try {
            Hessian2 h;
            switch (method) {
                case NeMethod::Tsne:
                    h = Hessian2::from_matrix(detail::hessian_tsne_from_kernel(y, v, w, s, i));
                    break;
                case NeMethod::Umap:
                    h = singularity_hessian_umap(y, v, i, umap);
                    break;
                case NeMethod::LargeVis:
                    h = singularity_hessian_largevis(y, v, i, largevis);
                    break;
            }
            if (h.lambda_min <= 0.0) {
                report.scores(i) = std::numeric_limits<double>::infinity();
                report.flagged[i] = 1;
            } else {
                report.scores(i) = 1.0 / h.lambda_min;
            }
        } catch (const std::exception& ex) {
            report.scores(i) = std::numeric_limits<double>::quiet_NaN();
            report.flagged[i] = 1;
            report.errors[i] = ex.what();
        }
    }
    return report;
}

/// Mean of the top `fraction` of the finite scores; the count of non-finite
/// scores is reported separately.
inline double top_fraction_mean(const Vector& scores, double fraction, int* n_nonfinite = nullptr) {
    std::vector<double> finite;
    finite.reserve(scores.size());
    int bad = 0;
    for (Eigen::Index i = 0; i < scores.size(); ++i) {
        if (std::isfinite(scores(i)))
            finite.push_back(scores(i));
        else
            ++bad;
    }
    if (n_nonfinite) *n_nonfinite = bad;
    if (finite.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(finite.begin(), finite.end(), std::greater<double>());
    const std::size_t keep = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(fraction * finite.size())));
    double acc = 0.0;
    for (std::size_t i = 0; i < keep && i < finite.size(); ++i) acc += finite[i];
    return acc / static_cast<double>(std::min(keep, finite.size()));
}

struct PerplexityCurvePoint {
    double perplexity = 0.0;
    double top5_mean = 0.0;
    int n_infinite = 0;
    bool ok = false;
    std::string note;
};

struct PerplexitySelection {
    double chosen = 0.0;
    int chosen_index = -1;
    std::vector<PerplexityCurvePoint> curve;
};

/// Elbow rule on the log-scaled curve of mean top-5% singularity scores: the
/// chosen perplexity maximizes the discrete second difference, i.e. the point
/// where the rapid decay flattens out.
inline int elbow_index(const std::vector<double>& values) {
    require(values.size() >= 3, "elbow_index: need at least 3 curve points");
    int best = 1;
    double best_curv = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 1; k + 1 < values.size(); ++k) {
        const double curv = values[k - 1] - 2.0 * values[k] + values[k + 1];
        if (curv > best_curv) {
            best_curv = curv;
            best = static_cast<int>(k);
        }
    }
    return best;
}

/// Embeds the data at every candidate perplexity, tracks the top-5% mean
/// singularity score, and picks the elbow of the (log-scaled) curve.
inline PerplexitySelection select_perplexity(const InputMatrix& x, const std::vector<double>& candidates,
                                             const TsneConfig& base_config) {
    require(candidates.size() >= 3, "select_perplexity: need at least 3 candidates");
    for (std::size_t k = 1; k < candidates.size(); ++k)
        require(candidates[k] > candidates[k - 1], "select_perplexity: candidates must be ascending");

    PerplexitySelection out;
    out.curve.resize(candidates.size());
    for (std::size_t k = 0; k < candidates.size(); ++k) {
        auto& pt = out.curve[k];
        pt.perplexity = candidates[k];
        try {
            TsneConfig cfg = base_config;
            cfg.perplexity = candidates[k];
            const SimilarityMatrix sim = similarity_matrix(x.values, cfg.perplexity, cfg.entropy_tol);
            const Embedding emb = run_tsne(sim, cfg, nullptr, &x.values);
            const ScoreReport scores = singularity_scores(emb.y, sim.v);
            pt.top5_mean = top_fraction_mean(scores.scores, 0.05, &pt.n_infinite);
            pt.ok = std::isfinite(pt.top5_mean) && pt.top5_mean > 0.0;
            if (!pt.ok) pt.note = "no finite positive scores";
        } catch (const std::exception& ex) {
            pt.ok = false;
            pt.note = ex.what();
        }
    }

    std::vector<double> log_curve;
    std::vector<int> index_map;
    for (std::size_t k = 0; k < out.curve.size(); ++k) {
        if (out.curve[k].ok) {
            log_curve.push_back(std::log(out.curve[k].top5_mean));
            index_map.push_back(static_cast<int>(k));
        }
    }
    if (log_curve.size() < 3)
        throw numeric_error("select_perplexity: fewer than 3 candidates produced an embedding");

    out.chosen_index = index_map[static_cast<std::size_t>(elbow_index(log_curve))];
    out.chosen = out.curve[static_cast<std::size_t>(out.chosen_index)].perplexity;
    return out;
}

} // namespace nescope

#endif
