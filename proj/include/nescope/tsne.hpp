#ifndef NESCOPE_TSNE_HPP
#define NESCOPE_TSNE_HPP

#include <cmath>
#include <optional>
#include <utility>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "nescope/affinity.hpp"
#include "nescope/core.hpp"
#include "nescope/dataset.hpp"
#include "nescope/pca.hpp"
#include "nescope/rng.hpp"

namespace nescope {

/// Heavy-tailed embedding kernel, w(a, b) = 1 / (1 + |a - b|^2). Values in (0, 1].
inline double kernel_w(const Vec2& a, const Vec2& b) {
    return 1.0 / (1.0 + (a - b).squaredNorm());
}

enum class TsneInit { Pca, Random, Given };

struct TsneConfig {
    double perplexity = 30.0;
    int max_iter = 1000;
    double learning_rate = 200.0;
    double initial_momentum = 0.5;
    double final_momentum = 0.8;
    int momentum_switch_iter = 250;
    double exaggeration = 12.0;
    int exaggeration_iters = 250;
    TsneInit init = TsneInit::Pca;
    std::uint64_t seed = 0;
    double entropy_tol = 1e-9;
    int loss_record_every = 25;

    void validate(Eigen::Index n) const {
        require(perplexity > 1.0 && perplexity < static_cast<double>(n),
                "TsneConfig: perplexity must lie in (1, n)");
        require(max_iter >= 0, "TsneConfig: max_iter must be non-negative");
        require(learning_rate > 0.0, "TsneConfig: learning_rate must be positive");
        require(exaggeration >= 1.0, "TsneConfig: exaggeration factor must be >= 1");
        require(exaggeration_iters >= 0 && momentum_switch_iter >= 0, "TsneConfig: iteration counts must be >= 0");
        require(loss_record_every >= 1, "TsneConfig: loss_record_every must be >= 1");
    }
};

struct Embedding {
    Points2 y;
    TsneConfig config;
    double loss = 0.0;
    std::vector<std::pair<int, double>> loss_trace;  // (iteration, loss)
};

/// Thrown when the optimizer produces non-finite coordinates; carries the last
/// finite state.
class tsne_divergence_error : public numeric_error {
public:
    tsne_divergence_error(const std::string& what, Points2 last)
        : numeric_error(what), last_finite(std::move(last)) {}
    Points2 last_finite;
};

namespace detail {

/// Kernel matrix W = 1/(1 + |y_i - y_j|^2) with zero diagonal, plus the
/// normalizer S = sum_{k != l} w_kl. Rows are computed independently and the
/// row sums are combined in index order, so the result does not depend on the
/// number of threads.
inline double fill_kernel_matrix(const Points2& y, Matrix& w) {
    const Eigen::Index n = y.rows();
    w.resize(n, n);
    Vector row_sums(n);
    const Vector r = y.rowwise().squaredNorm();
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (Eigen::Index i = 0; i < n; ++i) {
        auto row = w.row(i);
        row = (1.0 + r(i) + r.array().transpose() + (-2.0 * (y * y.row(i).transpose())).array().transpose())
                  .inverse();
        row(i) = 0.0;
        row_sums(i) = row.sum();
    }
    double s = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) s += row_sums(i);
    return s;
}

inline double loss_from_kernel(const Matrix& v, const Matrix& w, double s) {
    const Eigen::Index n = v.rows();
    Vector partial(n);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (Eigen::Index i = 0; i < n; ++i) {
        double acc = 0.0;
        for (Eigen::Index j = i + 1; j < n; ++j)
            if (v(i, j) != 0.0) acc -= 2.0 * v(i, j) * std::log(w(i, j));
        partial(i) = acc;
    }
    double loss = std::log(s);
    for (Eigen::Index i = 0; i < n; ++i) loss += partial(i);
    return loss;
}

/// grad_i = 4 sum_j (v_ij - w_ij / S) w_ij (y_i - y_j).
inline void gradient_from_kernel(const Points2& y, const Matrix& v, const Matrix& w, double s, Points2& grad) {
    const Eigen::Index n = y.rows();
    grad.resize(n, 2);
    const double inv_s = 1.0 / s;
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (Eigen::Index i = 0; i < n; ++i) {
        double m_sum = 0.0, ax = 0.0, ay = 0.0;
        for (Eigen::Index j = 0; j < n; ++j) {
            const double wij = w(i, j);
            const double m = (v(i, j) - wij * inv_s) * wij;
            m_sum += m;
            ax += m * y(j, 0);
            ay += m * y(j, 1);
        }
        grad(i, 0) = 4.0 * (m_sum * y(i, 0) - ax);
        grad(i, 1) = 4.0 * (m_sum * y(i, 1) - ay);
    }
}

} // namespace detail

/// Total embedding loss sum_{i<j} -2 v_ij log w_ij + log sum_{k != l} w_kl.
inline double total_loss(const Points2& y, const Matrix& v) {
    require(v.rows() == y.rows() && v.cols() == y.rows(), "total_loss: shape mismatch");
    require(y.allFinite(), "total_loss: non-finite embedding");
    Matrix w;
    const double s = detail::fill_kernel_matrix(y, w);
    return detail::loss_from_kernel(v, w, s);
}

inline Points2 total_gradient(const Points2& y, const Matrix& v) {
    require(v.rows() == y.rows() && v.cols() == y.rows(), "total_gradient: shape mismatch");
    require(y.allFinite(), "total_gradient: non-finite embedding");
    Matrix w;
    const double s = detail::fill_kernel_matrix(y, w);
    Points2 grad;
    detail::gradient_from_kernel(y, v, w, s, grad);
    return grad;
}

/// Gradient-descent refinement with backtracking; tightens an embedding to a
/// stationary point of the total loss. Used where tests and diagnostics need
/// per-point first-order conditions to hold to high precision.
inline void polish_embedding(Points2& y, const Matrix& v, int max_iter = 200, double grad_tol = 1e-10) {
    Matrix w;
    Points2 grad;
    double s = detail::fill_kernel_matrix(y, w);
    double loss = detail::loss_from_kernel(v, w, s);
    for (int it = 0; it < max_iter; ++it) {
        detail::gradient_from_kernel(y, v, w, s, grad);
        const double gnorm = grad.rowwise().norm().maxCoeff();
        if (gnorm < grad_tol * (1.0 + std::abs(loss))) break;
        double step = 1.0 / (1.0 + gnorm);
        bool accepted = false;
        for (int ls = 0; ls < 40; ++ls) {
            Points2 trial = y - step * grad;
            const double s_t = detail::fill_kernel_matrix(trial, w);
            const double loss_t = detail::loss_from_kernel(v, w, s_t);
            if (loss_t < loss) {
                y = std::move(trial);
                s = s_t;
                loss = loss_t;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) {
            s = detail::fill_kernel_matrix(y, w);
            break;
        }
    }
}

/// Exact t-SNE by momentum gradient descent. Deterministic for a fixed seed
/// and initialization; supports warm starts through TsneInit::Given.
inline Embedding run_tsne(const SimilarityMatrix& sim, const TsneConfig& config,
                          const Points2* init_y = nullptr, const Matrix* x_for_pca_init = nullptr) {
    const Eigen::Index n = sim.v.rows();
    config.validate(n);

    Points2 y(n, 2);
    switch (config.init) {
        case TsneInit::Given:
            require(init_y != nullptr && init_y->rows() == n, "run_tsne: missing or mis-sized warm-start matrix");
            y = *init_y;
            break;
        case TsneInit::Random: {
            Rng rng(config.seed, 0);
            for (Eigen::Index i = 0; i < n; ++i) {
                y(i, 0) = 1e-4 * rng.normal();
                y(i, 1) = 1e-4 * rng.normal();
            }
            break;
        }
        case TsneInit::Pca: {
            require(x_for_pca_init != nullptr && x_for_pca_init->rows() == n,
                    "run_tsne: PCA initialization needs the input matrix");
            PcaModel pca = fit_pca(*x_for_pca_init, 2);
            Matrix proj = pca.project(*x_for_pca_init);
            const double sd = std::sqrt(proj.col(0).squaredNorm() / static_cast<double>(n));
            y = proj * (sd > 0 ? 1e-4 / sd : 1.0);
            break;
        }
    }

    Embedding out;
    out.config = config;
    if (config.max_iter == 0) {
        out.y = y;
        out.loss = total_loss(y, sim.v);
        out.loss_trace.emplace_back(0, out.loss);
        return out;
    }

    Matrix v = sim.v;
    const bool exaggerate = config.exaggeration_iters > 0 && config.exaggeration > 1.0;
    if (exaggerate) v *= config.exaggeration;

    Points2 grad = Points2::Zero(n, 2);
    Points2 velocity = Points2::Zero(n, 2);
    Points2 gains = Points2::Ones(n, 2);
    Matrix w;
    double momentum = config.initial_momentum;

    for (int iter = 0; iter < config.max_iter; ++iter) {
        if (exaggerate && iter == config.exaggeration_iters) v = sim.v;
        if (iter == config.momentum_switch_iter) momentum = config.final_momentum;

        const double s = detail::fill_kernel_matrix(y, w);
        detail::gradient_from_kernel(y, v, w, s, grad);

        if (!grad.allFinite())
            throw tsne_divergence_error("run_tsne: gradient diverged at iteration " + std::to_string(iter), y);

        const bool record = (iter % config.loss_record_every == 0) || iter + 1 == config.max_iter;
        if (record) out.loss_trace.emplace_back(iter, detail::loss_from_kernel(v, w, s));

        for (Eigen::Index i = 0; i < n; ++i) {
            for (int c = 0; c < 2; ++c) {
                const bool same_sign = (grad(i, c) > 0) == (velocity(i, c) > 0);
                gains(i, c) = same_sign ? std::max(0.01, gains(i, c) * 0.8) : gains(i, c) + 0.2;
                velocity(i, c) = momentum * velocity(i, c) - config.learning_rate * gains(i, c) * grad(i, c);
            }
        }
        y += velocity;
        y.rowwise() -= y.colwise().mean();

        if (!y.allFinite()) {
            Points2 last = y - velocity;
            throw tsne_divergence_error("run_tsne: embedding diverged at iteration " + std::to_string(iter),
                                        std::move(last));
        }
    }

    out.y = std::move(y);
    out.loss = total_loss(out.y, sim.v);
    if (out.loss_trace.empty() || out.loss_trace.back().first != config.max_iter - 1)
        out.loss_trace.emplace_back(config.max_iter - 1, out.loss);
    else
        out.loss_trace.back().second = out.loss;
    return out;
}

/// Convenience overload computing the similarity matrix first.
inline Embedding run_tsne(const InputMatrix& x, const TsneConfig& config, const Points2* init_y = nullptr) {
    x.validate();
    SimilarityMatrix sim = similarity_matrix(x.values, config.perplexity, config.entropy_tol);
    return run_tsne(sim, config, init_y, &x.values);
}

} // namespace nescope

#endif
