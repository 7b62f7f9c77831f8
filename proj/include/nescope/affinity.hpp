#ifndef NESCOPE_AFFINITY_HPP
#define NESCOPE_AFFINITY_HPP

#include <cmath>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "nescope/core.hpp"

namespace nescope {

/// Symmetrized input similarities for t-SNE: v_ij = (p_{j|i} + p_{i|j}) / (2n),
/// zero diagonal, total sum 1. sigma/row_shift/row_den cache the per-row
/// Gaussian calibration so a single row can be re-solved after perturbing one
/// input point.
struct SimilarityMatrix {
    Matrix v;             // n x n, symmetric
    double perplexity = 0.0;
    Vector sigma;         // per-row bandwidths
    Vector row_shift;     // per-row min squared distance (stability shift)
    Vector row_den;       // per-row sum_k exp(-(d_ik^2 - shift_i) / (2 sigma_i^2))

    Eigen::Index n() const { return v.rows(); }
};

namespace detail {

constexpr double kLn2 = 0.69314718055994530941723212145818;

/// Entropy (bits) of the Gaussian row kernel at the given beta = 1/(2 sigma^2),
/// over shifted squared distances delta (delta >= 0, at least one zero entry).
/// Also returns the shifted kernel sum.
inline double row_entropy_bits(const Vector& delta, double beta, double& den_out) {
    const Vector e = (-beta * delta.array()).exp().matrix();
    const double den = e.sum();
    const double mixed = e.dot(delta);
    den_out = den;
    return (beta * mixed / den + std::log(den)) / kLn2;
}

struct RowCalibration {
    double sigma = 0.0;
    double den = 0.0;        // shifted kernel sum at the solution
    double shift = 0.0;      // subtracted squared distance
};

/// Solves the per-row bandwidth so that the conditional distribution has
/// entropy log2(perplexity). Expanding bracket around the initial guess, then
/// bisection; entropy is monotone increasing in sigma.
inline RowCalibration solve_row_bandwidth(const Vector& delta, double target_bits, double tol,
                                          double sigma_guess, int row) {
    RowCalibration out;
    out.shift = 0.0;

    double sigma = sigma_guess;
    double den = 0.0;
    double h = row_entropy_bits(delta, 1.0 / (2.0 * sigma * sigma), den);
    if (std::abs(h - target_bits) <= tol) {
        out.sigma = sigma;
        out.den = den;
        return out;
    }

    // Entropy does not depend on sigma when all shifted distances vanish
    // (equidistant neighbors); any bandwidth is acceptable if the target
    // matches, otherwise the row is unsolvable.
    if (delta.maxCoeff() <= 0.0) {
        throw numeric_error("bandwidth calibration: row " + std::to_string(row + 1) +
                            " has equidistant neighbors with entropy " + std::to_string(h) +
                            " bits; requested " + std::to_string(target_bits));
    }

    double lo = sigma, hi = sigma;
    double h_lo = h, h_hi = h;
    int steps = 0;
    while (h_hi < target_bits) {
        lo = hi;
        h_lo = h_hi;
        hi *= 2.0;
        h_hi = row_entropy_bits(delta, 1.0 / (2.0 * hi * hi), den);
        if (++steps > 64)
            throw numeric_error("bandwidth calibration: row " + std::to_string(row + 1) +
                                " failed to bracket (entropy stuck at " + std::to_string(h_hi) + " bits)");
    }
    steps = 0;
    while (h_lo > target_bits) {
        hi = lo;
        h_hi = h_lo;
        lo *= 0.5;
        h_lo = row_entropy_bits(delta, 1.0 / (2.0 * lo * lo), den);
        if (++steps > 64)
            throw numeric_error("bandwidth calibration: row " + std::to_string(row + 1) +
                                " failed to bracket from below (duplicate-heavy data)");
    }

    for (int it = 0; it < 200; ++it) {
        sigma = 0.5 * (lo + hi);
        h = row_entropy_bits(delta, 1.0 / (2.0 * sigma * sigma), den);
        if (std::abs(h - target_bits) <= tol || (hi - lo) <= 1e-16 * sigma) break;
        if (h < target_bits)
            lo = sigma;
        else
            hi = sigma;
    }
    out.sigma = sigma;
    out.den = den;
    return out;
}

} // namespace detail

struct BandwidthResult {
    Vector sigma;
    Matrix conditional;   // p_{j|i} in row i, zero diagonal, rows sum to 1
    Vector row_shift;
    Vector row_den;
};

/// Calibrates per-row Gaussian bandwidths on a squared-distance matrix so each
/// conditional row distribution reaches entropy log2(perplexity).
///
/// Duplicate handling: zero distances are excluded from the entropy equation
/// (their kernel weight is constant in sigma); a row whose distances are all
/// zero is degenerate and rejected.
inline BandwidthResult calibrate_bandwidths(const Matrix& sq_dists, double perplexity, double tol = 1e-9,
                                            const Vector* warm_sigma = nullptr) {
    const Eigen::Index n = sq_dists.rows();
    require(sq_dists.cols() == n, "calibrate_bandwidths: distance matrix must be square");
    require(perplexity > 1.0 && perplexity < static_cast<double>(n),
            "calibrate_bandwidths: perplexity must lie in (1, n)");
    require(tol > 0.0, "calibrate_bandwidths: tolerance must be positive");

    BandwidthResult out;
    out.sigma.resize(n);
    out.conditional = Matrix::Zero(n, n);
    out.row_shift.resize(n);
    out.row_den.resize(n);
    const double target_bits = std::log2(perplexity);

    std::string failure;
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 8)
#endif
    for (Eigen::Index i = 0; i < n; ++i) {
        try {
            // Gather the n-1 squared distances of this row.
            Vector d2(n - 1);
            Eigen::Index m = 0;
            for (Eigen::Index j = 0; j < n; ++j)
                if (j != i) d2(m++) = sq_dists(i, j);

            double min_pos = -1.0;
            for (Eigen::Index j = 0; j < n - 1; ++j)
                if (d2(j) > 0.0 && (min_pos < 0.0 || d2(j) < min_pos)) min_pos = d2(j);
            if (min_pos < 0.0)
                throw numeric_error("bandwidth calibration: all distances from row " + std::to_string(i + 1) +
                                    " are zero (degenerate data)");

            // Solve on the strictly positive distances, shifted by their minimum.
            Eigen::Index pos_count = 0;
            for (Eigen::Index j = 0; j < n - 1; ++j) pos_count += d2(j) > 0.0;
            Vector delta(pos_count);
            Eigen::Index p = 0;
            for (Eigen::Index j = 0; j < n - 1; ++j)
                if (d2(j) > 0.0) delta(p++) = d2(j) - min_pos;

            double guess = warm_sigma && warm_sigma->size() == n && (*warm_sigma)(i) > 0.0
                               ? (*warm_sigma)(i)
                               : std::sqrt(std::max(delta.mean() + min_pos, min_pos) * 0.5);
            auto cal = detail::solve_row_bandwidth(delta, target_bits, tol, guess, static_cast<int>(i));

            // Final row probabilities over all neighbors, shifted by the true
            // minimum (zero when duplicates are present).
            const double beta = 1.0 / (2.0 * cal.sigma * cal.sigma);
            const double shift = d2.minCoeff();
            Vector e = (-beta * (d2.array() - shift)).exp().matrix();
            const double den = e.sum();
            m = 0;
            for (Eigen::Index j = 0; j < n; ++j)
                if (j != i) out.conditional(i, j) = e(m++) / den;
            out.sigma(i) = cal.sigma;
            out.row_shift(i) = shift;
            out.row_den(i) = den;
        } catch (const std::exception& ex) {
#ifdef _OPENMP
#pragma omp critical
#endif
            if (failure.empty()) failure = ex.what();
        }
    }
    if (!failure.empty()) throw numeric_error(failure);
    return out;
}

inline SimilarityMatrix similarity_from_sq_dists(const Matrix& sq_dists, double perplexity, double tol = 1e-9,
                                                 const Vector* warm_sigma = nullptr) {
    auto cal = calibrate_bandwidths(sq_dists, perplexity, tol, warm_sigma);
    const Eigen::Index n = sq_dists.rows();
    SimilarityMatrix sim;
    sim.v = (cal.conditional + cal.conditional.transpose()) / (2.0 * static_cast<double>(n));
    sim.v.diagonal().setZero();
    sim.perplexity = perplexity;
    sim.sigma = std::move(cal.sigma);
    sim.row_shift = std::move(cal.row_shift);
    sim.row_den = std::move(cal.row_den);
    return sim;
}

/// Exact t-SNE input similarities for a data matrix.
inline SimilarityMatrix similarity_matrix(const Matrix& x, double perplexity, double tol = 1e-9,
                                          const Vector* warm_sigma = nullptr) {
    return similarity_from_sq_dists(pairwise_sq_dists(x), perplexity, tol, warm_sigma);
}

} // namespace nescope

#endif
