#ifndef NESCOPE_METRICS_HPP
#define NESCOPE_METRICS_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "nescope/core.hpp"

namespace nescope {

/// Shannon entropy (natural log) of a probability vector; 0 log 0 := 0.
inline double entropy(const Vector& p) {
    require(p.size() >= 1, "entropy: empty vector");
    double total = 0.0;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        require(p(i) >= 0.0, "entropy: negative probability");
        total += p(i);
    }
    require(std::abs(total - 1.0) <= 1e-9, "entropy: probabilities must sum to 1");
    double h = 0.0;
    for (Eigen::Index i = 0; i < p.size(); ++i)
        if (p(i) > 0.0) h -= p(i) * std::log(p(i));
    return h;
}

/// Per-class Gaussian fit with a uniform prior over classes. Near-singular
/// class covariances are ridged by 1e-6 * trace / d and flagged.
struct FittedGmm {
    std::vector<Vector> means;
    std::vector<Matrix> covs;             // regularized where needed
    std::vector<Eigen::LLT<Matrix>> llts;
    std::vector<double> log_norms;        // -0.5 (d log 2pi + log det)
    bool regularized = false;
    int k = 0;

    /// Posterior class probabilities of one point (uniform prior).
    Vector posterior(const Vector& x) const {
        Vector log_lik(k);
        for (int j = 0; j < k; ++j) {
            const Vector diff = x - means[j];
            const Vector solved = llts[j].matrixL().solve(diff);
            log_lik(j) = log_norms[j] - 0.5 * solved.squaredNorm();
        }
        const double m = log_lik.maxCoeff();
        Vector p = (log_lik.array() - m).exp();
        return p / p.sum();
    }
};

inline FittedGmm fit_gmm_by_labels(const Matrix& x, const IntVector& labels) {
    require(x.rows() == labels.size(), "fit_gmm_by_labels: label length mismatch");
    const int k = labels.maxCoeff() + 1;
    require(k >= 2, "fit_gmm_by_labels: need at least 2 classes");
    require(labels.minCoeff() >= 0, "fit_gmm_by_labels: negative label");
    const Eigen::Index d = x.cols();

    FittedGmm fit;
    fit.k = k;
    fit.means.resize(k);
    fit.covs.resize(k);
    fit.llts.resize(k);
    fit.log_norms.resize(k);

    constexpr double log_2pi = 1.8378770664093454835606594728112;
    for (int j = 0; j < k; ++j) {
        std::vector<Eigen::Index> idx;
        for (Eigen::Index i = 0; i < labels.size(); ++i)
            if (labels(i) == j) idx.push_back(i);
        require(!idx.empty(), "fit_gmm_by_labels: class " + std::to_string(j) + " is empty");

        Vector mean = Vector::Zero(d);
        for (auto i : idx) mean += x.row(i).transpose();
        mean /= static_cast<double>(idx.size());

        Matrix cov = Matrix::Zero(d, d);
        for (auto i : idx) {
            const Vector c = x.row(i).transpose() - mean;
            cov.noalias() += c * c.transpose();
        }
        cov /= std::max<double>(1.0, static_cast<double>(idx.size()) - 1.0);

        Eigen::LLT<Matrix> llt(cov);
        const double min_eig_guard = 1e-12 * std::max(1.0, cov.trace());
        bool needs_ridge = llt.info() != Eigen::Success;
        if (!needs_ridge) {
            Eigen::SelfAdjointEigenSolver<Matrix> es(cov);
            needs_ridge = es.eigenvalues().minCoeff() < min_eig_guard;
        }
        if (needs_ridge || static_cast<Eigen::Index>(idx.size()) < d + 1) {
            const double delta = 1e-6 * std::max(cov.trace(), 1e-300) / static_cast<double>(d);
            cov += delta * Matrix::Identity(d, d);
            fit.regularized = true;
            llt.compute(cov);
            if (llt.info() != Eigen::Success)
                throw numeric_error("fit_gmm_by_labels: covariance of class " + std::to_string(j) +
                                    " is singular even after regularization");
        }
        double log_det = 0.0;
        for (Eigen::Index i = 0; i < d; ++i) log_det += 2.0 * std::log(llt.matrixL()(i, i));
        fit.means[j] = std::move(mean);
        fit.covs[j] = std::move(cov);
        fit.llts[j] = std::move(llt);
        fit.log_norms[j] = -0.5 * (static_cast<double>(d) * log_2pi + log_det);
    }
    return fit;
}

/// Label-based uncertainty change: entropy of the fitted class posterior in
/// the input space minus the same in the embedding space. Positive values
/// mean the point looks less ambiguous after embedding.
inline Vector entropy_difference(const Matrix& x, const Matrix& y, const IntVector& labels) {
    require(x.rows() == y.rows(), "entropy_difference: row mismatch");
    const FittedGmm in_fit = fit_gmm_by_labels(x, labels);
    const FittedGmm out_fit = fit_gmm_by_labels(y, labels);
    Vector diff(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const double e_in = entropy(in_fit.posterior(x.row(i).transpose()));
        const double e_out = entropy(out_fit.posterior(y.row(i).transpose()));
        diff(i) = e_in - e_out;
    }
    return diff;
}

namespace detail {

inline double pearson(const Vector& a, const Vector& b) {
    const double ma = a.mean(), mb = b.mean();
    const Vector ca = a.array() - ma;
    const Vector cb = b.array() - mb;
    const double denom = std::sqrt(ca.squaredNorm() * cb.squaredNorm());
    if (denom <= 0.0) return std::numeric_limits<double>::quiet_NaN();
    return ca.dot(cb) / denom;
}

/// Average ranks with ties sharing their mean rank (1-based).
inline Vector average_ranks(const Vector& v) {
    const Eigen::Index n = v.size();
    std::vector<Eigen::Index> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return v(a) < v(b); });
    Vector ranks(n);
    Eigen::Index i = 0;
    while (i < n) {
        Eigen::Index j = i;
        while (j + 1 < n && v(order[j + 1]) == v(order[i])) ++j;
        const double r = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
        for (Eigen::Index k = i; k <= j; ++k) ranks(order[k]) = r;
        i = j + 1;
    }
    return ranks;
}

} // namespace detail

struct NeighborhoodPreservation {
    Vector per_point;
    std::vector<std::uint8_t> flagged;   // zero-variance distance vector, score set to 0
    double median = 0.0;
    int k = 0;
};

/// Per-point Pearson correlation between distances to the k input-space
/// nearest neighbors and the corresponding embedding distances; the dataset
/// score is the median. Default k = floor(n / 5).
inline NeighborhoodPreservation neighborhood_preservation(const Matrix& x, const Matrix& y, int k = 0) {
    const Eigen::Index n = x.rows();
    require(y.rows() == n, "neighborhood_preservation: row mismatch");
    if (k == 0) k = static_cast<int>(n / 5);
    require(k >= 2 && k < n, "neighborhood_preservation: k must lie in [2, n)");

    NeighborhoodPreservation out;
    out.k = k;
    out.per_point.resize(n);
    out.flagged.assign(n, 0);

    std::vector<std::pair<double, Eigen::Index>> dist(n);
    Vector din(k), demb(k);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) dist[j] = {(x.row(i) - x.row(j)).squaredNorm(), j};
        dist[i].first = std::numeric_limits<double>::infinity();
        std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
        for (int m = 0; m < k; ++m) {
            const Eigen::Index j = dist[m].second;
            din(m) = std::sqrt(dist[m].first);
            demb(m) = (y.row(i) - y.row(j)).norm();
        }
        const double r = detail::pearson(din, demb);
        if (std::isnan(r)) {
            out.per_point(i) = 0.0;
            out.flagged[i] = 1;
        } else {
            out.per_point(i) = r;
        }
    }

    std::vector<double> sorted(out.per_point.data(), out.per_point.data() + n);
    std::sort(sorted.begin(), sorted.end());
    out.median = (n % 2 == 1) ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
    return out;
}

namespace detail {

struct ClassSplit {
    std::vector<std::vector<Eigen::Index>> members;
    int k = 0;
};

inline ClassSplit split_by_labels(const IntVector& labels) {
    ClassSplit out;
    require(labels.size() > 0 && labels.minCoeff() >= 0, "labels must be non-negative");
    out.k = labels.maxCoeff() + 1;
    out.members.resize(out.k);
    for (Eigen::Index i = 0; i < labels.size(); ++i) out.members[labels(i)].push_back(i);
    int nonempty = 0;
    for (const auto& m : out.members) nonempty += !m.empty();
    require(nonempty >= 1, "labels: no classes");
    return out;
}

} // namespace detail

/// Davies-Bouldin index with Euclidean distances (p = q = 2); smaller is
/// better. Singleton classes contribute zero within-scatter.
inline double db_index(const Matrix& y, const IntVector& labels) {
    require(y.rows() == labels.size(), "db_index: label length mismatch");
    const auto split = detail::split_by_labels(labels);
    require(split.k >= 2, "db_index: need at least 2 classes");

    std::vector<Vector> centers(split.k);
    std::vector<double> scatter(split.k);
    for (int c = 0; c < split.k; ++c) {
        require(!split.members[c].empty(), "db_index: class " + std::to_string(c) + " is empty");
        Vector mean = Vector::Zero(y.cols());
        for (auto i : split.members[c]) mean += y.row(i).transpose();
        mean /= static_cast<double>(split.members[c].size());
        double acc = 0.0;
        for (auto i : split.members[c]) acc += (y.row(i).transpose() - mean).squaredNorm();
        centers[c] = std::move(mean);
        scatter[c] = std::sqrt(acc / static_cast<double>(split.members[c].size()));
    }

    double total = 0.0;
    for (int c = 0; c < split.k; ++c) {
        double worst = 0.0;
        for (int o = 0; o < split.k; ++o) {
            if (o == c) continue;
            const double dist = (centers[c] - centers[o]).norm();
            require(dist > 0.0, "db_index: coincident class centers");
            worst = std::max(worst, (scatter[c] + scatter[o]) / dist);
        }
        total += worst;
    }
    return total / static_cast<double>(split.k);
}

/// Within-cluster distance ratio WSS / TSS in [0, 1]; smaller is better.
inline double wcdr(const Matrix& y, const IntVector& labels) {
    require(y.rows() == labels.size(), "wcdr: label length mismatch");
    const auto split = detail::split_by_labels(labels);

    const Vector grand = y.colwise().mean();
    double tss = 0.0, wss = 0.0;
    for (int c = 0; c < split.k; ++c) {
        if (split.members[c].empty()) continue;
        Vector mean = Vector::Zero(y.cols());
        for (auto i : split.members[c]) mean += y.row(i).transpose();
        mean /= static_cast<double>(split.members[c].size());
        for (auto i : split.members[c]) {
            wss += (y.row(i).transpose() - mean).squaredNorm();
            tss += (y.row(i).transpose() - grand).squaredNorm();
        }
    }
    require(tss > 0.0, "wcdr: zero total scatter");
    return wss / tss;
}

/// Wilks' Lambda det(W) / det(W + B) from within/between scatter matrices;
/// in [0, 1] for a nonsingular total scatter, smaller is better.
inline double wilks_lambda(const Matrix& y, const IntVector& labels) {
    require(y.rows() == labels.size(), "wilks_lambda: label length mismatch");
    const auto split = detail::split_by_labels(labels);
    require(split.k >= 2, "wilks_lambda: need at least 2 classes");

    const Vector grand = y.colwise().mean();
    const Eigen::Index d = y.cols();
    Matrix w = Matrix::Zero(d, d);
    Matrix b = Matrix::Zero(d, d);
    for (int c = 0; c < split.k; ++c) {
        if (split.members[c].empty()) continue;
        Vector mean = Vector::Zero(d);
        for (auto i : split.members[c]) mean += y.row(i).transpose();
        mean /= static_cast<double>(split.members[c].size());
        for (auto i : split.members[c]) {
            const Vector cdev = y.row(i).transpose() - mean;
            w.noalias() += cdev * cdev.transpose();
        }
        const Vector bdev = mean - grand;
        b.noalias() += static_cast<double>(split.members[c].size()) * bdev * bdev.transpose();
    }
    const Matrix total = w + b;
    const double det_t = total.determinant();
    if (!(det_t > 0.0)) throw numeric_error("wilks_lambda: singular total scatter");
    return std::max(0.0, w.determinant()) / det_t;
}

struct SpearmanResult {
    double rho = 0.0;
    double p_value = 1.0;
    bool small_sample = false;  // n < 10: the t-approximation is crude here
};

/// Spearman rank correlation with average ranks for ties; two-sided p-value
/// from the t-approximation t = rho sqrt((n-2) / (1 - rho^2)).
inline SpearmanResult spearman_test(const Vector& a, const Vector& b) {
    const Eigen::Index n = a.size();
    require(b.size() == n, "spearman_test: length mismatch");
    require(n >= 5, "spearman_test: need at least 5 observations");

    const Vector ra = detail::average_ranks(a);
    const Vector rb = detail::average_ranks(b);
    const double rho = detail::pearson(ra, rb);
    if (std::isnan(rho)) throw numeric_error("spearman_test: constant input vector");

    SpearmanResult out;
    out.rho = rho;
    out.small_sample = n < 10;
    if (std::abs(rho) >= 1.0) {
        out.p_value = 0.0;
        return out;
    }
    const double t = rho * std::sqrt((static_cast<double>(n) - 2.0) / (1.0 - rho * rho));
    boost::math::students_t dist(static_cast<double>(n) - 2.0);
    out.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
    return out;
}

/// Rank-based AUROC with tie correction: P(score_pos > score_neg) + 0.5
/// P(tie).
inline double roc_auc(const Vector& scores, const std::vector<std::uint8_t>& positive) {
    const Eigen::Index n = scores.size();
    require(static_cast<Eigen::Index>(positive.size()) == n, "roc_auc: length mismatch");
    Eigen::Index n_pos = 0;
    for (auto f : positive) n_pos += f != 0;
    const Eigen::Index n_neg = n - n_pos;
    require(n_pos > 0 && n_neg > 0, "roc_auc: both classes must be present");

    const Vector ranks = detail::average_ranks(scores);
    double rank_sum = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
        if (positive[i]) rank_sum += ranks(i);
    return (rank_sum - 0.5 * static_cast<double>(n_pos) * (static_cast<double>(n_pos) + 1.0)) /
           (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

} // namespace nescope

#endif
