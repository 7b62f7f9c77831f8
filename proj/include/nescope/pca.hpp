#ifndef NESCOPE_PCA_HPP
#define NESCOPE_PCA_HPP

#include <string>

#include "nescope/core.hpp"
#include "nescope/dataset.hpp"

namespace nescope {

/// Principal directions of a data matrix plus everything needed to project
/// new points into the same coordinates.
struct PcaModel {
    Vector mean;            // d
    Matrix directions;      // d x q, orthonormal columns, descending variance
    Vector variances;       // q, eigenvalues of the sample covariance
    bool rank_deficient = false;  // trailing components were zero-padded

    Matrix project(const Matrix& x) const {
        return (x.rowwise() - mean.transpose()) * directions;
    }
    Vector project_row(const Vector& x) const {
        return directions.transpose() * (x - mean);
    }
};

/// Centers the rows and projects onto the top target_dim eigenvectors of the
/// sample covariance. Directions use a fixed sign convention: the entry of
/// largest magnitude is positive. If target_dim exceeds the covariance rank,
/// the trailing directions are zero vectors and the model is flagged.
inline PcaModel fit_pca(const Matrix& x, int target_dim) {
    const Eigen::Index n = x.rows();
    const Eigen::Index d = x.cols();
    require(n >= 1 && d >= 1, "fit_pca: empty matrix");
    require(target_dim >= 1, "fit_pca: target_dim must be positive");
    require(target_dim <= std::min<Eigen::Index>(n, d),
            "fit_pca: target_dim " + std::to_string(target_dim) + " exceeds min(n, d)");

    PcaModel model;
    model.mean = x.colwise().mean();
    Matrix centered = x.rowwise() - model.mean.transpose();
    Matrix cov = (centered.transpose() * centered) / std::max<double>(1.0, double(n - 1));

    Eigen::SelfAdjointEigenSolver<Matrix> es(cov);
    // Eigen sorts ascending; take the top target_dim in descending order.
    model.directions.resize(d, target_dim);
    model.variances.resize(target_dim);
    const double eps = 1e-12 * std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
    for (int j = 0; j < target_dim; ++j) {
        const Eigen::Index src = d - 1 - j;
        double lambda = es.eigenvalues()(src);
        Vector dir = es.eigenvectors().col(src);
        if (lambda <= eps) {
            // Past the rank: zero-pad instead of returning noise directions.
            model.rank_deficient = true;
            model.variances(j) = 0.0;
            model.directions.col(j).setZero();
            continue;
        }
        Eigen::Index imax;
        dir.cwiseAbs().maxCoeff(&imax);
        if (dir(imax) < 0) dir = -dir;
        model.directions.col(j) = dir;
        model.variances(j) = lambda;
    }
    return model;
}

inline std::pair<InputMatrix, PcaModel> pca_project(const InputMatrix& x, int target_dim) {
    PcaModel model = fit_pca(x.values, target_dim);
    InputMatrix out;
    out.values = model.project(x.values);
    out.labels = x.labels;
    out.continuous_labels = x.continuous_labels;
    return {std::move(out), std::move(model)};
}

} // namespace nescope

#endif
