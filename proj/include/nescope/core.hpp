#ifndef NESCOPE_CORE_HPP
#define NESCOPE_CORE_HPP

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace nescope {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using IntVector = Eigen::VectorXi;
using Points2 = Eigen::Matrix<double, Eigen::Dynamic, 2>;
using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

/// Raised when a numeric routine cannot produce a finite/valid result
/// (divergence, failed bracketing, singular scatter, ...).
class numeric_error : public std::runtime_error {
public:
    explicit numeric_error(const std::string& what) : std::runtime_error(what) {}
};

/// Raised on file and parse problems.
class io_error : public std::runtime_error {
public:
    explicit io_error(const std::string& what) : std::runtime_error(what) {}
};

inline void require(bool cond, const std::string& what) {
    if (!cond) throw std::invalid_argument(what);
}

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

/// Squared Euclidean distances between all row pairs.
inline Matrix pairwise_sq_dists(const Matrix& x) {
    const Vector r = x.rowwise().squaredNorm();
    Matrix d = (-2.0 * x * x.transpose()).eval();
    d.colwise() += r;
    d.rowwise() += r.transpose();
    d.diagonal().setZero();
    // Rounding can leave slightly negative off-diagonal entries.
    return d.cwiseMax(0.0);
}

/// Diagonal length of the bounding box of a point set; 1 for degenerate sets.
inline double bbox_diagonal(const Points2& y) {
    if (y.rows() == 0) return 1.0;
    const Vec2 lo = y.colwise().minCoeff();
    const Vec2 hi = y.colwise().maxCoeff();
    const double d = (hi - lo).norm();
    return d > 0 ? d : 1.0;
}

} // namespace nescope

#endif
