#ifndef NESCOPE_DATASET_HPP
#define NESCOPE_DATASET_HPP

#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "nescope/core.hpp"
#include "nescope/csv.hpp"
#include "nescope/rng.hpp"

namespace nescope {

/// Feature matrix to embed, with optional per-row labels. Swiss-roll samples
/// additionally keep the continuous spiral angle of each row.
struct InputMatrix {
    Matrix values;                       // n x d
    std::optional<IntVector> labels;     // length n
    std::optional<Vector> continuous_labels;

    Eigen::Index n() const { return values.rows(); }
    Eigen::Index dim() const { return values.cols(); }

    void validate() const {
        require(values.rows() >= 2, "InputMatrix: need at least 2 rows");
        require(values.cols() >= 1, "InputMatrix: need at least 1 column");
        require(values.allFinite(), "InputMatrix: values must be finite");
        if (labels) require(labels->size() == values.rows(), "InputMatrix: label length mismatch");
        if (continuous_labels)
            require(continuous_labels->size() == values.rows(), "InputMatrix: continuous label length mismatch");
    }
};

struct GmmComponent {
    Vector mean;
    Matrix cov;
    double weight = 1.0;
};

struct GmmSpec {
    std::vector<GmmComponent> components;

    int dim() const { return components.empty() ? 0 : static_cast<int>(components.front().mean.size()); }

    void validate() const {
        require(!components.empty(), "GmmSpec: no components");
        const Eigen::Index d = components.front().mean.size();
        double total = 0.0;
        for (std::size_t j = 0; j < components.size(); ++j) {
            const auto& c = components[j];
            require(c.weight > 0.0, "GmmSpec: component " + std::to_string(j) + " has non-positive weight");
            require(c.mean.size() == d, "GmmSpec: inconsistent mean dimensions");
            require(c.cov.rows() == d && c.cov.cols() == d, "GmmSpec: covariance shape mismatch");
            require((c.cov - c.cov.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + c.cov.cwiseAbs().maxCoeff()),
                    "GmmSpec: covariance of component " + std::to_string(j) + " is not symmetric");
            total += c.weight;
        }
        require(std::abs(total - 1.0) <= 1e-9, "GmmSpec: mixture weights must sum to 1");
    }
};

struct SwissRollSpec {
    int n = 0;
    double angle_min = 0.0, angle_max = 0.0;
    double height_min = 0.0, height_max = 0.0;
    std::uint64_t seed = 0;

    void validate() const {
        require(n >= 1, "SwissRollSpec: n must be positive");
        require(angle_max >= angle_min, "SwissRollSpec: angle range is empty");
        require(height_max >= height_min, "SwissRollSpec: height range is empty");
    }
};

namespace detail {

/// Symmetric PSD square root via eigendecomposition; rejects matrices with a
/// meaningfully negative eigenvalue.
inline Matrix psd_sqrt(const Matrix& cov, const std::string& context) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(cov);
    Vector ev = es.eigenvalues();
    const double floor = -1e-12 * std::max(1.0, ev.cwiseAbs().maxCoeff());
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
        if (ev(i) < floor)
            throw std::invalid_argument(context + ": covariance is not positive semidefinite (eigenvalue " +
                                        std::to_string(ev(i)) + ")");
        if (ev(i) < 0.0) ev(i) = 0.0;
    }
    return es.eigenvectors() * ev.cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
}

} // namespace detail

/// Draws n rows from the mixture; labels record the component of each row.
/// Substream 0 of the seed picks components, substream 1 supplies the
/// Gaussian noise.
inline InputMatrix sample_gmm(const GmmSpec& spec, int n, std::uint64_t seed) {
    spec.validate();
    require(n >= 1, "sample_gmm: n must be positive");

    const int d = spec.dim();
    const int k = static_cast<int>(spec.components.size());
    std::vector<Matrix> roots;
    roots.reserve(spec.components.size());
    for (std::size_t j = 0; j < spec.components.size(); ++j)
        roots.push_back(detail::psd_sqrt(spec.components[j].cov, "sample_gmm component " + std::to_string(j)));

    std::vector<double> weights(spec.components.size());
    for (std::size_t j = 0; j < spec.components.size(); ++j) weights[j] = spec.components[j].weight;

    Rng comp_rng(seed, 0);
    Rng noise_rng(seed, 1);

    InputMatrix out;
    out.values.resize(n, d);
    out.labels = IntVector(n);
    Vector z(d);
    for (int i = 0; i < n; ++i) {
        const int c = comp_rng.discrete(weights);
        (void)k;
        for (int j = 0; j < d; ++j) z(j) = noise_rng.normal();
        out.values.row(i) = (spec.components[c].mean + roots[c] * z).transpose();
        (*out.labels)(i) = c;
    }
    return out;
}

/// Swiss roll rows are (t cos t, t sin t, z) with t ~ U[angle range] and
/// z ~ U[height range]. The continuous label stores t; the integer label is
/// the decile of t within the range.
inline InputMatrix sample_swiss_roll(const SwissRollSpec& spec) {
    spec.validate();

    Rng angle_rng(spec.seed, 0);
    Rng height_rng(spec.seed, 1);

    InputMatrix out;
    out.values.resize(spec.n, 3);
    out.labels = IntVector(spec.n);
    out.continuous_labels = Vector(spec.n);
    const double span = spec.angle_max - spec.angle_min;
    for (int i = 0; i < spec.n; ++i) {
        const double t = angle_rng.uniform(spec.angle_min, spec.angle_max);
        const double z = height_rng.uniform(spec.height_min, spec.height_max);
        out.values(i, 0) = t * std::cos(t);
        out.values(i, 1) = t * std::sin(t);
        out.values(i, 2) = z;
        (*out.continuous_labels)(i) = t;
        int bin = span > 0 ? static_cast<int>(std::floor((t - spec.angle_min) / span * 10.0)) : 0;
        if (bin > 9) bin = 9;
        if (bin < 0) bin = 0;
        (*out.labels)(i) = bin;
    }
    return out;
}

inline InputMatrix load_input_csv(const std::string& path, const CsvOptions& opt = {}) {
    auto [m, labels] = load_csv_matrix(path, opt);
    InputMatrix out;
    out.values = std::move(m);
    if (opt.labels) out.labels = std::move(labels);
    return out;
}

inline void save_input_csv(const InputMatrix& x, const std::string& path, const CsvOptions& opt = {}) {
    save_csv_matrix(x.values, path, opt, x.labels ? &*x.labels : nullptr);
}

} // namespace nescope

#endif
