#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "popdyn/util/errors.hpp"

namespace popdyn::feat {

struct PcaBasis {
    Eigen::VectorXd mean;                 // d
    Eigen::MatrixXd components;           // d x r, orthonormal columns
    std::vector<double> explained_ratio;  // r entries, non-increasing

    std::size_t input_dim() const { return static_cast<std::size_t>(mean.size()); }
    std::size_t n_components() const { return static_cast<std::size_t>(components.cols()); }
};

// Eigen-decomposition of the sample covariance of the rows of `samples`.
// Components carry a deterministic sign: the entry of largest magnitude in
// each column is positive (first occurrence wins ties).
inline PcaBasis pca_fit(const Eigen::MatrixXd& samples, std::size_t r) {
    const Eigen::Index n = samples.rows();
    const Eigen::Index d = samples.cols();
    if (n < 1) throw DataError("pca_fit: no samples");
    if (r == 0 || static_cast<Eigen::Index>(r) > std::min(n, d))
        throw DataError("pca_fit: r must be in [1, min(n_samples, dim)]");

    PcaBasis basis;
    basis.mean = samples.colwise().mean();
    Eigen::MatrixXd centered = samples.rowwise() - basis.mean.transpose();
    const double denom = n > 1 ? static_cast<double>(n - 1) : 1.0;
    Eigen::MatrixXd cov = (centered.transpose() * centered) / denom;

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    if (solver.info() != Eigen::Success) throw NumericsError("pca_fit: eigensolver failed");
    const Eigen::VectorXd evals = solver.eigenvalues();  // ascending
    const double total = std::max(evals.sum(), 0.0);
    const double lambda_max = std::max(evals(d - 1), 0.0);
    const double rank_tol = lambda_max * static_cast<double>(std::max(n, d)) * 1e-14;

    std::size_t rank = 0;
    for (Eigen::Index i = 0; i < d; ++i)
        if (evals(i) > rank_tol) ++rank;
    if (r > rank)
        throw DataError("pca_fit: r = " + std::to_string(r) +
                        " exceeds numerical rank " + std::to_string(rank));

    basis.components.resize(d, static_cast<Eigen::Index>(r));
    basis.explained_ratio.resize(r);
    for (std::size_t j = 0; j < r; ++j) {
        const Eigen::Index src = d - 1 - static_cast<Eigen::Index>(j);
        Eigen::VectorXd col = solver.eigenvectors().col(src);
        Eigen::Index imax = 0;
        col.cwiseAbs().maxCoeff(&imax);
        if (col(imax) < 0.0) col = -col;
        basis.components.col(static_cast<Eigen::Index>(j)) = col;
        basis.explained_ratio[j] = total > 0.0 ? std::max(evals(src), 0.0) / total : 0.0;
    }
    return basis;
}

// Smallest r whose cumulative explained variance reaches `threshold`,
// capped at `max_r`.
inline std::size_t pca_rank_for_variance(const Eigen::MatrixXd& samples, double threshold,
                                         std::size_t max_r) {
    const Eigen::Index n = samples.rows();
    const Eigen::Index d = samples.cols();
    if (n < 1 || max_r == 0) throw DataError("pca_rank_for_variance: bad arguments");
    const Eigen::VectorXd mean = samples.colwise().mean();
    Eigen::MatrixXd centered = samples.rowwise() - mean.transpose();
    const double denom = n > 1 ? static_cast<double>(n - 1) : 1.0;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(
        (centered.transpose() * centered) / denom, Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success)
        throw NumericsError("pca_rank_for_variance: eigensolver failed");
    const Eigen::VectorXd evals = solver.eigenvalues();  // ascending
    const double total = std::max(evals.sum(), 0.0);
    if (total <= 0.0) return 1;
    const std::size_t bound = std::min<std::size_t>(max_r, static_cast<std::size_t>(std::min(n, d)));
    double cum = 0.0;
    for (std::size_t j = 0; j < bound; ++j) {
        cum += std::max(evals(d - 1 - static_cast<Eigen::Index>(j)), 0.0) / total;
        if (cum >= threshold) return j + 1;
    }
    return bound;
}

inline Eigen::MatrixXd pca_transform(const PcaBasis& basis, const Eigen::MatrixXd& vectors) {
    if (vectors.cols() != basis.components.rows())
        throw DataError("pca_transform: dimension mismatch");
    return (vectors.rowwise() - basis.mean.transpose()) * basis.components;
}

inline Eigen::MatrixXd pca_inverse(const PcaBasis& basis, const Eigen::MatrixXd& coords) {
    if (coords.cols() != basis.components.cols())
        throw DataError("pca_inverse: dimension mismatch");
    return (coords * basis.components.transpose()).rowwise() + basis.mean.transpose();
}

}  // namespace popdyn::feat
