#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

namespace streampca {

/// (1/n) sum x x^T over the samples.
Eigen::MatrixXd empirical_covariance(const std::vector<Eigen::VectorXd>& samples);
/// Same, with samples stored as the columns of a d x n matrix.
Eigen::MatrixXd empirical_covariance(const Eigen::Ref<const Eigen::MatrixXd>& samples);

/// Streaming form of empirical_covariance for long sample streams.
class CovarianceAccumulator {
public:
    explicit CovarianceAccumulator(int d) : sum_(Eigen::MatrixXd::Zero(d, d)) {}

    void add(const Eigen::Ref<const Eigen::VectorXd>& x);
    std::int64_t count() const { return count_; }
    Eigen::MatrixXd covariance() const;

private:
    Eigen::MatrixXd sum_;  // upper triangle only
    std::int64_t count_ = 0;
};

struct SymmetricEigen {
    Eigen::VectorXd values;   ///< descending
    Eigen::MatrixXd vectors;  ///< orthonormal columns, first nonzero entry positive
    int sweeps = 0;
};

/// Cyclic Jacobi rotations until the largest off-diagonal entry is at most
/// 1e-12 ||M||_F. Equal eigenvalues keep their diagonal order.
/// Throws std::invalid_argument for non-symmetric or non-finite input.
SymmetricEigen eig_sym(const Eigen::Ref<const Eigen::MatrixXd>& m);

/// Top-k eigenvectors of a symmetric matrix, descending.
Eigen::MatrixXd top_eigenvectors(const Eigen::Ref<const Eigen::MatrixXd>& m, int k);

/// Top-k eigenvectors of the empirical covariance of the samples.
Eigen::MatrixXd offline_pca(const std::vector<Eigen::VectorXd>& samples, int k);

}  // namespace streampca
