#pragma once

#include <cstdint>
#include <limits>

#include <Eigen/Dense>

#include "streampca/spectra.hpp"

namespace streampca {

/// Condition-number cutoff beyond which V^T Q counts as singular.
inline constexpr double kSingularCond = 1e12;
inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

/// V = top-k eigenvectors, Z = the rest, W = eigenvectors with eigenvalue
/// at most lambda_k - rho (the last d - k - m columns of Z).
struct EigenPartition {
    int k = 0;
    int m = 0;
    double rho = 0.0;
    Eigen::MatrixXd v;
    Eigen::MatrixXd z;
    Eigen::MatrixXd w;
};

/// Requires 1 <= k <= d and rho in (0, 1). k = d gives empty Z and W.
EigenPartition partition(const Spectrum& spec, int k, double rho);

/// ||X^T Q||_F^2. An empty X gives 0.
double frob_corr(const Eigen::Ref<const Eigen::MatrixXd>& q, const Eigen::Ref<const Eigen::MatrixXd>& x);

/// ||X^T Q||_2^2 by power iteration on the smaller Gram matrix.
double spectral_corr(const Eigen::Ref<const Eigen::MatrixXd>& q, const Eigen::Ref<const Eigen::MatrixXd>& x);

/// q_i^T Sigma q_i per column, evaluated as sum_j lambda_j <q_i, nu_j>^2.
/// Rejects Q whose columns are not orthonormal to within 1e-6.
Eigen::VectorXd rayleigh_quotients(const Eigen::Ref<const Eigen::MatrixXd>& q, const Spectrum& spec);

/// ||X^T Q (V^T Q)^{-1}||_F, or +inf when V^T Q is numerically singular.
/// Equals s_t for X = Z and s'_t for X = W, since the R factor of the
/// orthonormalization cancels.
double analysis_ratio(const Eigen::Ref<const Eigen::MatrixXd>& q, const Eigen::Ref<const Eigen::MatrixXd>& x,
                      const Eigen::Ref<const Eigen::MatrixXd>& v);

/// a_t = ||x^T Q_{t-1} (V^T Q_{t-1})^{-1}||_2, +inf when singular.
double sample_alignment(const Eigen::Ref<const Eigen::MatrixXd>& q_prev, const Eigen::Ref<const Eigen::MatrixXd>& v,
                        const Eigen::Ref<const Eigen::VectorXd>& x);

struct InitDiagnostics {
    double xi_z = 0.0;        ///< ||Z^T Q0 (V^T Q0)^{-1}||_F^2
    Eigen::VectorXd per_vec;  ///< ||nu_j^T Z Z^T Q0 (V^T Q0)^{-1}||_2 for every j
};

InitDiagnostics init_diagnostics(const Eigen::Ref<const Eigen::MatrixXd>& q0, const EigenPartition& part);

/// One row of a trajectory.
struct MetricRecord {
    std::int64_t t = 0;
    double frob_w = 0.0;
    double frob_z = 0.0;
    double spec_w = 0.0;
    Eigen::VectorXd rayleigh;  ///< per column; NaN for exactly-zero columns
    double rayleigh_min_slack = 0.0;
    double a_t = std::numeric_limits<double>::quiet_NaN();
    double s_t = 0.0;
    double s_prime_t = 0.0;
    int active_columns = 0;
};

/// Evaluates every trajectory metric in eigen-coordinates C = U^T Q, so each
/// record costs O(d^2 k) with a general basis and O(d k^2) otherwise.
class MetricRecorder {
public:
    MetricRecorder(Spectrum spec, int k, double rho);

    const Spectrum& spectrum() const { return spec_; }
    const EigenPartition& partition() const { return part_; }

    /// Metrics of the state `q` at step t. `q_prev` and `x` (the state before
    /// step t and the sample used by it) feed a_t; pass null for t = 0.
    MetricRecord measure(std::int64_t t, const Eigen::Ref<const Eigen::MatrixXd>& q,
                         const Eigen::MatrixXd* q_prev = nullptr, const Eigen::VectorXd* x = nullptr) const;

private:
    Eigen::MatrixXd coords(const Eigen::Ref<const Eigen::MatrixXd>& q) const;

    Spectrum spec_;
    EigenPartition part_;
};

}  // namespace streampca
