#pragma once

#include <Eigen/Dense>

namespace streampca {

/// Relative residual threshold below which a column is treated as linearly
/// dependent on its predecessors and replaced by an exact zero column.
inline constexpr double kZeroColumnRelTol = 1e-12;
/// Absolute input norm below which a column counts as genuinely zero.
inline constexpr double kZeroColumnAbsTol = 1e-300;

/// Modified Gram-Schmidt, left to right.
///
/// Columns whose residual after projection falls below
/// kZeroColumnRelTol * (input column norm) become exact zeros and are skipped
/// as projection targets for later columns, so zero columns stay zero under
/// repeated application. Each nonzero output column has a positive leading
/// nonzero entry, which makes the factorization unique.
Eigen::MatrixXd qr_orthonormalize(const Eigen::Ref<const Eigen::MatrixXd>& m);

/// In-place variant used on the hot path of the streaming update. Returns the
/// number of nonzero output columns.
Eigen::Index qr_orthonormalize_inplace(Eigen::Ref<Eigen::MatrixXd> m);

/// Flips the sign of `v` so its first nonzero entry is positive.
void normalize_sign(Eigen::Ref<Eigen::VectorXd> v);

}  // namespace streampca
