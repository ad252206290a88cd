#include "streampca/qr.hpp"

#include <array>
#include <cmath>
#include <vector>

namespace streampca {

namespace {

using Vec = Eigen::Map<Eigen::VectorXd>;

void scale_to_unit(double* v, Eigen::Index n, double norm) {
    double s = 1.0 / norm;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (v[i] != 0.0) {
            if (v[i] < 0.0) s = -s;
            break;
        }
    }
    Vec(v, n) *= s;
}

}  // namespace

void normalize_sign(Eigen::Ref<Eigen::VectorXd> v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (v[i] != 0.0) {
            if (v[i] < 0.0) v = -v;
            return;
        }
    }
}

Eigen::Index qr_orthonormalize_inplace(Eigen::Ref<Eigen::MatrixXd> m) {
    const Eigen::Index rows = m.rows();
    const Eigen::Index cols = m.cols();
    // Indices of the nonzero output columns produced so far.
    std::array<Eigen::Index, 32> small{};
    std::vector<Eigen::Index> large;
    Eigen::Index* kept = small.data();
    if (cols > static_cast<Eigen::Index>(small.size())) {
        large.resize(static_cast<std::size_t>(cols));
        kept = large.data();
    }
    Eigen::Index num_kept = 0;

    for (Eigen::Index j = 0; j < cols; ++j) {
        auto col = m.col(j);
        const double input_norm = col.norm();
        if (!(input_norm > kZeroColumnAbsTol)) {
            col.setZero();
            continue;
        }
        for (Eigen::Index p = 0; p < num_kept; ++p) {
            const auto q = m.col(kept[p]);
            col -= q.dot(col) * q;
        }
        const double residual = col.norm();
        if (!(residual > kZeroColumnRelTol * input_norm)) {
            col.setZero();
            continue;
        }
        scale_to_unit(col.data(), rows, residual);
        kept[num_kept++] = j;
    }
    return num_kept;
}

Eigen::MatrixXd qr_orthonormalize(const Eigen::Ref<const Eigen::MatrixXd>& m) {
    Eigen::MatrixXd out = m;
    qr_orthonormalize_inplace(out);
    return out;
}

}  // namespace streampca
