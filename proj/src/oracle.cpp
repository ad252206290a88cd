#include "streampca/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "streampca/qr.hpp"

namespace streampca {

Eigen::MatrixXd empirical_covariance(const std::vector<Eigen::VectorXd>& samples) {
    if (samples.empty()) throw std::invalid_argument("empirical_covariance: no samples");
    const Eigen::Index d = samples.front().size();
    CovarianceAccumulator acc(static_cast<int>(d));
    for (const auto& x : samples) {
        if (x.size() != d) throw std::invalid_argument("empirical_covariance: samples differ in dimension");
        acc.add(x);
    }
    return acc.covariance();
}

Eigen::MatrixXd empirical_covariance(const Eigen::Ref<const Eigen::MatrixXd>& samples) {
    if (samples.cols() == 0) throw std::invalid_argument("empirical_covariance: no samples");
    Eigen::MatrixXd c = Eigen::MatrixXd::Zero(samples.rows(), samples.rows());
    c.selfadjointView<Eigen::Upper>().rankUpdate(samples, 1.0 / static_cast<double>(samples.cols()));
    c.triangularView<Eigen::StrictlyLower>() = c.transpose();
    return c;
}

void CovarianceAccumulator::add(const Eigen::Ref<const Eigen::VectorXd>& x) {
    if (x.size() != sum_.rows()) throw std::invalid_argument("CovarianceAccumulator: dimension mismatch");
    sum_.selfadjointView<Eigen::Upper>().rankUpdate(x);
    ++count_;
}

Eigen::MatrixXd CovarianceAccumulator::covariance() const {
    if (count_ == 0) throw std::invalid_argument("CovarianceAccumulator: no samples");
    Eigen::MatrixXd c = sum_ / static_cast<double>(count_);
    c.triangularView<Eigen::StrictlyLower>() = c.transpose();
    return c;
}

SymmetricEigen eig_sym(const Eigen::Ref<const Eigen::MatrixXd>& m) {
    const Eigen::Index n = m.rows();
    if (m.cols() != n) throw std::invalid_argument("eig_sym: matrix must be square");
    if (!m.allFinite()) throw std::invalid_argument("eig_sym: non-finite entries");
    const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
    if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
        throw std::invalid_argument("eig_sym: matrix is not symmetric");

    Eigen::MatrixXd a = 0.5 * (m + m.transpose());
    Eigen::MatrixXd v = Eigen::MatrixXd::Identity(n, n);
    const double threshold = 1e-12 * a.norm();
    SymmetricEigen out;

    auto max_off = [&] {
        double best = 0.0;
        for (Eigen::Index j = 1; j < n; ++j)
            for (Eigen::Index i = 0; i < j; ++i) best = std::max(best, std::abs(a(i, j)));
        return best;
    };

    constexpr int kMaxSweeps = 100;
    while (max_off() > threshold) {
        if (out.sweeps++ >= kMaxSweeps) throw std::runtime_error("eig_sym: Jacobi did not converge");
        for (Eigen::Index p = 0; p + 1 < n; ++p) {
            for (Eigen::Index q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                // Rotation annihilating a(p, q).
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (Eigen::Index r = 0; r < n; ++r) {
                    const double arp = a(r, p);
                    const double arq = a(r, q);
                    a(r, p) = c * arp - s * arq;
                    a(r, q) = s * arp + c * arq;
                }
                for (Eigen::Index r = 0; r < n; ++r) {
                    const double apr = a(p, r);
                    const double aqr = a(q, r);
                    a(p, r) = c * apr - s * aqr;
                    a(q, r) = s * apr + c * aqr;
                }
                a(p, q) = 0.0;
                a(q, p) = 0.0;
                for (Eigen::Index r = 0; r < n; ++r) {
                    const double vrp = v(r, p);
                    const double vrq = v(r, q);
                    v(r, p) = c * vrp - s * vrq;
                    v(r, q) = s * vrp + c * vrq;
                }
            }
        }
    }

    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index i, Eigen::Index j) { return a(i, i) > a(j, j); });
    out.values.resize(n);
    out.vectors.resize(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::Index src = order[static_cast<std::size_t>(i)];
        out.values[i] = a(src, src);
        out.vectors.col(i) = v.col(src);
        normalize_sign(out.vectors.col(i));
    }
    return out;
}

Eigen::MatrixXd top_eigenvectors(const Eigen::Ref<const Eigen::MatrixXd>& m, int k) {
    if (k < 1 || k > m.rows())
        throw std::invalid_argument("offline_pca: need 1 <= k <= d (k=" + std::to_string(k) + ")");
    return eig_sym(m).vectors.leftCols(k);
}

Eigen::MatrixXd offline_pca(const std::vector<Eigen::VectorXd>& samples, int k) {
    return top_eigenvectors(empirical_covariance(samples), k);
}

}  // namespace streampca
