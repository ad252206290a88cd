#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "streampca/metrics.hpp"
#include "streampca/oracle.hpp"

using namespace streampca;

TEST_CASE("empirical_covariance: hand cases") {
    const Eigen::VectorXd e1 = Eigen::VectorXd::Unit(4, 0);
    const Eigen::VectorXd e2 = Eigen::VectorXd::Unit(4, 1);
    Eigen::MatrixXd want = Eigen::MatrixXd::Zero(4, 4);
    want(0, 0) = 1.0;
    CHECK(empirical_covariance(std::vector<Eigen::VectorXd>{e1}) == want);
    want(0, 0) = want(1, 1) = 0.5;
    CHECK(empirical_covariance(std::vector<Eigen::VectorXd>{e1, e2}) == want);
    CHECK_THROWS_AS(empirical_covariance(std::vector<Eigen::VectorXd>{}), std::invalid_argument);
}

TEST_CASE("empirical_covariance: list and matrix forms agree with the naive sum") {
    Rng rng = make_rng(5);
    const Eigen::MatrixXd x = gaussian_matrix(6, 40, rng);
    std::vector<Eigen::VectorXd> list;
    for (int i = 0; i < 40; ++i) list.push_back(x.col(i));
    const Eigen::MatrixXd naive = x * x.transpose() / 40.0;
    CHECK((empirical_covariance(list) - naive).cwiseAbs().maxCoeff() <= 1e-14);
    CHECK((empirical_covariance(x) - naive).cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("empirical_covariance: 10^5 discrete draws approach Sigma at d = 20") {
    const Spectrum s = make_spectrum(Geometric{0.85, std::nullopt}, 20, 3);
    SampleSource src = discrete_sampler(s, 12);
    CovarianceAccumulator acc(20);
    for (int i = 0; i < 100000; ++i) acc.add(src.draw());
    CHECK((acc.covariance() - s.covariance()).norm() <= 0.02);
}

TEST_CASE("eig_sym: diagonal input") {
    const Eigen::Vector4d diag(0.1, 0.7, -0.2, 0.4);
    const SymmetricEigen e = eig_sym(Eigen::Matrix4d(diag.asDiagonal()));
    CHECK(e.values.isApprox(Eigen::Vector4d(0.7, 0.4, 0.1, -0.2)));
    CHECK(e.vectors.col(0) == Eigen::Vector4d(0, 1, 0, 0));
    CHECK(e.vectors.col(1) == Eigen::Vector4d(0, 0, 0, 1));
    CHECK(e.vectors.col(2) == Eigen::Vector4d(1, 0, 0, 0));
    CHECK(e.vectors.col(3) == Eigen::Vector4d(0, 0, 1, 0));
}

TEST_CASE("eig_sym: [[0, 1], [1, 0]]") {
    Eigen::Matrix2d m;
    m << 0, 1, 1, 0;
    const SymmetricEigen e = eig_sym(m);
    CHECK(e.values[0] == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(e.values[1] == doctest::Approx(-1.0).epsilon(1e-15));
    const double r = 1 / std::sqrt(2.0);
    CHECK((e.vectors.col(0) - Eigen::Vector2d(r, r)).norm() <= 1e-15);
    CHECK((e.vectors.col(1) - Eigen::Vector2d(r, -r)).norm() <= 1e-15);
}

TEST_CASE("eig_sym: residuals, reconstruction and agreement with Eigen on random input") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng = make_rng(seed);
        const int n = 2 + static_cast<int>(seed % 9);
        const Eigen::MatrixXd g = gaussian_matrix(n, n, rng);
        const Eigen::MatrixXd m = g + g.transpose();
        const SymmetricEigen e = eig_sym(m);
        for (int i = 0; i < n; ++i) CHECK((m * e.vectors.col(i) - e.values[i] * e.vectors.col(i)).norm() <= 1e-9);
        CHECK((m - e.vectors * e.values.asDiagonal() * e.vectors.transpose()).norm() <= 1e-9 * m.norm());
        CHECK(std::is_sorted(e.values.data(), e.values.data() + n, std::greater<>()));
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ref(m);
        CHECK((e.values - ref.eigenvalues().reverse()).cwiseAbs().maxCoeff() <= 1e-10 * m.norm());
    }
}

TEST_CASE("eig_sym: rejects non-symmetric and non-finite input") {
    Eigen::Matrix2d m;
    m << 0, 1, 2, 0;
    CHECK_THROWS_AS(eig_sym(m), std::invalid_argument);
    m << 0, NAN, NAN, 0;
    CHECK_THROWS_AS(eig_sym(m), std::invalid_argument);
}

TEST_CASE("offline_pca: repeated nu_1 and k = d") {
    const std::vector<Eigen::VectorXd> same(5, Eigen::VectorXd::Unit(3, 0));
    const Eigen::MatrixXd q = offline_pca(same, 2);
    CHECK(q.col(0) == Eigen::Vector3d(1, 0, 0));
    CHECK(q.col(1) == Eigen::Vector3d(0, 1, 0));

    Rng rng = make_rng(2);
    std::vector<Eigen::VectorXd> xs;
    for (int i = 0; i < 30; ++i) xs.push_back(gaussian_matrix(5, 1, rng).col(0));
    const Eigen::MatrixXd full = offline_pca(xs, 5);
    const Eigen::MatrixXd w = haar_basis(5, 3).leftCols(2);
    CHECK(frob_corr(full, w) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK_THROWS_AS(offline_pca(xs, 6), std::invalid_argument);
}

TEST_CASE("offline_pca: beats a random subspace tenfold on flat-gap d = 20, k = 2") {
    const Spectrum s = with_basis(make_spectrum(FlatGap{0.05, std::nullopt}, 20, 2), haar_basis(20, 1));
    const EigenPartition part = partition(s, 2, 0.05);
    std::vector<double> ratios;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        SampleSource src = sign_sampler(s, seed);
        CovarianceAccumulator acc(20);
        for (int i = 0; i < 10000; ++i) acc.add(src.draw());
        const double pca = frob_corr(top_eigenvectors(acc.covariance(), 2), part.z);
        const double haar = frob_corr(haar_basis(20, 1000 + seed).leftCols(2), part.z);
        ratios.push_back(haar / pca);
    }
    std::nth_element(ratios.begin(), ratios.begin() + 5, ratios.end());
    CHECK(ratios[5] >= 10.0);
}
