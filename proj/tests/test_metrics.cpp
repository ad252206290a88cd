#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "streampca/metrics.hpp"
#include "streampca/oja.hpp"
#include "streampca/oracle.hpp"

using namespace streampca;

namespace {

Eigen::MatrixXd haar_columns(int d, int k, std::uint64_t seed) { return haar_basis(d, seed).leftCols(k); }

}  // namespace

TEST_CASE("partition: m is the count of eigenvalues within rho below lambda_k") {
    const Spectrum a = make_spectrum(ExplicitList{{0.3, 0.3, 0.2, 0.2}}, 4, 2);
    const EigenPartition pa = partition(a, 2, 0.05);
    CHECK(pa.m == 0);
    CHECK(pa.w == Eigen::MatrixXd::Identity(4, 4).rightCols(2));

    const Spectrum b = make_spectrum(ExplicitList{{0.3, 0.28, 0.2}}, 3, 1);
    const EigenPartition pb = partition(b, 1, 0.05);
    CHECK(pb.m == 1);
    CHECK(pb.w == Eigen::Vector3d(0, 0, 1));

    const EigenPartition pc = partition(b, 1, 0.5);
    CHECK(pc.w.cols() == 0);
    CHECK(frob_corr(Eigen::Vector3d(0, 0, 1), pc.w) == 0.0);

    const EigenPartition full = partition(b, 3, 0.05);
    CHECK(full.z.cols() == 0);
    CHECK_THROWS_AS(partition(b, 4, 0.05), std::invalid_argument);
}

TEST_CASE("frob_corr: exact cases and the Haar mean") {
    const Spectrum s = make_spectrum(FlatGap{0.05, std::nullopt}, 10, 3);
    const EigenPartition p = partition(s, 3, 0.05);
    CHECK(frob_corr(p.v, p.w) == 0.0);
    CHECK(frob_corr(p.w.leftCols(3), p.w) == doctest::Approx(3.0).epsilon(1e-15));

    // E ||W^T Q||_F^2 = k * w / d for Haar-random Q.
    const int d = 60, k = 3, w = 40;
    const Eigen::MatrixXd wm = Eigen::MatrixXd::Identity(d, d).rightCols(w);
    const int n = 1000;
    std::vector<double> vals;
    for (int sd = 0; sd < n; ++sd) vals.push_back(frob_corr(haar_columns(d, k, static_cast<std::uint64_t>(sd)), wm));
    double mean = 0.0;
    for (double v : vals) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : vals) var += (v - mean) * (v - mean);
    var /= (n - 1);
    CHECK(std::abs(mean - 2.0) <= 3.0 * std::sqrt(var / n));
}

TEST_CASE("spectral_corr: rank one, diagonal, and an eigensolver cross-check") {
    Eigen::MatrixXd q = Eigen::MatrixXd::Zero(4, 2);
    q(0, 0) = 1.0;
    const Eigen::MatrixXd x = Eigen::MatrixXd::Identity(4, 4).leftCols(2) * 0.7;
    CHECK(spectral_corr(q, x) == doctest::Approx(frob_corr(q, x)).epsilon(1e-13));

    Eigen::MatrixXd qd(2, 2), xd = Eigen::MatrixXd::Identity(2, 2);
    qd << 0.5, 0, 0, 0.3;
    CHECK(spectral_corr(qd, xd) == doctest::Approx(0.25).epsilon(1e-13));

    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng = make_rng(seed);
        const Eigen::MatrixXd a = gaussian_matrix(5, 5, rng);
        const Eigen::MatrixXd b = gaussian_matrix(5, 5, rng);
        const Eigen::MatrixXd m = b.transpose() * a;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m.transpose() * m);
        CHECK(std::abs(spectral_corr(a, b) - es.eigenvalues().maxCoeff()) <= 1e-8 * es.eigenvalues().maxCoeff());
    }
}

TEST_CASE("rayleigh_quotients") {
    const Spectrum s = make_spectrum(ExplicitList{{0.5, 0.3}}, 2, 1);
    CHECK(rayleigh_quotients(Eigen::Matrix2d::Identity(), s).isApprox(Eigen::Vector2d(0.5, 0.3)));
    CHECK(rayleigh_quotients(Eigen::Vector2d(0, 1), s)[0] == doctest::Approx(0.3));
    CHECK(rayleigh_quotients(Eigen::Vector2d(1, 1) / std::sqrt(2.0), s)[0] == doctest::Approx(0.4).epsilon(1e-15));
    CHECK_THROWS_AS(rayleigh_quotients(Eigen::Vector2d(1, 1), s), std::invalid_argument);

    const Spectrum r = with_basis(make_spectrum(Geometric{0.6, std::nullopt}, 8, 2), haar_basis(8, 4));
    const Eigen::MatrixXd q = haar_columns(8, 3, 9);
    const Eigen::MatrixXd cov = r.covariance();
    const Eigen::VectorXd got = rayleigh_quotients(q, r);
    for (int i = 0; i < 3; ++i) CHECK(got[i] == doctest::Approx(q.col(i).dot(cov * q.col(i))).epsilon(1e-13));
}

TEST_CASE("analysis_ratio: zero, singular, and an explicit 2x2 inverse") {
    const Spectrum s = make_spectrum(Geometric{0.5, std::nullopt}, 4, 2);
    const EigenPartition p = partition(s, 2, 0.05);
    CHECK(analysis_ratio(p.v, p.z, p.v) == 0.0);

    Eigen::MatrixXd q = Eigen::MatrixXd::Zero(4, 2);
    q(0, 0) = 1.0;
    q(2, 1) = 1.0;  // orthogonal to nu_2
    CHECK(std::isinf(analysis_ratio(q, p.z, p.v)));

    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const Eigen::MatrixXd qr = haar_columns(4, 2, seed + 100);
        const Eigen::Matrix2d vq = p.v.transpose() * qr;
        const double det = vq(0, 0) * vq(1, 1) - vq(0, 1) * vq(1, 0);
        Eigen::Matrix2d inv;
        inv << vq(1, 1), -vq(0, 1), -vq(1, 0), vq(0, 0);
        inv /= det;
        const double want = (p.z.transpose() * qr * inv).norm();
        CHECK(analysis_ratio(qr, p.z, p.v) == doctest::Approx(want).epsilon(1e-10));
        // The R factor cancels: an unnormalized basis of the same span gives the same value.
        Eigen::Matrix2d mix;
        mix << 2.0, 0.3, -0.1, 0.7;
        CHECK(analysis_ratio(qr * mix, p.z, p.v) == doctest::Approx(want).epsilon(1e-10));
    }
}

TEST_CASE("sample_alignment") {
    const Spectrum s = make_spectrum(Geometric{0.5, std::nullopt}, 5, 2);
    const EigenPartition p = partition(s, 2, 0.05);
    Eigen::VectorXd x = Eigen::VectorXd::Zero(5);
    x[4] = 1.0;
    CHECK(sample_alignment(p.v, p.v, x) == 0.0);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Eigen::VectorXd u = init_gaussian(5, 1, seed).col(0);
        u.normalize();
        CHECK(sample_alignment(p.v, p.v, u) <= 1.0 + 1e-12);
    }
}

TEST_CASE("sample_alignment: Gaussian start has a_1 of order sqrt(k)") {
    const int d = 200, k = 8;
    const Spectrum s = make_spectrum(FlatGap{0.01, std::nullopt}, d, k);
    const EigenPartition p = partition(s, k, 0.01);
    SampleSource src = sign_sampler(s, 1);
    std::vector<double> a1;
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
        const Eigen::MatrixXd q0 = qr_orthonormalize(init_gaussian(d, k, seed));
        a1.push_back(sample_alignment(q0, p.v, src.draw()));
    }
    std::nth_element(a1.begin(), a1.begin() + 500, a1.end());
    CHECK(a1[500] <= 3.0 * std::sqrt(double(k)));
}

TEST_CASE("init_diagnostics") {
    const Spectrum s = make_spectrum(Geometric{0.5, std::nullopt}, 6, 1);
    const EigenPartition p = partition(s, 1, 0.05);
    const InitDiagnostics at_v = init_diagnostics(p.v, p);
    CHECK(at_v.xi_z == 0.0);
    CHECK(at_v.per_vec.isZero(0.0));

    Eigen::VectorXd q = Eigen::VectorXd::Zero(6);
    q[0] = q[1] = 1.0 / std::sqrt(2.0);
    const InitDiagnostics mixed = init_diagnostics(q, p);
    CHECK(mixed.xi_z == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(mixed.per_vec[1] == doctest::Approx(1.0).epsilon(1e-14));

    const Spectrum full = make_spectrum(Geometric{0.5, std::nullopt}, 4, 4);
    const EigenPartition pf = partition(full, 4, 0.05);
    CHECK(init_diagnostics(init_gaussian(4, 4, 3), pf).xi_z == 0.0);
}

TEST_CASE("init_diagnostics: xi_Z rarely exceeds 576 d k / p^2 ln(d/p)") {
    const int d = 100, k = 4;
    const double p = 0.5;
    const Spectrum s = make_spectrum(FlatGap{0.05, std::nullopt}, d, k);
    const EigenPartition part = partition(s, k, 0.05);
    const double bound = 576.0 * d * k / (p * p) * std::log(d / p);
    int within = 0;
    for (std::uint64_t seed = 0; seed < 1000; ++seed)
        if (init_diagnostics(init_gaussian(d, k, seed), part).xi_z <= bound) ++within;
    CHECK(within >= 950);
}

TEST_CASE("MetricRecorder agrees with the direct formulas in a rotated basis") {
    const int d = 12, k = 3;
    const double rho = 0.03;
    const Spectrum s =
        with_basis(make_spectrum(ClusteredGapFree{0.15, rho, 2, std::nullopt}, d, k), haar_basis(d, 2));
    const MetricRecorder rec(s, k, rho);
    const EigenPartition& p = rec.partition();
    const Eigen::MatrixXd q = haar_columns(d, k, 17);
    const Eigen::MatrixXd qp = haar_columns(d, k, 18);
    Eigen::VectorXd x = init_gaussian(d, 1, 3).col(0);
    x.normalize();
    const MetricRecord r = rec.measure(5, q, &qp, &x);
    CHECK(r.frob_w == doctest::Approx(frob_corr(q, p.w)).epsilon(1e-12));
    CHECK(r.frob_z == doctest::Approx(frob_corr(q, p.z)).epsilon(1e-12));
    CHECK(r.spec_w == doctest::Approx(spectral_corr(q, p.w)).epsilon(1e-9));
    CHECK(r.s_t == doctest::Approx(analysis_ratio(q, p.z, p.v)).epsilon(1e-10));
    CHECK(r.s_prime_t == doctest::Approx(analysis_ratio(q, p.w, p.v)).epsilon(1e-10));
    CHECK(r.a_t == doctest::Approx(sample_alignment(qp, p.v, x)).epsilon(1e-10));
    const Eigen::VectorXd rq = rayleigh_quotients(q, s);
    CHECK(r.rayleigh_min_slack == doctest::Approx((rq - s.eigenvalues.head(k)).minCoeff()).epsilon(1e-12));
    CHECK(r.active_columns == k);
    // ||W^T Q||_F <= ||W^T Q (V^T Q)^{-1}||_F because ||V^T Q||_2 <= 1.
    CHECK(std::sqrt(r.frob_w) <= r.s_prime_t + 1e-12);
}

TEST_CASE("subset averaging scales frob_corr by k / k'") {
    // Exhaustive average over every k-subset of the k' columns.
    for (int kp = 1; kp <= 8; ++kp) {
        const int d = 20;
        const Eigen::MatrixXd q = haar_columns(d, kp, static_cast<std::uint64_t>(kp));
        const Eigen::MatrixXd w = haar_basis(d, 50 + kp).leftCols(7);
        const double full = frob_corr(q, w);
        for (int k = 1; k <= kp; ++k) {
            double sum = 0.0;
            int count = 0;
            for (unsigned mask = 0; mask < (1u << kp); ++mask) {
                if (__builtin_popcount(mask) != k) continue;
                Eigen::MatrixXd sub(d, k);
                for (int j = 0, c = 0; j < kp; ++j)
                    if (mask & (1u << j)) sub.col(c++) = q.col(j);
                sum += frob_corr(sub, w);
                ++count;
            }
            CHECK(std::abs(sum / count - double(k) / kp * full) <= 1e-12);
        }
    }
}

TEST_CASE("metrics are invariant under column sign flips") {
    const int d = 15, k = 4;
    const Spectrum s = with_basis(make_spectrum(Geometric{0.8, std::nullopt}, d, k), haar_basis(d, 6));
    const MetricRecorder rec(s, k, 0.02);
    Rng rng = make_rng(8);
    for (int trial = 0; trial < 10; ++trial) {
        const Eigen::MatrixXd q = haar_columns(d, k, 200 + trial);
        Eigen::VectorXd signs(k);
        for (int j = 0; j < k; ++j) signs[j] = (rng() >> 63) ? -1.0 : 1.0;
        const Eigen::MatrixXd flipped = q * signs.asDiagonal();
        Eigen::VectorXd x = init_gaussian(d, 1, trial).col(0).normalized();
        const MetricRecord a = rec.measure(1, q, &q, &x);
        const MetricRecord b = rec.measure(1, flipped, &flipped, &x);
        CHECK(a.frob_w == doctest::Approx(b.frob_w).epsilon(1e-13));
        CHECK(a.frob_z == doctest::Approx(b.frob_z).epsilon(1e-13));
        CHECK(a.spec_w == doctest::Approx(b.spec_w).epsilon(1e-9));
        CHECK(a.rayleigh_min_slack == doctest::Approx(b.rayleigh_min_slack).epsilon(1e-13));
        CHECK(a.s_t == doctest::Approx(b.s_t).epsilon(1e-10));
        CHECK(a.s_prime_t == doctest::Approx(b.s_prime_t).epsilon(1e-10));
        CHECK(a.a_t == doctest::Approx(b.a_t).epsilon(1e-10));
    }
}
