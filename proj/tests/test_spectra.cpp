#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <sstream>

#include <Eigen/Dense>

#include "streampca/oracle.hpp"
#include "streampca/spectra.hpp"

using namespace streampca;

namespace {

Eigen::MatrixXd monte_carlo_moment(SampleSource& src, int n) {
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(src.dim(), src.dim());
    Eigen::VectorXd x(src.dim());
    for (int i = 0; i < n; ++i) {
        src.draw(x);
        acc.selfadjointView<Eigen::Lower>().rankUpdate(x);
    }
    acc.triangularView<Eigen::StrictlyUpper>() = acc.transpose();
    return acc / n;
}

// Descending eigenvalues from Eigen's solver, independent of the library's Jacobi code.
Eigen::VectorXd eigenvalues_desc(const Eigen::MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
    return es.eigenvalues().reverse();
}

}  // namespace

TEST_CASE("make_spectrum: flat-gap d=4 k=2") {
    const Spectrum s = make_spectrum(FlatGap{0.1, 0.3}, 4, 2);
    CHECK(s.eigenvalues.isApprox(Eigen::Vector4d(0.3, 0.3, 0.2, 0.2)));
    CHECK(s.trace() == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(s.identity_basis());
}

TEST_CASE("make_spectrum: flat-gap without lambda_top fills the trace budget") {
    const Spectrum s = make_spectrum(FlatGap{0.05, std::nullopt}, 100, 5);
    CHECK(s.trace() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(s.eigenvalues[4] - s.eigenvalues[5] == doctest::Approx(0.05).epsilon(1e-12));
}

TEST_CASE("make_spectrum: explicit lists") {
    const Spectrum s = make_spectrum(ExplicitList{{0.5, 0.3, 0.1}}, 3, 1);
    CHECK(s.trace() == doctest::Approx(0.9));
    CHECK_THROWS_AS(make_spectrum(ExplicitList{{0.9, 0.3}}, 2, 1), std::invalid_argument);
    CHECK_THROWS_AS(make_spectrum(ExplicitList{{0.1, 0.3}}, 2, 1), std::invalid_argument);
    CHECK_THROWS_AS(make_spectrum(ExplicitList{{0.3, -0.1}}, 2, 1), std::invalid_argument);
}

TEST_CASE("make_spectrum: geometric and clustered recipes") {
    const Spectrum g = make_spectrum(Geometric{0.5, std::nullopt}, 10, 2);
    CHECK(g.trace() == doctest::Approx(1.0).epsilon(1e-12));
    for (int i = 1; i < 10; ++i) CHECK(g.eigenvalues[i] / g.eigenvalues[i - 1] == doctest::Approx(0.5));

    const Spectrum c = make_spectrum(ClusteredGapFree{0.1, 0.05, 5, std::nullopt}, 100, 5);
    CHECK(c.trace() <= 1.0 + 1e-12);
    for (int i = 0; i < 5; ++i) CHECK(c.eigenvalues[i] == 0.1);
    for (int i = 5; i < 10; ++i) {
        CHECK(c.eigenvalues[i] < 0.1);
        CHECK(c.eigenvalues[i] > 0.05);
    }
    CHECK(c.eigenvalues[10] <= 0.05);
    CHECK(problem_spec(c, 5, 0.05).m == 5);
}

TEST_CASE("haar_basis: small cases and the uniform-sphere marginal") {
    const Eigen::MatrixXd one = haar_basis(1, 3);
    CHECK(std::abs(one(0, 0)) == 1.0);

    const Eigen::MatrixXd u = haar_basis(3, 12);
    CHECK((u.transpose() * u - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() <= 1e-10);

    // u_11^2 of a uniform unit vector in R^d is Beta(1/2, (d-1)/2): mean 1/d,
    // variance 2(d-1) / (d^2 (d+2)).
    const int d = 50;
    const int n = 1000;
    double sum = 0.0;
    for (int s = 0; s < n; ++s) {
        const double v = haar_basis(d, static_cast<std::uint64_t>(s))(0, 0);
        sum += v * v;
    }
    const double se = std::sqrt(2.0 * (d - 1) / (double(d) * d * (d + 2)) / n);
    CHECK(std::abs(sum / n - 1.0 / d) <= 3.0 * se);
}

TEST_CASE("discrete_sampler: emits eigenvectors with probability lambda_i") {
    const Spectrum s = make_spectrum(ExplicitList{{0.5, 0.3}}, 2, 1);
    SampleSource src = discrete_sampler(s, 4);
    int e1 = 0, e2 = 0, zero = 0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const Eigen::VectorXd x = src.draw();
        if (x == Eigen::Vector2d(1, 0)) ++e1;
        else if (x == Eigen::Vector2d(0, 1)) ++e2;
        else if (x.isZero(0.0)) ++zero;
    }
    CHECK(e1 + e2 + zero == n);
    auto within = [n](int count, double p) { return std::abs(count - n * p) <= 4.0 * std::sqrt(n * p * (1 - p)); };
    CHECK(within(e1, 0.5));
    CHECK(within(e2, 0.3));
    CHECK(within(zero, 0.2));

    SampleSource always = discrete_sampler(make_spectrum(ExplicitList{{1.0}}, 1, 1), 9);
    for (int i = 0; i < 100; ++i) CHECK(always.draw()[0] == 1.0);
}

TEST_CASE("discrete_sampler: Monte-Carlo covariance") {
    const Spectrum s = make_spectrum(ExplicitList{{0.4, 0.4, 0.1}}, 3, 1);
    SampleSource src = discrete_sampler(s, 1);
    CHECK((monte_carlo_moment(src, 100000) - s.covariance()).norm() <= 0.02);

    const Spectrum r = with_basis(make_spectrum(Geometric{0.8, std::nullopt}, 20, 2), haar_basis(20, 5));
    SampleSource rot = discrete_sampler(r, 2);
    CHECK((monte_carlo_moment(rot, 100000) - r.covariance()).norm() <= 0.02);
}

TEST_CASE("sign_sampler: exact norm and Monte-Carlo covariance") {
    const Spectrum s = with_basis(make_spectrum(FlatGap{0.05, std::nullopt}, 20, 3), haar_basis(20, 8));
    SampleSource src = sign_sampler(s, 3);
    for (int i = 0; i < 100; ++i) CHECK(src.draw().norm() == doctest::Approx(std::sqrt(s.trace())).epsilon(1e-12));
    CHECK((monte_carlo_moment(src, 100000) - s.covariance()).norm() <= 0.02);
    CHECK((true_sigma(src).covariance() - s.covariance()).norm() <= 1e-14);
}

TEST_CASE("second_moment equals the covariance of true_sigma for every source kind") {
    const Spectrum s = make_spectrum(ExplicitList{{0.5, 0.3}}, 2, 1);
    const SampleSource d = discrete_sampler(s);
    CHECK(true_sigma(d).eigenvalues == s.eigenvalues);
    CHECK((d.second_moment() - Eigen::Matrix2d(Eigen::Vector2d(0.5, 0.3).asDiagonal())).norm() <= 1e-15);
}

TEST_CASE("lower_bound_source: beta, the zero probability and the a/b split") {
    const LowerBoundParams p{1, 0.2, 0.1, 100000, 4.0, 1.0};
    SampleSource src = lower_bound_source(p, {0}, 6);
    const auto& model = std::get<LowerBound>(src.kind().model);
    CHECK(model.beta * model.beta == doctest::Approx(0.75).epsilon(1e-15));

    const int n = 200000;
    int zeros = 0, a = 0, b = 0;
    for (int i = 0; i < n; ++i) {
        const Eigen::VectorXd x = src.draw();
        CHECK(x.norm() <= 1.0 + 1e-15);
        if (x.isZero(0.0)) ++zeros;
        else if (x[1] > 0) ++a;
        else ++b;
    }
    const double p0 = 1.0 - 0.2 / 0.75;
    CHECK(p0 == doctest::Approx(0.73333).epsilon(1e-4));
    CHECK(std::abs(zeros - n * p0) <= 4.0 * std::sqrt(n * p0 * (1 - p0)));
    const int nz = a + b;
    CHECK(std::abs(a - nz / 2.0) <= 4.0 * std::sqrt(nz * 0.25));
}

TEST_CASE("lower_bound_source: rejects violated preconditions") {
    CHECK_THROWS_AS(lower_bound_source({1, 0.2, 0.15, 100000}, {0}), std::invalid_argument);  // delta > lambda/2
    CHECK_THROWS_AS(lower_bound_source({2, 0.2, 0.05, 100000}, {0, 0}), std::invalid_argument);  // lambda > 1/(4k)
    CHECK_THROWS_AS(lower_bound_source({1, 0.2, 0.1, 10}, {0}), std::invalid_argument);  // T too small
    CHECK_THROWS_AS(lower_bound_source({2, 0.1, 0.05, 100000}, {0}), std::invalid_argument);  // |z| != k
    CHECK_THROWS_AS(lower_bound_source({1, 0.2, 0.1, 100000}, {2}), std::invalid_argument);
}

TEST_CASE("true_sigma: lower-bound blocks against an independent eigensolver") {
    const double lam = 0.1, delta = 0.05;
    const LowerBoundParams p{2, lam, delta, 32000, 4.0, 1.0};
    for (const std::vector<std::uint8_t>& z : {std::vector<std::uint8_t>{0, 0}, {0, 1}, {1, 0}, {1, 1}}) {
        const SampleSource src = lower_bound_source(p, z, 0);
        const Spectrum sigma = true_sigma(src);
        sigma.validate();
        const auto& m = std::get<LowerBound>(src.kind().model);
        const double b2 = m.beta * m.beta;
        const double root = std::sqrt(1.0 - b2);

        // Second moment assembled directly from the sampler definition.
        Eigen::MatrixXd moment = Eigen::MatrixXd::Zero(4, 4);
        for (int i = 0; i < 2; ++i) {
            const double pa = z[i] ? 0.5 + m.eps : 0.5;
            const Eigen::Vector2d va(m.beta, root), vb(m.beta, -root);
            moment.block<2, 2>(2 * i, 2 * i) =
                (lam / b2) * (pa * va * va.transpose() + (1 - pa) * vb * vb.transpose());
        }
        CHECK((sigma.covariance() - moment).norm() <= 1e-14);
        CHECK((sigma.eigenvalues - eigenvalues_desc(moment)).cwiseAbs().maxCoeff() <= 1e-14);

        if (z[0] == 0 || z[1] == 0) CHECK(sigma.eigenvalues[1] == doctest::Approx(lam).epsilon(1e-12));
        else CHECK(sigma.eigenvalues[1] > lam);
        CHECK(sigma.eigenvalues[2] <= lam - delta + 1e-12);
    }
}

TEST_CASE("true_sigma: z_i = 1 block eigenvalues follow the quadratic in s") {
    const LowerBoundParams p{1, 0.2, 0.1, 100000, 4.0, 1.0};
    const SampleSource src = lower_bound_source(p, {1}, 0);
    const auto& m = std::get<LowerBound>(src.kind().model);
    const double beta = m.beta, eps = m.eps;
    const double c = 2 * eps * beta * std::sqrt(1 - beta * beta);
    const double alpha = (2 * beta * beta - 1) / c;
    const double s1 = (-alpha + std::sqrt(alpha * alpha + 4)) / 2;
    const double s2 = (-alpha - std::sqrt(alpha * alpha + 4)) / 2;
    CHECK(s1 * s2 == doctest::Approx(-1.0));
    const double scale = p.lambda / (beta * beta);
    const Spectrum sigma = true_sigma(src);
    CHECK(sigma.eigenvalues[0] == doctest::Approx(scale * (beta * beta + c * s1)).epsilon(1e-12));
    CHECK(sigma.eigenvalues[1] == doctest::Approx(scale * (beta * beta + c * s2)).epsilon(1e-12));
}

TEST_CASE("lemma_2x2: worked values") {
    const double beta = std::sqrt(0.6);
    const TwoByTwoPair tight = lemma_2x2(beta, 0.2);
    CHECK((tight.a - Eigen::Matrix2d(Eigen::Vector2d(0.6, 0.4).asDiagonal())).cwiseAbs().maxCoeff() <= 1e-15);
    const TwoByTwoPair pair = lemma_2x2(beta, 0.1);
    CHECK(pair.b(0, 1) == doctest::Approx(0.09798).epsilon(1e-4));
    CHECK(pair.b(0, 1) == doctest::Approx(2 * 0.1 * std::sqrt(0.6) * std::sqrt(0.4)).epsilon(1e-14));
    CHECK(pair.b_values.sum() == doctest::Approx(1.0).epsilon(1e-15));
    CHECK_THROWS_AS(lemma_2x2(0.5, 0.1), std::invalid_argument);
    CHECK_THROWS_AS(lemma_2x2(beta, 0.3), std::invalid_argument);
}

TEST_CASE("lemma_2x2: closed forms against an independent eigensolver") {
    Rng rng = make_rng(21);
    for (int i = 0; i < 100; ++i) {
        const double b2 = 0.5 + 0.25 * (0.01 + 0.99 * uniform01(rng));
        const double beta = std::sqrt(b2);
        const double eps = (2 * b2 - 1) * (0.01 + 0.99 * uniform01(rng));
        const TwoByTwoPair pr = lemma_2x2(beta, eps);
        const Eigen::Vector2d ev = eigenvalues_desc(pr.b);
        CHECK((pr.b_values - ev).cwiseAbs().maxCoeff() <= 1e-13);
        for (int j = 0; j < 2; ++j) {
            CHECK((pr.b * pr.b_vectors.col(j) - pr.b_values[j] * pr.b_vectors.col(j)).norm() <= 1e-13);
            CHECK((pr.a * pr.a_vectors.col(j) - pr.a_values[j] * pr.a_vectors.col(j)).norm() <= 1e-13);
        }
    }
}

TEST_CASE("gapfree_pad: identity for m = 0, unit norm and block covariance for m = k") {
    const Spectrum s = make_spectrum(ExplicitList{{0.6, 0.4}}, 2, 1);
    const SampleSource inner = sign_sampler(s, 3);
    SampleSource same = gapfree_pad(inner, 0, 1);
    SampleSource ref = inner;
    for (int i = 0; i < 20; ++i) CHECK(same.draw() == ref.draw());

    SampleSource padded = gapfree_pad(inner, 1, 1, 4);
    CHECK(padded.dim() == 4);
    // Inner draws have unit norm here, so sqrt(2 * 1/2) = 1.
    for (int i = 0; i < 50; ++i) CHECK(padded.draw().norm() == doctest::Approx(1.0).epsilon(1e-14));
    Eigen::MatrixXd expected = Eigen::MatrixXd::Zero(4, 4);
    expected.topLeftCorner(2, 2) = 0.5 * s.covariance();
    expected.bottomRightCorner(2, 2) = 0.5 * s.covariance();
    CHECK((padded.second_moment() - expected).norm() <= 1e-15);
    CHECK((monte_carlo_moment(padded, 100000) - expected).norm() <= 0.02);
    CHECK_THROWS_AS(gapfree_pad(inner, 3, 2), std::invalid_argument);
}

TEST_CASE("problem_spec and spectrum file round trip") {
    const Spectrum s = make_spectrum(ExplicitList{{0.3, 0.28, 0.2}}, 3, 1);
    const ProblemSpec ps = problem_spec(s, 1, 0.05);
    CHECK(ps.m == 1);
    CHECK(ps.gap == doctest::Approx(0.02));

    const Spectrum r = with_basis(make_spectrum(Geometric{0.7, std::nullopt}, 5, 2), haar_basis(5, 1));
    std::stringstream ss;
    write_spectrum(ss, r);
    const Spectrum back = read_spectrum(ss);
    CHECK(back.eigenvalues == r.eigenvalues);
    CHECK(back.basis == r.basis);
}

TEST_CASE("Spectrum::validate rejects a non-orthonormal basis") {
    Spectrum s = make_spectrum(ExplicitList{{0.5, 0.3}}, 2, 1);
    s.basis = Eigen::Matrix2d::Ones();
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
}
