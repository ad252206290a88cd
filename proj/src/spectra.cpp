#include "streampca/spectra.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "streampca/qr.hpp"

namespace streampca {

namespace {

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

void check_trace(const Eigen::VectorXd& values) {
    const double sum = values.sum();
    if (sum > 1.0 + kTraceTol)
        throw std::invalid_argument("spectrum: trace budget exceeded, sum of eigenvalues = " +
                                    fmt(sum) + " > 1");
}

// Sorts eigenpairs descending, ties by original position, and applies the
// positive-leading-entry sign convention.
Spectrum sorted_spectrum(const Eigen::VectorXd& values, const Eigen::MatrixXd& vectors) {
    const Eigen::Index d = values.size();
    std::vector<Eigen::Index> order(static_cast<std::size_t>(d));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](Eigen::Index a, Eigen::Index b) { return values[a] > values[b]; });
    Spectrum out;
    out.eigenvalues.resize(d);
    out.basis.resize(d, d);
    for (Eigen::Index i = 0; i < d; ++i) {
        out.eigenvalues[i] = values[order[static_cast<std::size_t>(i)]];
        out.basis.col(i) = vectors.col(order[static_cast<std::size_t>(i)]);
        normalize_sign(out.basis.col(i));
    }
    return out;
}

}  // namespace

Eigen::MatrixXd Spectrum::basis_matrix() const {
    if (identity_basis()) return Eigen::MatrixXd::Identity(dim(), dim());
    return basis;
}

Eigen::MatrixXd Spectrum::covariance() const {
    if (identity_basis()) return eigenvalues.asDiagonal();
    return basis * eigenvalues.asDiagonal() * basis.transpose();
}

void Spectrum::validate() const {
    const Eigen::Index d = eigenvalues.size();
    if (d == 0) throw std::invalid_argument("spectrum: empty eigenvalue list");
    for (Eigen::Index i = 0; i < d; ++i) {
        if (!std::isfinite(eigenvalues[i]) || eigenvalues[i] < 0.0)
            throw std::invalid_argument("spectrum: eigenvalue " + std::to_string(i + 1) +
                                        " is negative or non-finite");
        if (i > 0 && eigenvalues[i] > eigenvalues[i - 1])
            throw std::invalid_argument("spectrum: eigenvalues must be nonincreasing (index " +
                                        std::to_string(i + 1) + ")");
    }
    check_trace(eigenvalues);
    if (!identity_basis()) {
        if (basis.rows() != d || basis.cols() != d)
            throw std::invalid_argument("spectrum: basis must be d x d");
        const double err =
            (basis.transpose() * basis - Eigen::MatrixXd::Identity(d, d)).cwiseAbs().maxCoeff();
        if (err > kBasisTol)
            throw std::invalid_argument("spectrum: basis is not orthonormal (max deviation " +
                                        fmt(err) + ")");
    }
}

Spectrum make_spectrum(const SpectrumRecipe& recipe, int d, int k) {
    if (d < 1 || k < 1 || k > d)
        throw std::invalid_argument("make_spectrum: need d >= k >= 1 (d=" + std::to_string(d) +
                                    ", k=" + std::to_string(k) + ")");
    Spectrum spec;
    spec.eigenvalues.resize(d);
    auto& lam = spec.eigenvalues;

    std::visit(
        [&](const auto& r) {
            using R = std::decay_t<decltype(r)>;
            if constexpr (std::is_same_v<R, FlatGap>) {
                if (!(r.gap >= 0.0)) throw std::invalid_argument("flat-gap: gap must be >= 0");
                const double top = r.lambda_top.value_or((1.0 + (d - k) * r.gap) / d);
                if (top - r.gap < 0.0 && k < d)
                    throw std::invalid_argument("flat-gap: lambda_top - gap is negative");
                lam.head(k).setConstant(top);
                lam.tail(d - k).setConstant(top - r.gap);
            } else if constexpr (std::is_same_v<R, Geometric>) {
                if (!(r.ratio > 0.0 && r.ratio <= 1.0))
                    throw std::invalid_argument("geometric: ratio must lie in (0, 1]");
                for (int i = 0; i < d; ++i) lam[i] = std::pow(r.ratio, i);
                lam *= r.lambda_top ? *r.lambda_top : 1.0 / lam.sum();
            } else if constexpr (std::is_same_v<R, ClusteredGapFree>) {
                if (!(r.rho > 0.0 && r.rho < r.lambda_top))
                    throw std::invalid_argument("clustered: need 0 < rho < lambda_top");
                if (r.m < 0 || k + r.m > d)
                    throw std::invalid_argument("clustered: need 0 <= m and k + m <= d");
                lam.head(k).setConstant(r.lambda_top);
                double cluster_sum = 0.0;
                for (int j = 1; j <= r.m; ++j) {
                    lam[k + j - 1] = r.lambda_top - r.rho * j / (r.m + 1);
                    cluster_sum += lam[k + j - 1];
                }
                const int rest = d - k - r.m;
                if (rest > 0) {
                    double tail = 0.0;
                    if (r.tail) {
                        tail = *r.tail;
                    } else {
                        tail = (1.0 - k * r.lambda_top - cluster_sum) / rest;
                        tail = std::clamp(tail, 0.0, r.lambda_top - r.rho);
                    }
                    if (tail < 0.0 || tail > r.lambda_top - r.rho)
                        throw std::invalid_argument("clustered: tail must lie in [0, lambda_top - rho]");
                    lam.tail(rest).setConstant(tail);
                }
            } else {
                if (static_cast<int>(r.values.size()) != d)
                    throw std::invalid_argument("explicit list: expected " + std::to_string(d) +
                                                " values, got " + std::to_string(r.values.size()));
                for (int i = 0; i < d; ++i) lam[i] = r.values[static_cast<std::size_t>(i)];
            }
        },
        recipe);

    spec.validate();
    return spec;
}

Spectrum with_basis(Spectrum spec, Eigen::MatrixXd basis) {
    spec.basis = std::move(basis);
    for (Eigen::Index j = 0; j < spec.basis.cols(); ++j) normalize_sign(spec.basis.col(j));
    spec.validate();
    return spec;
}

Eigen::MatrixXd haar_basis(int d, std::uint64_t seed) {
    if (d < 1) throw std::invalid_argument("haar_basis: d must be >= 1");
    Rng rng = make_rng(seed);
    return qr_orthonormalize(gaussian_matrix(d, d, rng));
}

ProblemSpec problem_spec(const Spectrum& spec, int k, double rho) {
    const int d = spec.dim();
    if (k < 1 || k > d) throw std::invalid_argument("problem_spec: need 1 <= k <= d");
    ProblemSpec p;
    p.d = d;
    p.k = k;
    p.rho = rho;
    const double lk = spec.eigenvalues[k - 1];
    while (k + p.m < d && spec.eigenvalues[k + p.m] > lk - rho) ++p.m;
    p.gap = k < d ? lk - spec.eigenvalues[k] : lk;
    return p;
}

// ---------------------------------------------------------------------------

namespace {

int model_dim(const SourceKind& kind) {
    return std::visit(
        [](const auto& m) -> int {
            using M = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<M, DiscreteEigen>) {
                return m.spectrum.dim();
            } else if constexpr (std::is_same_v<M, RandomSign>) {
                return m.spectrum.dim();
            } else if constexpr (std::is_same_v<M, LowerBound>) {
                return 2 * m.params.k;
            } else {
                return m.copies * model_dim(*m.inner);
            }
        },
        kind.model);
}

void draw_model(const SourceKind& kind, Rng& rng, Eigen::Ref<Eigen::VectorXd> out) {
    std::visit(
        [&](const auto& m) {
            using M = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<M, DiscreteEigen>) {
                const double u = uniform01(rng);
                const auto it = std::upper_bound(m.cumulative.begin(), m.cumulative.end(), u);
                out.setZero();
                if (it == m.cumulative.end()) return;
                const auto i = static_cast<Eigen::Index>(it - m.cumulative.begin());
                if (m.spectrum.identity_basis())
                    out[i] = 1.0;
                else
                    out = m.spectrum.basis.col(i);
            } else if constexpr (std::is_same_v<M, RandomSign>) {
                auto fill = [&](auto& c) {
                    std::uint64_t bits = 0;
                    for (Eigen::Index i = 0; i < m.root.size(); ++i) {
                        if (i % 64 == 0) bits = rng();
                        c[i] = std::copysign(m.root[i], 0.5 - static_cast<double>(bits & 1u));
                        bits >>= 1;
                    }
                };
                if (m.spectrum.identity_basis()) {
                    fill(out);
                } else {
                    Eigen::VectorXd c(m.root.size());
                    fill(c);
                    out.noalias() = m.spectrum.basis * c;
                }
            } else if constexpr (std::is_same_v<M, LowerBound>) {
                out.setZero();
                const int k = m.params.k;
                const double beta2 = m.beta * m.beta;
                if (!(uniform01(rng) < k * m.params.lambda / beta2)) return;
                const auto block = static_cast<Eigen::Index>(
                    std::min<double>(k - 1, std::floor(uniform01(rng) * k)));
                const double p_a = m.z[static_cast<std::size_t>(block)] ? 0.5 + m.eps : 0.5;
                const double second = std::sqrt(1.0 - beta2);
                out[2 * block] = m.beta;
                out[2 * block + 1] = uniform01(rng) < p_a ? second : -second;
            } else {
                const Eigen::Index inner_dim = model_dim(*m.inner);
                for (int c = 0; c < m.copies; ++c) {
                    auto seg = out.segment(c * inner_dim, inner_dim);
                    draw_model(*m.inner, rng, seg);
                    const double sign = (rng() >> 63) ? -1.0 : 1.0;
                    seg *= sign * m.scale;
                }
            }
        },
        kind.model);
}

Spectrum model_sigma(const SourceKind& kind) {
    return std::visit(
        [](const auto& m) -> Spectrum {
            using M = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<M, DiscreteEigen> || std::is_same_v<M, RandomSign>) {
                return m.spectrum;
            } else if constexpr (std::is_same_v<M, LowerBound>) {
                const int k = m.params.k;
                const double scale = m.params.lambda / (m.beta * m.beta);
                const Eigen::Index d = 2 * k;
                Eigen::VectorXd values(d);
                Eigen::MatrixXd vectors = Eigen::MatrixXd::Zero(d, d);
                // All block tops first so ties resolve block-major among tops.
                for (int i = 0; i < k; ++i) {
                    Eigen::Vector2d vals;
                    Eigen::Matrix2d vecs;
                    if (m.z[static_cast<std::size_t>(i)] == 0) {
                        vals << m.beta * m.beta, 1.0 - m.beta * m.beta;
                        vecs.setIdentity();
                    } else {
                        const TwoByTwoPair pair = lemma_2x2(m.beta, m.eps);
                        vals = pair.b_values;
                        vecs = pair.b_vectors;
                    }
                    values[i] = scale * vals[0];
                    values[k + i] = scale * vals[1];
                    vectors.block(2 * i, i, 2, 1) = vecs.col(0);
                    vectors.block(2 * i, k + i, 2, 1) = vecs.col(1);
                }
                return sorted_spectrum(values, vectors);
            } else {
                const Spectrum inner = model_sigma(*m.inner);
                const Eigen::Index di = inner.dim();
                const Eigen::Index d = di * m.copies;
                const Eigen::MatrixXd inner_basis = inner.basis_matrix();
                Eigen::VectorXd values(d);
                Eigen::MatrixXd vectors = Eigen::MatrixXd::Zero(d, d);
                for (int c = 0; c < m.copies; ++c) {
                    values.segment(c * di, di) = inner.eigenvalues * (m.scale * m.scale);
                    vectors.block(c * di, c * di, di, di) = inner_basis;
                }
                return sorted_spectrum(values, vectors);
            }
        },
        kind.model);
}

}  // namespace

SampleSource::SampleSource(std::shared_ptr<const SourceKind> kind, std::uint64_t seed)
    : kind_(std::move(kind)), dim_(model_dim(*kind_)), rng_(make_rng(seed)) {}

void SampleSource::draw(Eigen::Ref<Eigen::VectorXd> out) {
    if (out.size() != dim_) throw std::invalid_argument("SampleSource::draw: wrong output size");
    draw_model(*kind_, rng_, out);
}

Eigen::VectorXd SampleSource::draw() {
    Eigen::VectorXd x(dim_);
    draw_model(*kind_, rng_, x);
    return x;
}

Eigen::MatrixXd SampleSource::second_moment() const { return model_sigma(*kind_).covariance(); }

SampleSource discrete_sampler(const Spectrum& spec, std::uint64_t seed) {
    spec.validate();
    DiscreteEigen model{spec, {}};
    model.cumulative.resize(static_cast<std::size_t>(spec.dim()));
    double acc = 0.0;
    for (int i = 0; i < spec.dim(); ++i) {
        acc += spec.eigenvalues[i];
        model.cumulative[static_cast<std::size_t>(i)] = acc;
    }
    return SampleSource(std::make_shared<SourceKind>(SourceKind{std::move(model)}), seed);
}

SampleSource sign_sampler(const Spectrum& spec, std::uint64_t seed) {
    spec.validate();
    RandomSign model{spec, spec.eigenvalues.cwiseMax(0.0).cwiseSqrt()};
    return SampleSource(std::make_shared<SourceKind>(SourceKind{std::move(model)}), seed);
}

SampleSource lower_bound_source(const LowerBoundParams& params, std::vector<std::uint8_t> z,
                                std::uint64_t seed) {
    const double lam = params.lambda;
    const double delta = params.delta;
    if (params.k < 1) throw std::invalid_argument("lower_bound_source: k must be >= 1");
    if (static_cast<int>(z.size()) != params.k)
        throw std::invalid_argument("lower_bound_source: z must have length k");
    if (!(delta > 0.0 && delta <= lam / 2.0))
        throw std::invalid_argument("lower_bound_source: violated 0 < delta <= lambda/2 (delta=" +
                                    fmt(delta) + ", lambda/2=" + fmt(lam / 2.0) + ")");
    if (!(lam <= 1.0 / (4.0 * params.k)))
        throw std::invalid_argument("lower_bound_source: violated lambda <= 1/(4k) (lambda=" +
                                    fmt(lam) + ", 1/(4k)=" + fmt(1.0 / (4.0 * params.k)) + ")");
    const double t_min = params.c_min * lam / (delta * delta);
    if (!(static_cast<double>(params.horizon) >= t_min))
        throw std::invalid_argument("lower_bound_source: violated T >= c*lambda/delta^2 (T=" +
                                    std::to_string(params.horizon) + ", bound=" + fmt(t_min) + ")");
    if (!(params.c_eps > 0.0)) throw std::invalid_argument("lower_bound_source: c_eps must be > 0");
    for (auto bit : z)
        if (bit > 1) throw std::invalid_argument("lower_bound_source: z must be a bit vector");

    LowerBound model;
    model.params = params;
    model.beta = std::sqrt((1.0 + delta / lam) / 2.0);
    const double beta2 = model.beta * model.beta;
    model.eps = std::min(delta / lam,
                         std::sqrt(params.c_eps * beta2 / (2.0 * lam * static_cast<double>(params.horizon))));
    model.z = std::move(z);
    return SampleSource(std::make_shared<SourceKind>(SourceKind{std::move(model)}), seed);
}

SampleSource gapfree_pad(const SampleSource& source, int m, int k, std::uint64_t seed) {
    if (k < 1 || m < 0 || m % k != 0)
        throw std::invalid_argument("gapfree_pad: m must be a nonnegative multiple of k (m=" +
                                    std::to_string(m) + ", k=" + std::to_string(k) + ")");
    if (m == 0) return source;
    PaddedProduct model;
    model.inner = std::make_shared<SourceKind>(source.kind());
    model.copies = 1 + m / k;
    model.scale = std::sqrt(static_cast<double>(k) / (m + k));
    return SampleSource(std::make_shared<SourceKind>(SourceKind{std::move(model)}), seed);
}

Spectrum true_sigma(const SampleSource& source) { return model_sigma(source.kind()); }

TwoByTwoPair lemma_2x2(double beta, double eps) {
    const double lo = std::sqrt(2.0) / 2.0;
    const double hi = std::sqrt(3.0) / 2.0;
    if (!(beta > lo && beta <= hi + 1e-15))
        throw std::invalid_argument("lemma_2x2: beta must lie in (sqrt(2)/2, sqrt(3)/2], got " + fmt(beta));
    const double beta2 = beta * beta;
    if (!(eps > 0.0 && eps <= 2.0 * beta2 - 1.0 + 1e-15))
        throw std::invalid_argument("lemma_2x2: eps must lie in (0, 2 beta^2 - 1], got " + fmt(eps));

    const double c = std::sqrt(1.0 - beta2);
    const Eigen::Vector2d a(beta, c);
    const Eigen::Vector2d b(beta, -c);
    TwoByTwoPair out;
    out.a = 0.5 * a * a.transpose() + 0.5 * b * b.transpose();
    out.b = (0.5 + eps) * a * a.transpose() + (0.5 - eps) * b * b.transpose();
    out.a_values << beta2, 1.0 - beta2;
    out.a_vectors.setIdentity();

    const double off = 2.0 * eps * beta * c;
    const double alpha = (2.0 * beta2 - 1.0) / off;
    const double root = std::sqrt(alpha * alpha + 4.0);
    // Stable forms of (-alpha +- sqrt(alpha^2 + 4)) / 2.
    const double s1 = 2.0 / (alpha + root);
    const double s2 = -(alpha + root) / 2.0;
    out.roots << s1, s2;
    for (int i = 0; i < 2; ++i) {
        const double s = out.roots[i];
        out.b_values[i] = beta2 + off * s;
        out.b_vectors.col(i) = Eigen::Vector2d(1.0, s) / std::sqrt(1.0 + s * s);
    }
    return out;
}

// ---------------------------------------------------------------------------

void write_spectrum(std::ostream& os, const Spectrum& spec) {
    os << "# spectrum d=" << spec.dim() << '\n';
    os.precision(17);
    for (Eigen::Index i = 0; i < spec.eigenvalues.size(); ++i) os << spec.eigenvalues[i] << '\n';
    if (!spec.identity_basis()) {
        os << "basis\n";
        for (Eigen::Index i = 0; i < spec.basis.rows(); ++i) {
            for (Eigen::Index j = 0; j < spec.basis.cols(); ++j) {
                if (j) os << ' ';
                os << spec.basis(i, j);
            }
            os << '\n';
        }
    }
}

Spectrum read_spectrum(std::istream& is) {
    std::vector<double> values;
    std::vector<double> basis;
    bool in_basis = false;
    std::string line;
    while (std::getline(is, line)) {
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        if (line.compare(first, 5, "basis") == 0) {
            in_basis = true;
            continue;
        }
        std::istringstream ls(line);
        double v = 0.0;
        while (ls >> v) (in_basis ? basis : values).push_back(v);
        if (!ls.eof()) throw std::invalid_argument("read_spectrum: unparsable line: " + line);
    }
    Spectrum spec;
    spec.eigenvalues = Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
    const auto d = static_cast<Eigen::Index>(values.size());
    if (in_basis) {
        if (static_cast<Eigen::Index>(basis.size()) != d * d)
            throw std::invalid_argument("read_spectrum: basis must have d*d entries");
        spec.basis = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
            basis.data(), d, d);
    }
    spec.validate();
    return spec;
}

}  // namespace streampca
