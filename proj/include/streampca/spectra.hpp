#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "streampca/rng.hpp"

namespace streampca {

inline constexpr double kTraceTol = 1e-12;
inline constexpr double kBasisTol = 1e-10;

/// Ground-truth covariance: eigenvalues in nonincreasing order plus an
/// orthonormal basis whose columns are the matching eigenvectors. An empty
/// basis stands for the identity.
struct Spectrum {
    Eigen::VectorXd eigenvalues;
    Eigen::MatrixXd basis;

    int dim() const { return static_cast<int>(eigenvalues.size()); }
    bool identity_basis() const { return basis.size() == 0; }
    double trace() const { return eigenvalues.sum(); }

    /// The basis as an explicit d x d matrix.
    Eigen::MatrixXd basis_matrix() const;
    /// Dense d x d covariance U diag(lambda) U^T.
    Eigen::MatrixXd covariance() const;

    /// Throws std::invalid_argument if any invariant is violated.
    void validate() const;
};

// Spectrum recipes. Every recipe produces an identity-basis spectrum; rotate
// with `with_basis` when a generic orientation is wanted.

/// Top k eigenvalues equal lambda_top, the rest equal lambda_top - gap. Without
/// lambda_top the largest value meeting the trace budget is used.
struct FlatGap {
    double gap = 0.0;
    std::optional<double> lambda_top;
};

/// lambda_i = lambda_1 * ratio^(i-1); lambda_1 defaults to the value giving trace 1.
struct Geometric {
    double ratio = 0.5;
    std::optional<double> lambda_top;
};

/// k eigenvalues at lambda_top, m more spread evenly inside
/// (lambda_top - rho, lambda_top), and the remainder at `tail` (default: the
/// trace-filling value, capped at lambda_top - rho).
struct ClusteredGapFree {
    double lambda_top = 0.0;
    double rho = 0.0;
    int m = 0;
    std::optional<double> tail;
};

struct ExplicitList {
    std::vector<double> values;
};

using SpectrumRecipe = std::variant<FlatGap, Geometric, ClusteredGapFree, ExplicitList>;

Spectrum make_spectrum(const SpectrumRecipe& recipe, int d, int k);

/// Returns `spec` re-expressed in the given orthonormal basis.
Spectrum with_basis(Spectrum spec, Eigen::MatrixXd basis);

/// Haar-distributed orthonormal d x d matrix: Gram-Schmidt of i.i.d. N(0,1).
Eigen::MatrixXd haar_basis(int d, std::uint64_t seed);

/// d, k, m, gap and rho of a spectrum under a chosen virtual gap rho.
struct ProblemSpec {
    int d = 0;
    int k = 0;
    int m = 0;
    double gap = 0.0;
    double rho = 0.0;
};

/// Counts m, the number of eigenvalues in (lambda_k - rho, lambda_k] past index k.
ProblemSpec problem_spec(const Spectrum& spec, int k, double rho);

// ---------------------------------------------------------------------------
// Sample sources
// ---------------------------------------------------------------------------

/// Parameters of the block-structured hard distribution D_z.
struct LowerBoundParams {
    int k = 1;
    double lambda = 0.0;
    double delta = 0.0;
    std::int64_t horizon = 0;  ///< T, the number of samples the experiment will draw
    double c_min = 4.0;        ///< T must be at least c_min * lambda / delta^2
    double c_eps = 1.0;        ///< eps = min(delta/lambda, sqrt(c_eps * beta^2 / (2 lambda T)))
};

struct SourceKind;

struct DiscreteEigen {
    Spectrum spectrum;
    std::vector<double> cumulative;  ///< running sums of eigenvalues
};

struct LowerBound {
    LowerBoundParams params;
    double beta = 0.0;
    double eps = 0.0;
    std::vector<std::uint8_t> z;
};

/// x = sum_i s_i sqrt(lambda_i) nu_i with independent uniform signs s_i. Same
/// second moment as DiscreteEigen, but every sample carries cross-direction noise.
struct RandomSign {
    Spectrum spectrum;
    Eigen::VectorXd root;  ///< sqrt of the eigenvalues
};

/// Concatenation of `copies` independent draws of `inner`, each with an
/// independent random sign, scaled by `scale`.
struct PaddedProduct {
    std::shared_ptr<const SourceKind> inner;
    int copies = 1;
    double scale = 1.0;
};

struct SourceKind {
    std::variant<DiscreteEigen, RandomSign, LowerBound, PaddedProduct> model;
};

/// A seeded distribution over vectors with norm at most one and exactly known
/// second moment. Copies share the immutable model and own their generator.
class SampleSource {
public:
    SampleSource(std::shared_ptr<const SourceKind> kind, std::uint64_t seed);

    int dim() const { return dim_; }
    const SourceKind& kind() const { return *kind_; }

    /// Writes one sample into `out` (which must have size dim()).
    void draw(Eigen::Ref<Eigen::VectorXd> out);
    Eigen::VectorXd draw();

    /// An independent copy of this distribution with a fresh generator.
    SampleSource reseeded(std::uint64_t seed) const { return SampleSource(kind_, seed); }

    /// Exact E[x x^T].
    Eigen::MatrixXd second_moment() const;

private:
    std::shared_ptr<const SourceKind> kind_;
    int dim_ = 0;
    Rng rng_;
};

/// Emits nu_i with probability lambda_i and the zero vector otherwise.
SampleSource discrete_sampler(const Spectrum& spec, std::uint64_t seed = 0);

/// Random-sign combination of all eigenvectors; ||x|| = sqrt(Tr Sigma) <= 1.
SampleSource sign_sampler(const Spectrum& spec, std::uint64_t seed = 0);

/// The four-step block sampler: zero with probability 1 - k lambda / beta^2,
/// otherwise a uniformly chosen block receives a or b with bias eps when z_i = 1.
SampleSource lower_bound_source(const LowerBoundParams& params, std::vector<std::uint8_t> z,
                                std::uint64_t seed = 0);

/// 1 + m/k independent copies, concatenated and scaled by sqrt(k / (m + k)).
SampleSource gapfree_pad(const SampleSource& source, int m, int k, std::uint64_t seed = 0);

/// Exact eigendecomposition of E[x x^T], sorted descending with ties broken by
/// construction order.
Spectrum true_sigma(const SampleSource& source);

/// Closed-form eigenstructure of the pair of 2 x 2 moment matrices
/// A = (aa^T + bb^T)/2 and B = (1/2 + eps) aa^T + (1/2 - eps) bb^T with
/// a = (beta, sqrt(1 - beta^2)) and b = (beta, -sqrt(1 - beta^2)).
struct TwoByTwoPair {
    Eigen::Matrix2d a;
    Eigen::Matrix2d b;
    Eigen::Vector2d a_values;   ///< descending
    Eigen::Matrix2d a_vectors;  ///< columns, unit norm
    Eigen::Vector2d b_values;   ///< descending: beta^2 + 2 eps beta sqrt(1-beta^2) s_i
    Eigen::Matrix2d b_vectors;  ///< columns (1, s_i) / sqrt(1 + s_i^2)
    Eigen::Vector2d roots;      ///< s_1 >= s_2, roots of s^2 + alpha s - 1 = 0
};

/// Requires beta in (sqrt(2)/2, sqrt(3)/2] and 0 < eps <= 2 beta^2 - 1.
TwoByTwoPair lemma_2x2(double beta, double eps);

// ---------------------------------------------------------------------------
// Plain-text spectrum format: one eigenvalue per line (descending), then an
// optional line "basis" followed by d rows of d whitespace-separated floats.
// Lines starting with '#' are comments.
// ---------------------------------------------------------------------------

void write_spectrum(std::ostream& os, const Spectrum& spec);
Spectrum read_spectrum(std::istream& is);

}  // namespace streampca
