#include "streampca/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace streampca {

namespace {

void check_rows(Eigen::Index a, Eigen::Index b, const char* what) {
    if (a != b) throw std::invalid_argument(std::string(what) + ": dimension mismatch");
}

// Solves Y A = B for Y, i.e. Y = B A^{-1}, returning false when A is singular
// to working precision.
bool right_solve(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, Eigen::MatrixXd& y) {
    if (a.rows() == 0) {
        y.resize(b.rows(), 0);
        return true;
    }
    const Eigen::PartialPivLU<Eigen::MatrixXd> lu(a.transpose());
    const double rcond = lu.rcond();
    if (!(rcond > 1.0 / kSingularCond)) return false;
    y = lu.solve(b.transpose()).transpose();
    return y.allFinite();
}

double ratio_from_blocks(const Eigen::MatrixXd& xq, const Eigen::MatrixXd& vq) {
    if (xq.rows() == 0) {
        // Empty X: the ratio is zero unless V^T Q is singular.
        Eigen::MatrixXd y;
        return right_solve(vq, Eigen::MatrixXd::Zero(0, vq.cols()), y) ? 0.0 : kInfinity;
    }
    Eigen::MatrixXd y;
    if (!right_solve(vq, xq, y)) return kInfinity;
    return y.norm();
}

// Largest eigenvalue of a symmetric PSD matrix by power iteration, accelerated
// by a few rounds of squaring.
double top_eigenvalue_psd(const Eigen::MatrixXd& g) {
    const Eigen::Index n = g.rows();
    if (n == 0) return 0.0;
    const double scale = g.trace();
    if (!(scale > 0.0)) return 0.0;

    Eigen::MatrixXd power = g / scale;
    for (int i = 0; i < 4; ++i) {
        power = power * power;
        const double tr = power.trace();
        if (!(tr > 0.0)) break;
        power /= tr;
    }

    Eigen::Index best = 0;
    g.colwise().norm().maxCoeff(&best);
    Eigen::VectorXd v = g.col(best) + Eigen::VectorXd::Constant(n, 1e-3 * g.col(best).norm());
    v.normalize();
    double value = v.dot(g * v);
    for (int it = 0; it < 10000; ++it) {
        Eigen::VectorXd next = power * v;
        const double nrm = next.norm();
        if (!(nrm > 0.0)) break;
        next /= nrm;
        const Eigen::VectorXd gv = g * next;
        const double next_value = next.dot(gv);
        const double residual = (gv - next_value * next).norm();
        v = std::move(next);
        const bool settled = std::abs(next_value - value) <= 1e-15 * scale;
        value = next_value;
        if (residual <= 1e-10 * scale || settled) break;
    }
    return value;
}

}  // namespace

EigenPartition partition(const Spectrum& spec, int k, double rho) {
    const int d = spec.dim();
    if (k < 1 || k > d)
        throw std::invalid_argument("partition: need 1 <= k <= d (k=" + std::to_string(k) +
                                    ", d=" + std::to_string(d) + ")");
    if (!(rho > 0.0 && rho < 1.0)) throw std::invalid_argument("partition: rho must lie in (0, 1)");
    const ProblemSpec ps = problem_spec(spec, k, rho);
    const Eigen::MatrixXd u = spec.basis_matrix();
    EigenPartition part;
    part.k = k;
    part.m = ps.m;
    part.rho = rho;
    part.v = u.leftCols(k);
    part.z = u.rightCols(d - k);
    part.w = u.rightCols(d - k - ps.m);
    return part;
}

double frob_corr(const Eigen::Ref<const Eigen::MatrixXd>& q, const Eigen::Ref<const Eigen::MatrixXd>& x) {
    if (x.cols() == 0) return 0.0;
    check_rows(q.rows(), x.rows(), "frob_corr");
    return (x.transpose() * q).squaredNorm();
}

double spectral_corr(const Eigen::Ref<const Eigen::MatrixXd>& q, const Eigen::Ref<const Eigen::MatrixXd>& x) {
    if (x.cols() == 0 || q.cols() == 0) return 0.0;
    check_rows(q.rows(), x.rows(), "spectral_corr");
    const Eigen::MatrixXd m = x.transpose() * q;
    const Eigen::MatrixXd g = m.rows() < m.cols() ? Eigen::MatrixXd(m * m.transpose())
                                                  : Eigen::MatrixXd(m.transpose() * m);
    return top_eigenvalue_psd(g);
}

Eigen::VectorXd rayleigh_quotients(const Eigen::Ref<const Eigen::MatrixXd>& q, const Spectrum& spec) {
    check_rows(q.rows(), spec.dim(), "rayleigh_quotients");
    const Eigen::MatrixXd gram = q.transpose() * q;
    const double dev = (gram - Eigen::MatrixXd::Identity(q.cols(), q.cols())).cwiseAbs().maxCoeff();
    if (q.cols() > 0 && dev > 1e-6)
        throw std::invalid_argument("rayleigh_quotients: Q is not column-orthonormal");
    const Eigen::MatrixXd c = spec.identity_basis() ? Eigen::MatrixXd(q) : Eigen::MatrixXd(spec.basis.transpose() * q);
    return c.array().square().matrix().transpose() * spec.eigenvalues;
}

double analysis_ratio(const Eigen::Ref<const Eigen::MatrixXd>& q, const Eigen::Ref<const Eigen::MatrixXd>& x,
                      const Eigen::Ref<const Eigen::MatrixXd>& v) {
    if (v.cols() != q.cols()) throw std::invalid_argument("analysis_ratio: V and Q widths differ");
    check_rows(q.rows(), v.rows(), "analysis_ratio");
    const Eigen::MatrixXd vq = v.transpose() * q;
    if (x.cols() == 0) return ratio_from_blocks(Eigen::MatrixXd(0, q.cols()), vq);
    check_rows(q.rows(), x.rows(), "analysis_ratio");
    return ratio_from_blocks(x.transpose() * q, vq);
}

double sample_alignment(const Eigen::Ref<const Eigen::MatrixXd>& q_prev, const Eigen::Ref<const Eigen::MatrixXd>& v,
                        const Eigen::Ref<const Eigen::VectorXd>& x) {
    if (v.cols() != q_prev.cols()) throw std::invalid_argument("sample_alignment: V and Q widths differ");
    check_rows(q_prev.rows(), v.rows(), "sample_alignment");
    check_rows(q_prev.rows(), x.size(), "sample_alignment");
    return ratio_from_blocks(x.transpose() * q_prev, v.transpose() * q_prev);
}

InitDiagnostics init_diagnostics(const Eigen::Ref<const Eigen::MatrixXd>& q0, const EigenPartition& part) {
    if (q0.cols() != part.k) throw std::invalid_argument("init_diagnostics: Q0 width must equal k");
    const Eigen::Index d = q0.rows();
    check_rows(d, part.v.rows(), "init_diagnostics");
    InitDiagnostics out;
    out.per_vec = Eigen::VectorXd::Zero(d);
    Eigen::MatrixXd ratio;  // Z^T Q0 (V^T Q0)^{-1}, (d-k) x k
    if (!right_solve(part.v.transpose() * q0, part.z.transpose() * q0, ratio)) {
        out.xi_z = kInfinity;
        out.per_vec.setConstant(kInfinity);
        return out;
    }
    out.xi_z = ratio.squaredNorm();
    // nu_j^T Z Z^T L = (Z^T nu_j)^T (Z^T L); Z^T nu_j is e_{j-k} for j > k and 0 otherwise.
    for (Eigen::Index j = 0; j < part.z.cols(); ++j) out.per_vec[part.k + j] = ratio.row(j).norm();
    return out;
}

// ---------------------------------------------------------------------------

MetricRecorder::MetricRecorder(Spectrum spec, int k, double rho)
    : spec_(std::move(spec)), part_(streampca::partition(spec_, k, rho)) {}

Eigen::MatrixXd MetricRecorder::coords(const Eigen::Ref<const Eigen::MatrixXd>& q) const {
    if (spec_.identity_basis()) return q;
    return spec_.basis.transpose() * q;
}

MetricRecord MetricRecorder::measure(std::int64_t t, const Eigen::Ref<const Eigen::MatrixXd>& q,
                                     const Eigen::MatrixXd* q_prev, const Eigen::VectorXd* x) const {
    const int d = spec_.dim();
    const int k = part_.k;
    const int w = static_cast<int>(part_.w.cols());
    check_rows(q.rows(), d, "MetricRecorder::measure");
    if (q.cols() != k) throw std::invalid_argument("MetricRecorder::measure: Q must have k columns");

    const Eigen::MatrixXd c = coords(q);
    const Eigen::MatrixXd vq = c.topRows(k);
    const Eigen::MatrixXd zq = c.bottomRows(d - k);
    const Eigen::MatrixXd wq = c.bottomRows(w);

    MetricRecord r;
    r.t = t;
    r.frob_z = zq.squaredNorm();
    r.frob_w = wq.squaredNorm();
    r.spec_w = w == 0 ? 0.0 : top_eigenvalue_psd(wq.rows() < k ? Eigen::MatrixXd(wq * wq.transpose())
                                                                : Eigen::MatrixXd(wq.transpose() * wq));
    r.s_t = ratio_from_blocks(zq, vq);
    r.s_prime_t = ratio_from_blocks(wq, vq);

    r.rayleigh = c.array().square().matrix().transpose() * spec_.eigenvalues;
    r.rayleigh_min_slack = std::numeric_limits<double>::quiet_NaN();
    for (int i = 0; i < k; ++i) {
        if (q.col(i).squaredNorm() == 0.0) {
            r.rayleigh[i] = std::numeric_limits<double>::quiet_NaN();
            continue;
        }
        ++r.active_columns;
        const double slack = r.rayleigh[i] - spec_.eigenvalues[i];
        if (std::isnan(r.rayleigh_min_slack) || slack < r.rayleigh_min_slack) r.rayleigh_min_slack = slack;
    }

    if (q_prev != nullptr && x != nullptr) {
        const Eigen::MatrixXd cp = coords(*q_prev);
        const Eigen::MatrixXd xq = x->transpose() * (*q_prev);
        r.a_t = ratio_from_blocks(xq, cp.topRows(k));
    }
    return r;
}

}  // namespace streampca
