#include "streampca/oja.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace streampca {

SketchState::SketchState(Eigen::MatrixXd q0) : q(std::move(q0)) { refresh_active(); }

int SketchState::active_columns() const { return num_active; }

void SketchState::refresh_active() {
    active.assign(static_cast<std::size_t>(q.cols()), 0);
    for (Eigen::Index j = 0; j < q.cols(); ++j)
        active[static_cast<std::size_t>(j)] = q.col(j).squaredNorm() > 0.0 ? 1 : 0;
    num_active = static_cast<int>(std::count(active.begin(), active.end(), std::uint8_t{1}));
}

Eigen::MatrixXd init_gaussian(int d, int k, std::uint64_t seed) {
    if (d < 1 || k < 1 || k > d) throw std::invalid_argument("init_gaussian: need 1 <= k <= d");
    Rng rng = make_rng(seed);
    return gaussian_matrix(d, k, rng);
}

void apply_oja_step(SketchState& state, const Eigen::Ref<const Eigen::VectorXd>& x, double eta) {
    if (x.size() != state.q.rows()) throw std::invalid_argument("oja_step: sample dimension mismatch");
    if (!std::isfinite(eta) || eta < 0.0) throw std::invalid_argument("oja_step: eta must be finite and >= 0");
    if (!x.allFinite()) throw std::invalid_argument("oja_step: sample has non-finite entries");
    for (Eigen::Index j = 0; j < state.q.cols(); ++j) state.q.col(j) += (eta * x.dot(state.q.col(j))) * x;
    const Eigen::Index kept = qr_orthonormalize_inplace(state.q);
    // A column can only drop out, never appear, so an unchanged count means
    // an unchanged mask.
    if (kept != state.active_columns()) state.refresh_active();
    ++state.t;
}

SketchState oja_step(SketchState state, const Eigen::Ref<const Eigen::VectorXd>& x, double eta) {
    apply_oja_step(state, x, eta);
    return state;
}

RunHooks recorder_hooks(const MetricRecorder& recorder, const Schedule& schedule, std::int64_t stride) {
    RunHooks hooks;
    hooks.stride = stride;
    hooks.extra_times = schedule.boundaries();
    hooks.measure = [&recorder](const RecordContext& ctx) {
        return recorder.measure(ctx.t, ctx.q, ctx.q_prev, ctx.x);
    };
    return hooks;
}

namespace {

// Walks the record times in increasing order.
class RecordClock {
public:
    RecordClock(const RunHooks& hooks, std::int64_t total) : total_(total), extra_(hooks.extra_times) {
        stride_ = hooks.stride > 0 ? hooks.stride : std::max<std::int64_t>(1, (total + 499) / 500);
        std::sort(extra_.begin(), extra_.end());
    }

    bool due(std::int64_t t) {
        while (next_extra_ < extra_.size() && extra_[next_extra_] < t) ++next_extra_;
        const bool hit_extra = next_extra_ < extra_.size() && extra_[next_extra_] == t;
        return t % stride_ == 0 || t == total_ || hit_extra;
    }

private:
    std::int64_t total_;
    std::int64_t stride_ = 1;
    std::vector<std::int64_t> extra_;
    std::size_t next_extra_ = 0;
};

MetricRecord take_record(const RunHooks& hooks, const RecordContext& ctx) {
    if (hooks.measure) return hooks.measure(ctx);
    MetricRecord r;
    r.t = ctx.t;
    return r;
}

// Shared stepping loop over [first, last] for both runners. Returns false when
// the stop hook fired.
bool run_steps(SampleSource& source, const Schedule& schedule, SketchState& state, std::int64_t first,
               std::int64_t last, const RunHooks& hooks, RecordClock& clock, Trajectory& out) {
    Eigen::VectorXd x(source.dim());
    Eigen::MatrixXd q_prev;
    for (std::int64_t t = first; t <= last; ++t) {
        source.draw(x);
        const bool record = clock.due(t);
        if (record) q_prev = state.q;
        apply_oja_step(state, x, eta_at(schedule, t));
        if (!record) continue;
        out.records.push_back(take_record(hooks, RecordContext{t, state.q, &q_prev, &x}));
        if (hooks.stop && hooks.stop(out.records.back(), state)) return false;
    }
    return true;
}

void record_initial(const RunHooks& hooks, const SketchState& state, Trajectory& out) {
    const Eigen::MatrixXd q0 = qr_orthonormalize(state.q);
    out.records.push_back(take_record(hooks, RecordContext{0, q0, nullptr, nullptr}));
}

}  // namespace

Trajectory run_oja(SampleSource& source, const Schedule& schedule, Eigen::MatrixXd q0, const RunHooks& hooks) {
    if (q0.rows() != source.dim()) throw std::invalid_argument("run_oja: Q0 rows must equal the sample dimension");
    Trajectory out;
    SketchState state(std::move(q0));
    RecordClock clock(hooks, schedule.total);
    record_initial(hooks, state, out);
    if (!(hooks.stop && hooks.stop(out.records.back(), state)))
        out.stopped_early = !run_steps(source, schedule, state, 1, schedule.total, hooks, clock, out);
    else
        out.stopped_early = true;
    out.final_state = std::move(state);
    return out;
}

Trajectory run_ojapp(SampleSource& source, const OjaPPPlan& plan, std::span<const std::uint64_t> epoch_seeds,
                     const RunHooks& hooks) {
    if (plan.epochs.empty()) throw std::invalid_argument("run_ojapp: plan has no epochs");
    if (epoch_seeds.size() < plan.epochs.size())
        throw std::invalid_argument("run_ojapp: need one seed per epoch");
    int k = 0;
    std::int64_t length = 0;
    for (const auto& e : plan.epochs) {
        if (e.new_columns < 0 || e.length < 0) throw std::invalid_argument("run_ojapp: malformed epoch");
        k += e.new_columns;
        length += e.length;
    }
    if (length != plan.schedule.total)
        throw std::invalid_argument("run_ojapp: epoch lengths do not add up to the schedule length");
    const int d = source.dim();
    if (k < 1 || k > d) throw std::invalid_argument("run_ojapp: need 1 <= k <= d");

    Trajectory out;
    SketchState state(Eigen::MatrixXd::Zero(d, k));
    RecordClock clock(hooks, plan.schedule.total);
    std::int64_t t = 0;
    int filled = 0;
    for (std::size_t i = 0; i < plan.epochs.size(); ++i) {
        const Epoch& e = plan.epochs[i];
        if (e.new_columns > 0) {
            state.q.middleCols(filled, e.new_columns) = init_gaussian(d, e.new_columns, epoch_seeds[i]);
            filled += e.new_columns;
            state.refresh_active();
        }
        if (i == 0) {
            record_initial(hooks, state, out);
            if (hooks.stop && hooks.stop(out.records.back(), state)) {
                out.stopped_early = true;
                break;
            }
        }
        if (!run_steps(source, plan.schedule, state, t + 1, t + e.length, hooks, clock, out)) {
            out.stopped_early = true;
            break;
        }
        t += e.length;
    }
    out.final_state = std::move(state);
    return out;
}

std::vector<int> random_column_subset(int total, int k, std::uint64_t seed) {
    if (k < 0 || k > total)
        throw std::invalid_argument("pick_random_columns: k=" + std::to_string(k) + " exceeds column count " +
                                    std::to_string(total));
    std::vector<int> all(static_cast<std::size_t>(total));
    std::iota(all.begin(), all.end(), 0);
    std::vector<int> chosen;
    chosen.reserve(static_cast<std::size_t>(k));
    Rng rng = make_rng(seed);
    // Selection sampling: uniform over k-subsets and order preserving.
    int needed = k;
    for (int i = 0; i < total && needed > 0; ++i) {
        const int remaining = total - i;
        if (uniform01(rng) * remaining < needed) {
            chosen.push_back(i);
            --needed;
        }
    }
    return chosen;
}

Eigen::MatrixXd pick_random_columns(const Eigen::Ref<const Eigen::MatrixXd>& q, int k, std::uint64_t seed) {
    const std::vector<int> cols = random_column_subset(static_cast<int>(q.cols()), k, seed);
    Eigen::MatrixXd out(q.rows(), k);
    for (int j = 0; j < k; ++j) out.col(j) = q.col(cols[static_cast<std::size_t>(j)]);
    return out;
}

void write_matrix(std::ostream& os, const Eigen::Ref<const Eigen::MatrixXd>& m) {
    os << "# " << m.rows() << ' ' << m.cols() << '\n';
    os.precision(17);
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            if (j) os << ' ';
            os << m(i, j);
        }
        os << '\n';
    }
}

Eigen::MatrixXd read_matrix(std::istream& is) {
    std::string hash;
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;
    if (!(is >> hash >> rows >> cols) || hash != "#" || rows < 0 || cols < 0)
        throw std::invalid_argument("read_matrix: expected '# rows cols' header");
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j)
            if (!(is >> m(i, j))) throw std::invalid_argument("read_matrix: truncated data");
    return m;
}

}  // namespace streampca
