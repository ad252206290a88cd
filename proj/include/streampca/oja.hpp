#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "streampca/metrics.hpp"
#include "streampca/qr.hpp"
#include "streampca/schedules.hpp"
#include "streampca/spectra.hpp"

namespace streampca {

/// The d x k' sketch. Columns are either orthonormal or exactly zero; zero
/// columns stand for Oja++ slots that have not been filled yet.
struct SketchState {
    Eigen::MatrixXd q;
    std::int64_t t = 0;
    std::vector<std::uint8_t> active;
    int num_active = 0;

    SketchState() = default;
    explicit SketchState(Eigen::MatrixXd q0);

    int active_columns() const;
    void refresh_active();
};

/// d x k matrix of i.i.d. N(0, 1) entries, deterministic in `seed`.
Eigen::MatrixXd init_gaussian(int d, int k, std::uint64_t seed);

/// Q <- QR(Q + eta x (x^T Q)), t <- t + 1. Throws on non-finite input.
void apply_oja_step(SketchState& state, const Eigen::Ref<const Eigen::VectorXd>& x, double eta);
SketchState oja_step(SketchState state, const Eigen::Ref<const Eigen::VectorXd>& x, double eta);

/// What the runners hand to a measurement callback.
struct RecordContext {
    std::int64_t t;
    const Eigen::MatrixXd& q;        ///< state after step t (orthonormalized at t = 0)
    const Eigen::MatrixXd* q_prev;   ///< state before step t, null at t = 0
    const Eigen::VectorXd* x;        ///< sample of step t, null at t = 0
};

struct RunHooks {
    /// Record every `stride` steps; 0 means ceil(T / 500).
    std::int64_t stride = 0;
    /// Additional steps to record (phase boundaries and the like).
    std::vector<std::int64_t> extra_times;
    /// Produces the record for a step. Without it records carry only t.
    std::function<MetricRecord(const RecordContext&)> measure;
    /// Optional early exit, checked after each record.
    std::function<bool(const MetricRecord&, const SketchState&)> stop;
};

/// Hooks recording `recorder` metrics at the default stride plus the
/// schedule's phase boundaries.
RunHooks recorder_hooks(const MetricRecorder& recorder, const Schedule& schedule, std::int64_t stride = 0);

struct Trajectory {
    std::vector<MetricRecord> records;
    SketchState final_state;
    bool stopped_early = false;
};

/// Oja's algorithm for t = 1..T with eta_t from `schedule`, starting from Q0.
Trajectory run_oja(SampleSource& source, const Schedule& schedule, Eigen::MatrixXd q0, const RunHooks& hooks = {});

/// Oja++: epoch i starts by filling the next r_i zero columns with Gaussian
/// columns drawn from `epoch_seeds[i]`, then runs its steps.
Trajectory run_ojapp(SampleSource& source, const OjaPPPlan& plan, std::span<const std::uint64_t> epoch_seeds,
                     const RunHooks& hooks = {});

/// A uniformly random k-subset of the columns of Q, in original order.
Eigen::MatrixXd pick_random_columns(const Eigen::Ref<const Eigen::MatrixXd>& q, int k, std::uint64_t seed);
/// The column indices `pick_random_columns` would keep.
std::vector<int> random_column_subset(int total, int k, std::uint64_t seed);

/// Row-major text dump with a "# rows cols" header line.
void write_matrix(std::ostream& os, const Eigen::Ref<const Eigen::MatrixXd>& m);
Eigen::MatrixXd read_matrix(std::istream& is);

}  // namespace streampca
