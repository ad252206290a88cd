#pragma once

#include <cstdint>
#include <optional>
#include <vector>

namespace streampca {

/// Constant factors of the phase lengths and step sizes.
struct ScheduleConstants {
    double c_t0 = 1.0;
    double c_t1 = 1.0;
    double c_eta = 1.0;
    /// Multiplier L applied to every phase length. When unset it resolves to
    /// max(1, ln(d / (p * scale))) with scale = gap or rho.
    std::optional<double> log_multiplier;
    /// Extra factor on the warm-up rate (t <= T0), standing in for the log of
    /// the initial analysis ratio. When unset it resolves to max(1, ln Xi) with
    /// Xi = (d k / p^2) ln(d / p).
    std::optional<double> warm_log;
    /// When false the constant-rate plateau of length T1 is dropped and the
    /// harmonic phase starts right after T0 at the plateau's final rate.
    bool keep_plateau = true;
    /// Oja++ only: use rate c_eta / (rho T0) throughout all insertion epochs.
    bool collapse_epoch_rates = false;
    /// Oja++ only: epoch length in units of T0.
    std::int64_t epoch_multiplier = 11;
};

enum class RateKind { constant, harmonic };

/// constant: eta = c. harmonic: eta = c / (t - offset).
struct RateRule {
    RateKind kind = RateKind::constant;
    double c = 0.0;
    std::int64_t offset = 0;

    double at(std::int64_t t) const {
        return kind == RateKind::constant ? c : c / static_cast<double>(t - offset);
    }
};

/// Inclusive step range [start, end] sharing one rate rule.
struct Segment {
    std::int64_t start = 1;
    std::int64_t end = 0;
    RateRule rule;
};

struct Schedule {
    std::vector<Segment> segments;  ///< contiguous, covering [1, total]
    std::int64_t t0 = 0;
    std::int64_t t1 = 0;
    std::int64_t total = 0;
    double scale = 0.0;           ///< gap (gap-dependent) or rho (gap-free)
    double log_multiplier = 1.0;  ///< resolved L
    double warm_log = 1.0;        ///< resolved warm-up rate factor
    ScheduleConstants constants;

    double eta(std::int64_t t) const;
    /// Steps at which the rate rule changes (segment starts after the first).
    std::vector<std::int64_t> boundaries() const;
};

/// Learning rate at step t (1-based). Throws std::out_of_range outside [1, T].
double eta_at(const Schedule& schedule, std::int64_t t);

/// Sum of eta_t over the inclusive range [a, b].
double integrate_eta(const Schedule& schedule, std::int64_t a, std::int64_t b);

/// Re-targets the run length. Segments past `total` are cut; the last segment
/// is extended when `total` exceeds the current length.
Schedule with_total(Schedule schedule, std::int64_t total);

struct GapDependentParams {
    int d = 1;
    int k = 1;
    double lambda_sum = 0.0;  ///< Lambda = lambda_1 + ... + lambda_k
    double gap = 0.0;
    double epsilon = 1.0;
    double p = 0.5;
};

struct GapFreeParams {
    int d = 1;
    int k = 1;
    double lambda1 = 0.0;  ///< lambda_1 + ... + lambda_k
    double lambda2 = 0.0;  ///< lambda_{k+1} + ... + lambda_{k+m}
    double rho = 0.0;
    double epsilon = 1.0;
    double p = 0.5;
};

/// T0 = ceil(C_T0 k Lambda L / (gap^2 p^2)), T1 = ceil(C_T1 Lambda L / gap^2),
/// final phase ceil(C_T1 Lambda L / (gap^2 eps)). Rates: C_eta W/(gap T0) up to T0
/// (W = resolved warm_log),
/// C_eta/(gap T1) up to T0 + T1, then C_eta/(gap (t - T0)).
Schedule gap_dep_schedule(const GapDependentParams& params, const ScheduleConstants& constants = {});

/// Same shape with rho in place of gap and
/// T0 = ceil(C_T0 k min{1, Lambda1 + k Lambda2 / rho^2} L / (rho^2 p^2)),
/// T1 = ceil(C_T1 (Lambda1 + Lambda2) L / rho^2).
Schedule gap_free_schedule(const GapFreeParams& params, const ScheduleConstants& constants = {});

struct Epoch {
    std::int64_t length = 0;
    int new_columns = 0;
};

struct OjaPPPlan {
    std::vector<Epoch> epochs;
    Schedule schedule;
};

/// Number of insertion epochs: ceil(log2(k + 1)).
int ojapp_epoch_count(int k);

/// Columns inserted per epoch: floor(k/2^(i-1)) - floor(k/2^i), last epoch takes the rest.
std::vector<int> ojapp_column_counts(int k);

/// Oja++ plan. T0 = ceil(C_T0 (Lambda1 + Lambda2/p^2) L / (rho^2 p^2)),
/// T1 = ceil(C_T1 (Lambda1 + Lambda2) L / rho^2); epochs 1..s-1 last E*T0 steps
/// (E = epoch_multiplier), the last epoch runs to the end.
OjaPPPlan ojapp_plan(const GapFreeParams& params, const ScheduleConstants& constants = {});

/// Re-targets an Oja++ plan. Epochs past `total` shrink, possibly to zero
/// length; every epoch is kept so all k columns still get inserted.
OjaPPPlan with_total(OjaPPPlan plan, std::int64_t total);

}  // namespace streampca
