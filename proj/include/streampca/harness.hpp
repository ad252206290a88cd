#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "streampca/metrics.hpp"
#include "streampca/oja.hpp"
#include "streampca/schedules.hpp"
#include "streampca/spectra.hpp"

namespace streampca {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr int kCsvSchemaVersion = 1;

/// Bad configuration: unknown key, malformed value, or an invalid combination.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct ExperimentConfig {
    // problem
    int d = 100;
    int k = 5;
    std::string spectrum = "flat-gap";  ///< flat-gap | geometric | clustered | explicit | file
    std::optional<double> gap;
    std::optional<double> rho;
    std::optional<double> lambda_top;
    double ratio = 0.5;
    int cluster_m = 0;
    std::optional<double> tail;
    std::vector<double> values;
    std::string spectrum_file;
    std::string basis = "identity";  ///< identity | haar
    std::uint64_t basis_seed = 0;
    std::string source = "discrete";  ///< discrete | sign
    int pad_m = 0;

    // algorithm
    std::string algorithm = "oja";  ///< oja | ojapp | offline | oja-tradeoff
    int k_prime = 0;

    // schedule
    std::string schedule = "auto";  ///< auto | gap-dependent | gap-free
    double p = 0.5;
    double epsilon = 1.0;
    ScheduleConstants constants;
    std::int64_t horizon = -1;  ///< T override; negative keeps the schedule's own T

    // run
    int trials = 1;
    std::uint64_t seed = 1;
    std::int64_t stride = 0;
    int jobs = 1;
    std::string out = "run";

    // lowerbound
    int lb_k = 2;
    double lb_lambda = 0.1;
    double lb_delta = 0.05;
    std::vector<std::int64_t> lb_horizons{2000, 8000, 32000};
    double lb_c_min = 4.0;
    double lb_c_eps = 1.0;
    bool lb_oja = false;

    // diagnose
    int diag_n = 1000;
    double q = 0.05;

    /// Sets one key from its text value. Throws ConfigError.
    void set(const std::string& key, const std::string& value);
    /// Applies "key=value".
    void apply_override(const std::string& assignment);
    /// Cross-field checks (trials >= 1, known enum values, ...).
    void validate() const;
    /// Every key with its current value, in a fixed order.
    std::vector<std::pair<std::string, std::string>> entries() const;
};

/// Flat `key = value` file; '#' starts a comment; strings may be quoted; lists
/// are written `[a, b, c]` or `a, b, c`.
ExperimentConfig parse_config(std::istream& is);
ExperimentConfig load_config(const std::string& path);

/// Everything a trial needs, resolved from a config.
struct Problem {
    Spectrum sigma;  ///< exact second moment of `source`
    SampleSource source;
    int k = 1;
    double rho = 0.0;
    Schedule schedule;
    std::optional<OjaPPPlan> plan;  ///< set for ojapp
    int sketch_width = 1;           ///< k, or k' for oja-tradeoff
};

Problem build_problem(const ExperimentConfig& config);

/// Per-trial seed streams. Epoch 0 of Oja++ shares the Oja initialization seed.
std::uint64_t trial_seed(std::uint64_t master, int trial);
std::uint64_t source_seed(std::uint64_t trial);
std::uint64_t init_seed(std::uint64_t trial);
std::uint64_t epoch_seed(std::uint64_t trial, std::size_t epoch);
std::uint64_t subset_seed(std::uint64_t trial);

struct ExperimentResult {
    ExperimentConfig config;
    Problem problem;
    std::vector<std::vector<MetricRecord>> trials;
};

/// Runs all trials (concurrently up to config.jobs); results are in trial order.
ExperimentResult run_experiment(const ExperimentConfig& config);

/// One trial of `run_experiment`.
std::vector<MetricRecord> run_trial(const ExperimentConfig& config, const Problem& problem, int trial);

struct Quantiles {
    double q10 = 0.0;
    double q50 = 0.0;
    double q90 = 0.0;
};

/// Linear-interpolation quantile over the non-NaN entries (NaN when none).
double quantile(std::vector<double> values, double q);
Quantiles quantiles(const std::vector<double>& values);

inline const std::vector<std::string>& metric_names() {
    static const std::vector<std::string> names{"frob_w", "frob_z", "spec_w", "rayleigh_min_slack",
                                                "a_t", "s_t", "s_prime_t"};
    return names;
}
double metric_value(const MetricRecord& r, const std::string& name);

struct SummaryRow {
    std::string metric;
    std::int64_t t = 0;
    Quantiles q;
};

/// Per-time 10/50/90% quantiles across trials for every metric.
std::vector<SummaryRow> summarize(const ExperimentResult& result);

/// (t, median across trials) for one metric.
std::vector<std::pair<double, double>> median_series(const ExperimentResult& result, const std::string& metric);

/// Metadata lines (each starting with '#') describing config and schedule.
std::vector<std::string> metadata_lines(const ExperimentResult& result);

void write_csv(std::ostream& os, const ExperimentResult& result);
void write_summary_csv(std::ostream& os, const ExperimentResult& result);
/// matplotlib script that plots the summary file; it is written, never run.
void write_plot_script(std::ostream& os, const std::string& summary_path);

/// Writes <out>.csv, <out>_summary.csv and <out>_plot.py. Returns the paths.
std::vector<std::string> write_outputs(const ExperimentResult& result, const std::string& out);

struct RateFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 0.0;
    double t_lo = 0.0;
    double t_hi = 0.0;
    int points = 0;
};

/// Least squares of ln(value) on ln(t) over t in [t_lo, t_hi]. Needs at least
/// five points; throws std::invalid_argument naming t for a nonpositive value.
RateFit fit_rate(const std::vector<std::pair<double, double>>& series, double t_lo, double t_hi);

struct LowerBoundSweep {
    int k = 2;
    double lambda = 0.1;
    double delta = 0.05;
    std::vector<std::int64_t> horizons;
    int trials = 1;
    std::uint64_t seed = 1;
    double c_min = 4.0;
    double c_eps = 1.0;
    bool with_oja = false;
    int jobs = 1;
};

struct LowerBoundRow {
    std::int64_t horizon = 0;
    double eps = 0.0;
    double mean_error = 0.0;       ///< offline PCA, ||W^T Q_T||_F^2 averaged over trials
    double error_times_t = 0.0;
    double oja_mean_error = 0.0;   ///< NaN unless with_oja
    double oja_error_times_t = 0.0;
};

/// For each T: per trial draw z uniformly, stream T samples of D_z, fit
/// offline PCA (and optionally Oja) and measure against the exact W.
std::vector<LowerBoundRow> lower_bound_sweep(const LowerBoundSweep& sweep);
LowerBoundSweep lower_bound_settings(const ExperimentConfig& config);
void write_lower_bound_csv(std::ostream& os, const LowerBoundSweep& sweep, const std::vector<LowerBoundRow>& rows);

struct DiagnoseReport {
    int n = 0;
    int d = 0;
    int k = 0;
    double p = 0.0;
    double q = 0.0;
    std::int64_t horizon = 0;
    double xi_bound = 0.0;       ///< 576 d k / p^2 ln(d / p)
    double per_vec_bound = 0.0;  ///< 18 / p sqrt(2 k ln(T / q))
    Quantiles xi;
    Quantiles per_vec_max;
    Quantiles a1;
    double xi_max = 0.0;
    double xi_exceed_fraction = 0.0;
    double per_vec_exceed_fraction = 0.0;
    double allowed_fraction = 0.0;  ///< p + 2q
};

/// Initialization statistics over config.diag_n Gaussian draws.
DiagnoseReport diagnose(const ExperimentConfig& config);
void print_report(std::ostream& os, const DiagnoseReport& report);

}  // namespace streampca
