#include "streampca/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <fstream>
#include <iomanip>
#include <limits>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include "streampca/oracle.hpp"

namespace streampca {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::string unquote(std::string s) {
    s = trim(s);
    if (s.size() >= 2 && (s.front() == '"' || s.front() == '\'') && s.back() == s.front())
        return s.substr(1, s.size() - 2);
    return s;
}

// Text up to an unquoted '#'.
std::string strip_comment(const std::string& line) {
    char quote = 0;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quote) {
            if (c == quote) quote = 0;
        } else if (c == '"' || c == '\'') {
            quote = c;
        } else if (c == '#') {
            return line.substr(0, i);
        }
    }
    return line;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const std::string& expected) {
    throw ConfigError("config: key '" + key + "' expects " + expected + ", got '" + value + "'");
}

double to_double(const std::string& key, const std::string& text) {
    const std::string v = unquote(text);
    double out = 0.0;
    const auto* end = v.data() + v.size();
    const auto res = std::from_chars(v.data(), end, out);
    if (v.empty() || res.ec != std::errc() || res.ptr != end || !std::isfinite(out)) bad_value(key, v, "a number");
    return out;
}

std::int64_t to_int(const std::string& key, const std::string& text) {
    const std::string v = unquote(text);
    std::int64_t out = 0;
    const auto* end = v.data() + v.size();
    const auto res = std::from_chars(v.data(), end, out);
    if (v.empty() || res.ec != std::errc() || res.ptr != end) {
        // Accept integral floating forms such as 1e6.
        const double d = to_double(key, v);
        if (std::floor(d) != d || std::abs(d) > 9.0e18) bad_value(key, v, "an integer");
        return static_cast<std::int64_t>(d);
    }
    return out;
}

std::uint64_t to_uint(const std::string& key, const std::string& text) {
    const std::string v = unquote(text);
    std::uint64_t out = 0;
    const auto* end = v.data() + v.size();
    const auto res = std::from_chars(v.data(), end, out);
    if (v.empty() || res.ec != std::errc() || res.ptr != end) bad_value(key, v, "a nonnegative integer");
    return out;
}

int to_small_int(const std::string& key, const std::string& text) {
    const std::int64_t v = to_int(key, text);
    if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max())
        bad_value(key, text, "an integer in int range");
    return static_cast<int>(v);
}

bool to_bool(const std::string& key, const std::string& text) {
    const std::string v = unquote(text);
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    bad_value(key, v, "true or false");
}

std::vector<std::string> to_list(const std::string& text) {
    std::string v = trim(text);
    if (!v.empty() && v.front() == '[') {
        if (v.back() != ']') throw ConfigError("config: unterminated list '" + v + "'");
        v = v.substr(1, v.size() - 2);
    }
    std::vector<std::string> items;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) items.push_back(item);
    }
    return items;
}

std::optional<double> to_optional(const std::string& key, const std::string& text) {
    const std::string v = unquote(text);
    if (v == "none" || v == "auto" || v.empty()) return std::nullopt;
    return to_double(key, v);
}

std::string choose(const std::string& key, const std::string& text, std::initializer_list<const char*> options) {
    const std::string v = unquote(text);
    std::string all;
    for (const char* o : options) {
        if (v == o) return v;
        all += all.empty() ? o : std::string("|") + o;
    }
    bad_value(key, v, "one of " + all);
}

std::string num(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::string opt(const std::optional<double>& v) { return v ? num(*v) : "auto"; }

template <class T>
std::string join(const std::vector<T>& xs) {
    std::string out = "[";
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (i) out += ", ";
        if constexpr (std::is_floating_point_v<T>)
            out += num(xs[i]);
        else
            out += std::to_string(xs[i]);
    }
    return out + "]";
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

void ExperimentConfig::set(const std::string& raw_key, const std::string& value) {
    const std::string key = trim(raw_key);
    if (key == "d") d = to_small_int(key, value);
    else if (key == "k") k = to_small_int(key, value);
    else if (key == "spectrum") spectrum = choose(key, value, {"flat-gap", "geometric", "clustered", "explicit", "file"});
    else if (key == "gap") gap = to_optional(key, value);
    else if (key == "rho") rho = to_optional(key, value);
    else if (key == "lambda_top") lambda_top = to_optional(key, value);
    else if (key == "ratio") ratio = to_double(key, value);
    else if (key == "cluster_m") cluster_m = to_small_int(key, value);
    else if (key == "tail") tail = to_optional(key, value);
    else if (key == "values") {
        values.clear();
        for (const auto& item : to_list(value)) values.push_back(to_double(key, item));
    } else if (key == "spectrum_file") spectrum_file = unquote(value);
    else if (key == "basis") basis = choose(key, value, {"identity", "haar"});
    else if (key == "basis_seed") basis_seed = to_uint(key, value);
    else if (key == "source") source = choose(key, value, {"discrete", "sign"});
    else if (key == "pad_m") pad_m = to_small_int(key, value);
    else if (key == "algorithm") algorithm = choose(key, value, {"oja", "ojapp", "offline", "oja-tradeoff"});
    else if (key == "k_prime") k_prime = to_small_int(key, value);
    else if (key == "schedule") schedule = choose(key, value, {"auto", "gap-dependent", "gap-free"});
    else if (key == "p") p = to_double(key, value);
    else if (key == "epsilon") epsilon = to_double(key, value);
    else if (key == "c_t0") constants.c_t0 = to_double(key, value);
    else if (key == "c_t1") constants.c_t1 = to_double(key, value);
    else if (key == "c_eta") constants.c_eta = to_double(key, value);
    else if (key == "log_multiplier") constants.log_multiplier = to_optional(key, value);
    else if (key == "warm_log") constants.warm_log = to_optional(key, value);
    else if (key == "keep_plateau") constants.keep_plateau = to_bool(key, value);
    else if (key == "collapse_epoch_rates") constants.collapse_epoch_rates = to_bool(key, value);
    else if (key == "epoch_multiplier") constants.epoch_multiplier = to_int(key, value);
    else if (key == "T") horizon = unquote(value) == "auto" ? -1 : to_int(key, value);
    else if (key == "trials") trials = to_small_int(key, value);
    else if (key == "seed") seed = to_uint(key, value);
    else if (key == "stride") stride = to_int(key, value);
    else if (key == "jobs") jobs = to_small_int(key, value);
    else if (key == "out") out = unquote(value);
    else if (key == "lb_k") lb_k = to_small_int(key, value);
    else if (key == "lb_lambda") lb_lambda = to_double(key, value);
    else if (key == "lb_delta") lb_delta = to_double(key, value);
    else if (key == "lb_T") {
        lb_horizons.clear();
        for (const auto& item : to_list(value)) lb_horizons.push_back(to_int(key, item));
    } else if (key == "lb_c_min") lb_c_min = to_double(key, value);
    else if (key == "lb_c_eps") lb_c_eps = to_double(key, value);
    else if (key == "lb_oja") lb_oja = to_bool(key, value);
    else if (key == "diag_n") diag_n = to_small_int(key, value);
    else if (key == "q") q = to_double(key, value);
    else throw ConfigError("config: unknown key '" + key + "'");
}

void ExperimentConfig::apply_override(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("config: override '" + assignment + "' is not KEY=VALUE");
    set(assignment.substr(0, eq), assignment.substr(eq + 1));
}

void ExperimentConfig::validate() const {
    auto need = [](bool ok, const std::string& what) {
        if (!ok) throw ConfigError("config: " + what);
    };
    need(d >= 1, "d must be >= 1");
    need(k >= 1 && k <= d, "need 1 <= k <= d");
    need(trials >= 1, "trials must be >= 1");
    need(jobs >= 1, "jobs must be >= 1");
    need(stride >= 0, "stride must be >= 0");
    need(p > 0.0 && p <= 1.0, "p must lie in (0, 1]");
    need(epsilon > 0.0 && epsilon <= 1.0, "epsilon must lie in (0, 1]");
    need(!rho || (*rho > 0.0 && *rho < 1.0), "rho must lie in (0, 1)");
    need(!gap || *gap > 0.0, "gap must be positive");
    need(pad_m >= 0 && pad_m % k == 0, "pad_m must be a nonnegative multiple of k");
    need(algorithm != "oja-tradeoff" || (k_prime >= k && k_prime <= d), "oja-tradeoff needs k <= k_prime <= d");
    need(spectrum != "flat-gap" || gap.has_value(), "spectrum flat-gap needs gap");
    need(spectrum != "clustered" || (lambda_top && rho), "spectrum clustered needs lambda_top and rho");
    need(spectrum != "file" || !spectrum_file.empty(), "spectrum file needs spectrum_file");
    need(q > 0.0 && q < 1.0, "q must lie in (0, 1)");
    need(diag_n >= 1, "diag_n must be >= 1");
}

std::vector<std::pair<std::string, std::string>> ExperimentConfig::entries() const {
    return {
        {"d", std::to_string(d)},
        {"k", std::to_string(k)},
        {"spectrum", spectrum},
        {"gap", opt(gap)},
        {"rho", opt(rho)},
        {"lambda_top", opt(lambda_top)},
        {"ratio", num(ratio)},
        {"cluster_m", std::to_string(cluster_m)},
        {"tail", opt(tail)},
        {"values", join(values)},
        {"spectrum_file", spectrum_file},
        {"basis", basis},
        {"basis_seed", std::to_string(basis_seed)},
        {"source", source},
        {"pad_m", std::to_string(pad_m)},
        {"algorithm", algorithm},
        {"k_prime", std::to_string(k_prime)},
        {"schedule", schedule},
        {"p", num(p)},
        {"epsilon", num(epsilon)},
        {"c_t0", num(constants.c_t0)},
        {"c_t1", num(constants.c_t1)},
        {"c_eta", num(constants.c_eta)},
        {"log_multiplier", opt(constants.log_multiplier)},
        {"warm_log", opt(constants.warm_log)},
        {"keep_plateau", constants.keep_plateau ? "true" : "false"},
        {"collapse_epoch_rates", constants.collapse_epoch_rates ? "true" : "false"},
        {"epoch_multiplier", std::to_string(constants.epoch_multiplier)},
        {"T", horizon < 0 ? "auto" : std::to_string(horizon)},
        {"trials", std::to_string(trials)},
        {"seed", std::to_string(seed)},
        {"stride", std::to_string(stride)},
        {"lb_k", std::to_string(lb_k)},
        {"lb_lambda", num(lb_lambda)},
        {"lb_delta", num(lb_delta)},
        {"lb_T", join(lb_horizons)},
        {"lb_c_min", num(lb_c_min)},
        {"lb_c_eps", num(lb_c_eps)},
        {"lb_oja", lb_oja ? "true" : "false"},
        {"diag_n", std::to_string(diag_n)},
        {"q", num(q)},
    };
}

ExperimentConfig parse_config(std::istream& is) {
    ExperimentConfig config;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const std::string body = trim(strip_comment(line));
        if (body.empty()) continue;
        if (body.front() == '[')
            throw ConfigError("config line " + std::to_string(lineno) + ": sections are not supported, use flat keys");
        const auto eq = body.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value'");
        try {
            config.set(body.substr(0, eq), body.substr(eq + 1));
        } catch (const ConfigError& e) {
            throw ConfigError("config line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return config;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open '" + path + "'");
    return parse_config(in);
}

// ---------------------------------------------------------------------------
// Problem construction

namespace {

Spectrum base_spectrum(const ExperimentConfig& c) {
    if (c.spectrum == "flat-gap") return make_spectrum(FlatGap{*c.gap, c.lambda_top}, c.d, c.k);
    if (c.spectrum == "geometric") return make_spectrum(Geometric{c.ratio, c.lambda_top}, c.d, c.k);
    if (c.spectrum == "clustered")
        return make_spectrum(ClusteredGapFree{*c.lambda_top, *c.rho, c.cluster_m, c.tail}, c.d, c.k);
    if (c.spectrum == "explicit") return make_spectrum(ExplicitList{c.values}, c.d, c.k);
    std::ifstream in(c.spectrum_file);
    if (!in) throw ConfigError("config: cannot open spectrum file '" + c.spectrum_file + "'");
    Spectrum s = read_spectrum(in);
    if (s.dim() != c.d)
        throw ConfigError("config: spectrum file has d=" + std::to_string(s.dim()) + " but d=" + std::to_string(c.d));
    return s;
}

}  // namespace

Problem build_problem(const ExperimentConfig& c) {
    c.validate();
    Spectrum base;
    try {
        base = base_spectrum(c);
        if (c.basis == "haar") base = with_basis(std::move(base), haar_basis(c.d, c.basis_seed));
    } catch (const ConfigError&) {
        throw;
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }

    SampleSource source = c.source == "sign" ? sign_sampler(base) : discrete_sampler(base);
    if (c.pad_m > 0) source = gapfree_pad(source, c.pad_m, c.k);

    Problem prob{true_sigma(source), source, c.k, 0.0, {}, std::nullopt, c.k};
    const Spectrum& sigma = prob.sigma;
    const int d = sigma.dim();
    const int k = c.k;
    if (k > d) throw ConfigError("config: k exceeds the sample dimension");
    const double actual_gap = k < d ? sigma.eigenvalues[k - 1] - sigma.eigenvalues[k] : sigma.eigenvalues[k - 1];

    const bool gap_free = c.schedule == "gap-free" || (c.schedule == "auto" && c.rho.has_value());
    if (c.rho) prob.rho = *c.rho;
    else if (c.gap) prob.rho = *c.gap;
    else if (actual_gap > 0.0 && actual_gap < 1.0) prob.rho = actual_gap;
    else throw ConfigError("config: set rho (or gap); the spectrum has no usable eigengap");

    const int width = c.algorithm == "oja-tradeoff" ? c.k_prime : k;
    prob.sketch_width = width;
    const ProblemSpec ps = problem_spec(sigma, k, prob.rho);
    const double lambda1 = sigma.eigenvalues.head(k).sum();
    const double lambda2 = sigma.eigenvalues.segment(k, ps.m).sum();
    try {
        if (c.algorithm == "ojapp") {
            GapFreeParams gp{d, k, lambda1, gap_free ? lambda2 : 0.0, prob.rho, c.epsilon, c.p};
            OjaPPPlan plan = ojapp_plan(gp, c.constants);
            if (c.horizon >= 0) plan = with_total(std::move(plan), c.horizon);
            prob.schedule = plan.schedule;
            prob.plan = std::move(plan);
        } else if (gap_free) {
            prob.schedule = gap_free_schedule(GapFreeParams{d, width, lambda1, lambda2, prob.rho, c.epsilon, c.p},
                                              c.constants);
        } else {
            const double g = c.gap ? *c.gap : actual_gap;
            prob.schedule = gap_dep_schedule(GapDependentParams{d, width, lambda1, g, c.epsilon, c.p}, c.constants);
        }
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    if (!prob.plan && c.horizon >= 0) prob.schedule = with_total(std::move(prob.schedule), c.horizon);
    return prob;
}

std::uint64_t trial_seed(std::uint64_t master, int trial) {
    return derive_seed(master, static_cast<std::uint64_t>(trial));
}
std::uint64_t source_seed(std::uint64_t trial) { return derive_seed(trial, 0); }
std::uint64_t init_seed(std::uint64_t trial) { return derive_seed(trial, 1); }
std::uint64_t epoch_seed(std::uint64_t trial, std::size_t epoch) { return derive_seed(trial, 1 + epoch); }
std::uint64_t subset_seed(std::uint64_t trial) { return derive_seed(trial, 1000); }

// ---------------------------------------------------------------------------
// Running

namespace {

std::vector<MetricRecord> run_offline(const ExperimentConfig& c, const Problem& prob, SampleSource& source,
                                      std::uint64_t ts, const MetricRecorder& recorder) {
    const int d = source.dim();
    const std::int64_t total = prob.schedule.total;
    const std::int64_t stride = c.stride > 0 ? c.stride : std::max<std::int64_t>(1, (total + 499) / 500);
    std::vector<MetricRecord> records;
    records.push_back(recorder.measure(0, qr_orthonormalize(init_gaussian(d, prob.k, init_seed(ts)))));
    CovarianceAccumulator acc(d);
    Eigen::VectorXd x(d);
    for (std::int64_t t = 1; t <= total; ++t) {
        source.draw(x);
        acc.add(x);
        if (t % stride == 0 || t == total) records.push_back(recorder.measure(t, top_eigenvectors(acc.covariance(), prob.k)));
    }
    return records;
}

}  // namespace

std::vector<MetricRecord> run_trial(const ExperimentConfig& c, const Problem& prob, int trial) {
    const std::uint64_t ts = trial_seed(c.seed, trial);
    SampleSource source = prob.source.reseeded(source_seed(ts));
    const MetricRecorder recorder(prob.sigma, prob.k, prob.rho);
    const int d = source.dim();

    if (c.algorithm == "offline") return run_offline(c, prob, source, ts, recorder);

    RunHooks hooks = recorder_hooks(recorder, prob.schedule, c.stride);
    if (c.algorithm == "ojapp") {
        std::vector<std::uint64_t> seeds;
        for (std::size_t i = 0; i < prob.plan->epochs.size(); ++i) seeds.push_back(epoch_seed(ts, i));
        return run_ojapp(source, *prob.plan, seeds, hooks).records;
    }
    if (c.algorithm == "oja-tradeoff") {
        const std::vector<int> cols = random_column_subset(prob.sketch_width, prob.k, subset_seed(ts));
        auto select = [&cols](const Eigen::MatrixXd& q) {
            Eigen::MatrixXd out(q.rows(), static_cast<Eigen::Index>(cols.size()));
            for (std::size_t j = 0; j < cols.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = q.col(cols[j]);
            return out;
        };
        hooks.measure = [&](const RecordContext& ctx) {
            const Eigen::MatrixXd sub = select(ctx.q);
            if (ctx.q_prev == nullptr) return recorder.measure(ctx.t, sub);
            const Eigen::MatrixXd prev = select(*ctx.q_prev);
            return recorder.measure(ctx.t, sub, &prev, ctx.x);
        };
        return run_oja(source, prob.schedule, init_gaussian(d, prob.sketch_width, init_seed(ts)), hooks).records;
    }
    return run_oja(source, prob.schedule, init_gaussian(d, prob.k, init_seed(ts)), hooks).records;
}

namespace {

// Runs fn(i) for i in [0, n) on up to `jobs` threads; rethrows the first
// failure in index order.
template <class Fn>
void parallel_for(int n, int jobs, Fn fn) {
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
    std::atomic<int> next{0};
    auto worker = [&] {
        for (int i = next++; i < n; i = next++) {
            try {
                fn(i);
            } catch (...) {
                errors[static_cast<std::size_t>(i)] = std::current_exception();
            }
        }
    };
    const int workers = std::max(1, std::min(jobs, n));
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config) {
    ExperimentResult result{config, build_problem(config), {}};
    result.trials.resize(static_cast<std::size_t>(config.trials));
    parallel_for(config.trials, config.jobs, [&](int i) {
        result.trials[static_cast<std::size_t>(i)] = run_trial(config, result.problem, i);
    });
    return result;
}

// ---------------------------------------------------------------------------
// Aggregation and output

double quantile(std::vector<double> values, double q) {
    values.erase(std::remove_if(values.begin(), values.end(), [](double v) { return std::isnan(v); }), values.end());
    if (values.empty()) return kNaN;
    std::sort(values.begin(), values.end());
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    if (frac == 0.0 || values[lo] == values[hi]) return values[lo];
    return values[lo] + frac * (values[hi] - values[lo]);
}

Quantiles quantiles(const std::vector<double>& values) {
    return {quantile(values, 0.1), quantile(values, 0.5), quantile(values, 0.9)};
}

double metric_value(const MetricRecord& r, const std::string& name) {
    if (name == "frob_w") return r.frob_w;
    if (name == "frob_z") return r.frob_z;
    if (name == "spec_w") return r.spec_w;
    if (name == "rayleigh_min_slack") return r.rayleigh_min_slack;
    if (name == "a_t") return r.a_t;
    if (name == "s_t") return r.s_t;
    if (name == "s_prime_t") return r.s_prime_t;
    throw std::invalid_argument("unknown metric '" + name + "'");
}

namespace {

// Record times shared by every trial (trials only differ when one stopped early).
std::size_t common_length(const ExperimentResult& result) {
    std::size_t n = std::numeric_limits<std::size_t>::max();
    for (const auto& tr : result.trials) n = std::min(n, tr.size());
    return result.trials.empty() ? 0 : n;
}

std::vector<double> column(const ExperimentResult& result, std::size_t row, const std::string& metric) {
    std::vector<double> out;
    out.reserve(result.trials.size());
    for (const auto& tr : result.trials) out.push_back(metric_value(tr[row], metric));
    return out;
}

}  // namespace

std::vector<SummaryRow> summarize(const ExperimentResult& result) {
    std::vector<SummaryRow> rows;
    const std::size_t n = common_length(result);
    for (const auto& metric : metric_names())
        for (std::size_t r = 0; r < n; ++r)
            rows.push_back(SummaryRow{metric, result.trials.front()[r].t, quantiles(column(result, r, metric))});
    return rows;
}

std::vector<std::pair<double, double>> median_series(const ExperimentResult& result, const std::string& metric) {
    std::vector<std::pair<double, double>> out;
    const std::size_t n = common_length(result);
    for (std::size_t r = 0; r < n; ++r)
        out.emplace_back(static_cast<double>(result.trials.front()[r].t), quantile(column(result, r, metric), 0.5));
    return out;
}

std::vector<std::string> metadata_lines(const ExperimentResult& result) {
    const Schedule& s = result.problem.schedule;
    std::vector<std::string> lines;
    lines.push_back("# streampca " + std::string(kVersion) + ", csv schema " + std::to_string(kCsvSchemaVersion));
    for (const auto& [key, value] : result.config.entries()) lines.push_back("# " + key + " = " + value);
    lines.push_back("# resolved.d = " + std::to_string(result.problem.sigma.dim()));
    lines.push_back("# resolved.rho = " + num(result.problem.rho));
    lines.push_back("# resolved.m = " +
                    std::to_string(problem_spec(result.problem.sigma, result.problem.k, result.problem.rho).m));
    lines.push_back("# resolved.T0 = " + std::to_string(s.t0));
    lines.push_back("# resolved.T1 = " + std::to_string(s.t1));
    lines.push_back("# resolved.T = " + std::to_string(s.total));
    lines.push_back("# resolved.s = " +
                    std::to_string(result.problem.plan ? result.problem.plan->epochs.size() : std::size_t{1}));
    lines.push_back("# resolved.log_multiplier = " + num(s.log_multiplier));
    lines.push_back("# resolved.warm_log = " + num(s.warm_log));
    lines.push_back("# resolved.C_T0 = " + num(s.constants.c_t0));
    lines.push_back("# resolved.C_T1 = " + num(s.constants.c_t1));
    lines.push_back("# resolved.C_eta = " + num(s.constants.c_eta));
    for (const auto& seg : s.segments)
        lines.push_back("# segment " + std::to_string(seg.start) + " " + std::to_string(seg.end) + " " +
                        (seg.rule.kind == RateKind::constant ? "constant " : "harmonic ") + num(seg.rule.c) + " " +
                        std::to_string(seg.rule.offset));
    if (result.problem.plan) {
        std::string epochs = "# epochs";
        for (const auto& e : result.problem.plan->epochs)
            epochs += " " + std::to_string(e.length) + ":" + std::to_string(e.new_columns);
        lines.push_back(epochs);
    }
    return lines;
}

void write_csv(std::ostream& os, const ExperimentResult& result) {
    for (const auto& line : metadata_lines(result)) os << line << '\n';
    os << "trial,t,frob_w,frob_z,spec_w,rayleigh_min_slack,a_t,s_t,s_prime_t\n";
    for (std::size_t i = 0; i < result.trials.size(); ++i)
        for (const auto& r : result.trials[i])
            os << i << ',' << r.t << ',' << num(r.frob_w) << ',' << num(r.frob_z) << ',' << num(r.spec_w) << ','
               << num(r.rayleigh_min_slack) << ',' << num(r.a_t) << ',' << num(r.s_t) << ',' << num(r.s_prime_t)
               << '\n';
}

void write_summary_csv(std::ostream& os, const ExperimentResult& result) {
    for (const auto& line : metadata_lines(result)) os << line << '\n';
    os << "metric,t,q10,q50,q90\n";
    for (const auto& row : summarize(result))
        os << row.metric << ',' << row.t << ',' << num(row.q.q10) << ',' << num(row.q.q50) << ','
           << num(row.q.q90) << '\n';
}

void write_plot_script(std::ostream& os, const std::string& summary_path) {
    os << R"(#!/usr/bin/env python3
# Plots the per-time quantiles of a streampca summary file.
import sys

import matplotlib.pyplot as plt
import pandas as pd

path = sys.argv[1] if len(sys.argv) > 1 else ")"
       << summary_path << R"("
df = pd.read_csv(path, comment="#")
metrics = ["frob_w", "frob_z", "spec_w", "s_t", "s_prime_t"]
fig, axes = plt.subplots(1, len(metrics), figsize=(4 * len(metrics), 3.5))
for ax, name in zip(axes, metrics):
    part = df[(df.metric == name) & (df.t > 0)]
    ax.fill_between(part.t, part.q10, part.q90, alpha=0.3)
    ax.plot(part.t, part.q50)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_title(name)
    ax.set_xlabel("t")
fig.tight_layout()
out = path.rsplit(".", 1)[0] + ".png"
fig.savefig(out, dpi=120)
print(out)
)";
}

std::vector<std::string> write_outputs(const ExperimentResult& result, const std::string& out) {
    const std::vector<std::string> paths{out + ".csv", out + "_summary.csv", out + "_plot.py"};
    auto open = [](const std::string& path) {
        std::ofstream f(path);
        if (!f) throw std::runtime_error("cannot write '" + path + "'");
        return f;
    };
    {
        auto f = open(paths[0]);
        write_csv(f, result);
        if (!f) throw std::runtime_error("write failed for '" + paths[0] + "'");
    }
    {
        auto f = open(paths[1]);
        write_summary_csv(f, result);
        if (!f) throw std::runtime_error("write failed for '" + paths[1] + "'");
    }
    {
        auto f = open(paths[2]);
        write_plot_script(f, paths[1]);
    }
    return paths;
}

// ---------------------------------------------------------------------------
// Rate fitting

RateFit fit_rate(const std::vector<std::pair<double, double>>& series, double t_lo, double t_hi) {
    std::vector<double> xs;
    std::vector<double> ys;
    for (const auto& [t, v] : series) {
        if (t < t_lo || t > t_hi) continue;
        if (!(t > 0.0)) throw std::invalid_argument("fit_rate: t must be positive (t=" + num(t) + ")");
        if (!(v > 0.0) || !std::isfinite(v))
            throw std::invalid_argument("fit_rate: value at t=" + num(t) + " is not positive (" + num(v) + ")");
        xs.push_back(std::log(t));
        ys.push_back(std::log(v));
    }
    if (xs.size() < 5)
        throw std::invalid_argument("fit_rate: need at least 5 points in the window, got " + std::to_string(xs.size()));
    const auto n = static_cast<double>(xs.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
        syy += (ys[i] - my) * (ys[i] - my);
    }
    if (!(sxx > 0.0)) throw std::invalid_argument("fit_rate: all points share one t");
    RateFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    fit.r2 = syy > 0.0 ? std::clamp(sxy * sxy / (sxx * syy), 0.0, 1.0) : 1.0;
    fit.t_lo = std::exp(xs.front());
    fit.t_hi = std::exp(xs.back());
    fit.points = static_cast<int>(xs.size());
    return fit;
}

// ---------------------------------------------------------------------------
// Lower bound

LowerBoundSweep lower_bound_settings(const ExperimentConfig& c) {
    if (c.lb_horizons.empty()) throw ConfigError("config: lb_T is empty");
    if (c.trials < 1 || c.jobs < 1) throw ConfigError("config: trials and jobs must be >= 1");
    LowerBoundSweep s;
    s.k = c.lb_k;
    s.lambda = c.lb_lambda;
    s.delta = c.lb_delta;
    s.horizons = c.lb_horizons;
    s.trials = c.trials;
    s.seed = c.seed;
    s.c_min = c.lb_c_min;
    s.c_eps = c.lb_c_eps;
    s.with_oja = c.lb_oja;
    s.jobs = c.jobs;
    return s;
}

std::vector<LowerBoundRow> lower_bound_sweep(const LowerBoundSweep& sweep) {
    if (sweep.horizons.empty()) throw std::invalid_argument("lower_bound_sweep: empty T grid");
    if (sweep.trials < 1) throw std::invalid_argument("lower_bound_sweep: trials must be >= 1");
    const int k = sweep.k;
    std::vector<LowerBoundRow> rows;
    for (std::size_t g = 0; g < sweep.horizons.size(); ++g) {
        const std::int64_t horizon = sweep.horizons[g];
        const LowerBoundParams params{k, sweep.lambda, sweep.delta, horizon, sweep.c_min, sweep.c_eps};
        std::vector<double> offline_err(static_cast<std::size_t>(sweep.trials));
        std::vector<double> oja_err(static_cast<std::size_t>(sweep.trials), kNaN);
        double eps = 0.0;
        {
            const SampleSource probe = lower_bound_source(params, std::vector<std::uint8_t>(k, 0));
            eps = std::get<LowerBound>(probe.kind().model).eps;
        }
        parallel_for(sweep.trials, sweep.jobs, [&](int trial) {
            const std::uint64_t ts = derive_seed(derive_seed(sweep.seed, g), static_cast<std::uint64_t>(trial));
            Rng rng = make_rng(derive_seed(ts, 7));
            std::vector<std::uint8_t> z(static_cast<std::size_t>(k));
            for (auto& bit : z) bit = static_cast<std::uint8_t>(rng() >> 63);
            SampleSource source = lower_bound_source(params, z, source_seed(ts));
            const Spectrum sigma = true_sigma(source);
            const Eigen::MatrixXd w = sigma.basis_matrix().rightCols(sigma.dim() - k);

            CovarianceAccumulator acc(source.dim());
            Eigen::VectorXd x(source.dim());
            for (std::int64_t t = 0; t < horizon; ++t) {
                source.draw(x);
                acc.add(x);
            }
            offline_err[static_cast<std::size_t>(trial)] = frob_corr(top_eigenvectors(acc.covariance(), k), w);

            if (sweep.with_oja) {
                SampleSource again = source.reseeded(source_seed(ts));
                const GapDependentParams gp{2 * k, k, k * sweep.lambda, sweep.delta, 1.0, 0.5};
                const Schedule sch = with_total(gap_dep_schedule(gp), horizon);
                RunHooks hooks;
                hooks.stride = std::max<std::int64_t>(horizon, 1);
                const Trajectory tr = run_oja(again, sch, init_gaussian(2 * k, k, init_seed(ts)), hooks);
                oja_err[static_cast<std::size_t>(trial)] = frob_corr(tr.final_state.q, w);
            }
        });
        LowerBoundRow row;
        row.horizon = horizon;
        row.eps = eps;
        double sum = 0.0;
        for (double e : offline_err) sum += e;
        row.mean_error = sum / sweep.trials;
        row.error_times_t = row.mean_error * static_cast<double>(horizon);
        if (sweep.with_oja) {
            double osum = 0.0;
            for (double e : oja_err) osum += e;
            row.oja_mean_error = osum / sweep.trials;
            row.oja_error_times_t = row.oja_mean_error * static_cast<double>(horizon);
        } else {
            row.oja_mean_error = kNaN;
            row.oja_error_times_t = kNaN;
        }
        rows.push_back(row);
    }
    return rows;
}

void write_lower_bound_csv(std::ostream& os, const LowerBoundSweep& sweep, const std::vector<LowerBoundRow>& rows) {
    os << "# streampca " << kVersion << " lower-bound sweep\n";
    os << "# k = " << sweep.k << "\n# lambda = " << num(sweep.lambda) << "\n# delta = " << num(sweep.delta)
       << "\n# trials = " << sweep.trials << "\n# seed = " << sweep.seed << "\n# c_min = " << num(sweep.c_min)
       << "\n# c_eps = " << num(sweep.c_eps) << '\n';
    os << "T,eps,mean_error,error_times_T,oja_mean_error,oja_error_times_T\n";
    for (const auto& r : rows)
        os << r.horizon << ',' << num(r.eps) << ',' << num(r.mean_error) << ',' << num(r.error_times_t) << ','
           << num(r.oja_mean_error) << ',' << num(r.oja_error_times_t) << '\n';
}

// ---------------------------------------------------------------------------
// Initialization diagnostics

DiagnoseReport diagnose(const ExperimentConfig& c) {
    const Problem prob = build_problem(c);
    const int d = prob.sigma.dim();
    const int k = prob.k;
    const EigenPartition part = partition(prob.sigma, k, prob.rho);

    DiagnoseReport rep;
    rep.n = c.diag_n;
    rep.d = d;
    rep.k = k;
    rep.p = c.p;
    rep.q = c.q;
    rep.horizon = std::max<std::int64_t>(prob.schedule.total, 1);
    rep.xi_bound = 576.0 * d * k / (c.p * c.p) * std::log(d / c.p);
    rep.per_vec_bound = 18.0 / c.p * std::sqrt(2.0 * k * std::log(static_cast<double>(rep.horizon) / c.q));
    rep.allowed_fraction = c.p + 2.0 * c.q;

    std::vector<double> xi(static_cast<std::size_t>(rep.n));
    std::vector<double> per_vec(static_cast<std::size_t>(rep.n));
    std::vector<double> a1(static_cast<std::size_t>(rep.n));
    parallel_for(rep.n, c.jobs, [&](int i) {
        const std::uint64_t ts = trial_seed(c.seed, i);
        const Eigen::MatrixXd q0 = init_gaussian(d, k, init_seed(ts));
        const InitDiagnostics diag = init_diagnostics(q0, part);
        SampleSource source = prob.source.reseeded(source_seed(ts));
        const Eigen::VectorXd x = source.draw();
        xi[static_cast<std::size_t>(i)] = diag.xi_z;
        per_vec[static_cast<std::size_t>(i)] = diag.per_vec.size() ? diag.per_vec.maxCoeff() : 0.0;
        a1[static_cast<std::size_t>(i)] = sample_alignment(qr_orthonormalize(q0), part.v, x);
    });
    rep.xi = quantiles(xi);
    rep.per_vec_max = quantiles(per_vec);
    rep.a1 = quantiles(a1);
    rep.xi_max = *std::max_element(xi.begin(), xi.end());
    rep.xi_exceed_fraction =
        static_cast<double>(std::count_if(xi.begin(), xi.end(), [&](double v) { return !(v <= rep.xi_bound); })) /
        rep.n;
    rep.per_vec_exceed_fraction =
        static_cast<double>(
            std::count_if(per_vec.begin(), per_vec.end(), [&](double v) { return !(v <= rep.per_vec_bound); })) /
        rep.n;
    return rep;
}

void print_report(std::ostream& os, const DiagnoseReport& r) {
    os << "initialization diagnostics: n=" << r.n << " d=" << r.d << " k=" << r.k << " p=" << num(r.p)
       << " q=" << num(r.q) << " T=" << r.horizon << '\n';
    os << "  xi_Z        q10=" << num(r.xi.q10) << " q50=" << num(r.xi.q50) << " q90=" << num(r.xi.q90)
       << " max=" << num(r.xi_max) << '\n';
    os << "  xi_Z bound  576dk/p^2 ln(d/p) = " << num(r.xi_bound) << ", exceeded in " << num(r.xi_exceed_fraction)
       << " of draws (allowed p + 2q = " << num(r.allowed_fraction) << ")\n";
    os << "  per-vector  max_j q10=" << num(r.per_vec_max.q10) << " q50=" << num(r.per_vec_max.q50)
       << " q90=" << num(r.per_vec_max.q90) << '\n';
    os << "  per-vector bound 18/p sqrt(2k ln(T/q)) = " << num(r.per_vec_bound) << ", exceeded in "
       << num(r.per_vec_exceed_fraction) << " of draws\n";
    os << "  a_1         q10=" << num(r.a1.q10) << " q50=" << num(r.a1.q50) << " q90=" << num(r.a1.q90) << '\n';
}

}  // namespace streampca
