#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "streampca/harness.hpp"

namespace {

struct CommonOptions {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<int> trials;
    std::optional<int> jobs;
    std::optional<std::string> out;
    std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
    cmd->add_option("--config", o.config_path, "Flat key = value config file");
    cmd->add_option("--seed", o.seed, "Master seed");
    cmd->add_option("--trials", o.trials, "Number of trials");
    cmd->add_option("--jobs", o.jobs, "Trials run concurrently");
    cmd->add_option("--out", o.out, "Output path prefix");
    cmd->add_option("--set", o.overrides, "KEY=VALUE override (repeatable)");
}

streampca::ExperimentConfig resolve(const CommonOptions& o, bool check_problem = true) {
    streampca::ExperimentConfig c = o.config_path.empty() ? streampca::ExperimentConfig{}
                                                          : streampca::load_config(o.config_path);
    for (const auto& kv : o.overrides) c.apply_override(kv);
    if (o.seed) c.seed = *o.seed;
    if (o.trials) c.trials = *o.trials;
    if (o.jobs) c.jobs = *o.jobs;
    if (o.out) c.out = *o.out;
    if (check_problem) c.validate();
    return c;
}

void report_paths(const std::vector<std::string>& paths) {
    for (const auto& p : paths) std::cout << "wrote " << p << '\n';
}

void print_fit(const streampca::ExperimentResult& result) {
    const auto& s = result.problem.schedule;
    const double lo = 2.0 * static_cast<double>(s.t0 + s.t1);
    const double hi = static_cast<double>(s.total);
    for (const char* metric : {"frob_w", "frob_z"}) {
        try {
            const auto fit = streampca::fit_rate(streampca::median_series(result, metric), lo, hi);
            std::cout << metric << " median rate over [" << fit.t_lo << ", " << fit.t_hi << "]: slope " << fit.slope
                      << ", r^2 " << fit.r2 << " (" << fit.points << " points)\n";
        } catch (const std::invalid_argument& e) {
            std::cout << metric << " rate fit skipped: " << e.what() << '\n';
        }
    }
}

int run(const CommonOptions& o) {
    const auto config = resolve(o);
    const auto result = streampca::run_experiment(config);
    report_paths(streampca::write_outputs(result, config.out));
    print_fit(result);
    return 0;
}

int sweep(const CommonOptions& o, const std::string& key, const std::vector<std::string>& values) {
    const auto base = resolve(o);
    // Check every value before running anything.
    std::vector<streampca::ExperimentConfig> configs;
    for (const auto& v : values) {
        auto c = base;
        c.set(key, v);
        c.out = base.out + "_" + key + "_" + v;
        c.validate();
        configs.push_back(std::move(c));
    }
    for (const auto& c : configs) {
        std::cout << key << " = " << c.out.substr(base.out.size() + key.size() + 2) << '\n';
        const auto result = streampca::run_experiment(c);
        report_paths(streampca::write_outputs(result, c.out));
        print_fit(result);
    }
    return 0;
}

int lowerbound(const CommonOptions& o) {
    const auto config = resolve(o, false);
    const auto settings = streampca::lower_bound_settings(config);
    const auto rows = streampca::lower_bound_sweep(settings);
    const std::string path = config.out + "_lowerbound.csv";
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write '" + path + "'");
    streampca::write_lower_bound_csv(f, settings, rows);
    streampca::write_lower_bound_csv(std::cout, settings, rows);
    std::cout << "wrote " << path << '\n';
    return 0;
}

int diagnose(const CommonOptions& o) {
    const auto config = resolve(o);
    streampca::print_report(std::cout, streampca::diagnose(config));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Streaming k-PCA experiments"};
    app.set_version_flag("--version", std::string(streampca::kVersion));
    app.require_subcommand(1);

    CommonOptions run_opts, sweep_opts, lb_opts, diag_opts;
    std::string sweep_key;
    std::vector<std::string> sweep_values;

    auto* run_cmd = app.add_subcommand("run", "Run trials and write the CSV, summary and plot script");
    add_common(run_cmd, run_opts);
    auto* sweep_cmd = app.add_subcommand("sweep", "Repeat `run` for several values of one key");
    add_common(sweep_cmd, sweep_opts);
    sweep_cmd->add_option("--key", sweep_key, "Config key to vary")->required();
    sweep_cmd->add_option("--values", sweep_values, "Values, comma separated")->required()->delimiter(',');
    auto* lb_cmd = app.add_subcommand("lowerbound", "Error * T across a grid of T on the hard distribution");
    add_common(lb_cmd, lb_opts);
    auto* diag_cmd = app.add_subcommand("diagnose", "Initialization statistics against their bounds");
    add_common(diag_cmd, diag_opts);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (*run_cmd) return run(run_opts);
        if (*sweep_cmd) return sweep(sweep_opts, sweep_key, sweep_values);
        if (*lb_cmd) return lowerbound(lb_opts);
        return diagnose(diag_opts);
    } catch (const streampca::ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
}
