#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "streampca/harness.hpp"
#include "streampca/metrics.hpp"
#include "streampca/oja.hpp"
#include "streampca/oracle.hpp"
#include "streampca/qr.hpp"
#include "streampca/schedules.hpp"
#include "streampca/spectra.hpp"

namespace py = pybind11;
using namespace streampca;

namespace {

ExperimentConfig config_from(const py::dict& settings, bool check_problem = true) {
    ExperimentConfig c;
    for (const auto& [key, value] : settings) {
        std::string text;
        if (py::isinstance<py::bool_>(value))
            text = value.cast<bool>() ? "true" : "false";
        else if (py::isinstance<py::list>(value) || py::isinstance<py::tuple>(value)) {
            for (const auto& item : value) {
                if (!text.empty()) text += ",";
                text += py::str(item).cast<std::string>();
            }
            text = "[" + text + "]";
        } else
            text = py::str(value).cast<std::string>();
        c.set(key.cast<std::string>(), text);
    }
    if (check_problem) c.validate();
    return c;
}

// One dict of equal-length lists per trial.
py::list records_to_python(const ExperimentResult& r) {
    py::list trials;
    for (const auto& trial : r.trials) {
        py::dict columns;
        std::vector<std::int64_t> t;
        for (const auto& rec : trial) t.push_back(rec.t);
        columns["t"] = t;
        for (const auto& name : metric_names()) {
            std::vector<double> v;
            for (const auto& rec : trial) v.push_back(metric_value(rec, name));
            columns[name.c_str()] = v;
        }
        trials.append(columns);
    }
    return trials;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Streaming k-PCA: Oja, Oja++, synthetic sources and metrics";
    m.attr("__version__") = kVersion;

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

    py::class_<Spectrum>(m, "Spectrum")
        .def(py::init([](Eigen::VectorXd values, Eigen::MatrixXd basis) {
                 Spectrum s{std::move(values), std::move(basis)};
                 s.validate();
                 return s;
             }),
             py::arg("eigenvalues"), py::arg("basis") = Eigen::MatrixXd())
        .def_readonly("eigenvalues", &Spectrum::eigenvalues)
        .def_property_readonly("basis", &Spectrum::basis_matrix)
        .def_property_readonly("dim", &Spectrum::dim)
        .def("covariance", &Spectrum::covariance);

    m.def("flat_gap", [](int d, int k, double gap, std::optional<double> top) {
        return make_spectrum(FlatGap{gap, top}, d, k);
    }, py::arg("d"), py::arg("k"), py::arg("gap"), py::arg("lambda_top") = py::none());
    m.def("geometric", [](int d, int k, double ratio, std::optional<double> top) {
        return make_spectrum(Geometric{ratio, top}, d, k);
    }, py::arg("d"), py::arg("k"), py::arg("ratio"), py::arg("lambda_top") = py::none());
    m.def("clustered", [](int d, int k, double top, double rho, int m_, std::optional<double> tail) {
        return make_spectrum(ClusteredGapFree{top, rho, m_, tail}, d, k);
    }, py::arg("d"), py::arg("k"), py::arg("lambda_top"), py::arg("rho"), py::arg("m"), py::arg("tail") = py::none());
    m.def("with_basis", &with_basis, py::arg("spectrum"), py::arg("basis"));
    m.def("haar_basis", &haar_basis, py::arg("d"), py::arg("seed"));

    py::class_<SampleSource>(m, "SampleSource")
        .def_property_readonly("dim", &SampleSource::dim)
        .def("draw", py::overload_cast<>(&SampleSource::draw))
        .def("draw_many", [](SampleSource& s, int n) {
            Eigen::MatrixXd out(s.dim(), n);
            for (int i = 0; i < n; ++i) s.draw(out.col(i));
            return out;
        }, py::arg("n"), "Columns are samples.")
        .def("second_moment", &SampleSource::second_moment)
        .def("reseeded", &SampleSource::reseeded, py::arg("seed"));
    m.def("discrete_sampler", &discrete_sampler, py::arg("spectrum"), py::arg("seed") = 0);
    m.def("sign_sampler", &sign_sampler, py::arg("spectrum"), py::arg("seed") = 0);
    m.def("lower_bound_source",
          [](int k, double lambda, double delta, std::int64_t horizon, std::vector<std::uint8_t> z,
             std::uint64_t seed) {
              return lower_bound_source({k, lambda, delta, horizon, 4.0, 1.0}, std::move(z), seed);
          },
          py::arg("k"), py::arg("lam"), py::arg("delta"), py::arg("horizon"), py::arg("z"), py::arg("seed") = 0);
    m.def("gapfree_pad", &gapfree_pad, py::arg("source"), py::arg("m"), py::arg("k"), py::arg("seed") = 0);
    m.def("true_sigma", &true_sigma, py::arg("source"));

    py::class_<TwoByTwoPair>(m, "TwoByTwoPair")
        .def_readonly("a", &TwoByTwoPair::a)
        .def_readonly("b", &TwoByTwoPair::b)
        .def_readonly("a_values", &TwoByTwoPair::a_values)
        .def_readonly("a_vectors", &TwoByTwoPair::a_vectors)
        .def_readonly("b_values", &TwoByTwoPair::b_values)
        .def_readonly("b_vectors", &TwoByTwoPair::b_vectors)
        .def_readonly("roots", &TwoByTwoPair::roots);
    m.def("lemma_2x2", &lemma_2x2, py::arg("beta"), py::arg("eps"));

    m.def("qr_orthonormalize", &qr_orthonormalize, py::arg("m"));
    m.def("init_gaussian", &init_gaussian, py::arg("d"), py::arg("k"), py::arg("seed"));
    m.def("oja_step", [](Eigen::MatrixXd q, const Eigen::VectorXd& x, double eta) {
        SketchState s(std::move(q));
        apply_oja_step(s, x, eta);
        return s.q;
    }, py::arg("q"), py::arg("x"), py::arg("eta"));

    py::class_<Schedule>(m, "Schedule")
        .def_readonly("t0", &Schedule::t0)
        .def_readonly("t1", &Schedule::t1)
        .def_readonly("total", &Schedule::total)
        .def_readonly("scale", &Schedule::scale)
        .def_readonly("log_multiplier", &Schedule::log_multiplier)
        .def_readonly("warm_log", &Schedule::warm_log)
        .def("eta", &Schedule::eta, py::arg("t"))
        .def("boundaries", &Schedule::boundaries);
    m.def("gap_dep_schedule", [](int d, int k, double lambda_sum, double gap, double epsilon, double p) {
        return gap_dep_schedule({d, k, lambda_sum, gap, epsilon, p});
    }, py::arg("d"), py::arg("k"), py::arg("lambda_sum"), py::arg("gap"), py::arg("epsilon") = 1.0, py::arg("p") = 0.5);
    m.def("gap_free_schedule",
          [](int d, int k, double lambda1, double lambda2, double rho, double epsilon, double p) {
              return gap_free_schedule({d, k, lambda1, lambda2, rho, epsilon, p});
          },
          py::arg("d"), py::arg("k"), py::arg("lambda1"), py::arg("lambda2"), py::arg("rho"),
          py::arg("epsilon") = 1.0, py::arg("p") = 0.5);
    m.def("with_total", py::overload_cast<Schedule, std::int64_t>(&with_total), py::arg("schedule"),
          py::arg("total"));

    m.def("frob_corr", &frob_corr, py::arg("q"), py::arg("x"));
    m.def("spectral_corr", &spectral_corr, py::arg("q"), py::arg("x"));
    m.def("analysis_ratio", &analysis_ratio, py::arg("q"), py::arg("x"), py::arg("v"));
    m.def("rayleigh_quotients", &rayleigh_quotients, py::arg("q"), py::arg("spectrum"));
    m.def("partition", [](const Spectrum& s, int k, double rho) {
        const EigenPartition p = partition(s, k, rho);
        return py::dict(py::arg("v") = p.v, py::arg("z") = p.z, py::arg("w") = p.w, py::arg("m") = p.m);
    }, py::arg("spectrum"), py::arg("k"), py::arg("rho"));

    m.def("empirical_covariance", py::overload_cast<const Eigen::Ref<const Eigen::MatrixXd>&>(&empirical_covariance),
          py::arg("samples"), "Columns are samples.");
    m.def("top_eigenvectors", &top_eigenvectors, py::arg("m"), py::arg("k"));

    py::class_<RateFit>(m, "RateFit")
        .def_readonly("slope", &RateFit::slope)
        .def_readonly("intercept", &RateFit::intercept)
        .def_readonly("r2", &RateFit::r2)
        .def_readonly("points", &RateFit::points);
    m.def("fit_rate", &fit_rate, py::arg("series"), py::arg("t_lo"), py::arg("t_hi"));

    m.def("run_experiment", [](const py::dict& settings) {
        const ExperimentConfig c = config_from(settings);
        const ExperimentResult r = [&] {
            py::gil_scoped_release release;
            return run_experiment(c);
        }();
        const Schedule& s = r.problem.schedule;
        return py::dict(py::arg("trials") = records_to_python(r), py::arg("t0") = s.t0, py::arg("t1") = s.t1,
                        py::arg("total") = s.total, py::arg("rho") = r.problem.rho);
    }, py::arg("settings"),
          "Runs an experiment from config keys. Returns per-trial metric columns and the resolved schedule.");

    m.def("lower_bound_sweep", [](const py::dict& settings) {
        const LowerBoundSweep sweep = lower_bound_settings(config_from(settings, false));
        std::vector<LowerBoundRow> rows;
        {
            py::gil_scoped_release release;
            rows = lower_bound_sweep(sweep);
        }
        py::list out;
        for (const auto& r : rows)
            out.append(py::dict(py::arg("T") = r.horizon, py::arg("eps") = r.eps, py::arg("mean_error") = r.mean_error,
                                py::arg("error_times_T") = r.error_times_t,
                                py::arg("oja_mean_error") = r.oja_mean_error));
        return out;
    }, py::arg("settings"));
}
