#include "nslab/cli.hpp"
#include "nslab/config.hpp"
#include "nslab/diagnostics.hpp"
#include "nslab/fixtures.hpp"
#include "nslab/hoermander.hpp"
#include "nslab/parallel.hpp"
#include "nslab/scheme.hpp"
#include "nslab/semigroup.hpp"

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <filesystem>

namespace py = pybind11;
using namespace nslab;

namespace {

/// (components, *shape) copy of a field.
py::array_t<double> to_array(const Field& f)
{
    std::vector<py::ssize_t> shape{f.components()};
    for (int n : f.domain().shape())
        shape.push_back(n);
    py::array_t<double> out(shape);
    std::copy(f.data().begin(), f.data().end(), out.mutable_data());
    return out;
}

// JSON crosses the boundary as text; the Python side decodes it.
py::object from_json(const nlohmann::json& j)
{
    return py::module_::import("json").attr("loads")(j.dump());
}

HormanderSystem system_of(const std::string& spec)
{
    if (std::filesystem::exists(spec))
        return load_system(spec);
    if (!spec.empty() && spec.front() == '{')
        return parse_system(spec);
    return HormanderSystem::builtin(spec);
}

RunConfig config_of(const std::string& path_or_text, std::optional<std::uint64_t> seed,
                    std::optional<std::string> strategy)
{
    RunConfig cfg = !path_or_text.empty() && path_or_text.front() == '{' ? parse_config_text(path_or_text)
                                                                          : load_config(path_or_text);
    if (seed)
        override_seed(cfg, *seed);
    if (strategy)
        override_strategy(cfg, *strategy);
    return cfg;
}

} // namespace

PYBIND11_MODULE(_core, m)
{
    m.doc() = "Picard-Leray scheme for Navier-Stokes with Hormander diffusions";
    m.attr("__version__") = tool_version;

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

    m.def("set_threads", &set_thread_budget, py::arg("threads"));
    m.def("threads", &thread_budget);

    m.def(
        "hormander_check",
        [](const std::string& system, int depth, int samples, double half_width) {
            const HormanderSystem sys = system_of(system);
            const int n = sys.dim();
            const auto rep = check_condition(sys, Domain::box(std::vector<int>(n, 8), std::vector<double>(n, half_width)),
                                             samples, depth);
            py::dict d;
            d["system"] = sys.name();
            d["pass"] = rep.pass;
            d["points"] = rep.points;
            d["worst_rank"] = rep.worst_rank;
            d["max_depth_used"] = rep.max_depth_used;
            d["depth_histogram"] = rep.depth_histogram;
            d["witnesses"] = rep.witnesses;
            return d;
        },
        py::arg("system"), py::arg("depth") = 3, py::arg("samples") = 100, py::arg("half_width") = 1.0);

    m.def(
        "run",
        [](const std::string& config, std::optional<std::uint64_t> seed, std::optional<std::string> strategy) {
            const RunConfig cfg = config_of(config, seed, strategy);
            Trajectory traj;
            {
                py::gil_scoped_release release;
                traj = run_global(cfg.scheme);
            }
            py::dict d;
            d["report"] = from_json(traj.report());
            d["t"] = traj.t;
            py::list v, vr, r;
            for (std::size_t l = 0; l < traj.steps(); ++l) {
                v.append(to_array(traj.v[l]));
                vr.append(to_array(traj.v_controlled[l]));
                r.append(to_array(traj.r[l]));
            }
            d["v"] = v;
            d["v_controlled"] = vr;
            d["r"] = r;
            d["ledger_csv"] = ledger_csv(traj.ledger);
            return d;
        },
        py::arg("config"), py::arg("seed") = py::none(), py::arg("strategy") = py::none(),
        "Runs the global scheme from a config path or JSON text.");

    m.def(
        "taylor_green",
        [](int points, double nu, double t, double amplitude) {
            const double L = 2.0 * 3.141592653589793;
            return to_array(taylor_green(Domain::torus({points, points}, {L, L}), nu, t, amplitude));
        },
        py::arg("points"), py::arg("nu"), py::arg("t"), py::arg("amplitude") = 1.0);

    m.def(
        "sample_paths",
        [](const std::string& system, std::vector<double> x0, double tau, int steps, int N, std::uint64_t seed) {
            const SampleSet s = euler_maruyama_sample(system_of(system), x0, tau, steps, N, seed);
            py::array_t<double> out({static_cast<py::ssize_t>(s.points.rows()), static_cast<py::ssize_t>(s.points.cols())});
            auto w = out.mutable_unchecked<2>();
            for (Eigen::Index i = 0; i < s.points.rows(); ++i)
                for (Eigen::Index j = 0; j < s.points.cols(); ++j)
                    w(i, j) = s.points(i, j);
            return out;
        },
        py::arg("system"), py::arg("x0"), py::arg("tau"), py::arg("steps"), py::arg("N"), py::arg("seed"),
        "Euler-Maruyama endpoints, one row per sample.");

    m.def(
        "decay_budget_check",
        [](int n, double q, double m_exp, double n_exp) { return from_json(decay_budget_check(n, q, m_exp, n_exp).to_json()); },
        py::arg("n"), py::arg("q"), py::arg("m_exp"), py::arg("n_exp"));

    m.def(
        "growth_regression",
        [](const std::vector<double>& x, const std::vector<double>& y, const std::string& model) {
            GrowthModel g;
            if (model == "linear")
                g = GrowthModel::linear;
            else if (model == "sqrt")
                g = GrowthModel::sqrt;
            else if (model == "constant")
                g = GrowthModel::constant;
            else
                throw std::invalid_argument("model must be linear, sqrt or constant");
            return from_json(growth_regression(x, y, g).to_json());
        },
        py::arg("x"), py::arg("y"), py::arg("model"));
}
