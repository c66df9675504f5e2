#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "copiv/cli.hpp"
#include "copiv/copulas.hpp"
#include "copiv/dgp.hpp"
#include "copiv/errors.hpp"
#include "copiv/estimate.hpp"
#include "copiv/functionals.hpp"
#include "copiv/gauss.hpp"
#include "copiv/ident.hpp"
#include "copiv/serialize.hpp"

namespace py = pybind11;
using namespace copiv;

namespace {

// Dicts cross the boundary as JSON text.
json to_cpp(const py::object& o) {
    return json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}
py::object to_py(const json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

Dataset make_dataset(std::vector<double> y, std::vector<double> d, std::vector<double> z,
                     std::optional<Eigen::MatrixXd> x) {
    Dataset D;
    D.y = std::move(y);
    D.d = std::move(d);
    D.z = std::move(z);
    D.x = x ? *x : Eigen::MatrixXd(static_cast<Eigen::Index>(D.y.size()), 0);
    D.validate();
    return D;
}

py::dict ident_dict(const IdentSolution& s) {
    py::dict r;
    r["F"] = s.F;
    r["rho"] = s.rho;
    r["residual"] = s.diag.residual;
    r["p_matrix"] = s.diag.p_matrix;
    r["boundary"] = s.diag.boundary;
    return r;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Copula-invariance IV estimation core";
    m.attr("__version__") = COPIV_VERSION;

    py::register_exception<Error>(m, "CopivError", PyExc_RuntimeError);

    m.def("Phi2", &Phi2, py::arg("x"), py::arg("y"), py::arg("rho"));
    m.def(
        "copula",
        [](const std::string& family, double u, double v, double rho) {
            return C(family_from_string(family), u, v, rho);
        },
        py::arg("family"), py::arg("u"), py::arg("v"), py::arg("rho"));
    m.def(
        "solve_rho",
        [](const std::string& family, double t, double u, double v) {
            const RhoSolution s = solve_rho(family_from_string(family), t, u, v);
            return py::make_tuple(s.rho, s.boundary);
        },
        py::arg("family"), py::arg("t"), py::arg("u"), py::arg("v"),
        "Local dependence rho with C(u, v; rho) = t; returns (rho, boundary).");

    m.def(
        "solve_binary",
        [](int d, std::array<double, 2> p, std::array<double, 2> pi) { return ident_dict(solve_binary(d, p, pi)); },
        py::arg("d"), py::arg("p"), py::arg("pi"));
    m.def(
        "solve_ordered",
        [](std::array<double, 2> g, std::array<double, 2> lo, std::array<double, 2> hi) {
            return ident_dict(solve_ordered(g, lo, hi));
        },
        py::arg("g"), py::arg("lower"), py::arg("upper"));
    m.def(
        "solve_continuous",
        [](double a0, double a1, double v0, double v1) {
            const ContinuousSolution s = solve_continuous(a0, a1, v0, v1);
            return py::make_tuple(s.F, s.rho);
        },
        py::arg("FyDZ0"), py::arg("FyDZ1"), py::arg("FD0"), py::arg("FD1"));

    m.def(
        "simulate",
        [](const py::object& dgp, std::size_t n, std::uint64_t seed, int threads) {
            const SimulatedData s = simulate(dgp_from_json(to_cpp(dgp)), n, seed, threads);
            py::dict r;
            r["y"] = s.data.y;
            r["d"] = s.data.d;
            r["z"] = s.data.z;
            r["x"] = s.data.x;
            return r;
        },
        py::arg("dgp"), py::arg("n"), py::arg("seed"), py::arg("threads") = 1);
    m.def(
        "true_qsf",
        [](const py::object& dgp, double d, double tau) { return true_qsf(dgp_from_json(to_cpp(dgp)), d, tau); },
        py::arg("dgp"), py::arg("d"), py::arg("tau"));
    m.def(
        "true_cdf",
        [](const py::object& dgp, double d, double y) { return true_cdf(dgp_from_json(to_cpp(dgp)), d, y); },
        py::arg("dgp"), py::arg("d"), py::arg("y"));

    m.def(
        "fit",
        [](const std::string& kind, std::vector<double> y, std::vector<double> d, std::vector<double> z,
           std::optional<Eigen::MatrixXd> x, std::vector<double> y_grid, std::vector<double> d_grid, int threads) {
            const Dataset D = make_dataset(std::move(y), std::move(d), std::move(z), std::move(x));
            EstimateOptions o;
            o.y_grid = std::move(y_grid);
            o.d_grid = std::move(d_grid);
            o.threads = threads;
            const PotentialOutcomeFit f = copiv::fit(treatment_from_string(kind), D, o);
            const MarginalCDF M = marginalize(f);
            py::dict r;
            r["y_grid"] = M.grid;
            r["levels"] = M.levels;
            r["F"] = M.F;
            std::vector<Eigen::MatrixXd> rho;
            for (const LevelFit& lf : f.levels) rho.push_back(lf.rho);
            r["rho"] = rho;
            r["warnings"] = f.warnings;
            return r;
        },
        py::arg("kind"), py::arg("y"), py::arg("d"), py::arg("z"), py::arg("x") = py::none(),
        py::arg("y_grid") = std::vector<double>{}, py::arg("d_grid") = std::vector<double>{},
        py::arg("threads") = 1,
        "Fit F_{Y_d} and the local dependence; F is levels x y_grid.");

    m.def(
        "run",
        [](const std::string& command, const py::object& config) {
            const json cfg = to_cpp(config);
            json out;
            if (command == "estimate")
                out = cmd_estimate(cfg);
            else if (command == "simulate")
                out = cmd_simulate(cfg);
            else if (command == "coverage")
                out = cmd_coverage(cfg);
            else if (command == "check")
                out = cmd_check(cfg);
            else
                throw ConfigError("unknown command '" + command + "'");
            return to_py(out);
        },
        py::arg("command"), py::arg("config"), "Run a CLI command on a configuration dict.");
}
