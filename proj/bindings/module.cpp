// Python bindings for the core operations: structure enumeration and
// embedding, structured GKSL models, dataset generation, likelihood and
// training, and the experiment harness.
#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dflearn/algebra.hpp"
#include "dflearn/dynamics.hpp"
#include "dflearn/experiments.hpp"
#include "dflearn/generator.hpp"
#include "dflearn/io.hpp"
#include "dflearn/likelihood.hpp"
#include "dflearn/physmodels.hpp"
#include "dflearn/rng.hpp"
#include "dflearn/training.hpp"

namespace py = pybind11;
using namespace dflearn;
using nlohmann::json;

namespace {

py::object json_to_py(const json& j) {
    switch (j.type()) {
        case json::value_t::null:
            return py::none();
        case json::value_t::boolean:
            return py::bool_(j.get<bool>());
        case json::value_t::number_integer:
            return py::int_(j.get<long long>());
        case json::value_t::number_unsigned:
            return py::int_(j.get<unsigned long long>());
        case json::value_t::number_float:
            return py::float_(j.get<double>());
        case json::value_t::string:
            return py::str(j.get<std::string>());
        case json::value_t::array: {
            py::list out;
            for (const auto& item : j) out.append(json_to_py(item));
            return out;
        }
        case json::value_t::object: {
            py::dict out;
            for (const auto& [key, value] : j.items()) out[py::str(key)] = json_to_py(value);
            return out;
        }
        default:
            throw std::runtime_error("unsupported JSON value");
    }
}

json py_to_json(const py::handle& obj) {
    if (obj.is_none()) return nullptr;
    if (py::isinstance<py::bool_>(obj)) return obj.cast<bool>();
    if (py::isinstance<py::int_>(obj)) return obj.cast<long long>();
    if (py::isinstance<py::float_>(obj)) return obj.cast<double>();
    if (py::isinstance<py::str>(obj)) return obj.cast<std::string>();
    if (py::isinstance<py::list>(obj) || py::isinstance<py::tuple>(obj)) {
        json out = json::array();
        for (const auto& item : obj) out.push_back(py_to_json(item));
        return out;
    }
    if (py::isinstance<py::dict>(obj)) {
        json out = json::object();
        for (const auto& item : obj.cast<py::dict>())
            out[item.first.cast<std::string>()] = py_to_json(item.second);
        return out;
    }
    throw py::type_error("value is not convertible to JSON");
}

generator::GkslModel make_random_model(const algebra::AlgebraStructure& s, int lindblads,
                                       double scale, std::uint64_t seed) {
    auto eng = rng::make_engine(seed);
    const int count =
        lindblads > 0 ? lindblads : generator::GkslModel::default_lindblad_count(s);
    return physmodels::random_structured_model(s, count, scale, eng);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Learning decoherence-free algebra structures of monitored quantum dynamics";
    m.attr("__version__") = "0.1.0";

    py::register_exception<experiments::ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<experiments::NumericalError>(m, "NumericalError",
                                                        PyExc_RuntimeError);

    py::class_<algebra::AlgebraStructure>(m, "Structure")
        .def(py::init([](int n0, const std::vector<std::pair<int, int>>& blocks) {
                 algebra::AlgebraStructure s{n0, blocks};
                 s.validate();
                 return s;
             }),
             py::arg("n0"), py::arg("blocks"))
        .def_readonly("n0", &algebra::AlgebraStructure::n0)
        .def_readonly("blocks", &algebra::AlgebraStructure::blocks)
        .def("dim", &algebra::AlgebraStructure::dim)
        .def("canonical", &algebra::AlgebraStructure::canonical)
        .def("label", &algebra::AlgebraStructure::to_string)
        .def("__repr__", &algebra::AlgebraStructure::to_string)
        .def("__eq__",
             [](const algebra::AlgebraStructure& a, const algebra::AlgebraStructure& b) {
                 return a.n0 == b.n0 && a.blocks == b.blocks;
             })
        .def("__hash__", [](const algebra::AlgebraStructure& s) {
            return py::hash(py::str(s.to_string()));
        });

    m.def("enumerate_structures", &algebra::enumerate_structures, py::arg("n"),
          py::arg("up_to_permutation") = true, py::arg("allow_n0") = false,
          "All block structures of total dimension n.");

    m.def(
        "is_embedded",
        [](const algebra::AlgebraStructure& sub,
           const algebra::AlgebraStructure& super) -> std::optional<IntMatrix> {
            const auto witness = algebra::is_embedded(sub, super);
            if (!witness) return std::nullopt;
            return witness->multiplicities;
        },
        py::arg("sub"), py::arg("super"),
        "Multiplicity matrix embedding `sub` into `super`, or None.");

    m.def(
        "hierarchy",
        [](const std::vector<algebra::AlgebraStructure>& structures) {
            const auto dag = algebra::hierarchy_dag(structures);
            py::dict out;
            out["edges"] = dag.edges;
            out["topological_order"] = dag.topological_order();
            out["dot"] = dag.to_dot();
            return out;
        },
        py::arg("structures"), "Transitively reduced embedding order.");

    py::class_<generator::GkslModel>(m, "Model")
        .def_readonly("structure", &generator::GkslModel::structure)
        .def("dim", &generator::GkslModel::dim)
        .def("lindblad_count", &generator::GkslModel::lindblad_count)
        .def("__repr__", [](const generator::GkslModel& model) {
            return "Model(" + model.structure.to_string() + ", J=" +
                   std::to_string(model.lindblad_count()) + ")";
        });

    m.def("random_model", &make_random_model, py::arg("structure"),
          py::arg("lindblad_count") = 0, py::arg("scale") = 0.4, py::arg("seed") = 1,
          "Random GKSL model whose dynamics leaves the structure decoherence free.");

    m.def(
        "operators",
        [](const generator::GkslModel& model) {
            const auto ops = generator::assemble_operators(model);
            return py::make_tuple(ops.hamiltonian, ops.lindblads);
        },
        py::arg("model"), "Hamiltonian and Lindblad operators in the working basis.");

    m.def(
        "effective_hamiltonian",
        [](const generator::GkslModel& model) { return generator::effective_hamiltonian(model); },
        py::arg("model"));

    m.def(
        "propagate",
        [](const generator::GkslModel& model, const Matrix& rho, double tau) {
            return generator::apply(generator::make_propagator(model, tau), rho);
        },
        py::arg("model"), py::arg("rho"), py::arg("tau"),
        "Evolve a density matrix for time tau.");

    m.def(
        "verify_cptp",
        [](const generator::GkslModel& model, double tau, double trace_tol, double choi_tol) {
            const auto report =
                generator::verify_cptp(generator::make_propagator(model, tau), trace_tol,
                                       choi_tol);
            py::dict out;
            out["trace_deviation"] = report.trace_deviation;
            out["choi_min_eigenvalue"] = report.choi_min_eigenvalue;
            out["pass"] = report.pass;
            return out;
        },
        py::arg("model"), py::arg("tau"), py::arg("trace_tol") = 1e-9,
        py::arg("choi_tol") = 1e-8);

    m.def(
        "verify_decoherence_free",
        [](const generator::GkslModel& model, const std::vector<double>& times, int samples,
           double tol) {
            const auto report = generator::verify_decoherence_free(model, times, samples, tol);
            py::dict out;
            out["max_multiplicative_residual"] = report.max_multiplicative_residual;
            out["max_unitary_residual"] = report.max_unitary_residual;
            out["pass"] = report.pass;
            return out;
        },
        py::arg("model"), py::arg("times"), py::arg("samples") = 6, py::arg("tol") = 1e-8);

    m.def(
        "waveguide_operators",
        [](double gamma, double r, double theta, int atoms) {
            physmodels::WaveguideParams params;
            params.gamma = gamma;
            params.r = r;
            params.theta = theta;
            params.atoms = atoms;
            const auto ops = physmodels::waveguide_operators(params);
            return py::make_tuple(ops.hamiltonian, ops.lindblads);
        },
        py::arg("gamma") = 1.0, py::arg("r") = 0.0, py::arg("theta") = 0.0,
        py::arg("atoms") = 3, "Atoms coupled to a squeezed waveguide field.");

    py::class_<dynamics::Dataset>(m, "Dataset")
        .def_readonly("n", &dynamics::Dataset::n)
        .def_readonly("tau", &dynamics::Dataset::tau)
        .def("size", &dynamics::Dataset::size)
        .def("save", [](const dynamics::Dataset& data,
                        const std::string& path) { io::save_dataset(path, data); })
        .def("__repr__", [](const dynamics::Dataset& data) {
            return "Dataset(n=" + std::to_string(data.n) + ", chains=" +
                   std::to_string(data.size()) + ")";
        });

    m.def("load_dataset", &io::load_dataset, py::arg("path"));

    m.def(
        "generate_dataset",
        [](const generator::GkslModel& model, int chains, int length, double tau,
           std::uint64_t seed) {
            return dynamics::generate_dataset(model, generator::model_basis(model), chains,
                                              length, tau, seed);
        },
        py::arg("model"), py::arg("chains"), py::arg("length"), py::arg("tau"),
        py::arg("seed"), "Sample measurement chains from the model's own basis.");

    m.def(
        "log_likelihood",
        [](const generator::GkslModel& model, const dynamics::Dataset& data) {
            return likelihood::batch_log_likelihood(likelihood::pack(model), data);
        },
        py::arg("model"), py::arg("data"),
        "Mean per-step log likelihood of the dataset under the model.");

    m.def(
        "train",
        [](const algebra::AlgebraStructure& structure, const dynamics::Dataset& train_data,
           const dynamics::Dataset& test_data, int epochs, int restarts, double learning_rate,
           std::uint64_t seed) {
            training::TrainConfig cfg;
            cfg.epochs = epochs;
            cfg.restarts = restarts;
            cfg.learning_rate = learning_rate;
            cfg.seed = seed;
            const auto report = training::train(structure, cfg, train_data, test_data);
            return json_to_py(io::train_report_to_json(report));
        },
        py::arg("structure"), py::arg("train_data"), py::arg("test_data"),
        py::arg("epochs") = 300, py::arg("restarts") = 3, py::arg("learning_rate") = 1e-2,
        py::arg("seed") = 0, "Fit the structure by maximum likelihood; returns the report.");

    m.def(
        "run_experiment",
        [](const std::string& command, const py::dict& options, const std::string& out_dir,
           std::uint64_t seed, int jobs, double scale, bool full) {
            experiments::ExperimentConfig cfg;
            cfg.command = command;
            cfg.options = py_to_json(options);
            cfg.out_dir = out_dir;
            cfg.seed = seed;
            cfg.jobs = jobs;
            cfg.scale = scale;
            cfg.full = full;
            return json_to_py(experiments::run_experiment(cfg));
        },
        py::arg("command"), py::arg("options") = py::dict(), py::arg("out_dir") = ".",
        py::arg("seed") = 1, py::arg("jobs") = 1, py::arg("scale") = 1.0,
        py::arg("full") = false,
        "Run one experiment command, writing its outputs and manifest to out_dir.");
}
