#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "rbsde/cli/runner.hpp"
#include "rbsde/envelope_flow.hpp"
#include "rbsde/error.hpp"
#include "rbsde/pasting.hpp"
#include "rbsde/solver.hpp"
#include "rbsde/uniqueness.hpp"

namespace py = pybind11;
using namespace rbsde;

namespace {

using Release = py::call_guard<py::gil_scoped_release>;

py::array_t<double> to_array(std::span<const double> values) {
  return py::array_t<double>(static_cast<py::ssize_t>(values.size()), values.data());
}

/// A barrier or terminal given as a constant, a callable f(t, b) or an array.
LatticeProcess process_from(const Lattice& lat, const py::object& source, const char* what) {
  if (py::isinstance<py::float_>(source) || py::isinstance<py::int_>(source)) {
    return LatticeProcess(lat, source.cast<double>());
  }
  if (PyCallable_Check(source.ptr())) {
    return process_from_function(lat, [&](double t, double b) { return source(t, b).cast<double>(); });
  }
  const auto arr = source.cast<py::array_t<double, py::array::c_style | py::array::forcecast>>();
  if (arr.ndim() != 1 || static_cast<std::size_t>(arr.size()) != lat.node_count()) {
    fail(ErrorKind::Data, std::string(what) + " array must hold one value per lattice node");
  }
  LatticeProcess p(lat);
  std::copy(arr.data(), arr.data() + arr.size(), p.raw().begin());
  return p;
}

std::vector<double> terminal_from(const Lattice& lat, const py::object& source) {
  std::vector<double> out(lat.steps() + 1);
  if (py::isinstance<py::float_>(source) || py::isinstance<py::int_>(source)) {
    std::fill(out.begin(), out.end(), source.cast<double>());
  } else if (PyCallable_Check(source.ptr())) {
    for (int j = 0; j <= lat.steps(); ++j) {
      out[j] = source(lat.horizon(), lat.brownian(lat.steps(), j)).cast<double>();
    }
  } else {
    out = source.cast<std::vector<double>>();
    if (out.size() != static_cast<std::size_t>(lat.steps() + 1)) {
      fail(ErrorKind::Data, "terminal array must hold steps + 1 values");
    }
  }
  return out;
}

ProblemData make_problem(double horizon, int steps, const GeneratorSpec& g, const py::object& terminal,
                         const py::object& lower, const py::object& upper) {
  const Lattice lat(horizon, steps);
  auto lo = std::make_shared<LatticeProcess>(process_from(lat, lower, "lower"));
  ProcessPtr up;
  if (!upper.is_none()) up = std::make_shared<LatticeProcess>(process_from(lat, upper, "upper"));
  ProblemData data{lat, terminal_from(lat, terminal), g, lo, up};
  validate_problem_data(lat, data.terminal, data.lower, data.upper);
  return data;
}

EnvelopeDirection direction_from(const std::string& name) {
  if (name == "lower") return EnvelopeDirection::Lower;
  if (name == "upper") return EnvelopeDirection::Upper;
  fail(ErrorKind::InvalidConfig, "envelope direction must be 'lower' or 'upper'");
}

py::dict residual_dict(const ResidualReport& r) {
  py::dict d;
  d["equation_max"] = r.equation_max;
  d["flatoff_max"] = r.flatoff_max;
  d["barrier_violation_max"] = r.barrier_violation_max;
  d["negative_push_max"] = r.negative_push_max;
  d["push_product_max"] = r.push_product_max;
  d["terminal_mismatch_max"] = r.terminal_mismatch_max;
  d["skorokhod_exact"] = r.skorokhod_exact();
  return d;
}

py::dict pasting_dict(const PastingReport& r, const PastedSolution& sol) {
  py::dict d;
  d["k0"] = sol.k0;
  d["eta"] = sol.eta;
  d["max_forward_states"] = sol.max_forward_states;
  d["eta_mismatch_max"] = r.eta_mismatch_max;
  d["off_crossing_residual_max"] = r.off_crossing_residual_max;
  d["crossing_residual_max"] = r.crossing_residual_max;
  d["crossing_states"] = r.crossing_states;
  d["flatoff_max"] = r.flatoff_max;
  d["barrier_violation_max"] = r.barrier_violation_max;
  d["band_violation_max"] = r.band_violation_max;
  d["forward_push_max"] = r.forward_push_max;
  d["terminal_mismatch_max"] = r.terminal_mismatch_max;
  d["forward_states_at_terminal"] = r.forward_states_at_terminal;
  d["total_states"] = r.total_states;
  d["min_band_margin"] = r.min_band_margin;
  return d;
}

PYBIND11_CONSTINIT py::gil_safe_call_once_and_store<py::object> error_type;

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Lattice solvers for reflected BSDEs with non-Lipschitz generators";

  error_type.call_once_and_store_result([&] { return py::object(py::exception<Error>(m, "RbsdeError")); });
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      const py::object& cls = error_type.get_stored();
      py::object inst = cls(e.what());
      inst.attr("kind") = to_string(e.kind());
      PyErr_SetObject(cls.ptr(), inst.ptr());
    }
  });

  py::class_<Lattice>(m, "Lattice")
      .def(py::init<double, int>(), py::arg("horizon"), py::arg("steps"))
      .def_property_readonly("horizon", &Lattice::horizon)
      .def_property_readonly("steps", &Lattice::steps)
      .def_property_readonly("dt", &Lattice::dt)
      .def_property_readonly("node_count", &Lattice::node_count)
      .def("time", &Lattice::time, py::arg("k"))
      .def("brownian", &Lattice::brownian, py::arg("k"), py::arg("j"))
      .def("weights", &Lattice::weights, py::arg("k"));

  py::class_<GeneratorSpec>(m, "Generator")
      .def_readonly("name", &GeneratorSpec::name)
      .def_readonly("beta", &GeneratorSpec::beta)
      .def_readonly("depends_on_y", &GeneratorSpec::depends_on_y)
      .def_readonly("lipschitz", &GeneratorSpec::lipschitz)
      .def_property_readonly("mu", &GeneratorSpec::mu)
      .def("__call__", &GeneratorSpec::operator(), py::arg("t"), py::arg("y"), py::arg("z"))
      .def("__repr__", [](const GeneratorSpec& g) { return "<Generator " + g.name + ">"; });

  m.def("generator", &generators::by_name, py::arg("name"), py::arg("a") = 0.0, py::arg("b") = 0.0,
        py::arg("c") = 0.0, "Built-in generator: zero, affine, abs_z, sqrt_z or sqrt_y");
  m.def("shifted", &generators::shifted, py::arg("generator"), py::arg("c"));

  py::class_<EnvelopeGenerator>(m, "Envelope")
      .def(py::init([](const GeneratorSpec& g, double n, const std::string& dir, double h, bool analytic) {
             return EnvelopeGenerator(g, n, direction_from(dir), h, analytic);
           }),
           py::arg("generator"), py::arg("n"), py::arg("direction"), py::arg("h") = 1e-4,
           py::arg("allow_analytic") = true)
      .def_property_readonly("n", &EnvelopeGenerator::n)
      .def_property_readonly("is_analytic", &EnvelopeGenerator::is_analytic)
      .def_property_readonly("slack", &EnvelopeGenerator::evaluation_slack)
      .def("__call__", &EnvelopeGenerator::operator(), py::arg("t"), py::arg("y"), py::arg("z"));
  m.def("envelope_gap_bound", &envelope_gap_bound, py::arg("generator"), py::arg("n"));

  py::class_<ProblemData>(m, "Problem")
      .def(py::init(&make_problem), py::arg("horizon"), py::arg("steps"), py::arg("generator"),
           py::arg("terminal"), py::arg("lower"), py::arg("upper") = py::none(),
           "Terminal, lower and upper accept a constant, a callable f(t, b) or an array")
      .def_readonly("lattice", &ProblemData::lattice)
      .def_readonly("generator", &ProblemData::generator)
      .def_property_readonly("terminal", [](const ProblemData& d) { return to_array(d.terminal); })
      .def_property_readonly("two_barrier", &ProblemData::two_barrier);

  py::class_<RBSDESolution>(m, "Solution")
      .def_property_readonly("y0", &RBSDESolution::y0)
      .def_property_readonly("steps", [](const RBSDESolution& s) { return s.lattice().steps(); })
      .def_property_readonly("scheme", [](const RBSDESolution& s) { return std::string(to_string(s.scheme)); })
      .def_readonly("stability_ok", &RBSDESolution::stability_ok)
      .def("y", [](const RBSDESolution& s, int k) { return to_array(s.y.step(k)); }, py::arg("k"))
      .def("z", [](const RBSDESolution& s, int k) { return to_array(s.z.step(k)); }, py::arg("k"))
      .def("dk_plus", [](const RBSDESolution& s, int k) { return to_array(s.dk_plus.step(k)); }, py::arg("k"))
      .def(
          "dk_minus",
          [](const RBSDESolution& s, int k) -> py::object {
            if (!s.dk_minus) return py::none();
            return to_array(s.dk_minus->step(k));
          },
          py::arg("k"))
      .def_property_readonly("k_plus_mean", [](const RBSDESolution& s) { return expected_total_push(s.dk_plus); })
      .def("to_csv", &write_solution_csv, py::arg("path"));

  m.def(
      "solve",
      [](const ProblemData& data, const std::string& scheme, std::optional<double> envelope_n,
         const std::string& direction, double h) {
        Driver driver = envelope_n ? make_driver(EnvelopeGenerator(data.generator, *envelope_n,
                                                                   direction_from(direction), h))
                                   : make_driver(data.generator);
        const RBSDEProblem problem(data, std::move(driver));
        SolverOptions options;
        options.scheme = scheme_from_string(scheme);
        RBSDESolution sol = solve_backward(problem, options);
        ResidualReport report = residual_check(problem, sol);
        return std::make_pair(std::move(sol), report);
      },
      py::arg("problem"), py::arg("scheme") = "explicit", py::arg("envelope_n") = py::none(),
      py::arg("direction") = "lower", py::arg("h") = 1e-4, Release(),
      "Solve with the generator itself or with one of its envelopes; returns (solution, residual report)");
  m.def(
      "residual",
      [](const ProblemData& data, const RBSDESolution& sol) {
        return residual_dict(residual_check(RBSDEProblem(data, make_driver(data.generator)), sol));
      },
      py::arg("problem"), py::arg("solution"));
  py::class_<ResidualReport>(m, "ResidualReport")
      .def("as_dict", &residual_dict)
      .def_property_readonly("skorokhod_exact", &ResidualReport::skorokhod_exact)
      .def_readonly("equation_max", &ResidualReport::equation_max)
      .def_readonly("flatoff_max", &ResidualReport::flatoff_max);

  m.def(
      "compare",
      [](const RBSDESolution& a, const RBSDESolution& b) {
        const auto r = check_comparison(a, b);
        py::dict d;
        d["min_y_difference"] = r.min_y_difference;
        d["y_violations"] = r.y_violations;
        d["barriers_equal"] = r.barriers_equal;
        d["k_violations"] = r.k_violations;
        return d;
      },
      py::arg("a"), py::arg("b"), "Check a >= b node by node and, with equal barriers, the push ordering");

  py::class_<FlowLevel>(m, "FlowLevel")
      .def_readonly("n", &FlowLevel::n)
      .def_readonly("y_lower_0", &FlowLevel::y_lower_0)
      .def_readonly("y_upper_0", &FlowLevel::y_upper_0)
      .def_readonly("bound", &FlowLevel::bound)
      .def_readonly("stability_ok", &FlowLevel::stability_ok)
      .def_readonly("slack", &FlowLevel::slack)
      .def_property_readonly("gap_curve", [](const FlowLevel& l) { return to_array(l.gap_curve); });

  py::class_<EnvelopeFlowResult>(m, "EnvelopeFlow")
      .def_readonly("levels", &EnvelopeFlowResult::levels)
      .def_readonly("skipped", &EnvelopeFlowResult::skipped)
      .def_readonly("warnings", &EnvelopeFlowResult::warnings)
      .def_readonly("lower", &EnvelopeFlowResult::lower)
      .def_readonly("upper", &EnvelopeFlowResult::upper)
      .def_property_readonly("final_level", &EnvelopeFlowResult::final_level);

  m.def(
      "solve_extremal",
      [](const ProblemData& data, std::vector<double> n_schedule, double h, bool parallel) {
        FlowOptions o;
        o.n_schedule = std::move(n_schedule);
        o.h = h;
        o.parallel_pair = parallel;
        return solve_extremal(data, o);
      },
      py::arg("problem"), py::arg("n_schedule") = std::vector<double>{4, 8, 16, 32, 64}, py::arg("h") = 1e-4,
      py::arg("parallel") = false, Release());

  m.def(
      "paste",
      [](const ProblemData& data, const EnvelopeFlowResult& flow, int k0, const std::string& eta_rule,
         double eta_value, double z2, int subtree_cap) {
        PastingPlan plan;
        plan.k0 = k0 < 0 ? data.lattice.steps() / 2 : k0;
        plan.eta = eta_from_rule(flow, plan.k0, eta_rule_from_string(eta_rule), eta_value);
        plan.z2 = z2;
        plan.subtree_cap = subtree_cap;
        PastedSolution sol;
        PastingReport rep;
        {
          py::gil_scoped_release release;
          sol = build_intermediate_solution(data, flow, plan);
          rep = verify_pasted(data, flow, sol);
        }
        return pasting_dict(rep, sol);
      },
      py::arg("problem"), py::arg("flow"), py::arg("k0") = -1, py::arg("eta_rule") = "midpoint",
      py::arg("eta_value") = 0.0, py::arg("z2") = 0.0, py::arg("subtree_cap") = 20,
      "Build an intermediate solution between the extremal pair and return its verification report");

  py::class_<MCurve>(m, "MCurve")
      .def_readonly("c_grid", &MCurve::c_grid)
      .def_readonly("times", &MCurve::times)
      .def_readonly("m_lower", &MCurve::m_lower)
      .def_readonly("m_upper", &MCurve::m_upper)
      .def_readonly("gap", &MCurve::gap)
      .def_readonly("n_max", &MCurve::n_max)
      .def_readonly("slack", &MCurve::slack);

  m.def(
      "m_curves",
      [](const ProblemData& data, std::vector<double> c_grid, double n_max, double h, int jobs) {
        FlowOptions o;
        o.h = h;
        return compute_m_curves(data, std::move(c_grid), n_max, o, jobs);
      },
      py::arg("problem"), py::arg("c_grid"), py::arg("n_max"), py::arg("h") = 1e-4, py::arg("jobs") = 1, Release());

  m.def(
      "scan",
      [](const MCurve& curve, double tol, double monotone_slack) {
        const auto s = scan_nonuniqueness(curve, tol);
        const auto mono = check_m_monotone(curve, monotone_slack);
        py::dict d;
        d["flagged"] = s.flagged;
        d["tol"] = s.tol;
        d["slack"] = s.slack;
        d["n_max"] = s.n_max;
        d["note"] = s.note;
        d["monotone_violations"] = mono.violations;
        d["monotone_max_violation"] = mono.max_violation;
        return d;
      },
      py::arg("curve"), py::arg("tol") = 0.05, py::arg("monotone_slack") = 1e-9);

  m.def(
      "certificate",
      [](const ProblemData& data, std::vector<double> n_schedule, double target_eps, double slack) {
        FlowOptions o;
        o.n_schedule = std::move(n_schedule);
        CertificateReport r;
        {
          py::gil_scoped_release release;
          r = uniqueness_certificate(data, o, target_eps, slack);
        }
        py::list levels;
        for (const auto& l : r.levels) {
          py::dict d;
          d["n"] = l.n;
          d["measured_gap0"] = l.measured_gap0;
          d["bound"] = l.bound;
          d["within"] = l.within;
          levels.append(d);
        }
        py::dict d;
        d["verdict"] = r.verdict;
        d["target_eps"] = r.target_eps;
        d["slack"] = r.slack;
        d["levels"] = levels;
        return d;
      },
      py::arg("problem"), py::arg("n_schedule") = std::vector<double>{4, 8, 16, 32, 64},
      py::arg("target_eps") = 0.3, py::arg("slack") = 1e-9);

  m.def(
      "run_config",
      [](const std::string& path, const std::string& out_dir, bool strict, int jobs) {
        cli::RunOptions o{out_dir, strict, jobs};
        cli::RunResult r;
        {
          py::gil_scoped_release release;
          r = cli::run_config_file(path, o);
        }
        py::dict d;
        d["exit_code"] = r.exit_code;
        d["out_dir"] = r.out_dir;
        d["files"] = r.files;
        d["warnings"] = r.warnings;
        d["error"] = r.error_json;
        return d;
      },
      py::arg("path"), py::arg("out_dir") = "", py::arg("strict") = false, py::arg("jobs") = 1,
      "Run an INI experiment config exactly as the command line tool does");
}
