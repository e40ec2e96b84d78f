#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <string>

#include "etmhe/batch_reactor.hpp"
#include "etmhe/config.hpp"
#include "etmhe/errors.hpp"
#include "etmhe/ioss.hpp"
#include "etmhe/simulation.hpp"

namespace py = pybind11;
using namespace etmhe;

namespace {

// Columns of a trace as a dict of numpy arrays.
py::dict trace_to_dict(const SimTrace& trace) {
  const auto rows = static_cast<Eigen::Index>(trace.rows.size());
  const Eigen::Index n = rows ? trace.rows.front().x.size() : 0;
  const Eigen::Index p = rows ? trace.rows.front().y.size() : 0;
  Matrix x(rows, n), xhat(rows, n), y(rows, p);
  Eigen::VectorXi t(rows), gamma(rows), delta(rows), eps(rows), iters(rows), tx(rows);
  Vector d(rows), err(rows), bound(rows), cost(rows);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const TraceRow& r = trace.rows[static_cast<std::size_t>(i)];
    x.row(i) = r.x.transpose();
    xhat.row(i) = r.xhat.transpose();
    y.row(i) = r.y.transpose();
    t[i] = r.t;
    gamma[i] = r.gamma ? 1 : 0;
    delta[i] = r.delta;
    eps[i] = r.eps;
    iters[i] = r.solver_iters;
    tx[i] = r.tx_count;
    d[i] = r.d;
    err[i] = r.err_norm;
    bound[i] = r.rges_bound;
    cost[i] = r.cost;
  }
  py::dict out;
  out["t"] = t;
  out["x"] = x;
  out["xhat"] = xhat;
  out["y"] = y;
  out["gamma"] = gamma;
  out["delta"] = delta;
  out["eps"] = eps;
  out["d"] = d;
  out["err_norm"] = err;
  out["rges_bound"] = bound;
  out["cost"] = cost;
  out["solver_iters"] = iters;
  out["tx_count"] = tx;
  out["solves"] = trace.solves;
  out["nonconverged"] = trace.nonconverged;
  out["event_fraction"] = trace.event_fraction();
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Event-triggered moving horizon estimation on the batch reactor";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<CertificateError>(m, "CertificateError", PyExc_ValueError);
  py::register_exception<StabilityError>(m, "StabilityError", PyExc_ValueError);

  py::class_<IossCertificate>(m, "IossCertificate")
      .def(py::init<>())
      .def_readwrite("p1", &IossCertificate::p1)
      .def_readwrite("p2", &IossCertificate::p2)
      .def_readwrite("q", &IossCertificate::q)
      .def_readwrite("r", &IossCertificate::r)
      .def_readwrite("eta", &IossCertificate::eta)
      .def("validate", &IossCertificate::validate)
      .def_static("batch_reactor", &IossCertificate::batch_reactor);

  py::class_<SimConfig>(m, "SimConfig")
      .def(py::init<>())
      .def_static("benchmark", &SimConfig::benchmark)
      .def_readwrite("cert", &SimConfig::cert)
      .def_readwrite("horizon", &SimConfig::horizon)
      .def_readwrite("alpha", &SimConfig::alpha)
      .def_readwrite("steps", &SimConfig::steps)
      .def_readwrite("x0", &SimConfig::x0)
      .def_readwrite("xhat0", &SimConfig::xhat0)
      .def_readwrite("seed", &SimConfig::seed)
      .def_readwrite("oracle_mode", &SimConfig::oracle_mode)
      .def_readwrite("warm_start", &SimConfig::warm_start)
      .def_readwrite("allow_short_horizon", &SimConfig::allow_short_horizon)
      .def_property(
          "disturbance_bounds", [](const SimConfig& c) { return c.bounds.b; },
          [](SimConfig& c, const Vector& b) { c.bounds.b = b; })
      .def_property(
          "constrain_disturbances", [](const SimConfig& c) { return c.model.constrain_disturbances; },
          [](SimConfig& c, bool v) { c.model.constrain_disturbances = v; })
      .def("validate", &SimConfig::validate);

  m.def("parse_config", [](const std::string& path) { return parse_config(path); }, py::arg("path"));
  m.def("min_horizon", &min_horizon, py::arg("cert"));
  m.def(
      "rges_constants",
      [](const IossCertificate& cert, double alpha, int horizon) {
        const RgesConstants k = rges_constants(cert, alpha, horizon);
        py::dict out;
        out["c_x"] = k.c_x;
        out["c_w"] = k.c_w;
        out["lambda_x"] = k.lambda_x;
        out["lambda_w"] = k.lambda_w;
        out["rho"] = k.rho;
        return out;
      },
      py::arg("cert"), py::arg("alpha"), py::arg("horizon"));

  m.def(
      "run_closed_loop",
      [](const SimConfig& cfg) {
        SimTrace trace;
        {
          py::gil_scoped_release release;
          trace = run_closed_loop(cfg);
        }
        return trace_to_dict(trace);
      },
      py::arg("cfg"));

  m.def(
      "verify_proposition1",
      [](const SimConfig& cfg) {
        EquivalenceReport rep;
        {
          py::gil_scoped_release release;
          rep = verify_proposition1(cfg);
        }
        py::dict out;
        out["max_discrepancy"] = rep.max_discrepancy;
        out["max_cost_rel_error"] = rep.max_cost_rel_error;
        out["events"] = rep.events;
        out["steps"] = rep.steps;
        out["oracle_converged"] = rep.oracle_converged;
        out["passed"] = rep.passed();
        return out;
      },
      py::arg("cfg"));

  m.def(
      "run_alpha_sweep",
      [](const SimConfig& cfg, const std::vector<double>& alphas,
         const std::vector<std::uint64_t>& seeds) {
        SweepReport rep;
        {
          py::gil_scoped_release release;
          rep = run_alpha_sweep(cfg, alphas, seeds);
        }
        py::list out;
        for (const auto& run : rep.runs) {
          py::dict d;
          d["alpha"] = run.alpha;
          d["seed"] = run.seed;
          d["event_times"] = run.event_times;
          d["event_fraction"] = run.event_fraction;
          d["rmse"] = run.rmse;
          d["error"] = run.error;
          out.append(d);
        }
        return out;
      },
      py::arg("cfg"), py::arg("alphas"), py::arg("seeds"));

  m.def(
      "check_dissipation",
      [](const IossCertificate& cert, double lo, double hi, std::int64_t samples, std::uint64_t seed) {
        const SystemModel model =
            make_batch_reactor({}, true, DisturbanceBounds::batch_reactor().box());
        Rng rng(seed);
        const DissipationReport rep = check_dissipation(cert, model, Box::uniform(2, lo, hi), samples, rng);
        py::dict out;
        out["samples"] = rep.samples;
        out["violations"] = rep.violations;
        out["violation_fraction"] = rep.violation_fraction();
        out["worst_margin"] = rep.worst_margin;
        return out;
      },
      "Batch reactor dissipation check on the square [lo, hi]^2",
      py::arg("cert"), py::arg("lo") = 0.0, py::arg("hi") = 5.0, py::arg("samples") = 10000,
      py::arg("seed") = 1);
}
