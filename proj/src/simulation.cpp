#include "etmhe/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <string>
#include <thread>
#include <utility>

#include "etmhe/errors.hpp"

namespace etmhe {

SimConfig SimConfig::benchmark() {
  SimConfig cfg;
  cfg.x0 = Eigen::Vector2d(3.0, 1.0);
  cfg.xhat0 = Eigen::Vector2d(0.1, 4.5);
  return cfg;
}

SystemModel SimConfig::build_model() const {
  if (model.name != "batch_reactor") throw ConfigError("unknown model '" + model.name + "'");
  bounds.validate();
  if (bounds.b.size() != 3) throw ConfigError("batch reactor needs 3 disturbance bounds");
  std::optional<Box> w_set;
  if (model.constrain_disturbances) w_set = bounds.box();
  return make_batch_reactor(model.reactor, model.nonnegative_states, w_set);
}

MheConfig SimConfig::build_mhe() const {
  return MheConfig(horizon, alpha, cert, solver, allow_short_horizon);
}

void SimConfig::validate() const {
  if (steps < 1) throw ConfigError("simulation length T must be >= 1");
  const SystemModel m = build_model();
  cert.validate_for(m.dims());
  (void)build_mhe();
  if (x0.size() != m.n() || xhat0.size() != m.n()) {
    throw ConfigError("x0 and xhat0 must have the state dimension");
  }
  if (!m.x_set().contains(x0) || !m.x_set().contains(xhat0)) {
    throw ConfigError("x0 and xhat0 must lie in X");
  }
  if (bounds.b.size() != m.q()) throw ConfigError("disturbance bounds have wrong dimension");
}

int SimTrace::events() const {
  int n = 0;
  for (std::size_t t = 1; t < rows.size(); ++t) n += rows[t].gamma ? 1 : 0;
  return n;
}

double SimTrace::event_fraction() const {
  return steps() == 0 ? 0.0 : static_cast<double>(events()) / steps();
}

bool SimTrace::failed() const {
  return nonconverged > kMaxNonconvergedFraction * static_cast<double>(solves);
}

std::vector<Vector> disturbance_sequence(const DisturbanceBounds& bounds, int steps,
                                         std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Vector> w;
  w.reserve(static_cast<std::size_t>(steps) + 1);
  for (int t = 0; t <= steps; ++t) w.push_back(sample_disturbance(rng, bounds));
  return w;
}

RemoteEstimator::RemoteEstimator(SystemModel model, MheConfig cfg, Vector initial_estimate,
                                 bool warm_start)
    : model_(std::move(model)), cfg_(std::move(cfg)), warm_start_(warm_start) {
  if (initial_estimate.size() != model_.n()) throw ConfigError("initial estimate dimension");
  estimates_.push_back(std::move(initial_estimate));
}

MheWindow RemoteEstimator::window(int t, int delta) const {
  MheWindow win;
  win.t = t;
  win.delta = delta;
  win.horizon = effective_horizon(t, cfg_.horizon(), delta);
  const int start = win.start();
  win.prior = estimates_.at(static_cast<std::size_t>(start));
  for (int j = start; j < t - delta; ++j) {
    const auto idx = static_cast<std::size_t>(j);
    if (idx >= received_.size() || !received_[idx]) {
      throw LogicError("estimator is missing measurement y_" + std::to_string(j));
    }
    win.measurements.push_back(*received_[idx]);
  }
  for (int j = start; j < t; ++j) win.inputs.push_back(inputs_.at(static_cast<std::size_t>(j)));
  return win;
}

RemoteEstimator::Event RemoteEstimator::on_event(int t, const MeasurementBlock& block,
                                                 const Vector& u_prev) {
  if (static_cast<int>(estimates_.size()) != t) throw LogicError("estimator called out of order");
  inputs_.push_back(u_prev);
  const std::size_t end = static_cast<std::size_t>(block.first) + block.values.size();
  if (static_cast<int>(end) != t) throw ProtocolError("measurement block must end at t - 1");
  if (received_.size() < end) received_.resize(end);
  for (std::size_t k = 0; k < block.values.size(); ++k) {
    received_[static_cast<std::size_t>(block.first) + k] = block.values[k];
  }

  Event ev;
  ev.window = window(t, 0);
  std::optional<MheSolution> warm;
  if (warm_start_ && last_solution_) warm = shift_solution(*last_solution_, ev.window, model_);
  ev.solution = solve_nlp(ev.window, model_, cfg_, warm);
  ev.d_next = compute_d(ev.solution, ev.window, cfg_.cert());
  ev.estimate = ev.solution.estimate();
  estimates_.push_back(ev.estimate);
  last_solution_ = ev.solution;
  return ev;
}

Vector RemoteEstimator::on_quiet(int t, const Vector& u_prev) {
  if (static_cast<int>(estimates_.size()) != t) throw LogicError("estimator called out of order");
  inputs_.push_back(u_prev);
  Vector xhat = open_loop_predict(model_, estimates_.back(), u_prev);
  estimates_.push_back(xhat);
  return xhat;
}

SimTrace run_closed_loop(const SimConfig& cfg) {
  cfg.validate();
  const SystemModel model = cfg.build_model();
  const MheConfig mhe = cfg.build_mhe();
  const std::vector<Vector> w = disturbance_sequence(cfg.bounds, cfg.steps, cfg.seed);
  const Vector u = model.zero_input();

  std::optional<RgesConstants> constants;
  if (cfg.horizon >= min_horizon(cfg.cert)) {
    constants = rges_constants(cfg.cert, cfg.alpha, cfg.horizon);
  }
  const double e0 = (cfg.x0 - cfg.xhat0).norm();
  std::vector<double> w_norms;
  w_norms.reserve(w.size());
  for (const auto& wt : w) w_norms.push_back(wt.norm());
  auto bound_at = [&](int t) {
    return constants ? rges_bound(*constants, e0, w_norms, t)
                     : std::numeric_limits<double>::quiet_NaN();
  };

  EventTrigger etm(model, cfg.cert, cfg.horizon, cfg.alpha, cfg.xhat0);
  RemoteEstimator estimator(model, mhe, cfg.xhat0, cfg.warm_start);

  SimTrace trace;
  trace.rows.reserve(static_cast<std::size_t>(cfg.steps) + 1);
  Vector x = cfg.x0;
  Vector y = model.output(x, u, w[0]);
  {
    TraceRow row;
    row.t = 0;
    row.x = x;
    row.xhat = cfg.xhat0;
    row.y = y;
    row.gamma = true;  // conventional event at t = 0
    row.err_norm = e0;
    row.w_norm = w_norms[0];
    row.rges_bound = bound_at(0);
    trace.rows.push_back(std::move(row));
  }

  double event_cost = 0.0;
  bool event_converged = true;
  for (int t = 1; t <= cfg.steps; ++t) {
    x = model.step(x, u, w[static_cast<std::size_t>(t - 1)]);
    TraceRow row;
    row.t = t;
    row.eps = etm.state().last_event;
    row.d = etm.state().d;
    row.gamma = etm.decide(y, u);
    if (row.gamma) {
      const MeasurementBlock block = etm.block();
      RemoteEstimator::Event ev = estimator.on_event(t, block, u);
      etm.complete(true, ev.d_next, ev.estimate);
      row.xhat = ev.estimate;
      row.delta = 0;
      row.tx_count = static_cast<int>(block.values.size());
      event_cost = ev.solution.cost;
      event_converged = ev.solution.converged;
      row.cost = event_cost;
      row.solver_iters = ev.solution.iterations;
      ++trace.solves;
      if (!event_converged) ++trace.nonconverged;
    } else {
      row.xhat = estimator.on_quiet(t, u);
      etm.complete(false);
      row.delta = t - row.eps;
      row.cost = std::pow(cfg.cert.eta, row.delta) * event_cost;
    }
    row.solver_converged = event_converged;
    y = model.output(x, u, w[static_cast<std::size_t>(t)]);
    row.x = x;
    row.y = y;
    row.err_norm = (x - row.xhat).norm();
    row.w_norm = w_norms[static_cast<std::size_t>(t)];
    row.rges_bound = bound_at(t);
    trace.rows.push_back(std::move(row));
  }
  return trace;
}

EquivalenceReport verify_proposition1(const SimConfig& cfg) {
  if (!cfg.oracle_mode) throw ConfigError("the always-solve comparison needs oracle_mode = true");
  const SimTrace trace = run_closed_loop(cfg);
  const SystemModel model = cfg.build_model();
  const MheConfig mhe = cfg.build_mhe();
  const Vector u = model.zero_input();
  const double eta = cfg.cert.eta;

  EquivalenceReport report;
  report.steps = cfg.steps;
  report.events = trace.events();
  std::vector<Vector> oracle{cfg.xhat0};
  for (int t = 1; t <= cfg.steps; ++t) {
    const TraceRow& row = trace.rows[static_cast<std::size_t>(t)];
    MheWindow win;
    win.t = t;
    win.delta = row.delta;
    win.horizon = effective_horizon(t, cfg.horizon, row.delta);
    win.prior = oracle[static_cast<std::size_t>(win.start())];
    for (int j = win.start(); j < t - row.delta; ++j) {
      win.measurements.push_back(trace.rows[static_cast<std::size_t>(j)].y);
    }
    win.inputs.assign(static_cast<std::size_t>(win.horizon), u);

    const MheSolution sol = solve_nlp(win, model, mhe);
    report.oracle_converged = report.oracle_converged && sol.converged;
    oracle.push_back(sol.estimate());
    const double gap = (sol.estimate() - row.xhat).cwiseAbs().maxCoeff();
    report.max_discrepancy = std::max(report.max_discrepancy, gap);
    if (!row.gamma) {
      const double expected =
          std::pow(eta, row.delta) * trace.rows[static_cast<std::size_t>(row.eps)].cost;
      const double rel = std::abs(sol.cost - expected) / std::max(std::abs(expected), 1e-12);
      report.max_cost_rel_error = std::max(report.max_cost_rel_error, rel);
    }
  }
  return report;
}

SweepReport run_alpha_sweep(const SimConfig& cfg, const std::vector<double>& alphas,
                            const std::vector<std::uint64_t>& seeds) {
  if (alphas.empty() || seeds.empty()) throw ConfigError("sweep needs at least one alpha and seed");
  SweepReport report;
  for (double a : alphas) {
    for (std::uint64_t s : seeds) {
      SweepRun run;
      run.alpha = a;
      run.seed = s;
      report.runs.push_back(std::move(run));
    }
  }

  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t i = next++; i < report.runs.size(); i = next++) {
      SweepRun& run = report.runs[i];
      try {
        SimConfig c = cfg;
        c.alpha = run.alpha;
        c.seed = run.seed;
        run.trace = run_closed_loop(c);
        if (run.trace.failed()) {
          run.error = std::to_string(run.trace.nonconverged) + " of " +
                      std::to_string(run.trace.solves) + " solves did not converge";
        }
        for (const auto& row : run.trace.rows) {
          if (row.t >= 1 && row.gamma) run.event_times.push_back(row.t);
        }
        run.event_fraction = run.trace.event_fraction();
        double sq = 0.0;
        for (const auto& row : run.trace.rows) sq += row.err_norm * row.err_norm;
        run.rmse = std::sqrt(sq / static_cast<double>(run.trace.rows.size()));
      } catch (const std::exception& e) {
        run.error = e.what();
      }
    }
  };
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const std::size_t n_threads = std::min<std::size_t>(hw, report.runs.size());
  std::vector<std::thread> pool;
  for (std::size_t k = 1; k < n_threads; ++k) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  return report;
}

BoundReport check_rges(const SimTrace& trace, const RgesConstants& constants) {
  BoundReport report;
  if (trace.rows.empty()) return report;
  const double e0 = trace.rows.front().err_norm;
  std::vector<double> w_norms;
  w_norms.reserve(trace.rows.size());
  for (const auto& row : trace.rows) w_norms.push_back(row.w_norm);
  for (const auto& row : trace.rows) {
    if (!row.solver_converged) {
      ++report.excluded;
      continue;
    }
    const double bound = rges_bound(constants, e0, w_norms, row.t);
    const double margin = bound - row.err_norm;
    ++report.checked;
    report.min_margin = std::min(report.min_margin, margin);
    if (row.err_norm > bound + 1e-12 * (1.0 + bound)) {
      ++report.violations;
      report.violating_steps.push_back(row.t);
    }
  }
  return report;
}

namespace {

Vector state_rmse(const SimTrace& trace, int from) {
  const Eigen::Index n = trace.rows.front().x.size();
  Vector acc = Vector::Zero(n);
  int count = 0;
  for (const auto& row : trace.rows) {
    if (row.t < from) continue;
    acc += (row.x - row.xhat).cwiseAbs2();
    ++count;
  }
  return count == 0 ? acc : (acc / count).cwiseSqrt().eval();
}

double error_rmse(const SimTrace& trace, int from) {
  double acc = 0.0;
  int count = 0;
  for (const auto& row : trace.rows) {
    if (row.t < from) continue;
    acc += row.err_norm * row.err_norm;
    ++count;
  }
  return count == 0 ? 0.0 : std::sqrt(acc / count);
}

}  // namespace

MetricsReport performance_metrics(const SimTrace& trace_et, const SimTrace& trace_mhe,
                                  int post_start) {
  if (trace_et.rows.size() != trace_mhe.rows.size() || trace_et.rows.empty()) {
    throw LogicError("performance_metrics: traces differ in length");
  }
  MetricsReport m;
  m.rmse_et = state_rmse(trace_et, 0);
  m.rmse_mhe = state_rmse(trace_mhe, 0);
  m.rmse_et_post = state_rmse(trace_et, post_start);
  m.rmse_mhe_post = state_rmse(trace_mhe, post_start);
  m.err_rmse_et_post = error_rmse(trace_et, post_start);
  m.err_rmse_mhe_post = error_rmse(trace_mhe, post_start);
  if (m.err_rmse_mhe_post > 0.0) {
    m.post_ratio = m.err_rmse_et_post / m.err_rmse_mhe_post;
  } else {
    m.post_ratio = m.err_rmse_et_post > 0.0 ? kInf : 1.0;
  }
  m.event_fraction = trace_et.event_fraction();
  const int solves_mhe = trace_mhe.solves;
  m.solve_reduction_pct =
      solves_mhe == 0 ? 0.0 : 100.0 * (1.0 - static_cast<double>(trace_et.solves) / solves_mhe);
  return m;
}

}  // namespace etmhe
