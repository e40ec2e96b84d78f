#include <cmath>
#include <vector>

#include "doctest.h"
#include "etmhe/batch_reactor.hpp"
#include "etmhe/disturbance.hpp"
#include "etmhe/errors.hpp"
#include "etmhe/mhe.hpp"

using namespace etmhe;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

// x+ = a x + w1, y = c x + w2
SystemModel scalar_linear(double a, double c) {
  return SystemModel(
      "scalar", {1, 0, 2, 1},
      [a](const Vector& x, const Vector&, const Vector& w) { return Vector(Vector::Constant(1, a * x[0] + w[0])); },
      [c](const Vector& x, const Vector&, const Vector& w) { return Vector(Vector::Constant(1, c * x[0] + w[1])); },
      Box::unbounded(1), Box::unbounded(2), Box::unbounded(1));
}

IossCertificate scalar_cert(double p, double q1, double q2, double r, double eta) {
  IossCertificate c;
  c.p1 = Matrix::Constant(1, 1, p);
  c.p2 = c.p1;
  c.q = vec({q1, q2}).asDiagonal();
  c.r = Matrix::Constant(1, 1, r);
  c.eta = eta;
  return c;
}

struct ReactorData {
  std::vector<Vector> x;
  std::vector<Vector> y;
};

ReactorData reactor_data(const SystemModel& model, int steps, std::uint64_t seed) {
  Rng rng(seed);
  ReactorData d;
  d.x.push_back(vec({3, 1}));
  for (int k = 0; k <= steps; ++k) {
    const Vector w = sample_disturbance(rng, DisturbanceBounds::batch_reactor());
    d.y.push_back(model.output(d.x.back(), {}, w));
    d.x.push_back(model.step(d.x.back(), {}, w));
  }
  return d;
}

MheWindow reactor_window(const ReactorData& d, int t, int horizon, int delta, const Vector& prior) {
  MheWindow win;
  win.t = t;
  win.horizon = horizon;
  win.delta = delta;
  win.prior = prior;
  for (int j = t - horizon; j < t - delta; ++j) win.measurements.push_back(d.y[j]);
  win.inputs.assign(horizon, Vector());
  return win;
}

}  // namespace

TEST_CASE("effective horizon") {
  CHECK(effective_horizon(0, 30, 0) == 0);
  CHECK(effective_horizon(10, 30, 0) == 10);
  CHECK(effective_horizon(50, 30, 0) == 30);
  CHECK(effective_horizon(50, 30, 5) == 35);
  CHECK(effective_horizon(32, 30, 5) == 32);
  CHECK_THROWS_AS(effective_horizon(5, 30, -1), LogicError);
}

TEST_CASE("configuration") {
  const IossCertificate c = IossCertificate::batch_reactor();
  CHECK_NOTHROW(MheConfig(30, 5.0, c));
  CHECK_NOTHROW(MheConfig(15, 5.0, c));
  CHECK_THROWS_AS(MheConfig(14, 5.0, c), StabilityError);
  CHECK_NOTHROW(MheConfig(5, 5.0, c, {}, true));
  CHECK_THROWS_AS(MheConfig(30, -1.0, c), ConfigError);
  SolverSettings bad;
  bad.damping_increase = 0.5;
  CHECK_THROWS_AS(MheConfig(30, 5.0, c, bad), ConfigError);
}

TEST_CASE("cost of a single measured step") {
  const SystemModel model = make_batch_reactor();
  const double alpha = 5.0;
  const MheConfig cfg(30, alpha, IossCertificate::batch_reactor());
  MheWindow win;
  win.t = 1;
  win.horizon = 1;
  win.prior = vec({0.1, 4.5});
  win.measurements = {vec({4.0})};
  win.inputs = {Vector()};
  // Prior term vanishes at x_init = prior, w = 0: J = (alpha + 1) e^2 R with e = 4.6 - 4.
  const double e = 0.6;
  CHECK(eval_cost(win, win.prior, {Vector::Zero(3)}, model, cfg) ==
        doctest::Approx((alpha + 1.0) * e * e * 1e3).epsilon(1e-12));

  SUBCASE("prior and disturbance terms") {
    const Vector dx = vec({0.01, -0.02});
    const Vector w = vec({1e-4, 0, 0});
    const IossCertificate c = IossCertificate::batch_reactor();
    const Vector x0 = win.prior + dx;
    const double y_hat = x0.sum();
    const double expected = 2.0 * 0.91 * dx.dot(c.p2 * dx) +
                            (alpha + 1.0) * (2.0 * 1e3 * 1e-8 + 1e3 * (y_hat - 4.0) * (y_hat - 4.0));
    CHECK(eval_cost(win, x0, {w}, model, cfg) == doctest::Approx(expected).epsilon(1e-12));
  }
  SUBCASE("unmeasured step contributes only its disturbance") {
    MheWindow ev = win;
    ev.delta = 1;
    ev.measurements.clear();
    CHECK(eval_cost(ev, win.prior, {Vector::Zero(3)}, model, cfg) == 0.0);
  }
}

TEST_CASE("window validation") {
  const SystemModel model = make_batch_reactor();
  const MheConfig cfg(30, 5.0, IossCertificate::batch_reactor());
  MheWindow win;
  win.t = 2;
  win.horizon = 2;
  win.prior = vec({0.1, 4.5});
  win.measurements = {vec({4.0})};
  win.inputs = {Vector(), Vector()};
  CHECK_THROWS_AS(solve_nlp(win, model, cfg), ConfigError);
  win.delta = 1;
  CHECK_NOTHROW(win.validate(model));
  win.prior = vec({1.0});
  CHECK_THROWS_AS(win.validate(model), ConfigError);
}

TEST_CASE("closed-form single-step solution of a scalar linear problem") {
  const double a = 0.9, c = 1.5, p = 2.0, q1 = 3.0, q2 = 5.0, r = 7.0, eta = 0.2, alpha = 1.0;
  const double xbar = 0.4, y = 1.3;
  const SystemModel model = scalar_linear(a, c);
  const MheConfig cfg(1, alpha, scalar_cert(p, q1, q2, r, eta));

  MheWindow win;
  win.t = 1;
  win.horizon = 1;
  win.prior = vec({xbar});
  win.measurements = {vec({y})};
  win.inputs = {Vector()};

  // Stationarity of 2 eta p (x - xbar)^2 + A (2 q1 w1^2 + 2 q2 w2^2 + r (c x + w2 - y)^2).
  const double big_a = alpha + 1.0;
  const double m11 = 2.0 * eta * p + big_a * r * c * c;
  const double m12 = big_a * r * c;
  const double m22 = 2.0 * big_a * q2 + big_a * r;
  const double b1 = 2.0 * eta * p * xbar + big_a * r * c * y;
  const double b2 = big_a * r * y;
  const double det = m11 * m22 - m12 * m12;
  const double x_star = (b1 * m22 - m12 * b2) / det;
  const double w2_star = (m11 * b2 - m12 * b1) / det;

  const MheSolution sol = solve_nlp(win, model, cfg);
  CHECK(sol.converged);
  CHECK(sol.x_init[0] == doctest::Approx(x_star).epsilon(1e-9));
  CHECK(std::abs(sol.w_seq[0][0]) < 1e-9);
  CHECK(sol.w_seq[0][1] == doctest::Approx(w2_star).epsilon(1e-9));
  CHECK(sol.estimate()[0] == doctest::Approx(a * x_star).epsilon(1e-9));
  const double j_star = 2.0 * eta * p * (x_star - xbar) * (x_star - xbar) +
                        big_a * (2.0 * q2 * w2_star * w2_star +
                                 r * (c * x_star + w2_star - y) * (c * x_star + w2_star - y));
  CHECK(sol.cost == doctest::Approx(j_star).epsilon(1e-10));

  SUBCASE("finite-difference Jacobians reach the same optimum") {
    SolverSettings fd;
    fd.jacobian = JacobianMode::kFiniteDifference;
    const MheSolution s2 = solve_nlp(win, model, MheConfig(1, alpha, cfg.cert(), fd));
    CHECK(s2.x_init[0] == doctest::Approx(x_star).epsilon(1e-6));
  }
}

TEST_CASE("reactor NLP solutions") {
  const SystemModel model = make_batch_reactor();
  const MheConfig cfg(30, 5.0, IossCertificate::batch_reactor());
  const ReactorData d = reactor_data(model, 40, 1);
  const Vector prior = vec({0.1, 4.5});

  const MheWindow win = reactor_window(d, 12, 12, 0, prior);
  const MheSolution sol = solve_nlp(win, model, cfg);

  CHECK(sol.converged);
  CHECK(sol.x_seq.size() == 13);
  CHECK(sol.w_seq.size() == 12);
  CHECK(sol.y_seq.size() == 12);

  SUBCASE("reported cost matches the direct cost formula") {
    CHECK(sol.cost == doctest::Approx(eval_cost(win, sol.x_init, sol.w_seq, model, cfg)).epsilon(1e-12));
  }
  SUBCASE("trajectory satisfies the model and the state constraints") {
    const Rollout path = rollout(model, sol.x_init, win.inputs, sol.w_seq);
    for (std::size_t k = 0; k < path.states.size(); ++k) {
      CHECK((path.states[k] - sol.x_seq[k]).norm() == 0.0);
      CHECK(model.x_set().contains(sol.x_seq[k]));
    }
  }
  SUBCASE("optimum beats the prior guess and improves on it") {
    const double j0 = eval_cost(win, prior, std::vector<Vector>(12, Vector::Zero(3)), model, cfg);
    CHECK(sol.cost < j0);
    CHECK((sol.estimate() - d.x[12]).norm() < (prior - d.x[0]).norm());
  }
  SUBCASE("local perturbations do not lower the cost") {
    Rng rng(2);
    for (int k = 0; k < 20; ++k) {
      Vector x = sol.x_init;
      std::vector<Vector> w = sol.w_seq;
      x[0] += uniform(rng, -1e-5, 1e-5);
      x[1] += uniform(rng, -1e-5, 1e-5);
      w[k % 12][k % 3] += uniform(rng, -1e-6, 1e-6);
      x = model.x_set().project(x);
      CHECK(eval_cost(win, x, w, model, cfg) >= sol.cost * (1.0 - 1e-12));
    }
  }
  SUBCASE("warm and cold starts agree") {
    const MheSolution prev = solve_nlp(reactor_window(d, 11, 11, 0, prior), model, cfg);
    const MheSolution warm = solve_nlp(win, model, cfg, shift_solution(prev, win, model));
    CHECK(warm.converged);
    CHECK(std::abs(warm.cost - sol.cost) <= 1e-9 * std::max(1.0, sol.cost));
    CHECK((warm.estimate() - sol.estimate()).norm() < 1e-6);
  }
  SUBCASE("full horizon past the transient") {
    const Vector later_prior = d.x[5] + vec({0.05, -0.05});
    const MheWindow full = reactor_window(d, 35, 30, 0, later_prior);
    const MheSolution s = solve_nlp(full, model, cfg);
    CHECK(s.converged);
    CHECK((s.estimate() - d.x[35]).norm() < 0.1);
  }
  SUBCASE("deterministic") {
    const MheSolution again = solve_nlp(win, model, cfg);
    CHECK(again.cost == sol.cost);
    CHECK(again.estimate() == sol.estimate());
  }
}

TEST_CASE("assembled event solution") {
  const SystemModel model = make_batch_reactor();
  const MheConfig cfg(30, 5.0, IossCertificate::batch_reactor());
  const ReactorData d = reactor_data(model, 40, 3);
  const MheWindow win = reactor_window(d, 10, 10, 0, vec({0.1, 4.5}));
  const MheSolution prev = solve_nlp(win, model, cfg);

  for (int delta : {0, 1, 4}) {
    const MheSolution ext = assemble_event_solution(prev, delta, model, cfg, std::vector<Vector>(delta));
    CHECK(ext.t == prev.t + delta);
    CHECK(ext.horizon == prev.horizon + delta);
    CHECK(ext.cost == doctest::Approx(std::pow(0.91, delta) * prev.cost).epsilon(1e-12));
    // The extended window sees no new measurements; its direct cost is the same value.
    const MheWindow ext_win = reactor_window(d, 10 + delta, 10 + delta, delta, vec({0.1, 4.5}));
    CHECK(eval_cost(ext_win, ext.x_init, ext.w_seq, model, cfg) ==
          doctest::Approx(ext.cost).epsilon(1e-9));
    Vector x = prev.estimate();
    for (int k = 0; k < delta; ++k) x = open_loop_predict(model, x, Vector());
    CHECK((ext.estimate() - x).norm() == 0.0);
  }
  CHECK_THROWS_AS(assemble_event_solution(prev, 2, model, cfg, std::vector<Vector>(1)), LogicError);
}

TEST_CASE("shifted warm start") {
  const SystemModel model = make_batch_reactor();
  const MheConfig cfg(30, 5.0, IossCertificate::batch_reactor());
  const ReactorData d = reactor_data(model, 40, 4);
  const MheSolution prev = solve_nlp(reactor_window(d, 8, 8, 0, vec({0.1, 4.5})), model, cfg);
  const MheWindow win = reactor_window(d, 10, 10, 0, vec({0.1, 4.5}));
  const MheSolution warm = shift_solution(prev, win, model);
  CHECK(warm.w_seq.size() == 10);
  CHECK(warm.x_init == prev.x_init);
  CHECK(warm.w_seq[9] == Vector::Zero(3));
}
