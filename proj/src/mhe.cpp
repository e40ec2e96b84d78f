#include "etmhe/mhe.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iostream>
#include <limits>
#include <sstream>
#include <utility>

#include "etmhe/errors.hpp"

namespace etmhe {

void SolverSettings::validate() const {
  if (max_iterations <= 0 || !(gradient_tolerance > 0.0) || !(step_tolerance > 0.0) ||
      !(initial_damping > 0.0) || !(damping_increase > 1.0) || !(damping_decrease > 0.0) ||
      !(damping_decrease < 1.0)) {
    throw ConfigError("solver settings must be positive (increase > 1, 0 < decrease < 1)");
  }
}

MheConfig::MheConfig(int horizon, double alpha, IossCertificate cert, SolverSettings solver,
                     bool allow_short_horizon)
    : horizon_(horizon), alpha_(alpha), cert_(std::move(cert)), solver_(solver) {
  if (horizon_ < 0) throw ConfigError("horizon must be >= 0");
  if (!(alpha_ >= 0.0) || !std::isfinite(alpha_)) throw ConfigError("alpha must be >= 0");
  cert_.validate();
  solver_.validate();
  const int m_min = min_horizon(cert_);
  if (horizon_ < m_min) {
    std::ostringstream os;
    os << "horizon " << horizon_ << " is below the minimum stabilizing horizon " << m_min;
    if (!allow_short_horizon) throw StabilityError(os.str());
    static std::atomic<bool> warned{false};
    if (!warned.exchange(true)) {
      std::cerr << "warning: " << os.str() << "; stability bound does not apply\n";
    }
  }
}

int effective_horizon(int t, int base_horizon, int delta) {
  if (t < 0 || base_horizon < 0 || delta < 0) throw LogicError("effective_horizon: negative input");
  return std::min(t, base_horizon + delta);
}

void MheWindow::validate(const SystemModel& model) const {
  if (t < 0 || horizon < 0 || delta < 0 || horizon > t || delta > horizon) {
    throw ConfigError("window requires 0 <= delta <= M_t <= t");
  }
  if (prior.size() != model.n()) throw ConfigError("window prior has wrong dimension");
  if (static_cast<int>(measurements.size()) != measured_steps()) {
    throw ConfigError("window holds " + std::to_string(measurements.size()) +
                      " measurements, expected M_t - delta = " + std::to_string(measured_steps()));
  }
  if (static_cast<int>(inputs.size()) != horizon) {
    throw ConfigError("window input count must equal M_t");
  }
  for (const auto& y : measurements) {
    if (y.size() != model.p()) throw ConfigError("measurement has wrong dimension");
  }
  for (const auto& u : inputs) {
    if (u.size() != model.m()) throw ConfigError("input has wrong dimension");
  }
}

Rollout rollout(const SystemModel& model, const Vector& x_init, const std::vector<Vector>& u_seq,
                const std::vector<Vector>& w_seq) {
  if (u_seq.size() != w_seq.size()) throw ConfigError("rollout: input/disturbance length mismatch");
  if (x_init.size() != model.n()) throw ConfigError("rollout: initial state has wrong dimension");
  Rollout out;
  out.states.reserve(w_seq.size() + 1);
  out.outputs.reserve(w_seq.size());
  out.states.push_back(x_init);
  for (std::size_t k = 0; k < w_seq.size(); ++k) {
    const Vector& x = out.states.back();
    out.outputs.push_back(model.output(x, u_seq[k], w_seq[k]));
    out.states.push_back(model.step(x, u_seq[k], w_seq[k]));
  }
  return out;
}

Vector open_loop_predict(const SystemModel& model, const Vector& x_prev, const Vector& u_prev) {
  return model.step(x_prev, u_prev, model.zero_disturbance());
}

namespace {

double weighted_sq(const Vector& v, const Matrix& weight) { return v.dot(weight * v); }

}  // namespace

double eval_cost(const MheWindow& window, const Vector& x_init, const std::vector<Vector>& w_seq,
                 const SystemModel& model, const MheConfig& cfg) {
  window.validate(model);
  if (static_cast<int>(w_seq.size()) != window.horizon) {
    throw ConfigError("eval_cost: disturbance sequence length must equal M_t");
  }
  const auto& cert = cfg.cert();
  const double eta = cert.eta;
  const int n_steps = window.horizon;
  const Rollout path = rollout(model, x_init, window.inputs, w_seq);

  const double prior_term = 2.0 * std::pow(eta, n_steps) * weighted_sq(x_init - window.prior, cert.p2);
  double stage = 0.0;
  for (int k = 0; k < n_steps; ++k) {
    const double discount = std::pow(eta, n_steps - k - 1);
    stage += discount * 2.0 * weighted_sq(w_seq[k], cert.q);
    if (k < window.measured_steps()) {
      stage += discount * weighted_sq(path.outputs[k] - window.measurements[k], cert.r);
    }
  }
  return prior_term + (cfg.alpha() + 1.0) * stage;
}

namespace {

/// Symmetric square root S with S^T S = A for positive semidefinite A.
Matrix weight_root(const Matrix& a) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(a);
  const Vector root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

/// Single-shooting least-squares problem |r(z)|^2, z = (x_init, w_0, ..., w_{N-1}),
/// with path constraints g(z) >= 0 collecting the finite bounds of X on x_1 .. x_N
/// and of Y on every predicted output.
class ShootingProblem {
 public:
  ShootingProblem(const MheWindow& window, const SystemModel& model, const MheConfig& cfg)
      : window_(window), model_(model), n_(model.n()), q_(model.q()), p_(model.p()) {
    const auto& cert = cfg.cert();
    const double eta = cert.eta;
    const double scale = cfg.alpha() + 1.0;
    steps_ = window.horizon;
    sqrt_p2_ = weight_root(cert.p2);
    sqrt_q_ = weight_root(cert.q);
    sqrt_r_ = weight_root(cert.r);
    prior_gain_ = std::sqrt(2.0 * std::pow(eta, steps_));
    w_gain_.resize(steps_);
    y_gain_.resize(steps_);
    for (int k = 0; k < steps_; ++k) {
      const double discount = std::pow(eta, steps_ - k - 1);
      w_gain_[k] = std::sqrt(2.0 * scale * discount);
      y_gain_[k] = std::sqrt(scale * discount);
    }
    lower_.resize(num_vars());
    upper_.resize(num_vars());
    lower_.head(n_) = model.x_set().lower;
    upper_.head(n_) = model.x_set().upper;
    for (int k = 0; k < steps_; ++k) {
      lower_.segment(n_ + k * q_, q_) = model.w_set().lower;
      upper_.segment(n_ + k * q_, q_) = model.w_set().upper;
    }
    num_constraints_ = static_cast<Eigen::Index>(steps_) *
                       (finite_count(model.x_set()) + finite_count(model.y_set()));
  }

  Eigen::Index num_vars() const { return n_ + steps_ * q_; }
  Eigen::Index num_residuals() const {
    return n_ + steps_ * q_ + static_cast<Eigen::Index>(window_.measured_steps()) * p_;
  }
  Eigen::Index num_constraints() const { return num_constraints_; }
  const Vector& lower() const { return lower_; }
  const Vector& upper() const { return upper_; }

  Vector pack(const Vector& x_init, const std::vector<Vector>& w_seq) const {
    Vector z(num_vars());
    z.head(n_) = x_init;
    for (int k = 0; k < steps_; ++k) z.segment(n_ + k * q_, q_) = w_seq[k];
    return z;
  }

  std::vector<Vector> unpack_w(const Vector& z) const {
    std::vector<Vector> w(steps_);
    for (int k = 0; k < steps_; ++k) w[k] = z.segment(n_ + k * q_, q_);
    return w;
  }

  /// Residuals r and constraints g; optionally their Jacobians via forward state
  /// sensitivities.
  void evaluate(const Vector& z, Vector& r, Vector& g, Matrix* jac, Matrix* gjac) const {
    r.resize(num_residuals());
    g.resize(num_constraints_);
    const Eigen::Index nz = num_vars();
    Vector x = z.head(n_);
    r.head(n_) = prior_gain_ * (sqrt_p2_ * (x - window_.prior));

    Matrix sens;  // d x_k / d z
    if (jac) {
      jac->setZero(num_residuals(), nz);
      jac->block(0, 0, n_, n_) = prior_gain_ * sqrt_p2_;
      gjac->setZero(num_constraints_, nz);
      sens.setZero(n_, nz);
      sens.leftCols(n_).setIdentity();
    }
    Eigen::Index row = n_;
    Eigen::Index crow = 0;
    auto bound_rows = [&](const Box& box, const Vector& v, const Matrix* dv) {
      for (Eigen::Index i = 0; i < box.dim(); ++i) {
        if (std::isfinite(box.lower[i])) {
          g[crow] = v[i] - box.lower[i];
          if (dv) gjac->row(crow) = dv->row(i);
          ++crow;
        }
        if (std::isfinite(box.upper[i])) {
          g[crow] = box.upper[i] - v[i];
          if (dv) gjac->row(crow) = -dv->row(i);
          ++crow;
        }
      }
    };
    for (int k = 0; k < steps_; ++k) {
      const Eigen::Index wcol = n_ + k * q_;
      const Vector w = z.segment(wcol, q_);
      const Vector& u = window_.inputs[k];
      r.segment(row, q_) = w_gain_[k] * (sqrt_q_ * w);
      if (jac) jac->block(row, wcol, q_, q_) = w_gain_[k] * sqrt_q_;
      row += q_;

      Linearization lin;
      if (jac) lin = model_.linearize(x, u, w);
      const Vector y = model_.output(x, u, w);
      Matrix dy;
      if (jac) {
        dy = lin.hx * sens;
        dy.middleCols(wcol, q_) += lin.hw;
      }
      bound_rows(model_.y_set(), y, jac ? &dy : nullptr);
      if (k < window_.measured_steps()) {
        r.segment(row, p_) = y_gain_[k] * (sqrt_r_ * (y - window_.measurements[k]));
        if (jac) jac->middleRows(row, p_) = y_gain_[k] * (sqrt_r_ * dy);
        row += p_;
      }
      x = model_.step(x, u, w);
      if (jac) {
        Matrix next = lin.fx * sens;
        next.middleCols(wcol, q_) += lin.fw;
        sens = std::move(next);
      }
      bound_rows(model_.x_set(), x, jac ? &sens : nullptr);
    }
  }

 private:
  static Eigen::Index finite_count(const Box& box) {
    Eigen::Index c = 0;
    for (Eigen::Index i = 0; i < box.dim(); ++i) {
      c += std::isfinite(box.lower[i]) ? 1 : 0;
      c += std::isfinite(box.upper[i]) ? 1 : 0;
    }
    return c;
  }

  const MheWindow& window_;
  const SystemModel& model_;
  Eigen::Index n_, q_, p_;
  int steps_ = 0;
  Eigen::Index num_constraints_ = 0;
  Matrix sqrt_p2_, sqrt_q_, sqrt_r_;
  double prior_gain_ = 0.0;
  std::vector<double> w_gain_, y_gain_;
  Vector lower_, upper_;
};

/// Augmented-Lagrangian least squares for fixed multipliers and penalty:
///   |r(z)|^2 + |sqrt(mu) max(0, lambda / mu - g(z))|^2.
class AugmentedProblem {
 public:
  AugmentedProblem(const ShootingProblem& prob, const Vector& multipliers, double penalty,
                   JacobianMode mode)
      : prob_(prob), lambda_(multipliers), mu_(penalty), mode_(mode) {}

  const Vector& lower() const { return prob_.lower(); }
  const Vector& upper() const { return prob_.upper(); }

  void residuals(const Vector& z, Vector& out, Matrix* jac) const {
    Vector r, g;
    if (jac && mode_ == JacobianMode::kModel) {
      Matrix rj, gj;
      prob_.evaluate(z, r, g, &rj, &gj);
      assemble(r, g, out);
      jac->resize(out.size(), z.size());
      jac->topRows(r.size()) = rj;
      const double root = std::sqrt(mu_);
      for (Eigen::Index i = 0; i < g.size(); ++i) {
        const bool active = lambda_[i] / mu_ - g[i] > 0.0;
        jac->row(r.size() + i) = active ? Vector(-root * gj.row(i).transpose()) : Vector::Zero(z.size());
      }
      return;
    }
    prob_.evaluate(z, r, g, nullptr, nullptr);
    assemble(r, g, out);
    if (!jac) return;
    jac->resize(out.size(), z.size());
    Vector zp = z;
    Vector rp;
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      const double h = 1e-7 * (1.0 + std::abs(z[i]));
      zp[i] = z[i] + h;
      residuals(zp, rp, nullptr);
      jac->col(i) = (rp - out) / h;
      zp[i] = z[i];
    }
  }

 private:
  void assemble(const Vector& r, const Vector& g, Vector& out) const {
    out.resize(r.size() + g.size());
    out.head(r.size()) = r;
    const double root = std::sqrt(mu_);
    for (Eigen::Index i = 0; i < g.size(); ++i) {
      out[r.size() + i] = root * std::max(0.0, lambda_[i] / mu_ - g[i]);
    }
  }

  const ShootingProblem& prob_;
  const Vector& lambda_;
  double mu_;
  JacobianMode mode_;
};

struct LmResult {
  Vector z;
  double cost = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Second-order part sum_i r_i d^2 r_i of the Hessian of |r|^2 / 2, by forward
/// differences of the Jacobian.
Matrix residual_curvature(const AugmentedProblem& prob, const Vector& z, const Vector& r,
                          const Matrix& jac) {
  const Eigen::Index nz = z.size();
  Matrix s(nz, nz);
  Vector zp = z;
  Vector rp;
  Matrix jp;
  for (Eigen::Index i = 0; i < nz; ++i) {
    const double h = 1e-6 * (1.0 + std::abs(z[i]));
    zp[i] = z[i] + h;
    prob.residuals(zp, rp, &jp);
    s.col(i) = (jp - jac).transpose() * r / h;
    zp[i] = z[i];
  }
  return 0.5 * (s + s.transpose());
}

/// Iterations of plain Gauss-Newton steps before the residual curvature is added.
constexpr int kGaussNewtonIterations = 20;

/// Projected Levenberg-Marquardt with Marquardt diagonal scaling on the box of z.
/// Variables sitting on a bound with the gradient pointing outward are frozen for the
/// step; a step component that would cross a bound is clamped to it and the rest
/// re-solved. Slow progress switches from the Gauss-Newton matrix to the full Hessian.
LmResult minimize(const AugmentedProblem& prob, Vector z, const SolverSettings& s,
                  int max_iterations) {
  const Vector& lo = prob.lower();
  const Vector& hi = prob.upper();
  z = z.cwiseMax(lo).cwiseMin(hi);
  const Eigen::Index nz = z.size();

  Vector r;
  Matrix jac;
  prob.residuals(z, r, &jac);
  LmResult res;
  res.cost = r.squaredNorm();
  double lambda = s.initial_damping;
  constexpr double kMaxDamping = 1e16;

  for (int it = 0; it < max_iterations; ++it) {
    res.iterations = it;
    const Vector grad = jac.transpose() * r;  // half the cost gradient
    std::vector<Eigen::Index> free;
    free.reserve(static_cast<std::size_t>(nz));
    double pg = 0.0;
    for (Eigen::Index i = 0; i < nz; ++i) {
      const bool at_lo = z[i] <= lo[i] && grad[i] > 0.0;
      const bool at_hi = z[i] >= hi[i] && grad[i] < 0.0;
      if (at_lo || at_hi) continue;
      free.push_back(i);
      pg = std::max(pg, std::abs(grad[i]));
    }
    if (2.0 * pg <= s.gradient_tolerance * (1.0 + res.cost)) {
      res.converged = true;
      break;
    }

    const auto nf = static_cast<Eigen::Index>(free.size());
    Matrix jf(jac.rows(), nf);
    Vector gf(nf);
    for (Eigen::Index c = 0; c < nf; ++c) {
      jf.col(c) = jac.col(free[c]);
      gf[c] = grad[free[c]];
    }
    Matrix normal = jf.transpose() * jf;
    Vector diag = normal.diagonal();
    const double floor = std::max(1e-12 * diag.maxCoeff(), std::numeric_limits<double>::min());
    diag = diag.cwiseMax(floor);
    if (it >= kGaussNewtonIterations) {
      const Matrix curv = residual_curvature(prob, z, r, jac);
      for (Eigen::Index a = 0; a < nf; ++a) {
        for (Eigen::Index b = 0; b < nf; ++b) normal(a, b) += curv(free[a], free[b]);
      }
    }

    bool accepted = false;
    bool tiny_step = false;
    while (lambda <= kMaxDamping) {
      Vector trial = z;
      bool indefinite = false;
      std::vector<bool> clamped(static_cast<std::size_t>(nf), false);
      Vector dz = Vector::Zero(nf);
      for (Eigen::Index pass = 0; pass <= nf; ++pass) {
        std::vector<Eigen::Index> open;
        for (Eigen::Index c = 0; c < nf; ++c) {
          if (!clamped[static_cast<std::size_t>(c)]) open.push_back(c);
        }
        const auto no = static_cast<Eigen::Index>(open.size());
        if (no == 0) break;
        Matrix lhs(no, no);
        Vector rhs(no);
        for (Eigen::Index a = 0; a < no; ++a) {
          rhs[a] = -gf[open[a]];
          for (Eigen::Index c = 0; c < nf; ++c) {
            if (clamped[static_cast<std::size_t>(c)]) rhs[a] -= normal(open[a], c) * dz[c];
          }
          for (Eigen::Index b = 0; b < no; ++b) lhs(a, b) = normal(open[a], open[b]);
          lhs(a, a) += lambda * diag[open[a]];
        }
        const Eigen::LLT<Matrix> llt(lhs);
        if (llt.info() != Eigen::Success) {
          indefinite = true;
          break;
        }
        const Vector sol = llt.solve(rhs);
        bool crossed = false;
        for (Eigen::Index a = 0; a < no; ++a) {
          const Eigen::Index c = open[a];
          const Eigen::Index i = free[c];
          dz[c] = sol[a];
          const double target = z[i] + sol[a];
          if (target < lo[i] || target > hi[i]) {
            dz[c] = (target < lo[i] ? lo[i] : hi[i]) - z[i];
            clamped[static_cast<std::size_t>(c)] = true;
            crossed = true;
          }
        }
        if (!crossed) break;
      }
      if (indefinite) {
        lambda *= s.damping_increase;
        continue;
      }
      for (Eigen::Index c = 0; c < nf; ++c) trial[free[c]] += dz[c];
      trial = trial.cwiseMax(lo).cwiseMin(hi);

      const double step_norm = (trial - z).norm();
      if (step_norm <= s.step_tolerance * (z.norm() + s.step_tolerance)) {
        tiny_step = true;
        break;
      }
      Vector r_trial;
      prob.residuals(trial, r_trial, nullptr);
      const double trial_cost = r_trial.squaredNorm();
      if (trial_cost < res.cost) {
        z = std::move(trial);
        res.cost = trial_cost;
        lambda = std::max(lambda * s.damping_decrease, 1e-15);
        accepted = true;
        break;
      }
      lambda *= s.damping_increase;
    }
    if (!accepted) {
      // No decrease is possible at any damping: a stationary point to working precision.
      res.converged = tiny_step || lambda > kMaxDamping;
      res.iterations = it + 1;
      break;
    }
    prob.residuals(z, r, &jac);
    res.cost = r.squaredNorm();
    res.iterations = it + 1;
  }
  res.z = std::move(z);
  return res;
}

constexpr double kConstraintTolerance = 1e-10;
constexpr double kMaxPenalty = 1e16;
constexpr int kMaxOuterIterations = 30;

/// Path constraints by the augmented Lagrangian method around the projected LM.
/// Stops when the inner solve converged and the worst violation of g >= 0 is at most
/// kConstraintTolerance.
LmResult solve_constrained(const ShootingProblem& prob, Vector z, const SolverSettings& s) {
  const Eigen::Index nc = prob.num_constraints();
  Vector multipliers = Vector::Zero(nc);
  Vector r, g;
  prob.evaluate(z.cwiseMax(prob.lower()).cwiseMin(prob.upper()), r, g, nullptr, nullptr);
  double penalty = 1e3 * std::max(1.0, r.squaredNorm());
  double prev_violation = kInf;
  int budget = s.max_iterations;
  LmResult total;
  for (int outer = 0; outer < kMaxOuterIterations && budget > 0; ++outer) {
    const AugmentedProblem aug(prob, multipliers, penalty, s.jacobian);
    LmResult inner = minimize(aug, std::move(z), s, budget);
    budget -= inner.iterations;
    total.iterations += inner.iterations;
    z = std::move(inner.z);

    prob.evaluate(z, r, g, nullptr, nullptr);
    const double violation = nc == 0 ? 0.0 : std::max(0.0, -g.minCoeff());
    total.converged = inner.converged && violation <= kConstraintTolerance;
    if (total.converged || nc == 0) break;
    for (Eigen::Index i = 0; i < nc; ++i) {
      multipliers[i] = std::max(0.0, multipliers[i] - penalty * g[i]);
    }
    if (violation > 0.25 * prev_violation) penalty = std::min(penalty * 10.0, kMaxPenalty);
    prev_violation = violation;
  }
  prob.evaluate(z, r, g, nullptr, nullptr);
  total.cost = r.squaredNorm();
  total.z = std::move(z);
  return total;
}

}  // namespace

MheSolution solve_nlp(const MheWindow& window, const SystemModel& model, const MheConfig& cfg,
                      const std::optional<MheSolution>& warm_start) {
  window.validate(model);
  cfg.cert().validate_for(model.dims());
  const ShootingProblem prob(window, model, cfg);

  Vector z0;
  if (warm_start && static_cast<int>(warm_start->w_seq.size()) == window.horizon &&
      warm_start->x_init.size() == model.n()) {
    z0 = prob.pack(warm_start->x_init, warm_start->w_seq);
  } else {
    z0 = prob.pack(window.prior, std::vector<Vector>(window.horizon, model.zero_disturbance()));
  }

  const LmResult lm = solve_constrained(prob, z0, cfg.solver());

  MheSolution sol;
  sol.t = window.t;
  sol.horizon = window.horizon;
  sol.delta = window.delta;
  sol.x_init = lm.z.head(model.n());
  sol.w_seq = prob.unpack_w(lm.z);
  Rollout path = rollout(model, sol.x_init, window.inputs, sol.w_seq);
  sol.x_seq = std::move(path.states);
  sol.y_seq = std::move(path.outputs);
  sol.cost = lm.cost;
  sol.iterations = lm.iterations;
  sol.converged = lm.converged;
  return sol;
}

MheSolution assemble_event_solution(const MheSolution& prev, int delta, const SystemModel& model,
                                    const MheConfig& cfg, const std::vector<Vector>& u_seq) {
  if (delta < 0) throw LogicError("assemble_event_solution: delta must be >= 0");
  if (static_cast<int>(u_seq.size()) != delta) {
    throw LogicError("assemble_event_solution: need one input per appended step");
  }
  if (prev.x_seq.empty()) throw LogicError("assemble_event_solution: previous solution is empty");
  MheSolution out = prev;
  if (delta == 0) return out;
  out.t = prev.t + delta;
  out.horizon = prev.horizon + delta;
  out.delta = prev.delta + delta;
  const Vector zero_w = model.zero_disturbance();
  for (int k = 0; k < delta; ++k) {
    const Vector& x = out.x_seq.back();
    out.w_seq.push_back(zero_w);
    out.y_seq.push_back(model.output(x, u_seq[k], zero_w));
    out.x_seq.push_back(model.step(x, u_seq[k], zero_w));
  }
  out.cost = std::pow(cfg.eta(), delta) * prev.cost;
  return out;
}

MheSolution shift_solution(const MheSolution& prev, const MheWindow& window,
                           const SystemModel& model) {
  MheSolution warm;
  warm.t = window.t;
  warm.horizon = window.horizon;
  warm.delta = window.delta;
  const int prev_start = prev.t - prev.horizon;
  const int offset = window.start() - prev_start;
  if (offset < 0 || window.start() > prev.t || prev.x_seq.empty()) {
    warm.x_init = window.prior;
    warm.w_seq.assign(window.horizon, model.zero_disturbance());
    return warm;
  }
  warm.x_init = prev.x_seq[offset];
  warm.w_seq.assign(prev.w_seq.begin() + offset, prev.w_seq.end());
  warm.w_seq.resize(window.horizon, model.zero_disturbance());
  return warm;
}

}  // namespace etmhe
