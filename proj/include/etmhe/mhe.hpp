#pragma once

#include <optional>
#include <vector>

#include "etmhe/ioss.hpp"
#include "etmhe/system_model.hpp"

namespace etmhe {

enum class JacobianMode {
  kModel,             // model-supplied derivatives, forward differences per model call otherwise
  kFiniteDifference,  // forward differences on the whole residual vector
};

struct SolverSettings {
  int max_iterations = 100;
  double gradient_tolerance = 1e-10;
  double step_tolerance = 1e-12;
  double initial_damping = 1e-3;
  double damping_increase = 10.0;
  double damping_decrease = 0.1;
  JacobianMode jacobian = JacobianMode::kModel;

  void validate() const;
};

/// Horizon, trigger sensitivity and cost weights of the estimator.
class MheConfig {
 public:
  /// Throws StabilityError if horizon < min_horizon(cert) unless allow_short_horizon
  /// is set, in which case a warning is written to stderr once per process.
  MheConfig(int horizon, double alpha, IossCertificate cert, SolverSettings solver = {},
            bool allow_short_horizon = false);

  int horizon() const { return horizon_; }
  double alpha() const { return alpha_; }
  double eta() const { return cert_.eta; }
  const IossCertificate& cert() const { return cert_; }
  const SolverSettings& solver() const { return solver_; }

 private:
  int horizon_;
  double alpha_;
  IossCertificate cert_;
  SolverSettings solver_;
};

/// M_t = min{t, M + delta_t}.
int effective_horizon(int t, int base_horizon, int delta);

/// Data available to the estimator for one NLP at time t.
///
/// The window spans j in [t - M_t, t]. Outputs are present for
/// j in [t - M_t, t - delta - 1] only; inputs for j in [t - M_t, t - 1].
struct MheWindow {
  int t = 0;
  int horizon = 0;  // M_t
  int delta = 0;    // delta_t
  Vector prior;     // filtering prior x^_{t - M_t}
  std::vector<Vector> measurements;
  std::vector<Vector> inputs;

  int start() const { return t - horizon; }
  int measured_steps() const { return horizon - delta; }
  /// Dimension and length checks; throws ConfigError.
  void validate(const SystemModel& model) const;
};

struct MheSolution {
  int t = 0;
  int horizon = 0;
  int delta = 0;
  Vector x_init;                // x^*_{t - M_t | t}
  std::vector<Vector> w_seq;    // j in [t - M_t, t - 1]
  std::vector<Vector> x_seq;    // j in [t - M_t, t]
  std::vector<Vector> y_seq;    // j in [t - M_t, t - 1]
  double cost = 0.0;
  int iterations = 0;
  bool converged = true;

  /// x^*_{t|t}
  const Vector& estimate() const { return x_seq.back(); }
};

struct Rollout {
  std::vector<Vector> states;   // length N + 1
  std::vector<Vector> outputs;  // length N
};

/// Forward simulation x_{k+1} = f(x_k, u_k, w_k), y_k = h(x_k, u_k, w_k).
Rollout rollout(const SystemModel& model, const Vector& x_init, const std::vector<Vector>& u_seq,
                const std::vector<Vector>& w_seq);

/// f(x_prev, u_prev, 0)
Vector open_loop_predict(const SystemModel& model, const Vector& x_prev, const Vector& u_prev);

/// Discounted MHE cost
///   2 eta^{M_t} |x_init - prior|^2_P2
///   + (alpha + 1) (sum_j eta^{t-j-1} 2 |w_j|^2_Q + sum_{measured j} eta^{t-j-1} |y^_j - y_j|^2_R).
double eval_cost(const MheWindow& window, const Vector& x_init, const std::vector<Vector>& w_seq,
                 const SystemModel& model, const MheConfig& cfg);

/// Minimizes the MHE cost over (x_init, w_seq) subject to the model and the box sets
/// by projected Levenberg-Marquardt on the single-shooting residual vector. Bounds on
/// x_init and w are kept by projection; bounds of X on the later states and of Y on
/// the outputs by an augmented Lagrangian, satisfied to 1e-10 at convergence.
/// f and h must be defined outside X for this.
///
/// The warm start, if given, must match the window's horizon; it is projected onto
/// the bounds. Otherwise the solver starts from (prior, 0). Non-convergence is
/// reported through MheSolution::converged, never thrown.
MheSolution solve_nlp(const MheWindow& window, const SystemModel& model, const MheConfig& cfg,
                      const std::optional<MheSolution>& warm_start = std::nullopt);

/// Extends the solution of the last event by delta open-loop steps: same x_init,
/// same w on the old window, w = 0 afterwards, cost scaled by eta^delta.
/// u_seq holds the inputs of the appended steps (length delta).
MheSolution assemble_event_solution(const MheSolution& prev, int delta, const SystemModel& model,
                                    const MheConfig& cfg, const std::vector<Vector>& u_seq);

/// Warm start for `window` from an earlier event solution: the overlapping part of
/// prev, padded with zero disturbances. Falls back to (prior, 0) without overlap.
MheSolution shift_solution(const MheSolution& prev, const MheWindow& window,
                           const SystemModel& model);

}  // namespace etmhe
