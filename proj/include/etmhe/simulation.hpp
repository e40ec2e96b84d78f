#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "etmhe/batch_reactor.hpp"
#include "etmhe/disturbance.hpp"
#include "etmhe/etm.hpp"
#include "etmhe/ioss.hpp"
#include "etmhe/mhe.hpp"

namespace etmhe {

struct ModelSpec {
  std::string name = "batch_reactor";
  BatchReactorParams reactor;
  bool nonnegative_states = true;
  bool constrain_disturbances = false;  // true: W = disturbance box; false: W = R^q
};

struct SimConfig {
  ModelSpec model;
  IossCertificate cert = IossCertificate::batch_reactor();
  int horizon = 30;
  double alpha = 5.0;
  int steps = 100;  // T
  Vector x0;
  Vector xhat0;
  DisturbanceBounds bounds = DisturbanceBounds::batch_reactor();
  std::uint64_t seed = 0;
  bool oracle_mode = false;
  bool warm_start = true;
  bool allow_short_horizon = false;
  SolverSettings solver;

  /// Batch reactor benchmark: x0 = (3, 1), xhat0 = (0.1, 4.5), M = 30, alpha = 5, T = 100.
  static SimConfig benchmark();
  SystemModel build_model() const;
  MheConfig build_mhe() const;
  /// Throws ConfigError / CertificateError / StabilityError.
  void validate() const;
};

struct TraceRow {
  int t = 0;
  Vector x;
  Vector xhat;
  Vector y;
  bool gamma = false;
  int delta = 0;
  int eps = 0;
  double d = 0.0;          // d_t used for the decision at t
  double err_norm = 0.0;   // |x_t - xhat_t|
  double w_norm = 0.0;     // |w_t|
  double rges_bound = 0.0;
  double cost = 0.0;       // J* at events; eta^delta J*(eps) between events
  int solver_iters = 0;
  bool solver_converged = true;  // of the solve that produced xhat_t
  int tx_count = 0;        // measurements transmitted at t
};

inline constexpr double kMaxNonconvergedFraction = 0.01;

struct SimTrace {
  std::vector<TraceRow> rows;  // t = 0 .. T

  int solves = 0;
  int nonconverged = 0;

  int steps() const { return rows.empty() ? 0 : static_cast<int>(rows.size()) - 1; }
  int events() const;  // sum of gamma_t over t >= 1
  double event_fraction() const;
  /// More than kMaxNonconvergedFraction of the solves did not converge.
  bool failed() const;
};

/// Precomputed disturbance realization w_0 .. w_T for a seed.
std::vector<Vector> disturbance_sequence(const DisturbanceBounds& bounds, int steps,
                                         std::uint64_t seed);

/// Remote estimator: receives measurement blocks at events, solves the NLP and
/// otherwise predicts open loop.
class RemoteEstimator {
 public:
  RemoteEstimator(SystemModel model, MheConfig cfg, Vector initial_estimate, bool warm_start);

  struct Event {
    Vector estimate;
    double d_next = 0.0;
    MheSolution solution;
    MheWindow window;
  };

  /// Time t with an event: the block must hold y_j for j in [max(t - M, eps_t), t - 1].
  Event on_event(int t, const MeasurementBlock& block, const Vector& u_prev);
  /// Time t without an event.
  Vector on_quiet(int t, const Vector& u_prev);

  const std::vector<Vector>& estimates() const { return estimates_; }
  /// Window at time t with delta_t = delta from the measurements received so far.
  MheWindow window(int t, int delta) const;

 private:
  SystemModel model_;
  MheConfig cfg_;
  bool warm_start_;
  std::vector<Vector> estimates_;                   // xhat_0 .. xhat_t
  std::vector<std::optional<Vector>> received_;     // y_j as delivered
  std::vector<Vector> inputs_;                      // u_0 .. u_{t-1}
  std::optional<MheSolution> last_solution_;
};

/// Runs the event-triggered loop for t = 1 .. T. Deterministic for a fixed config.
SimTrace run_closed_loop(const SimConfig& cfg);

struct EquivalenceReport {
  double max_discrepancy = 0.0;      // max over t and coordinates
  double max_cost_rel_error = 0.0;   // non-event steps: oracle cost vs eta^delta J*(eps)
  int events = 0;
  int steps = 0;
  bool oracle_converged = true;
  bool passed(double state_tol = 1e-6, double cost_tol = 1e-9) const {
    return max_discrepancy <= state_tol && max_cost_rel_error <= cost_tol;
  }
};

/// Replays the closed loop and, at every t, solves the NLP with the full time-varying
/// horizon M_t = min{t, M + delta_t} from a cold start; compares with the
/// event-triggered estimates. Requires cfg.oracle_mode.
EquivalenceReport verify_proposition1(const SimConfig& cfg);

struct SweepRun {
  double alpha = 0.0;
  std::uint64_t seed = 0;
  std::vector<int> event_times;
  double event_fraction = 0.0;
  double rmse = 0.0;  // of |x - xhat| over t = 0 .. T
  SimTrace trace;
  std::string error;  // empty on success, also set for failed() traces
};

struct SweepReport {
  std::vector<SweepRun> runs;  // ordered by (alpha, seed) as given
};

/// All (alpha, seed) runs, concurrently; identical disturbances for equal seeds.
SweepReport run_alpha_sweep(const SimConfig& cfg, const std::vector<double>& alphas,
                            const std::vector<std::uint64_t>& seeds);

struct BoundReport {
  int checked = 0;
  int violations = 0;
  int excluded = 0;             // steps from non-converged solves
  double min_margin = kInf;     // min over checked t of bound - err
  std::vector<int> violating_steps;
};

/// Compares |e_t| with the exponential bound at each t.
BoundReport check_rges(const SimTrace& trace, const RgesConstants& constants);

struct MetricsReport {
  Vector rmse_et;            // per state, full run
  Vector rmse_mhe;
  Vector rmse_et_post;       // per state, t >= post_start
  Vector rmse_mhe_post;
  double err_rmse_et_post = 0.0;   // RMSE of |e_t|, t >= post_start
  double err_rmse_mhe_post = 0.0;
  double post_ratio = 1.0;         // err_rmse_et_post / err_rmse_mhe_post
  double event_fraction = 0.0;
  double solve_reduction_pct = 0.0;
};

inline constexpr int kPostTransientStart = 30;

/// Traces must come from the same realization. Throws LogicError on length mismatch.
MetricsReport performance_metrics(const SimTrace& trace_et, const SimTrace& trace_mhe,
                                  int post_start = kPostTransientStart);

}  // namespace etmhe
