#pragma once

#include <optional>
#include <vector>

#include "etmhe/ioss.hpp"
#include "etmhe/mhe.hpp"
#include "etmhe/system_model.hpp"

namespace etmhe {

/// Trigger bookkeeping held on the plant side.
///
/// `t` is the next time to be decided. `last_event` is eps_t, the latest event
/// strictly before t. `delta` is delta of the last decided step and `d` the
/// threshold scale d_t, constant between events.
struct EtmState {
  int t = 1;
  int last_event = 0;
  int delta = 0;
  double d = 0.0;
  double alpha = 0.0;
  Vector anchor;                 // x^_eps as sent back by the estimator
  std::vector<Vector> outputs;   // y_j, j in [eps, t - 1]
  std::vector<Vector> inputs;    // u_j, j in [eps, t - 1]

  /// State at t = 1 after the conventional event at t = 0: eps = 0, d_1 = 0.
  static EtmState initial(double alpha, Vector initial_estimate);
};

/// Discounted prediction residual sum_{j=eps}^{t-1} eta^{t-j-1} |y_j - h(x^_j, u_j, 0)|^2_R,
/// with x^_j propagated open loop from the anchor.
double trigger_residual(const EtmState& state, const SystemModel& model,
                        const std::vector<Vector>& y_window, const std::vector<Vector>& u_window,
                        const IossCertificate& cert);

/// gamma_t: false iff the residual is strictly below alpha eta^{t - eps} d_t.
/// Throws LogicError if the window does not cover [eps, t - 1].
bool evaluate_trigger(const EtmState& state, const SystemModel& model,
                      const std::vector<Vector>& y_window, const std::vector<Vector>& u_window,
                      const IossCertificate& cert);

/// d_{t+1} from the fresh solution at event time t = solution.t:
///   sum_{j=t-M_t}^{t-1} eta^{t-1-j} (2 |w^*_j|^2_Q + |y^*_j - y_j|^2_R).
double compute_d(const MheSolution& solution, const MheWindow& window, const IossCertificate& cert);

/// Moves the state to t + 1. At an event, d_next and the new estimate are mandatory
/// (ProtocolError otherwise) and the residual history restarts.
EtmState advance(const EtmState& state, bool gamma, std::optional<double> d_next,
                 std::optional<Vector> estimate);

/// Measurements sent at an event: y_j for j in [first, first + values.size()).
struct MeasurementBlock {
  int first = 0;
  std::vector<Vector> values;
};

/// Plant-side event-triggering mechanism. It sees the outputs and inputs of the
/// plant and whatever the estimator sends back; never the state.
class EventTrigger {
 public:
  EventTrigger(SystemModel model, IossCertificate cert, int horizon, double alpha,
               Vector initial_estimate);

  /// Receives y_{t-1}, u_{t-1} and decides gamma_t.
  bool decide(const Vector& y_prev, const Vector& u_prev);
  /// y_j for j in [max(t - M, eps_t), t - 1]; valid after decide() returned true.
  MeasurementBlock block() const;
  /// Completes step t. Event feedback is (x^_t, d_{t+1}).
  void complete(bool gamma, std::optional<double> d_next = std::nullopt,
                std::optional<Vector> estimate = std::nullopt);

  const EtmState& state() const { return state_; }

 private:
  SystemModel model_;
  IossCertificate cert_;
  int horizon_;
  EtmState state_;
};

}  // namespace etmhe
