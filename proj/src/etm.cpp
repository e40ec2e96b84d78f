#include "etmhe/etm.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "etmhe/errors.hpp"

namespace etmhe {

EtmState EtmState::initial(double alpha, Vector initial_estimate) {
  if (!(alpha >= 0.0)) throw ConfigError("alpha must be >= 0");
  EtmState s;
  s.alpha = alpha;
  s.anchor = std::move(initial_estimate);
  return s;
}

double trigger_residual(const EtmState& state, const SystemModel& model,
                        const std::vector<Vector>& y_window, const std::vector<Vector>& u_window,
                        const IossCertificate& cert) {
  const int span = state.t - state.last_event;
  if (span <= 0) throw LogicError("trigger window is empty");
  if (static_cast<int>(y_window.size()) != span || static_cast<int>(u_window.size()) != span) {
    throw LogicError("trigger window must hold y_j, u_j for every j in [eps, t - 1]");
  }
  const Vector zero_w = model.zero_disturbance();
  Vector x = state.anchor;
  double sum = 0.0;
  for (int k = 0; k < span; ++k) {
    if (k > 0) x = open_loop_predict(model, x, u_window[k - 1]);
    const Vector e = y_window[k] - model.output(x, u_window[k], zero_w);
    sum += std::pow(cert.eta, span - k - 1) * e.dot(cert.r * e);
  }
  return sum;
}

bool evaluate_trigger(const EtmState& state, const SystemModel& model,
                      const std::vector<Vector>& y_window, const std::vector<Vector>& u_window,
                      const IossCertificate& cert) {
  const double lhs = trigger_residual(state, model, y_window, u_window, cert);
  const double threshold = state.alpha * std::pow(cert.eta, state.t - state.last_event) * state.d;
  return !(lhs < threshold);
}

double compute_d(const MheSolution& solution, const MheWindow& window, const IossCertificate& cert) {
  if (solution.t != window.t || solution.horizon != window.horizon || window.delta != 0 ||
      solution.delta != 0) {
    throw LogicError("compute_d needs the event-time solution of the same window");
  }
  if (static_cast<int>(solution.w_seq.size()) != window.horizon ||
      static_cast<int>(solution.y_seq.size()) != window.horizon ||
      static_cast<int>(window.measurements.size()) != window.horizon) {
    throw LogicError("compute_d: solution and window lengths disagree");
  }
  double d = 0.0;
  const int n_steps = window.horizon;
  for (int k = 0; k < n_steps; ++k) {
    const Vector& w = solution.w_seq[k];
    const Vector e = solution.y_seq[k] - window.measurements[k];
    d += std::pow(cert.eta, n_steps - 1 - k) * (2.0 * w.dot(cert.q * w) + e.dot(cert.r * e));
  }
  return std::max(d, 0.0);
}

EtmState advance(const EtmState& state, bool gamma, std::optional<double> d_next,
                 std::optional<Vector> estimate) {
  EtmState next = state;
  if (gamma) {
    if (!d_next || !estimate) throw ProtocolError("event feedback must carry d_{t+1} and x^_t");
    if (!(*d_next >= 0.0)) throw ProtocolError("d_{t+1} must be >= 0");
    next.last_event = state.t;
    next.delta = 0;
    next.d = *d_next;
    next.anchor = std::move(*estimate);
    next.outputs.clear();
    next.inputs.clear();
  } else {
    next.delta = state.delta + 1;
  }
  next.t = state.t + 1;
  return next;
}

EventTrigger::EventTrigger(SystemModel model, IossCertificate cert, int horizon, double alpha,
                           Vector initial_estimate)
    : model_(std::move(model)),
      cert_(std::move(cert)),
      horizon_(horizon),
      state_(EtmState::initial(alpha, std::move(initial_estimate))) {
  if (horizon_ < 0) throw ConfigError("horizon must be >= 0");
  if (state_.anchor.size() != model_.n()) throw ConfigError("initial estimate has wrong dimension");
}

bool EventTrigger::decide(const Vector& y_prev, const Vector& u_prev) {
  if (y_prev.size() != model_.p() || u_prev.size() != model_.m()) {
    throw ConfigError("trigger received measurement or input of wrong dimension");
  }
  state_.outputs.push_back(y_prev);
  state_.inputs.push_back(u_prev);
  return evaluate_trigger(state_, model_, state_.outputs, state_.inputs, cert_);
}

MeasurementBlock EventTrigger::block() const {
  const int first = std::max(state_.t - horizon_, state_.last_event);
  MeasurementBlock out;
  out.first = first;
  const auto skip = static_cast<std::ptrdiff_t>(first - state_.last_event);
  out.values.assign(state_.outputs.begin() + skip, state_.outputs.end());
  return out;
}

void EventTrigger::complete(bool gamma, std::optional<double> d_next,
                            std::optional<Vector> estimate) {
  state_ = advance(state_, gamma, d_next, std::move(estimate));
}

}  // namespace etmhe
