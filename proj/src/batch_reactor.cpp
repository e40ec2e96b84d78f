#include "etmhe/batch_reactor.hpp"

#include <utility>

#include "etmhe/errors.hpp"

namespace etmhe {

SystemModel make_batch_reactor(const BatchReactorParams& params, bool nonnegative_states,
                               std::optional<Box> w_set) {
  if (!(params.tau > 0.0)) throw ConfigError("batch reactor: sampling time must be positive");
  const double k1 = params.k1;
  const double k2 = params.k2;
  const double tau = params.tau;

  auto f = [k1, k2, tau](const Vector& x, const Vector&, const Vector& w) {
    Vector next(2);
    const double x1sq = x[0] * x[0];
    next[0] = x[0] + tau * (-2.0 * k1 * x1sq + 2.0 * k2 * x[1]) + w[0];
    next[1] = x[1] + tau * (k1 * x1sq - k2 * x[1]) + w[1];
    return next;
  };
  auto h = [](const Vector& x, const Vector&, const Vector& w) {
    Vector y(1);
    y[0] = x[0] + x[1] + w[2];
    return y;
  };
  auto jac = [k1, k2, tau](const Vector& x, const Vector&, const Vector&) {
    Linearization lin;
    lin.fx.resize(2, 2);
    lin.fx << 1.0 - 4.0 * tau * k1 * x[0], 2.0 * tau * k2,  //
        2.0 * tau * k1 * x[0], 1.0 - tau * k2;
    lin.fw = Matrix::Zero(2, 3);
    lin.fw(0, 0) = 1.0;
    lin.fw(1, 1) = 1.0;
    lin.hx = Matrix::Ones(1, 2);
    lin.hw = Matrix::Zero(1, 3);
    lin.hw(0, 2) = 1.0;
    return lin;
  };

  Box x_set = nonnegative_states ? Box::uniform(2, 0.0, kInf) : Box::unbounded(2);
  return SystemModel("batch_reactor", Dimensions{2, 0, 3, 1}, std::move(f), std::move(h),
                     std::move(x_set), w_set ? std::move(*w_set) : Box::unbounded(3),
                     Box::unbounded(1), std::move(jac));
}

}  // namespace etmhe
