#pragma once

#include "etmhe/system_model.hpp"

namespace etmhe {

/// Euler-discretized two-species batch reactor 2A <-> B, measured through total
/// concentration. State (c_A, c_B), disturbance (w1, w2, w3), output c_A + c_B + w3.
struct BatchReactorParams {
  double k1 = 0.16;
  double k2 = 0.0064;
  double tau = 0.1;
};

/// Builds the reactor model. X defaults to the nonnegative orthant; pass
/// `nonnegative_states = false` for X = R^2. W defaults to R^3 unless a box is given.
SystemModel make_batch_reactor(const BatchReactorParams& params = {}, bool nonnegative_states = true,
                               std::optional<Box> w_set = std::nullopt);

}  // namespace etmhe
