#pragma once

#include <cstdint>
#include <random>

#include "etmhe/system_model.hpp"

namespace etmhe {

using Rng = std::mt19937_64;

/// Per-coordinate magnitude bounds |w_i| <= b_i.
struct DisturbanceBounds {
  Vector b;

  static DisturbanceBounds batch_reactor();  // (1e-3, 1e-3, 0.1)
  void validate() const;
  Box box() const { return Box::symmetric(b); }
};

/// Uniform double in [0, 1) from the top 53 bits of one draw. Unlike
/// std::uniform_real_distribution this is bit-identical across standard libraries.
double uniform01(Rng& rng);

/// Uniform double in [lo, hi].
double uniform(Rng& rng, double lo, double hi);

/// Each coordinate uniform on [-b_i, b_i]. Throws ConfigError for negative bounds.
Vector sample_disturbance(Rng& rng, const DisturbanceBounds& bounds);

}  // namespace etmhe
