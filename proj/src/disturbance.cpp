#include "etmhe/disturbance.hpp"

#include <cmath>
#include <string>

#include "etmhe/errors.hpp"

namespace etmhe {

DisturbanceBounds DisturbanceBounds::batch_reactor() {
  DisturbanceBounds bounds{Vector(3)};
  bounds.b << 1e-3, 1e-3, 0.1;
  return bounds;
}

void DisturbanceBounds::validate() const {
  for (Eigen::Index i = 0; i < b.size(); ++i) {
    if (!(b[i] >= 0.0) || !std::isfinite(b[i])) {
      throw ConfigError("disturbance bound " + std::to_string(i) + " must be finite and >= 0");
    }
  }
}

double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

double uniform(Rng& rng, double lo, double hi) {
  const double u = uniform01(rng);
  const double v = lo + (hi - lo) * u;
  return v > hi ? hi : v;
}

Vector sample_disturbance(Rng& rng, const DisturbanceBounds& bounds) {
  bounds.validate();
  Vector w(bounds.b.size());
  for (Eigen::Index i = 0; i < w.size(); ++i) w[i] = uniform(rng, -bounds.b[i], bounds.b[i]);
  return w;
}

}  // namespace etmhe
