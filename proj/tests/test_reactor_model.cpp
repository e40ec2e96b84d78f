#include <cmath>

#include "doctest.h"
#include "etmhe/batch_reactor.hpp"
#include "etmhe/disturbance.hpp"
#include "etmhe/errors.hpp"

using namespace etmhe;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

}  // namespace

TEST_CASE("batch reactor step") {
  const SystemModel model = make_batch_reactor();
  const Vector u = model.zero_input();

  SUBCASE("origin is a fixed point") {
    const Vector next = model.step(vec({0, 0}), u, Vector::Zero(3));
    CHECK(next[0] == 0.0);
    CHECK(next[1] == 0.0);
  }
  SUBCASE("hand-substituted Euler map") {
    // x1+ = 3 + 0.1 (-2 * 0.16 * 9 + 2 * 0.0064), x2+ = 1 + 0.1 (0.16 * 9 - 0.0064)
    const Vector next = model.step(vec({3, 1}), u, Vector::Zero(3));
    CHECK(next[0] == doctest::Approx(2.71328).epsilon(1e-12));
    CHECK(next[1] == doctest::Approx(1.14336).epsilon(1e-12));
  }
  SUBCASE("additive process disturbance") {
    const Vector next = model.step(vec({3, 1}), u, vec({1e-3, -1e-3, 0}));
    CHECK(next[0] == doctest::Approx(2.71428).epsilon(1e-12));
    CHECK(next[1] == doctest::Approx(1.14236).epsilon(1e-12));
  }
  SUBCASE("inputs are not mutated and results are bit-identical") {
    const Vector x = vec({1.3, 0.7});
    const Vector w = vec({1e-4, 2e-4, 0.05});
    const Vector a = model.step(x, u, w);
    const Vector b = model.step(x, u, w);
    CHECK(x == vec({1.3, 0.7}));
    CHECK(a == b);
  }
}

TEST_CASE("batch reactor output") {
  const SystemModel model = make_batch_reactor();
  const Vector u = model.zero_input();
  CHECK(model.output(vec({3, 1}), u, Vector::Zero(3))[0] == 4.0);
  CHECK(model.output(vec({0, 0}), u, vec({0, 0, 0.1}))[0] == 0.1);
  CHECK(model.output(vec({0.1, 4.5}), u, Vector::Zero(3))[0] == doctest::Approx(4.6).epsilon(1e-15));
}

TEST_CASE("dimension mismatches are configuration errors") {
  const SystemModel model = make_batch_reactor();
  CHECK_THROWS_AS(model.step(vec({1, 2, 3}), model.zero_input(), Vector::Zero(3)), ConfigError);
  CHECK_THROWS_AS(model.step(vec({1, 2}), Vector::Zero(1), Vector::Zero(3)), ConfigError);
  CHECK_THROWS_AS(model.output(vec({1, 2}), model.zero_input(), Vector::Zero(2)), ConfigError);
}

TEST_CASE("analytic Jacobian agrees with central differences") {
  const SystemModel model = make_batch_reactor();
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const Vector x = vec({uniform(rng, 0, 5), uniform(rng, 0, 5)});
    const Vector w = vec({uniform(rng, -1e-3, 1e-3), uniform(rng, -1e-3, 1e-3), uniform(rng, -0.1, 0.1)});
    const Linearization lin = model.linearize(x, model.zero_input(), w);
    for (Eigen::Index i = 0; i < 2; ++i) {
      Vector xp = x, xm = x;
      xp[i] += 1e-6;
      xm[i] -= 1e-6;
      const Vector col = (model.step(xp, {}, w) - model.step(xm, {}, w)) / 2e-6;
      CHECK((lin.fx.col(i) - col).norm() < 1e-8);
    }
  }
}

TEST_CASE("sets: default X is the nonnegative orthant and W contains zero") {
  const SystemModel model = make_batch_reactor();
  CHECK(model.x_set().contains(vec({0, 0})));
  CHECK_FALSE(model.x_set().contains(vec({-1e-3, 0})));
  CHECK(model.w_set().contains(Vector::Zero(3)));
  const SystemModel free = make_batch_reactor({}, false);
  CHECK(free.x_set().contains(vec({-5, 5})));
  CHECK_THROWS_AS(make_batch_reactor({}, true, Box::uniform(3, 0.1, 0.2)), ConfigError);
}

TEST_CASE("disturbance sampling") {
  SUBCASE("degenerate bounds give zero") {
    Rng rng(3);
    const Vector w = sample_disturbance(rng, DisturbanceBounds{Vector::Zero(3)});
    CHECK(w == Vector::Zero(3));
  }
  SUBCASE("bounds hold for a million samples") {
    const DisturbanceBounds bounds = DisturbanceBounds::batch_reactor();
    for (std::uint64_t seed : {0ull, 1ull, 12345ull}) {
      Rng rng(seed);
      bool ok = true;
      for (int k = 0; k < 1'000'000 / 3; ++k) {
        const Vector w = sample_disturbance(rng, bounds);
        ok = ok && (w.cwiseAbs().array() <= bounds.b.array()).all();
      }
      CHECK(ok);
    }
  }
  SUBCASE("same seed, same sequence") {
    Rng a(42), b(42);
    for (int k = 0; k < 100; ++k) {
      CHECK(sample_disturbance(a, DisturbanceBounds::batch_reactor()) ==
            sample_disturbance(b, DisturbanceBounds::batch_reactor()));
    }
  }
  SUBCASE("negative bound rejected") {
    Rng rng(1);
    CHECK_THROWS_AS(sample_disturbance(rng, DisturbanceBounds{vec({1e-3, -1, 0})}), ConfigError);
  }
  SUBCASE("coordinates cover both signs") {
    Rng rng(5);
    double lo = 0.0, hi = 0.0;
    for (int k = 0; k < 10000; ++k) {
      const double v = sample_disturbance(rng, DisturbanceBounds::batch_reactor())[2];
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    CHECK(lo < -0.099);
    CHECK(hi > 0.099);
  }
}
