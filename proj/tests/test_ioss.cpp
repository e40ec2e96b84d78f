#include <cmath>
#include <vector>

#include "doctest.h"
#include "etmhe/batch_reactor.hpp"
#include "etmhe/errors.hpp"
#include "etmhe/ioss.hpp"

using namespace etmhe;

namespace {

Matrix mat2(double a, double b, double c, double d) {
  Matrix m(2, 2);
  m << a, b, c, d;
  return m;
}

// Largest root of det(A - l B) = 0 for 2x2 matrices via the quadratic formula.
double quadratic_gen_eig(const Matrix& a, const Matrix& b) {
  const double qa = b.determinant();
  const double qb = -(a(0, 0) * b(1, 1) + a(1, 1) * b(0, 0) - a(0, 1) * b(1, 0) - a(1, 0) * b(0, 1));
  const double qc = a.determinant();
  const double disc = std::sqrt(std::max(0.0, qb * qb - 4.0 * qa * qc));
  return std::max((-qb + disc) / (2.0 * qa), (-qb - disc) / (2.0 * qa));
}

IossCertificate scalar_cert(double p1, double p2, double eta) {
  IossCertificate c;
  c.p1 = Matrix::Constant(1, 1, p1);
  c.p2 = Matrix::Constant(1, 1, p2);
  c.q = Matrix::Identity(1, 1);
  c.r = Matrix::Identity(1, 1);
  c.eta = eta;
  return c;
}

}  // namespace

TEST_CASE("generalized eigenvalue") {
  const Matrix a = mat2(2, 1, 1, 2);
  const Matrix b = mat2(1, 0, 0, 2);
  // 2 l^2 - 6 l + 3 = 0
  CHECK(max_generalized_eigenvalue(a, b) == doctest::Approx((3.0 + std::sqrt(3.0)) / 2.0).epsilon(1e-14));
  CHECK(max_generalized_eigenvalue(a, b) == doctest::Approx(quadratic_gen_eig(a, b)).epsilon(1e-12));

  SUBCASE("equal arguments give one") {
    const IossCertificate c = IossCertificate::batch_reactor();
    CHECK(max_generalized_eigenvalue(c.p1, c.p1) == doctest::Approx(1.0).epsilon(1e-9));
    const Matrix s = mat2(5, 2, 2, 3);
    CHECK(max_generalized_eigenvalue(s, s) == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("random pairs match the quadratic formula") {
    Rng rng(9);
    for (int k = 0; k < 200; ++k) {
      Matrix la = Matrix::Zero(2, 2), lb = Matrix::Zero(2, 2);
      la << uniform(rng, 0.1, 3), 0, uniform(rng, -2, 2), uniform(rng, 0.1, 3);
      lb << uniform(rng, 0.1, 3), 0, uniform(rng, -2, 2), uniform(rng, 0.1, 3);
      const Matrix pa = la * la.transpose();
      const Matrix pb = lb * lb.transpose();
      CHECK(max_generalized_eigenvalue(pa, pb) == doctest::Approx(quadratic_gen_eig(pa, pb)).epsilon(1e-8));
    }
  }
  SUBCASE("indefinite B rejected") {
    CHECK_THROWS_AS(max_generalized_eigenvalue(a, mat2(1, 0, 0, -1)), CertificateError);
  }
}

TEST_CASE("certificate validation") {
  IossCertificate c = IossCertificate::batch_reactor();
  CHECK_NOTHROW(c.validate());
  CHECK_NOTHROW(c.validate_for({2, 0, 3, 1}));
  CHECK_THROWS_AS(c.validate_for({3, 0, 3, 1}), CertificateError);

  SUBCASE("eta outside [0, 1)") {
    c.eta = 1.0;
    CHECK_THROWS_AS(c.validate(), CertificateError);
    c.eta = -0.1;
    CHECK_THROWS_AS(c.validate(), CertificateError);
  }
  SUBCASE("asymmetric P") {
    c.p1(0, 1) += 1e-3;
    CHECK_THROWS_AS(c.validate(), CertificateError);
  }
  SUBCASE("P not positive definite") {
    c.p2 = mat2(1, 2, 2, 1);
    CHECK_THROWS_AS(c.validate(), CertificateError);
  }
  SUBCASE("Q may be singular but not indefinite") {
    c.q(0, 0) = 0.0;
    CHECK_NOTHROW(c.validate());
    c.q(0, 0) = -1.0;
    CHECK_THROWS_AS(c.validate(), CertificateError);
  }
}

TEST_CASE("minimum horizon") {
  CHECK(min_horizon(IossCertificate::batch_reactor()) == 15);
  // 4 * 0.5^M < 1 first at M = 3.
  CHECK(min_horizon(scalar_cert(1, 1, 0.5)) == 3);
  // 4 * 0.2 < 1 already at M = 0.
  IossCertificate loose = IossCertificate::batch_reactor();
  loose.p2 = 0.2 * loose.p1;
  CHECK(min_horizon(loose) == 0);
  // Exactly 4 lambda eta^M = 1 is not enough, strictness matters.
  CHECK(min_horizon(scalar_cert(1, 1, 0.25)) == 2);
  CHECK(min_horizon(scalar_cert(1, 1, 0.0)) == 1);

  SUBCASE("hand search over M agrees") {
    const IossCertificate c = IossCertificate::batch_reactor();
    const double lam = max_generalized_eigenvalue(c.p2, c.p1);
    int m = 0;
    while (4.0 * lam * std::pow(c.eta, m) >= 1.0) ++m;
    CHECK(min_horizon(c) == m);
  }
  SUBCASE("nondecreasing in eta") {
    int prev = 0;
    for (double eta = 0.05; eta < 0.99; eta += 0.01) {
      const int m = min_horizon(scalar_cert(1, 1, eta));
      CHECK(m >= prev);
      prev = m;
    }
  }
  SUBCASE("nondecreasing in lambda") {
    int prev = 0;
    for (double p2 = 0.1; p2 < 20.0; p2 *= 1.3) {
      const int m = min_horizon(scalar_cert(1, p2, 0.9));
      CHECK(m >= prev);
      prev = m;
    }
  }
  SUBCASE("excessive horizon rejected") {
    CHECK_THROWS_AS(min_horizon(scalar_cert(1, 1, 1.0 - 1e-9)), StabilityError);
  }
}

TEST_CASE("RGES constants") {
  const IossCertificate c = IossCertificate::batch_reactor();
  const RgesConstants k = rges_constants(c, 5.0, 30);
  CHECK(k.rho == doctest::Approx(0.9530376517667703).epsilon(1e-12));
  CHECK(k.lambda_x == doctest::Approx(std::sqrt(k.rho)).epsilon(1e-15));
  CHECK(k.lambda_w == k.lambda_x);
  CHECK(k.rho < 1.0);
  CHECK(k.c_x == doctest::Approx(2.0 * std::sqrt(max_eigenvalue(c.p2) / min_eigenvalue(c.p1))).epsilon(1e-12));

  const RgesConstants k0 = rges_constants(c, 0.0, 30);
  CHECK(k0.c_w / k.c_w == doctest::Approx(std::sqrt(2.0 / 7.0)).epsilon(1e-12));
  CHECK(k0.c_x == k.c_x);

  SUBCASE("rho never below eta") {
    for (int m = 15; m <= 200; m += 5) CHECK(rges_constants(c, 5.0, m).rho >= c.eta);
  }
  SUBCASE("rho decreases towards eta with the horizon") {
    CHECK(rges_constants(c, 5.0, 60).rho < k.rho);
  }
  SUBCASE("below the minimum horizon") {
    CHECK_THROWS_AS(rges_constants(c, 5.0, 14), StabilityError);
  }
}

TEST_CASE("RGES bound evaluation") {
  RgesConstants k;
  k.c_x = 1.0;
  k.c_w = 1.0;
  k.lambda_x = 0.5;
  k.lambda_w = 0.5;
  const std::vector<double> w = {1.0, 1.0, 1.0};
  // t = 2: 0.25 e0 + 0.5 |w_0| + |w_1|
  CHECK(rges_bound(k, 1.0, w, 2) == doctest::Approx(1.75));
  k.c_x = 2.0;
  CHECK(rges_bound(k, 1.0, w, 0) == doctest::Approx(2.0));
}

TEST_CASE("dissipation sampling") {
  const SystemModel model = make_batch_reactor({}, true, Box::symmetric(DisturbanceBounds::batch_reactor().b));
  const Box region = Box::uniform(2, 0.0, 5.0);

  SUBCASE("corrupted decay rate is detected") {
    IossCertificate bad = IossCertificate::batch_reactor();
    bad.eta = 0.01;
    Rng rng(1);
    const DissipationReport rep = check_dissipation(bad, model, region, 10000, rng);
    CHECK(rep.supported);
    CHECK(rep.samples == 10000);
    CHECK(rep.violations >= 1);
    CHECK(rep.worst_margin > 0.0);
  }
  SUBCASE("reported certificate is nearly violation-free") {
    Rng rng(1);
    const DissipationReport rep = check_dissipation(IossCertificate::batch_reactor(), model, region, 10000, rng);
    CHECK(rep.violation_fraction() < 0.01);
  }
  SUBCASE("different P1 and P2 are not supported") {
    IossCertificate c = IossCertificate::batch_reactor();
    c.p2 = 2.0 * c.p1;
    Rng rng(1);
    CHECK_FALSE(check_dissipation(c, model, region, 100, rng).supported);
  }
  SUBCASE("unbounded W rejected") {
    Rng rng(1);
    CHECK_THROWS_AS(check_dissipation(IossCertificate::batch_reactor(), make_batch_reactor(), region, 10, rng),
                    ConfigError);
  }
  SUBCASE("deterministic for a seed") {
    Rng a(4), b(4);
    const IossCertificate c = IossCertificate::batch_reactor();
    CHECK(check_dissipation(c, model, region, 500, a).worst_margin ==
          check_dissipation(c, model, region, 500, b).worst_margin);
  }
}
