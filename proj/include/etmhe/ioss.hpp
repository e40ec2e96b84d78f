#pragma once

#include <cstdint>
#include <span>

#include "etmhe/disturbance.hpp"
#include "etmhe/system_model.hpp"

namespace etmhe {

/// Exponential i-IOSS certificate: P1, P2 > 0, Q, R >= 0, decay rate eta in [0, 1).
///
/// The trajectories of the system satisfy
///   |x_t - x~_t|^2_P1 <= eta^t |x_0 - x~_0|^2_P2
///                        + sum_j eta^(t-j-1) (|w_j - w~_j|^2_Q + |y_j - y~_j|^2_R).
/// P2, Q, R and eta double as the MHE cost weights.
struct IossCertificate {
  Matrix p1;
  Matrix p2;
  Matrix q;
  Matrix r;
  double eta = 0.0;

  /// Throws CertificateError on asymmetry, lost definiteness or eta outside [0, 1).
  void validate() const;
  /// Validates and additionally checks the matrix sizes against (n, q, p).
  void validate_for(const Dimensions& dims) const;

  /// P = [[4.539, 4.171], [4.171, 3.834]], Q = diag(1e3, 1e4, 1e3), R = 1e3, eta = 0.91.
  static IossCertificate batch_reactor();
};

bool is_symmetric(const Matrix& a, double rel_tol = 1e-12);

/// Largest lambda with det(A - lambda B) = 0 for symmetric positive definite A, B.
double max_generalized_eigenvalue(const Matrix& a, const Matrix& b);
double min_eigenvalue(const Matrix& a);
double max_eigenvalue(const Matrix& a);

inline constexpr int kMaxHorizon = 1'000'000;

/// Smallest M >= 0 with 4 lambda_max(P2, P1) eta^M < 1, with the strict inequality
/// enforced as <= 1 - 1e-12. Throws StabilityError if M would exceed kMaxHorizon.
int min_horizon(const IossCertificate& cert);

/// Constants of the exponential error bound
///   |e_t| <= C_x |e_0| lambda_x^t + sum_j C_w |w_j| lambda_w^(t-j-1).
struct RgesConstants {
  double c_x = 0.0;
  double c_w = 0.0;
  double lambda_x = 0.0;
  double lambda_w = 0.0;
  double rho = 0.0;
};

/// rho = (4 lambda_max(P2, P1) eta^M)^(1/M), lambda_x = lambda_w = sqrt(rho),
/// C_x = 2 sqrt(lambda_max(P2) / lambda_min(P1)),
/// C_w = sqrt((2 alpha + 4) lambda_max(Q) / lambda_min(P1)).
/// Throws StabilityError if M < min_horizon(cert).
RgesConstants rges_constants(const IossCertificate& cert, double alpha, int horizon);

/// Evaluates the bound at time t; uses w_norms[0 .. t-1].
double rges_bound(const RgesConstants& c, double e0_norm, std::span<const double> w_norms, int t);

struct DissipationReport {
  bool supported = true;  // false when P1 != P2
  std::int64_t samples = 0;
  std::int64_t violations = 0;
  double worst_margin = -kInf;  // max over samples of LHS - RHS
  double violation_fraction() const {
    return samples == 0 ? 0.0 : static_cast<double>(violations) / static_cast<double>(samples);
  }
};

/// Sampling check of the one-step dissipation inequality with W(x, x~) = |x - x~|^2_P,
///   W(f(x,u,w), f(x~,u,w~)) <= eta W(x, x~) + |w - w~|^2_Q + |y - y~|^2_R.
///
/// Pairs cycle through four families so that near-indistinguishable pairs, where the
/// inequality is tightest, get sampled: independent (x, x~) and (w, w~); x~ near x
/// at 10% of the region width; x~ near x at 10% with w~ = w; x~ near x at 1% with
/// w~ = w. Disturbances are drawn from the model's W, which must be bounded; u = 0.
DissipationReport check_dissipation(const IossCertificate& cert, const SystemModel& model,
                                    const Box& region, std::int64_t n_samples, Rng& rng);

}  // namespace etmhe
