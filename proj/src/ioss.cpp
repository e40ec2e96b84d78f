#include "etmhe/ioss.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "etmhe/errors.hpp"

namespace etmhe {

namespace {

void require_square_symmetric(const Matrix& a, const char* name) {
  if (a.rows() == 0 || a.rows() != a.cols()) {
    throw CertificateError(std::string(name) + " must be a nonempty square matrix");
  }
  if (!a.allFinite()) throw CertificateError(std::string(name) + " has non-finite entries");
  if (!is_symmetric(a)) throw CertificateError(std::string(name) + " is not symmetric");
}

Eigen::VectorXd symmetric_eigenvalues(const Matrix& a) {
  Eigen::SelfAdjointEigenSolver<Matrix> solver(a, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw CertificateError("eigenvalue iteration failed");
  return solver.eigenvalues();  // ascending
}

void require_definite(const Matrix& a, const char* name, bool strict) {
  require_square_symmetric(a, name);
  const Eigen::VectorXd ev = symmetric_eigenvalues(a);
  const double scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
  const double lo = ev.minCoeff();
  if (strict ? !(lo > 0.0) : lo < -1e-12 * scale) {
    std::ostringstream os;
    os << name << " must be positive " << (strict ? "definite" : "semidefinite")
       << " (smallest eigenvalue " << lo << ")";
    throw CertificateError(os.str());
  }
}

}  // namespace

bool is_symmetric(const Matrix& a, double rel_tol) {
  if (a.rows() != a.cols()) return false;
  const double norm = a.norm();
  return (a - a.transpose()).norm() <= rel_tol * norm;
}

void IossCertificate::validate() const {
  require_definite(p1, "P1", true);
  require_definite(p2, "P2", true);
  require_definite(q, "Q", false);
  require_definite(r, "R", false);
  if (p1.rows() != p2.rows()) throw CertificateError("P1 and P2 differ in size");
  if (!(eta >= 0.0 && eta < 1.0)) throw CertificateError("eta must lie in [0, 1)");
}

void IossCertificate::validate_for(const Dimensions& dims) const {
  validate();
  if (p1.rows() != dims.n) throw CertificateError("P1/P2 size does not match state dimension");
  if (q.rows() != dims.q) throw CertificateError("Q size does not match disturbance dimension");
  if (r.rows() != dims.p) throw CertificateError("R size does not match output dimension");
}

IossCertificate IossCertificate::batch_reactor() {
  IossCertificate cert;
  cert.p1.resize(2, 2);
  cert.p1 << 4.539, 4.171, 4.171, 3.834;
  cert.p2 = cert.p1;
  cert.q = Eigen::Vector3d(1e3, 1e4, 1e3).asDiagonal();
  cert.r = Matrix::Constant(1, 1, 1e3);
  cert.eta = 0.91;
  return cert;
}

double min_eigenvalue(const Matrix& a) {
  require_square_symmetric(a, "matrix");
  return symmetric_eigenvalues(a).minCoeff();
}

double max_eigenvalue(const Matrix& a) {
  require_square_symmetric(a, "matrix");
  return symmetric_eigenvalues(a).maxCoeff();
}

double max_generalized_eigenvalue(const Matrix& a, const Matrix& b) {
  require_definite(a, "A", true);
  require_definite(b, "B", true);
  if (a.rows() != b.rows()) throw CertificateError("generalized eigenproblem: size mismatch");
  // lambda(A, B) = lambda(L^-1 A L^-T) with B = L L^T.
  Eigen::LLT<Matrix> llt(b);
  if (llt.info() != Eigen::Success) throw CertificateError("B is not positive definite");
  const Matrix left = llt.matrixL().solve(a);
  Matrix reduced = llt.matrixL().solve(left.transpose()).transpose();
  reduced = 0.5 * (reduced + reduced.transpose());
  return symmetric_eigenvalues(reduced).maxCoeff();
}

int min_horizon(const IossCertificate& cert) {
  cert.validate();
  const double gain = 4.0 * max_generalized_eigenvalue(cert.p2, cert.p1);
  constexpr double kStrict = 1.0 - 1e-12;
  if (gain <= kStrict) return 0;
  if (cert.eta == 0.0) return 1;
  for (int m = 1; m <= kMaxHorizon; ++m) {
    if (gain * std::pow(cert.eta, m) <= kStrict) return m;
  }
  throw StabilityError("minimum horizon exceeds " + std::to_string(kMaxHorizon));
}

RgesConstants rges_constants(const IossCertificate& cert, double alpha, int horizon) {
  if (!(alpha >= 0.0)) throw ConfigError("alpha must be >= 0");
  const int m_min = min_horizon(cert);
  if (horizon < m_min) {
    throw StabilityError("horizon " + std::to_string(horizon) + " is below the minimum " +
                         std::to_string(m_min));
  }
  const double lam = max_generalized_eigenvalue(cert.p2, cert.p1);
  RgesConstants c;
  if (horizon == 0) {
    c.rho = cert.eta;
  } else {
    // (4 lam eta^M)^(1/M) = (4 lam)^(1/M) eta, avoids underflow of eta^M.
    c.rho = cert.eta == 0.0 ? 0.0 : std::pow(4.0 * lam, 1.0 / horizon) * cert.eta;
  }
  c.lambda_x = std::sqrt(c.rho);
  c.lambda_w = c.lambda_x;
  const double p1_min = min_eigenvalue(cert.p1);
  c.c_x = 2.0 * std::sqrt(max_eigenvalue(cert.p2) / p1_min);
  c.c_w = std::sqrt((2.0 * alpha + 4.0) * max_eigenvalue(cert.q) / p1_min);
  return c;
}

double rges_bound(const RgesConstants& c, double e0_norm, std::span<const double> w_norms, int t) {
  if (t < 0) throw LogicError("rges_bound: t must be >= 0");
  if (w_norms.size() < static_cast<std::size_t>(t)) {
    throw LogicError("rges_bound: need at least t disturbance norms");
  }
  double bound = c.c_x * e0_norm * std::pow(c.lambda_x, t);
  // Horner-style accumulation of sum_j C_w |w_j| lambda^(t-j-1).
  double tail = 0.0;
  for (int j = 0; j < t; ++j) tail = tail * c.lambda_w + w_norms[static_cast<std::size_t>(j)];
  return bound + c.c_w * tail;
}

DissipationReport check_dissipation(const IossCertificate& cert, const SystemModel& model,
                                    const Box& region, std::int64_t n_samples, Rng& rng) {
  cert.validate_for(model.dims());
  if (region.dim() != model.n() || region.upper.size() != model.n()) {
    throw ConfigError("check region has wrong dimension");
  }
  if (region.is_empty()) throw ConfigError("check region is empty");
  if (!region.is_bounded()) throw ConfigError("check region must be bounded");
  if (!model.x_set().contains(region.lower) || !model.x_set().contains(region.upper)) {
    throw ConfigError("check region must lie inside X");
  }
  if (!model.w_set().is_bounded()) {
    throw ConfigError("dissipation check samples from W, which must be bounded");
  }
  if (n_samples <= 0) throw ConfigError("sample count must be positive");

  DissipationReport report;
  const double p_scale = std::max(1.0, cert.p1.norm());
  if ((cert.p1 - cert.p2).norm() > 1e-12 * p_scale) {
    report.supported = false;
    return report;
  }
  const Matrix& p = cert.p1;
  const Vector u = model.zero_input();
  const Box& wbox = model.w_set();
  const Vector width = region.upper - region.lower;

  auto draw_box = [&rng](const Box& box) {
    Vector z(box.dim());
    for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = uniform(rng, box.lower[i], box.upper[i]);
    return z;
  };
  auto draw_near = [&](const Vector& x, double scale) {
    Vector z(x.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      const double s = scale * width[i];
      z[i] = x[i] + uniform(rng, -s, s);
    }
    return region.project(z);
  };

  for (std::int64_t k = 0; k < n_samples; ++k) {
    const int family = static_cast<int>(k % 4);
    const Vector x = draw_box(region);
    const Vector xt = family == 0 ? draw_box(region) : draw_near(x, family == 3 ? 0.01 : 0.1);
    const Vector w = draw_box(wbox);
    const Vector wt = family >= 2 ? w : draw_box(wbox);

    const Vector dx = x - xt;
    const Vector df = model.step(x, u, w) - model.step(xt, u, wt);
    const Vector dw = w - wt;
    const Vector dy = model.output(x, u, w) - model.output(xt, u, wt);

    const double lhs = df.dot(p * df);
    const double rhs = cert.eta * dx.dot(p * dx) + dw.dot(cert.q * dw) + dy.dot(cert.r * dy);
    const double margin = lhs - rhs;
    report.worst_margin = std::max(report.worst_margin, margin);
    if (margin > 1e-12 * std::max(1.0, std::abs(rhs))) ++report.violations;
    ++report.samples;
  }
  return report;
}

}  // namespace etmhe
