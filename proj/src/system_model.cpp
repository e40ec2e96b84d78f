#include "etmhe/system_model.hpp"

#include <cmath>
#include <sstream>
#include <utility>

#include "etmhe/errors.hpp"

namespace etmhe {

Box Box::unbounded(Eigen::Index dim) {
  return Box{Vector::Constant(dim, -kInf), Vector::Constant(dim, kInf)};
}

Box Box::symmetric(const Vector& bounds) { return Box{-bounds, bounds}; }

Box Box::uniform(Eigen::Index dim, double lo, double hi) {
  return Box{Vector::Constant(dim, lo), Vector::Constant(dim, hi)};
}

bool Box::contains(const Vector& z, double tol) const {
  if (z.size() != dim()) return false;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    if (!(z[i] >= lower[i] - tol && z[i] <= upper[i] + tol)) return false;
  }
  return true;
}

Vector Box::project(const Vector& z) const { return z.cwiseMax(lower).cwiseMin(upper); }

bool Box::is_bounded() const { return lower.allFinite() && upper.allFinite(); }

bool Box::is_empty() const {
  if (lower.size() != upper.size()) return true;
  for (Eigen::Index i = 0; i < lower.size(); ++i) {
    if (!(lower[i] <= upper[i])) return true;
  }
  return false;
}

namespace {

void require_box(const Box& box, Eigen::Index dim, const char* name) {
  if (box.lower.size() != dim || box.upper.size() != dim) {
    std::ostringstream os;
    os << name << " has dimension " << box.lower.size() << ", expected " << dim;
    throw ConfigError(os.str());
  }
  if (box.is_empty()) throw ConfigError(std::string(name) + " is empty");
}

}  // namespace

SystemModel::SystemModel(std::string name, Dimensions dims, Map dynamics, Map output, Box x_set,
                         Box w_set, Box y_set, Jacobian jacobian)
    : name_(std::move(name)),
      dims_(dims),
      f_(std::move(dynamics)),
      h_(std::move(output)),
      x_set_(std::move(x_set)),
      w_set_(std::move(w_set)),
      y_set_(std::move(y_set)),
      jacobian_(std::move(jacobian)) {
  if (dims_.n <= 0 || dims_.p <= 0 || dims_.m < 0 || dims_.q < 0) {
    throw ConfigError("model dimensions must satisfy n > 0, p > 0, m >= 0, q >= 0");
  }
  if (!f_ || !h_) throw ConfigError("model requires both dynamics and output maps");
  require_box(x_set_, dims_.n, "X");
  require_box(w_set_, dims_.q, "W");
  require_box(y_set_, dims_.p, "Y");
  if (!w_set_.contains(Vector::Zero(dims_.q))) throw ConfigError("W must contain 0");
}

void SystemModel::check_args(const Vector& x, const Vector& u, const Vector& w,
                             const char* what) const {
  if (x.size() != dims_.n || u.size() != dims_.m || w.size() != dims_.q) {
    std::ostringstream os;
    os << what << ": got dim(x)=" << x.size() << ", dim(u)=" << u.size() << ", dim(w)=" << w.size()
       << "; model expects " << dims_.n << ", " << dims_.m << ", " << dims_.q;
    throw ConfigError(os.str());
  }
}

Vector SystemModel::step(const Vector& x, const Vector& u, const Vector& w) const {
  check_args(x, u, w, "step");
  Vector next = f_(x, u, w);
  if (next.size() != dims_.n) throw ConfigError("dynamics returned wrong dimension");
  return next;
}

Vector SystemModel::output(const Vector& x, const Vector& u, const Vector& w) const {
  check_args(x, u, w, "output");
  Vector y = h_(x, u, w);
  if (y.size() != dims_.p) throw ConfigError("output map returned wrong dimension");
  return y;
}

Linearization SystemModel::linearize(const Vector& x, const Vector& u, const Vector& w) const {
  check_args(x, u, w, "linearize");
  if (jacobian_) return jacobian_(x, u, w);

  Linearization lin{Matrix(dims_.n, dims_.n), Matrix(dims_.n, dims_.q), Matrix(dims_.p, dims_.n),
                    Matrix(dims_.p, dims_.q)};
  const Vector f0 = f_(x, u, w);
  const Vector h0 = h_(x, u, w);
  Vector xp = x;
  for (Eigen::Index i = 0; i < dims_.n; ++i) {
    const double step = 1e-7 * (1.0 + std::abs(x[i]));
    xp[i] = x[i] + step;
    lin.fx.col(i) = (f_(xp, u, w) - f0) / step;
    lin.hx.col(i) = (h_(xp, u, w) - h0) / step;
    xp[i] = x[i];
  }
  Vector wp = w;
  for (Eigen::Index i = 0; i < dims_.q; ++i) {
    const double step = 1e-7 * (1.0 + std::abs(w[i]));
    wp[i] = w[i] + step;
    lin.fw.col(i) = (f_(x, u, wp) - f0) / step;
    lin.hw.col(i) = (h_(x, u, wp) - h0) / step;
    wp[i] = w[i];
  }
  return lin;
}

SystemModel SystemModel::with_sets(Box x_set, Box w_set, Box y_set) const {
  return SystemModel(name_, dims_, f_, h_, std::move(x_set), std::move(w_set), std::move(y_set),
                     jacobian_);
}

}  // namespace etmhe
