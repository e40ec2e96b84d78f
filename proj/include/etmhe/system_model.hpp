#pragma once

#include <functional>
#include <limits>
#include <optional>
#include <string>

#include <Eigen/Dense>

namespace etmhe {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Axis-aligned box {z : lower <= z <= upper}; bounds may be infinite.
struct Box {
  Vector lower;
  Vector upper;

  static Box unbounded(Eigen::Index dim);
  static Box symmetric(const Vector& bounds);  // [-b, b]
  static Box uniform(Eigen::Index dim, double lo, double hi);

  Eigen::Index dim() const { return lower.size(); }
  bool contains(const Vector& z, double tol = 0.0) const;
  Vector project(const Vector& z) const;
  bool is_bounded() const;
  bool is_empty() const;
};

struct Dimensions {
  Eigen::Index n = 0;  // state
  Eigen::Index m = 0;  // input, may be zero
  Eigen::Index q = 0;  // disturbance
  Eigen::Index p = 0;  // output
};

/// Partial derivatives of f and h at one point.
struct Linearization {
  Matrix fx;  // n x n
  Matrix fw;  // n x q
  Matrix hx;  // p x n
  Matrix hw;  // p x q
};

/// Discrete-time system x+ = f(x, u, w), y = h(x, u, w) with box sets X, W, Y.
///
/// Immutable after construction. Copies share the underlying callables, so a
/// model can be handed to concurrent runs freely.
class SystemModel {
 public:
  using Map = std::function<Vector(const Vector& x, const Vector& u, const Vector& w)>;
  using Jacobian = std::function<Linearization(const Vector& x, const Vector& u, const Vector& w)>;

  SystemModel(std::string name, Dimensions dims, Map dynamics, Map output, Box x_set, Box w_set,
              Box y_set, Jacobian jacobian = {});

  const std::string& name() const { return name_; }
  const Dimensions& dims() const { return dims_; }
  Eigen::Index n() const { return dims_.n; }
  Eigen::Index m() const { return dims_.m; }
  Eigen::Index q() const { return dims_.q; }
  Eigen::Index p() const { return dims_.p; }

  const Box& x_set() const { return x_set_; }
  const Box& w_set() const { return w_set_; }
  const Box& y_set() const { return y_set_; }

  /// f(x, u, w). Throws ConfigError on dimension mismatch.
  Vector step(const Vector& x, const Vector& u, const Vector& w) const;
  /// h(x, u, w). Throws ConfigError on dimension mismatch.
  Vector output(const Vector& x, const Vector& u, const Vector& w) const;

  bool has_jacobian() const { return static_cast<bool>(jacobian_); }
  /// Analytic derivatives if the model supplies them, forward differences otherwise.
  Linearization linearize(const Vector& x, const Vector& u, const Vector& w) const;

  Vector zero_input() const { return Vector::Zero(dims_.m); }
  Vector zero_disturbance() const { return Vector::Zero(dims_.q); }

  SystemModel with_sets(Box x_set, Box w_set, Box y_set) const;

 private:
  void check_args(const Vector& x, const Vector& u, const Vector& w, const char* what) const;

  std::string name_;
  Dimensions dims_;
  Map f_;
  Map h_;
  Box x_set_;
  Box w_set_;
  Box y_set_;
  Jacobian jacobian_;
};

}  // namespace etmhe
