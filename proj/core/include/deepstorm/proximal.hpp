#pragma once

#include <Eigen/Dense>

namespace deepstorm {

/// Convex regularizer with a closed-form proximal mapping. Only the zero
/// function and lambda * ||x||_1 ship; anything added later must keep the
/// closed-form-prox contract.
struct Regularizer {
  enum class Kind { zero, l1 };

  Kind kind = Kind::zero;
  double lambda = 0.0;

  static Regularizer zero() { return {}; }
  static Regularizer l1(double lambda);

  double value(const Eigen::VectorXd& x) const;
  bool is_zero() const { return kind == Kind::zero || lambda == 0.0; }
};

/// prox_{eta r}(v) = argmin_u { eta r(u) + 1/2 ||u - v||^2 }.
/// For l1 this is componentwise soft-thresholding at eta * lambda; exact ties
/// |v_j| == eta * lambda map to 0.
Eigen::VectorXd prox(const Regularizer& r, double eta, const Eigen::VectorXd& v);

/// Proximal gradient mapping P(x, y, eta) = (x - prox_{eta r}(x - eta y)) / eta.
/// Reduces to y exactly when r == 0.
Eigen::VectorXd prox_grad_map(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                              double eta, const Regularizer& r);

/// argmin_x { alpha r(x) + 1/2 ||x - (z - alpha y)||^2 } = prox_{alpha r}(z - alpha y).
Eigen::VectorXd prox_step(const Eigen::VectorXd& z, const Eigen::VectorXd& y,
                          double alpha, const Regularizer& r);

/// Row-wise prox_step over agent matrices (row i = agent i).
Eigen::MatrixXd prox_step_rows(const Eigen::MatrixXd& z, const Eigen::MatrixXd& y,
                               double alpha, const Regularizer& r);

}  // namespace deepstorm
