#include "deepstorm/proximal.hpp"

#include <cmath>

#include "deepstorm/errors.hpp"

namespace deepstorm {

namespace {

inline double soft_threshold(double v, double t) {
  if (v > t) return v - t;
  if (v < -t) return v + t;
  return 0.0;
}

void check_eta(double eta, const char* who) {
  if (!(eta > 0.0)) throw ConfigError(std::string(who) + ": eta must be positive");
}

}  // namespace

Regularizer Regularizer::l1(double lambda) {
  if (!(lambda >= 0.0)) throw ConfigError("Regularizer::l1: lambda must be >= 0");
  return {Kind::l1, lambda};
}

double Regularizer::value(const Eigen::VectorXd& x) const {
  if (is_zero()) return 0.0;
  return lambda * x.lpNorm<1>();
}

Eigen::VectorXd prox(const Regularizer& r, double eta, const Eigen::VectorXd& v) {
  check_eta(eta, "prox");
  if (r.is_zero()) return v;
  const double t = eta * r.lambda;
  Eigen::VectorXd out(v.size());
  for (Eigen::Index j = 0; j < v.size(); ++j) out[j] = soft_threshold(v[j], t);
  return out;
}

Eigen::VectorXd prox_grad_map(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                              double eta, const Regularizer& r) {
  check_eta(eta, "prox_grad_map");
  if (r.is_zero()) return y;  // (x - (x - eta y)) / eta, exactly
  return (x - prox(r, eta, x - eta * y)) / eta;
}

Eigen::VectorXd prox_step(const Eigen::VectorXd& z, const Eigen::VectorXd& y,
                          double alpha, const Regularizer& r) {
  check_eta(alpha, "prox_step");
  return prox(r, alpha, z - alpha * y);
}

Eigen::MatrixXd prox_step_rows(const Eigen::MatrixXd& z, const Eigen::MatrixXd& y,
                               double alpha, const Regularizer& r) {
  check_eta(alpha, "prox_step_rows");
  Eigen::MatrixXd v = z - alpha * y;
  if (r.is_zero()) return v;
  const double t = alpha * r.lambda;
  for (Eigen::Index i = 0; i < v.rows(); ++i)
    for (Eigen::Index j = 0; j < v.cols(); ++j) v(i, j) = soft_threshold(v(i, j), t);
  return v;
}

}  // namespace deepstorm
