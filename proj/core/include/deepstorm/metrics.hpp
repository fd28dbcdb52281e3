#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <vector>

#include "deepstorm/problems.hpp"

namespace deepstorm {

/// Per-iteration metrics row. CSV column order is fixed:
///   k, loss, stationarity_def2, stationarity_exp, consensus, sparsity_pct,
///   samples_used, grad_evals, comm_rounds [, accuracy]
/// The accuracy column is present only for classification instances.
struct TraceRecord {
  std::int64_t k = 0;
  double loss = 0.0;               // composite objective at the row average
  double stationarity_def2 = 0.0;  // mean ||P(x_i, grad f(x_i), eta)||^2 + L^2/N ||X_perp||_F^2
  double stationarity_exp = 0.0;   // ||xbar - prox_r(xbar - grad f(xbar))||^2 + sum_i ||x_i - xbar||^2
  double consensus = 0.0;          // ||X_perp||_F^2
  double sparsity_pct = 0.0;
  std::int64_t samples_used = 0;   // per agent
  std::int64_t grad_evals = 0;     // per agent
  std::int64_t comm_rounds = 0;
  double accuracy = 0.0;
  bool has_accuracy = false;
};

/// ||X - (1/N) e e^T X||_F^2.
double consensus_sq(const Eigen::MatrixXd& x);

/// Average of the row-wise proximal-gradient-mapping norms at the global
/// average gradient, plus the L^2-weighted consensus violation; evaluated
/// with full deterministic gradients.
double stationarity_def2(const Eigen::MatrixXd& x, const ProblemInstance& p, double eta);

/// The experiment-style stationarity violation, evaluated at the row average
/// (prox taken with unit step).
double stationarity_experiment(const Eigen::MatrixXd& x, const ProblemInstance& p);

/// 100 * mean over agents of the fraction of exactly nonzero coordinates.
double sparsity_pct(const Eigen::MatrixXd& x);

/// Assembles a full record at iterate matrix x; eta is the step size used for
/// the proximal-gradient-mapping metric (the current alpha_k).
TraceRecord make_trace_record(const Eigen::MatrixXd& x, const ProblemInstance& p, double eta,
                              std::int64_t k, std::int64_t samples_used, std::int64_t grad_evals,
                              std::int64_t comm_rounds);

void write_trace_csv(std::ostream& os, const std::vector<TraceRecord>& trace);
std::vector<TraceRecord> read_trace_csv(std::istream& is);

}  // namespace deepstorm
