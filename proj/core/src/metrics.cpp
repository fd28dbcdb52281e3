#include "deepstorm/metrics.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include "deepstorm/errors.hpp"
#include "deepstorm/proximal.hpp"
#include "text_util.hpp"

namespace deepstorm {

double consensus_sq(const Eigen::MatrixXd& x) {
  const Eigen::RowVectorXd avg = x.colwise().mean();
  return (x.rowwise() - avg).squaredNorm();
}

double stationarity_def2(const Eigen::MatrixXd& x, const ProblemInstance& p, double eta) {
  if (!(eta > 0.0)) throw ConfigError("stationarity_def2: eta must be positive");
  const int n = static_cast<int>(x.rows());
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd xi = x.row(i).transpose();
    const Eigen::VectorXd gi = p.global_gradient(xi);
    acc += prox_grad_map(xi, gi, eta, p.regularizer()).squaredNorm();
  }
  const double l = p.smoothness();
  return acc / n + (l * l / n) * consensus_sq(x);
}

double stationarity_experiment(const Eigen::MatrixXd& x, const ProblemInstance& p) {
  const Eigen::VectorXd xbar = x.colwise().mean().transpose();
  const Eigen::VectorXd g = p.global_gradient(xbar);
  const Eigen::VectorXd moved = prox(p.regularizer(), 1.0, xbar - g);
  return (xbar - moved).squaredNorm() + consensus_sq(x);
}

double sparsity_pct(const Eigen::MatrixXd& x) {
  if (x.size() == 0) return 0.0;
  double acc = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    int nz = 0;
    for (Eigen::Index j = 0; j < x.cols(); ++j)
      if (x(i, j) != 0.0) ++nz;
    acc += static_cast<double>(nz) / static_cast<double>(x.cols());
  }
  return 100.0 * acc / static_cast<double>(x.rows());
}

TraceRecord make_trace_record(const Eigen::MatrixXd& x, const ProblemInstance& p, double eta,
                              std::int64_t k, std::int64_t samples_used, std::int64_t grad_evals,
                              std::int64_t comm_rounds) {
  TraceRecord r;
  r.k = k;
  const Eigen::VectorXd xbar = x.colwise().mean().transpose();
  r.loss = p.composite_loss(xbar);
  r.stationarity_def2 = stationarity_def2(x, p, eta);
  r.stationarity_exp = stationarity_experiment(x, p);
  r.consensus = consensus_sq(x);
  r.sparsity_pct = sparsity_pct(x);
  r.samples_used = samples_used;
  r.grad_evals = grad_evals;
  r.comm_rounds = comm_rounds;
  if (p.kind() == ProblemInstance::Kind::logistic_l1) {
    r.accuracy = p.classification_accuracy(xbar);
    r.has_accuracy = true;
  }
  if (!std::isfinite(r.loss) || !std::isfinite(r.stationarity_def2) ||
      !std::isfinite(r.stationarity_exp) || !std::isfinite(r.consensus) ||
      r.consensus < 0.0 || r.sparsity_pct < 0.0 || r.sparsity_pct > 100.0) {
    throw NumericError("non-finite or out-of-range metrics at iteration " + std::to_string(k));
  }
  return r;
}

void write_trace_csv(std::ostream& os, const std::vector<TraceRecord>& trace) {
  const bool acc = !trace.empty() && trace.front().has_accuracy;
  os << "k,loss,stationarity_def2,stationarity_exp,consensus,sparsity_pct,"
        "samples_used,grad_evals,comm_rounds";
  if (acc) os << ",accuracy";
  os << '\n';
  for (const auto& r : trace) {
    os << r.k << ',' << detail::fmt_g17(r.loss) << ',' << detail::fmt_g17(r.stationarity_def2)
       << ',' << detail::fmt_g17(r.stationarity_exp) << ',' << detail::fmt_g17(r.consensus)
       << ',' << detail::fmt_g17(r.sparsity_pct) << ',' << r.samples_used << ','
       << r.grad_evals << ',' << r.comm_rounds;
    if (acc) os << ',' << detail::fmt_g17(r.accuracy);
    os << '\n';
  }
}

std::vector<TraceRecord> read_trace_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw IoError("trace CSV: missing header");
  const bool acc = line.find(",accuracy") != std::string::npos;
  const std::string expected =
      "k,loss,stationarity_def2,stationarity_exp,consensus,sparsity_pct,"
      "samples_used,grad_evals,comm_rounds";
  if (line.rfind(expected, 0) != 0) throw IoError("trace CSV: unexpected header: " + line);
  std::vector<TraceRecord> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string tok;
    std::vector<std::string> toks;
    while (std::getline(ls, tok, ',')) toks.push_back(tok);
    if (toks.size() != (acc ? 10u : 9u)) throw IoError("trace CSV: bad row: " + line);
    TraceRecord r;
    r.k = detail::parse_ll(toks[0]);
    r.loss = detail::parse_double(toks[1]);
    r.stationarity_def2 = detail::parse_double(toks[2]);
    r.stationarity_exp = detail::parse_double(toks[3]);
    r.consensus = detail::parse_double(toks[4]);
    r.sparsity_pct = detail::parse_double(toks[5]);
    r.samples_used = detail::parse_ll(toks[6]);
    r.grad_evals = detail::parse_ll(toks[7]);
    r.comm_rounds = detail::parse_ll(toks[8]);
    if (acc) {
      r.accuracy = detail::parse_double(toks[9]);
      r.has_accuracy = true;
    }
    out.push_back(r);
  }
  return out;
}

}  // namespace deepstorm
