#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include "deepstorm/metrics.hpp"
#include "deepstorm/proximal.hpp"
#include "deepstorm/rng.hpp"
#include "oracles.hpp"

using namespace deepstorm;

namespace {

Eigen::MatrixXd random_rows(int n, int p, RngStream& rng, double scale = 1.0) {
  Eigen::MatrixXd m(n, p);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < p; ++j) m(i, j) = scale * rng.next_gaussian();
  return m;
}

Eigen::VectorXd mean_center(const ProblemInstance& p) {
  Eigen::VectorXd c = Eigen::VectorXd::Zero(p.dim());
  for (int i = 0; i < p.n_agents(); ++i) c += p.quadratic_center(i);
  return c / p.n_agents();
}

// From-scratch reimplementation of the def2 metric using the grid prox.
double def2_oracle(const Eigen::MatrixXd& x, const ProblemInstance& p, double eta) {
  const int n = static_cast<int>(x.rows());
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd xi = x.row(i).transpose();
    Eigen::VectorXd g = Eigen::VectorXd::Zero(p.dim());
    for (int j = 0; j < n; ++j) g += p.full_gradient(j, xi);
    g /= n;
    const Eigen::VectorXd inner = xi - eta * g;
    const Eigen::VectorXd moved = p.regularizer().is_zero()
                                      ? inner
                                      : oracles::grid_prox_l1(p.regularizer().lambda, eta, inner);
    acc += ((xi - moved) / eta).squaredNorm();
  }
  const Eigen::RowVectorXd avg = x.colwise().mean();
  const double cons = (x.rowwise() - avg).squaredNorm();
  const double l = p.smoothness();
  return acc / n + l * l / n * cons;
}

}  // namespace

TEST_CASE("stationarity def2") {
  SUBCASE("consensual rows at an unconstrained stationary point give zero") {
    const auto p = ProblemInstance::make_quadratic(4, 3, 5, 1.0);
    const Eigen::VectorXd star = mean_center(p);
    const Eigen::MatrixXd x = star.transpose().replicate(4, 1);
    CHECK(stationarity_def2(x, p, 0.5) <= 1e-24);
  }
  SUBCASE("consensual rows reduce to the squared global gradient norm") {
    const auto p = ProblemInstance::make_quadratic(4, 3, 5, 1.0);
    RngStream rng(1, 0);
    const Eigen::VectorXd pt = random_rows(1, 3, rng).row(0).transpose();
    const Eigen::MatrixXd x = pt.transpose().replicate(4, 1);
    const double expected = p.global_gradient(pt).squaredNorm();
    CHECK(stationarity_def2(x, p, 0.7) == doctest::Approx(expected).epsilon(1e-12));
  }
  SUBCASE("matches a from-scratch oracle on random iterates") {
    const auto p = ProblemInstance::make_quadratic(5, 4, 7, 1.5, 16, 1.0, Regularizer::l1(0.2));
    RngStream rng(2, 0);
    for (int rep = 0; rep < 10; ++rep) {
      const Eigen::MatrixXd x = random_rows(5, 4, rng, 2.0);
      const double eta = 0.1 + rng.next_unit();
      const double fast = stationarity_def2(x, p, eta);
      const double slow = def2_oracle(x, p, eta);
      CHECK(fast == doctest::Approx(slow).epsilon(1e-5));
    }
  }
}

TEST_CASE("stationarity experiment metric") {
  const double lambda = 0.25;
  const auto p = ProblemInstance::make_quadratic(4, 6, 9, 1.0, 16, 1.0, Regularizer::l1(lambda));

  SUBCASE("zero at the composite minimizer, positive elsewhere") {
    const Eigen::VectorXd star = prox(Regularizer::l1(lambda), 1.0, mean_center(p));
    const Eigen::MatrixXd x = star.transpose().replicate(4, 1);
    CHECK(stationarity_experiment(x, p) <= 1e-10);
    RngStream rng(3, 0);
    for (int rep = 0; rep < 20; ++rep) {
      const Eigen::MatrixXd y = random_rows(4, 6, rng, 2.0);
      CHECK(stationarity_experiment(y, p) > 0.0);
    }
  }
  SUBCASE("identical rows zero out the consensus term") {
    RngStream rng(4, 0);
    const Eigen::VectorXd pt = random_rows(1, 6, rng).row(0).transpose();
    const Eigen::MatrixXd x = pt.transpose().replicate(4, 1);
    const Eigen::VectorXd moved = prox(p.regularizer(), 1.0, pt - p.global_gradient(pt));
    CHECK(stationarity_experiment(x, p) ==
          doctest::Approx((pt - moved).squaredNorm()).epsilon(1e-12));
  }
  SUBCASE("doubling the disagreement scales the consensus term by four") {
    RngStream rng(5, 0);
    const Eigen::MatrixXd x = random_rows(4, 6, rng);
    const Eigen::RowVectorXd avg = x.colwise().mean();
    Eigen::MatrixXd x2 = x;
    for (int i = 0; i < 4; ++i) x2.row(i) = avg + 2.0 * (x.row(i) - avg);
    const Eigen::VectorXd xb = avg.transpose();
    const Eigen::VectorXd moved = prox(p.regularizer(), 1.0, xb - p.global_gradient(xb));
    const double opt = (xb - moved).squaredNorm();
    const double c1 = stationarity_experiment(x, p) - opt;
    const double c2 = stationarity_experiment(x2, p) - opt;
    CHECK(c2 == doctest::Approx(4.0 * c1).epsilon(1e-9));
  }
}

TEST_CASE("sparsity percentage") {
  CHECK(sparsity_pct(Eigen::MatrixXd::Zero(3, 8)) == 0.0);
  CHECK(sparsity_pct(Eigen::MatrixXd::Constant(3, 8, 1.5)) == 100.0);
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(2, 4);
  x.row(1).setConstant(2.0);  // one dense agent
  x(0, 0) = 1.0;
  x(0, 1) = -1.0;  // one half-dense agent
  CHECK(sparsity_pct(x) == 75.0);
}

TEST_CASE("metrics are permutation equivariant in the agent index") {
  const auto p = ProblemInstance::make_quadratic(5, 3, 11, 1.0, 8, 1.0, Regularizer::l1(0.1));
  RngStream rng(6, 0);
  const Eigen::MatrixXd x = random_rows(5, 3, rng);
  Eigen::MatrixXd perm(5, 3);
  const int order[5] = {3, 0, 4, 1, 2};
  for (int i = 0; i < 5; ++i) perm.row(i) = x.row(order[i]);
  CHECK(stationarity_experiment(perm, p) ==
        doctest::Approx(stationarity_experiment(x, p)).epsilon(1e-12));
  CHECK(consensus_sq(perm) == doctest::Approx(consensus_sq(x)).epsilon(1e-12));
  CHECK(sparsity_pct(perm) == sparsity_pct(x));
}

TEST_CASE("trace csv round trip and header") {
  const auto p = ProblemInstance::make_logistic_l1(3, 30, 4, 0.5, 13);
  RngStream rng(7, 0);
  std::vector<TraceRecord> trace;
  for (int k = 0; k < 4; ++k) {
    trace.push_back(
        make_trace_record(random_rows(3, 4, rng), p, 0.5, k * 10, 100 + k, 200 + k, 2 * k));
  }
  CHECK(trace.front().has_accuracy);

  std::stringstream ss;
  write_trace_csv(ss, trace);
  std::string header;
  std::getline(ss, header);
  CHECK(header ==
        "k,loss,stationarity_def2,stationarity_exp,consensus,sparsity_pct,"
        "samples_used,grad_evals,comm_rounds,accuracy");

  std::stringstream ss2;
  write_trace_csv(ss2, trace);
  const auto back = read_trace_csv(ss2);
  REQUIRE(back.size() == trace.size());
  for (size_t i = 0; i < trace.size(); ++i) {
    CHECK(back[i].k == trace[i].k);
    CHECK(back[i].loss == trace[i].loss);
    CHECK(back[i].stationarity_def2 == trace[i].stationarity_def2);
    CHECK(back[i].stationarity_exp == trace[i].stationarity_exp);
    CHECK(back[i].consensus == trace[i].consensus);
    CHECK(back[i].sparsity_pct == trace[i].sparsity_pct);
    CHECK(back[i].samples_used == trace[i].samples_used);
    CHECK(back[i].grad_evals == trace[i].grad_evals);
    CHECK(back[i].comm_rounds == trace[i].comm_rounds);
    CHECK(back[i].accuracy == trace[i].accuracy);
  }

  SUBCASE("quadratic traces have no accuracy column") {
    const auto q = ProblemInstance::make_quadratic(3, 4, 15, 1.0);
    std::vector<TraceRecord> t{make_trace_record(random_rows(3, 4, rng), q, 0.5, 0, 1, 2, 3)};
    CHECK_FALSE(t.front().has_accuracy);
    std::stringstream qs;
    write_trace_csv(qs, t);
    std::string qheader;
    std::getline(qs, qheader);
    CHECK(qheader.find("accuracy") == std::string::npos);
  }
}
