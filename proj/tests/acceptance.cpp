// Acceptance suite: end-to-end checks of the documented guarantees, one
// pass/fail line per criterion. Exits nonzero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "deepstorm/errors.hpp"
#include "deepstorm/harness.hpp"
#include "deepstorm/metrics.hpp"
#include "deepstorm/optimizer.hpp"
#include "deepstorm/proximal.hpp"
#include "deepstorm/topology.hpp"
#include "oracles.hpp"

using namespace deepstorm;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(int num, const char* name, bool pass, const std::string& detail) {
  std::printf("[%s] criterion %2d: %s — %s\n", pass ? "PASS" : "FAIL", num, name,
              detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::shared_ptr<const ChebyshevOperator> make_op(GraphKind kind, int n, int rounds,
                                                 std::uint64_t seed = 1, double density = 0.4) {
  const Graph g = build_graph(kind, n, seed, density);
  MixingMatrix w = kind == GraphKind::ring ? uniform_ring_mixing(g) : laplacian_mixing(g);
  return std::make_shared<const ChebyshevOperator>(std::move(w), rounds);
}

Eigen::MatrixXd random_rows(int n, int p, RngStream& rng, double scale = 1.0) {
  Eigen::MatrixXd m(n, p);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < p; ++j) m(i, j) = scale * rng.next_gaussian();
  return m;
}

// ---------------------------------------------------------------------------
// 1. Gradient-tracking conservation across variant x topology x schedule.

void criterion_1() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto problem = std::make_shared<const ProblemInstance>(
      ProblemInstance::make_quadratic(8, 8, 401, 1.0, 16, 1.0, Regularizer::l1(1e-3)));
  double worst = 0.0;
  bool ok = true;
  for (const GraphKind kind :
       {GraphKind::ring, GraphKind::ladder, GraphKind::random_connected}) {
    const auto op = make_op(kind, 8, 1, 3);
    for (const auto variant : {EstimatorConfig::Variant::v1_sg,
                               EstimatorConfig::Variant::v1_svrg,
                               EstimatorConfig::Variant::v2}) {
      for (const auto family : {Schedule::Family::constant, Schedule::Family::diminishing}) {
        RunConfig cfg;
        cfg.mixer = op;
        cfg.init_rounds = 2;
        cfg.problem = problem;
        cfg.estimator.variant = variant;
        cfg.estimator.m = 4;
        cfg.estimator.m0 = 8;
        cfg.estimator.snapshot_period = 25;
        cfg.iterations = 500;
        cfg.root_seed = 1000 + static_cast<std::uint64_t>(kind) * 10 +
                        static_cast<std::uint64_t>(variant);
        cfg.record_every = 1000;
        Schedule s;
        s.family = family;
        s.horizon = 500;
        s.rho_tilde = op->rho_tilde();
        s.k0 = diminishing_k0_floor(s.rho_tilde);
        s.smoothness = problem->smoothness();
        s.n_agents = 8;
        s.alpha = schedule_alpha_bound(family, family == Schedule::Family::constant ? 500 : s.k0,
                                       s.smoothness, s.rho_tilde);
        cfg.schedule = s;
        run(cfg, [&](const RunState& st) {
          const double gap = (st.y.colwise().mean() - st.d.colwise().mean()).norm();
          const double lim = 1e-10 * (1.0 + st.d.norm());
          worst = std::max(worst, gap / lim);
          if (gap > lim) ok = false;
        });
      }
    }
  }
  const double secs = seconds_since(t0);
  ok = ok && secs < 30.0;
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "18 runs x 500 iters, worst |ybar-dbar| at %.2e of the limit, %.1f s", worst,
                secs);
  report(1, "gradient-tracking conservation", ok, buf);
}

// ---------------------------------------------------------------------------
// 2. Chebyshev contraction bound, average preservation, and the T rule.

void criterion_2() {
  bool ok = true;
  double worst_ratio_slack = 0.0, worst_avg = 0.0, worst_gap_sq = 1.0;
  for (const GraphKind kind : {GraphKind::ring, GraphKind::random_connected}) {
    const Graph g = build_graph(kind, 8, 3, 0.4);
    const MixingMatrix w =
        kind == GraphKind::ring ? uniform_ring_mixing(g) : laplacian_mixing(g);
    const double rho = w.rho();
    RngStream rng(17, static_cast<std::uint64_t>(kind));
    for (int t = 1; t <= 6; ++t) {
      const ChebyshevOperator op(w, t);
      const double bound = 2.0 * std::pow(1.0 - std::sqrt(1.0 - rho), t);
      for (int rep = 0; rep < 100; ++rep) {
        const Eigen::MatrixXd b = random_rows(8, 4, rng);
        const Eigen::MatrixXd bt = mix(op, b);
        const Eigen::RowVectorXd avg = b.colwise().mean();
        const double avg_err = (bt.colwise().mean() - avg).norm() / std::max(1.0, b.norm());
        worst_avg = std::max(worst_avg, avg_err);
        if (avg_err > 1e-12) ok = false;
        const double num = (bt.rowwise() - avg).norm();
        const double den = (b.rowwise() - avg).norm();
        if (num > bound * den + 1e-12) ok = false;
        worst_ratio_slack = std::max(worst_ratio_slack, num / (bound * den));
      }
    }
    const int t_star = chebyshev_rounds_for_target(rho);
    const ChebyshevOperator star(w, t_star);
    const double gap_sq = (1.0 - star.rho_tilde()) * (1.0 - star.rho_tilde());
    worst_gap_sq = std::min(worst_gap_sq, gap_sq);
    if (gap_sq < 0.5) ok = false;
  }
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "worst contraction at %.3f of the bound, avg drift %.1e, min (1-rho~)^2 = %.3f",
                worst_ratio_slack, worst_avg, worst_gap_sq);
  report(2, "Chebyshev contraction and T rule", ok, buf);
}

// ---------------------------------------------------------------------------
// 3. Deterministic limit equals centralized proximal gradient descent.

void criterion_3() {
  RunConfig cfg;
  cfg.mixer = make_op(GraphKind::complete, 4, 1);
  cfg.init_rounds = 1;
  cfg.problem = std::make_shared<const ProblemInstance>(
      ProblemInstance::make_quadratic(4, 10, 403, 1.0, 8, 1.0, Regularizer::l1(0.05)));
  cfg.estimator.variant = EstimatorConfig::Variant::v2;
  cfg.estimator.m = 8;
  cfg.estimator.m0 = 8;
  Schedule s;
  s.family = Schedule::Family::fixed;
  s.alpha = 0.3;
  s.beta_fixed = 1.0;
  s.smoothness = 1.0;
  s.n_agents = 4;
  cfg.schedule = s;
  cfg.iterations = 200;
  cfg.root_seed = 11;

  Eigen::VectorXd ref = Eigen::VectorXd::Zero(10);
  RunState st = init(cfg);
  double worst = 0.0;
  for (int k = 0; k < 200; ++k) {
    step(st, cfg);
    ref = oracles::centralized_prox_gd_step(*cfg.problem, ref, 0.3);
    for (int i = 0; i < 4; ++i) {
      worst = std::max(worst, (st.x.row(i).transpose() - ref).cwiseAbs().maxCoeff());
    }
  }
  char buf[120];
  std::snprintf(buf, sizeof(buf), "200 iterations, max deviation %.2e (limit 1e-10)", worst);
  report(3, "deterministic-limit oracle equivalence", worst <= 1e-10, buf);
}

// ---------------------------------------------------------------------------
// Shared fixture for criteria 4 и 5: the desk-scale sparse logistic problem.

struct DeskScale {
  std::shared_ptr<const ChebyshevOperator> op;
  ProblemPtr problem;
  RunConfig base;
  std::vector<RunResult> v2_runs;  // one per seed
  double runtime_s = 0.0;
};

DeskScale desk_scale_fixture() {
  DeskScale f;
  const Graph g = build_graph(GraphKind::ring, 8, 1);
  MixingMatrix w = uniform_ring_mixing(g);
  const double rho = w.rho();
  const int t = chebyshev_rounds_for_target(rho);
  f.op = std::make_shared<const ChebyshevOperator>(std::move(w), t);
  f.problem = std::make_shared<const ProblemInstance>(
      ProblemInstance::make_logistic_l1(8, 4000, 50, 0.2, 405, 1e-4));

  RunConfig cfg;
  cfg.mixer = f.op;
  cfg.init_rounds = std::max(
      1, static_cast<int>(std::ceil(-2.0 * std::log(1.0 - f.op->rho_tilde()) /
                                    std::sqrt(1.0 - rho))));
  cfg.problem = f.problem;
  cfg.estimator.variant = EstimatorConfig::Variant::v2;
  cfg.estimator.m = 16;
  cfg.estimator.m0 = static_cast<int>(std::ceil(std::cbrt(8.0 * 5000.0)));
  Schedule s;
  s.family = Schedule::Family::diminishing;
  s.rho_tilde = f.op->rho_tilde();
  s.k0 = diminishing_k0_floor(s.rho_tilde);
  s.smoothness = f.problem->smoothness();
  s.n_agents = 8;
  s.alpha = schedule_alpha_bound(s.family, s.k0, s.smoothness, s.rho_tilde);
  cfg.schedule = s;
  cfg.iterations = 5000;
  cfg.record_every = 10;
  cfg.selection = SelectionRule::alpha_weighted;
  f.base = cfg;

  const auto t0 = std::chrono::steady_clock::now();
  for (int seed = 0; seed < 5; ++seed) {
    RunConfig rc = cfg;
    rc.root_seed = seed_root(405, seed);
    f.v2_runs.push_back(run(rc));
  }
  f.runtime_s = seconds_since(t0);
  return f;
}

void criterion_4(const DeskScale& f) {
  double stat10 = 0.0, stat5000 = 0.0, worst_consensus = 0.0;
  for (const RunResult& r : f.v2_runs) {
    const TraceRecord* at10 = nullptr;
    const TraceRecord* at5000 = nullptr;
    for (const auto& row : r.trace) {
      if (row.k == 10) at10 = &row;
      if (row.k == 5000) at5000 = &row;
    }
    stat10 += at10->stationarity_exp;
    stat5000 += at5000->stationarity_exp;
    worst_consensus = std::max(worst_consensus, at5000->consensus);
  }
  stat10 /= 5.0;
  stat5000 /= 5.0;
  const bool ok =
      stat5000 <= 0.1 * stat10 && worst_consensus <= 1e-4 && f.runtime_s < 120.0;
  char buf[200];
  std::snprintf(buf, sizeof(buf),
                "stationarity %.3e (k=10) -> %.3e (k=5000), ratio %.4f (limit 0.1); "
                "max consensus %.1e; %.1f s",
                stat10, stat5000, stat5000 / stat10, worst_consensus, f.runtime_s);
  report(4, "desk-scale convergence (sparse logistic, v2)", ok, buf);
}

void criterion_5(const DeskScale& f) {
  // Sparsity ordering: every variant's final percentage of nonzeros must sit
  // strictly below the prox-free baseline's, seed by seed.
  std::vector<std::vector<double>> variant_sparsity;  // [variant][seed]
  std::vector<std::string> names;

  names.push_back("v2");
  variant_sparsity.emplace_back();
  for (const RunResult& r : f.v2_runs) {
    variant_sparsity.back().push_back(r.trace.back().sparsity_pct);
  }
  for (const auto variant :
       {EstimatorConfig::Variant::v1_sg, EstimatorConfig::Variant::v1_svrg}) {
    names.push_back(to_string(variant));
    variant_sparsity.emplace_back();
    for (int seed = 0; seed < 5; ++seed) {
      RunConfig rc = f.base;
      rc.estimator.variant = variant;
      const int shard = f.problem->shard_size(0);
      rc.estimator.snapshot_period = 4 * ((shard + rc.estimator.m - 1) / rc.estimator.m);
      rc.root_seed = seed_root(405, seed);
      variant_sparsity.back().push_back(run(rc).trace.back().sparsity_pct);
    }
  }
  std::vector<double> dsgt_sparsity;
  for (int seed = 0; seed < 5; ++seed) {
    RunConfig rc = f.base;
    rc.algorithm = Algorithm::dsgt;
    rc.root_seed = seed_root(405, seed);
    dsgt_sparsity.push_back(run(rc).trace.back().sparsity_pct);
  }

  bool ok = true;
  double worst_variant = 0.0, least_dsgt = 100.0;
  for (size_t v = 0; v < variant_sparsity.size(); ++v) {
    for (int seed = 0; seed < 5; ++seed) {
      const double vs = variant_sparsity[v][static_cast<size_t>(seed)];
      const double ds = dsgt_sparsity[static_cast<size_t>(seed)];
      worst_variant = std::max(worst_variant, vs);
      least_dsgt = std::min(least_dsgt, ds);
      if (!(vs < ds)) ok = false;
    }
  }
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "max variant nonzeros %.1f%% < min baseline nonzeros %.1f%% on 5/5 seeds",
                worst_variant, least_dsgt);
  report(5, "sparsity ordering vs the prox-free baseline", ok, buf);
}

// ---------------------------------------------------------------------------
// 6. Schedule validity over randomized tuples; invalid alpha rejected.

void criterion_6() {
  RngStream rng(19, 0);
  bool ok = true;
  int checked = 0, rejected = 0;
  for (int rep = 0; rep < 1000; ++rep) {
    Schedule s;
    s.family = rep % 2 ? Schedule::Family::constant : Schedule::Family::diminishing;
    s.smoothness = std::pow(10.0, -3.0 + 6.0 * rng.next_unit());
    s.n_agents = 1 + static_cast<int>(rng.next_below(64));
    s.rho_tilde = rng.next_unit() * 0.999;
    s.horizon = 1 + rng.next_below(1000000);
    s.k0 = diminishing_k0_floor(s.rho_tilde) + rng.next_below(1000);
    const std::int64_t arg = s.family == Schedule::Family::constant ? s.horizon : s.k0;
    const double bound = schedule_alpha_bound(s.family, arg, s.smoothness, s.rho_tilde);
    s.alpha = bound * (0.01 + 0.99 * rng.next_unit());
    try {
      validate_schedule(s);
    } catch (const ConfigError&) {
      ok = false;
      continue;
    }
    for (std::int64_t k :
         {std::int64_t(0), std::int64_t(1), std::int64_t(7), s.horizon / 2, s.horizon,
          std::int64_t(100000)}) {
      const StepSizes v = schedule_values(s, k);
      if (!(v.beta > 0.0 && v.beta < 1.0)) ok = false;
      ++checked;
    }
    // An alpha just past the bound must be rejected at validation.
    Schedule bad = s;
    bad.alpha = bound * 1.02;
    try {
      validate_schedule(bad);
      ok = false;
    } catch (const ConfigError&) {
      ++rejected;
    }
  }
  char buf[120];
  std::snprintf(buf, sizeof(buf), "%d beta values in (0,1); %d invalid alphas rejected",
                checked, rejected);
  report(6, "schedule validity property", ok && rejected == 1000, buf);
}

// ---------------------------------------------------------------------------
// 7. Estimator unbiasedness and variance budgets.

void criterion_7() {
  const int m = 8, reps = 100000;
  // Logistic shards keep every estimator genuinely stochastic (per-sample
  // gradient differences are nonconstant, unlike the quadratic case).
  const auto problem = std::make_shared<const ProblemInstance>(
      ProblemInstance::make_logistic_l1(2, 100, 8, 0.3, 407, 1e-4));
  RunConfig cfg;
  cfg.mixer = make_op(GraphKind::complete, 2, 1);
  cfg.init_rounds = 1;
  cfg.problem = problem;
  cfg.estimator.m = m;
  cfg.estimator.m0 = m;
  cfg.estimator.snapshot_period = 1000000;
  cfg.estimator.snapshot_batch = 0;  // full shard
  cfg.iterations = 1;
  cfg.root_seed = 409;
  Schedule s;
  s.family = Schedule::Family::fixed;
  s.alpha = 0.1;
  s.beta_fixed = 0.5;
  s.smoothness = 1.0;
  s.n_agents = 2;
  cfg.schedule = s;

  RngStream point_rng(23, 0);
  Eigen::VectorXd x(8), x_snap(8);
  for (int j = 0; j < 8; ++j) {
    x[j] = point_rng.next_gaussian();
    x_snap[j] = point_rng.next_gaussian();
  }
  const int agent = 0;
  const int shard = problem->shard_size(agent);
  const Eigen::VectorXd target = problem->full_gradient(agent, x);

  bool ok = true;
  std::string detail;
  for (const auto variant : {EstimatorConfig::Variant::v1_sg, EstimatorConfig::Variant::v1_svrg,
                             EstimatorConfig::Variant::v2}) {
    cfg.estimator.variant = variant;
    RunState st = init(cfg);
    if (variant == EstimatorConfig::Variant::v1_svrg) {
      st.snapshot_x.row(agent) = x_snap.transpose();
      st.snapshot_grad.row(agent) = problem->full_gradient(agent, x_snap).transpose();
    }
    // Exact per-coordinate variance of one draw of the estimator.
    Eigen::VectorXd var = Eigen::VectorXd::Zero(8);
    for (int smp = 0; smp < shard; ++smp) {
      Eigen::VectorXd one = problem->per_sample_gradient(agent, smp, x);
      if (variant == EstimatorConfig::Variant::v1_svrg) {
        one -= problem->per_sample_gradient(agent, smp, x_snap);
        one += st.snapshot_grad.row(agent).transpose();
      }
      const Eigen::VectorXd d = one - target;
      var += d.cwiseProduct(d);
    }
    var /= shard;

    Eigen::VectorXd mean = Eigen::VectorXd::Zero(8);
    double second_moment = 0.0;
    for (int r = 0; r < reps; ++r) {
      Eigen::VectorXd draw;
      if (variant == EstimatorConfig::Variant::v2) {
        const Batch b = problem->sample_batch(agent, m, st.agent_streams[agent]);
        draw = problem->stochastic_gradient(agent, x, b);
      } else {
        draw = estimate_vtilde(cfg, st, agent, x, Eigen::VectorXd::Zero(8));
      }
      mean += draw;
      second_moment += (draw - target).squaredNorm();
    }
    mean /= reps;
    second_moment /= reps;

    for (int j = 0; j < 8; ++j) {
      const double bound =
          4.0 * std::sqrt(var[j] / m / reps) + 1e-12 * (1.0 + std::abs(target[j]));
      if (std::abs(mean[j] - target[j]) > bound) ok = false;
    }
    const double sigma_hat_sq = cfg.estimator.sigma_hat_sq(problem->sigma_sq(), shard);
    if (second_moment > sigma_hat_sq * 1.1) ok = false;
    char one[64];
    std::snprintf(one, sizeof(one), "%s E=%.3e<=%.3e ", to_string(variant).c_str(),
                  second_moment, sigma_hat_sq * 1.1);
    detail += one;
  }
  report(7, "estimator unbiasedness and variance", ok, detail);
}

// ---------------------------------------------------------------------------
// 8. Prox and stationarity-metric oracles.

void criterion_8() {
  bool ok = true;
  RngStream rng(29, 0);
  double worst_prox = 0.0;
  for (int rep = 0; rep < 30; ++rep) {
    Eigen::VectorXd v(5);
    for (int j = 0; j < 5; ++j) v[j] = 3.0 * rng.next_gaussian();
    const double eta = 0.05 + 2.0 * rng.next_unit();
    const double lambda = rng.next_unit();
    const Eigen::VectorXd fast = prox(Regularizer::l1(lambda), eta, v);
    const Eigen::VectorXd slow = oracles::grid_prox_l1(lambda, eta, v);
    worst_prox = std::max(worst_prox, (fast - slow).cwiseAbs().maxCoeff());
  }
  if (worst_prox > 1e-6) ok = false;

  const double lambda = 0.3;
  const auto p = std::make_shared<const ProblemInstance>(
      ProblemInstance::make_quadratic(4, 2, 411, 1.0, 12, 1.0, Regularizer::l1(lambda)));
  const Eigen::Vector2d star = oracles::grid_minimize_2d(
      [&](double a, double b) {
        Eigen::VectorXd x(2);
        x << a, b;
        return p->composite_loss(x);
      },
      -5.0, 5.0, 1e-7);
  Eigen::MatrixXd consensual(4, 2);
  consensual = star.transpose().replicate(4, 1);
  const double z_exp = stationarity_experiment(consensual, *p);
  const double z_def2 = stationarity_def2(consensual, *p, 0.7);
  if (z_exp > 1e-10 || z_def2 > 1e-10) ok = false;

  double least_positive = 1e300;
  for (int rep = 0; rep < 100; ++rep) {
    Eigen::MatrixXd x = random_rows(4, 2, rng, 2.0);
    x.row(0).array() += 0.5;  // keep clear of the minimizer
    const double a = stationarity_experiment(x, *p);
    const double b = stationarity_def2(x, *p, 0.7);
    least_positive = std::min({least_positive, a, b});
    if (!(a > 0.0 && b > 0.0)) ok = false;
  }
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "prox vs grid %.1e; metrics at grid minimizer %.1e / %.1e; min positive %.1e",
                worst_prox, z_exp, z_def2, least_positive);
  report(8, "prox and stationarity-metric oracles", ok, buf);
}

// ---------------------------------------------------------------------------
// 9. Output-iterate selection distributions (chi-square, K=20, 10^4 reruns).

void criterion_9() {
  const int k_iters = 20, reps = 10000;
  RunConfig base;
  base.mixer = make_op(GraphKind::complete, 2, 1);
  base.init_rounds = 1;
  base.problem = std::make_shared<const ProblemInstance>(
      ProblemInstance::make_quadratic(2, 2, 413, 1.0, 4, 1.0));
  base.estimator.m = 1;
  base.estimator.m0 = 1;
  base.iterations = k_iters;
  base.record_every = 100;

  bool ok = true;
  char buf[160];

  // uniform rule with the constant family
  double stat_u = 0.0;
  {
    RunConfig cfg = base;
    Schedule s;
    s.family = Schedule::Family::constant;
    s.horizon = k_iters;
    s.smoothness = 1.0;
    s.n_agents = 2;
    s.rho_tilde = 0.0;
    s.alpha = schedule_alpha_bound(s.family, s.horizon, 1.0, 0.0);
    cfg.schedule = s;
    cfg.selection = SelectionRule::uniform;
    std::vector<std::int64_t> counts(k_iters, 0);
    for (int r = 0; r < reps; ++r) {
      cfg.root_seed = static_cast<std::uint64_t>(r);
      ++counts[static_cast<size_t>(run(cfg).tau)];
    }
    const std::vector<double> probs(k_iters, 1.0 / k_iters);
    stat_u = oracles::chi_square_stat(counts, probs, reps);
    if (stat_u >= oracles::chi_square_crit_p001(k_iters - 1)) ok = false;
  }

  // alpha-weighted rule with the diminishing family
  double stat_w = 0.0;
  {
    RunConfig cfg = base;
    Schedule s;
    s.family = Schedule::Family::diminishing;
    s.rho_tilde = 0.0;
    s.k0 = diminishing_k0_floor(0.0);
    s.smoothness = 1.0;
    s.n_agents = 2;
    s.alpha = schedule_alpha_bound(s.family, s.k0, 1.0, 0.0);
    cfg.schedule = s;
    cfg.selection = SelectionRule::alpha_weighted;
    std::vector<std::int64_t> counts(k_iters, 0);
    for (int r = 0; r < reps; ++r) {
      cfg.root_seed = 500000 + static_cast<std::uint64_t>(r);
      ++counts[static_cast<size_t>(run(cfg).tau)];
    }
    std::vector<double> probs(k_iters);
    double total = 0.0;
    for (int k = 0; k < k_iters; ++k) {
      probs[static_cast<size_t>(k)] = 1.0 / std::cbrt(static_cast<double>(k + s.k0));
      total += probs[static_cast<size_t>(k)];
    }
    for (auto& q : probs) q /= total;
    stat_w = oracles::chi_square_stat(counts, probs, reps);
    if (stat_w >= oracles::chi_square_crit_p001(k_iters - 1)) ok = false;
  }
  std::snprintf(buf, sizeof(buf), "chi2 uniform %.1f, weighted %.1f (crit %.1f, df 19)", stat_u,
                stat_w, oracles::chi_square_crit_p001(19));
  report(9, "output-selection goodness of fit", ok, buf);
}

// ---------------------------------------------------------------------------
// 10. Byte determinism and bit-exact resume at the harness level.

void criterion_10() {
  const char* config = R"(
iters = 60
record_every = 10
seeds = 2
root_seed = 17
[topology]
graph = ring
agents = 4
[problem]
kind = logistic_l1
dim = 10
samples = 200
sparsity = 0.3
lambda = 0.001
problem_seed = 6
[method main]
algorithm = deepstorm
variant = v1_svrg
schedule = diminishing
m = 4
m0 = 8
snapshot_period = 16
)";
  const fs::path root = fs::temp_directory_path() / "ds_acceptance_10";
  fs::remove_all(root);
  fs::create_directories(root);
  auto read_all = [](const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
  };

  bool ok = true;
  std::string detail;
  try {
    ExperimentSpec spec = parse_config_text(config);
    run_experiment(spec, (root / "a").string());
    run_experiment(spec, (root / "b").string());
    int files = 0;
    for (const auto& entry : fs::directory_iterator(root / "a")) {
      ++files;
      if (read_all(entry.path()) != read_all(root / "b" / entry.path().filename())) ok = false;
    }

    ExperimentSpec half = spec;
    half.iters = 30;
    run_experiment(half, (root / "half").string());
    const ResumeResult cont = resume((root / "half" / "main.seed1.ckpt").string(), 30);

    const BuiltExperiment built = build_experiment(spec);
    RunConfig cfg = built.methods[0].config;
    cfg.root_seed = seed_root(spec.root_seed, 1);
    const RunResult full = run(cfg);
    std::stringstream sa, sb;
    write_state(sa, full.state);
    write_state(sb, cont.result.state);
    if (sa.str() != sb.str()) ok = false;

    char buf[120];
    std::snprintf(buf, sizeof(buf),
                  "%d files byte-identical across reruns; split+resume state matches exactly",
                  files);
    detail = buf;
  } catch (const std::exception& e) {
    ok = false;
    detail = std::string("exception: ") + e.what();
  }
  fs::remove_all(root);
  report(10, "determinism and resume", ok, detail);
}

}  // namespace

int main() {
  const auto t0 = std::chrono::steady_clock::now();
  criterion_1();
  criterion_2();
  criterion_3();
  const DeskScale desk = desk_scale_fixture();
  criterion_4(desk);
  criterion_5(desk);
  criterion_6();
  criterion_7();
  criterion_8();
  criterion_9();
  criterion_10();
  std::printf("%d/10 criteria passed in %.1f s\n", 10 - g_failures, seconds_since(t0));
  return g_failures == 0 ? 0 : 1;
}
