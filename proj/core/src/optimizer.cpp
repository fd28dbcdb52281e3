#include "deepstorm/optimizer.hpp"

#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "deepstorm/errors.hpp"
#include "text_util.hpp"

namespace deepstorm {

namespace {

constexpr double kDivergenceLimit = 1e12;
constexpr const char* kStateMagic = "deepstorm-state";
constexpr int kStateVersion = 1;

double cbrt_d(double v) { return std::cbrt(v); }

// Batches at least as large as the shard run as deterministic full passes in
// sample order; smaller ones are drawn uniformly with replacement.
Batch effective_batch(const ProblemInstance& p, int agent, int m, RngStream& stream) {
  const int shard = p.shard_size(agent);
  if (m >= shard) {
    Batch b;
    b.agent = agent;
    b.ids.resize(static_cast<size_t>(shard));
    std::iota(b.ids.begin(), b.ids.end(), 0);
    return b;
  }
  return p.sample_batch(agent, m, stream);
}

int effective_snapshot_size(const EstimatorConfig& e, int shard) {
  if (e.snapshot_batch <= 0 || e.snapshot_batch >= shard) return shard;
  return e.snapshot_batch;
}

void check_state_finite(const RunState& st) {
  auto bad = [](const Eigen::MatrixXd& m) {
    return m.size() > 0 && (!m.allFinite() || m.cwiseAbs().maxCoeff() > kDivergenceLimit);
  };
  if (bad(st.x) || bad(st.d) || bad(st.y)) {
    throw NumericError("divergence at iteration " + std::to_string(st.k) +
                       ": a coordinate exceeded 1e12 or became non-finite");
  }
}

double alpha_at(const RunConfig& cfg, std::int64_t k) {
  if (cfg.algorithm == Algorithm::dsgt) {
    return cfg.schedule.alpha / std::sqrt(static_cast<double>(k) + 1.0);
  }
  return schedule_values(cfg.schedule, k).alpha;
}

void append_record(std::vector<TraceRecord>& trace, const RunConfig& cfg, const RunState& st) {
  trace.push_back(make_trace_record(st.x, *cfg.problem, alpha_at(cfg, st.k), st.k,
                                    st.samples_per_agent(), st.grad_evals_per_agent(),
                                    st.comm_rounds));
}

void validate_run_config(const RunConfig& cfg) {
  if (!cfg.problem) throw ConfigError("RunConfig: problem not set");
  if (!cfg.mixer) throw ConfigError("RunConfig: mixer not set");
  if (cfg.mixer->base().n_agents() != cfg.problem->n_agents()) {
    throw ConfigError("RunConfig: topology and problem disagree on agent count");
  }
  if (cfg.init_rounds < 1) throw ConfigError("RunConfig: init_rounds (T0) must be >= 1");
  if (cfg.iterations < 1) throw ConfigError("RunConfig: iterations must be >= 1");
  if (cfg.record_every < 1) throw ConfigError("RunConfig: record_every must be >= 1");
  if (cfg.estimator.m < 1 || cfg.estimator.m0 < 1) {
    throw ConfigError("RunConfig: batch sizes must be >= 1");
  }
  if (cfg.estimator.variant == EstimatorConfig::Variant::v1_svrg && cfg.estimator.snapshot_period < 1) {
    throw ConfigError("RunConfig: snapshot_period must be >= 1");
  }
  if (cfg.algorithm == Algorithm::dsgt) {
    if (!(cfg.schedule.alpha > 0.0)) throw ConfigError("RunConfig: DSGT needs alpha > 0");
    return;
  }
  if (cfg.schedule.n_agents != cfg.problem->n_agents()) {
    throw ConfigError("RunConfig: schedule N does not match the problem");
  }
  validate_schedule(cfg.schedule);
}

void reservoir_consider(RunState& st, const RunConfig& cfg, const Eigen::MatrixXd& z,
                        double alpha_k) {
  const double w = (cfg.selection == SelectionRule::uniform) ? 1.0 : alpha_k;
  st.weight_sum += w;
  const double u = st.selection_stream.next_unit();
  if (u * st.weight_sum < w) {
    st.candidate_z = z;
    st.candidate_tau = st.k;
  }
}

void step_deepstorm(RunState& st, const RunConfig& cfg) {
  const ProblemInstance& p = *cfg.problem;
  const int n = st.n_agents();
  const StepSizes s = schedule_values(cfg.schedule, st.k);

  const Eigen::MatrixXd z = mix(*cfg.mixer, st.x);
  st.comm_rounds += cfg.mixer->rounds();

  const Eigen::MatrixXd x_plus = prox_step_rows(z, st.y, s.alpha, p.regularizer());

  Eigen::MatrixXd d_plus(n, p.dim());
  for (int i = 0; i < n; ++i) {
    Batch b = effective_batch(p, i, cfg.estimator.m, st.agent_streams[static_cast<size_t>(i)]);
    st.samples_total += b.size();
    st.grad_evals_total += 2 * b.size();
    const Eigen::VectorXd xi_plus = x_plus.row(i).transpose();
    const Eigen::VectorXd v = p.stochastic_gradient(i, xi_plus, b);
    const Eigen::VectorXd u = p.stochastic_gradient(i, st.x.row(i).transpose(), b);
    const Eigen::VectorXd vt = estimate_vtilde(cfg, st, i, xi_plus, v);
    d_plus.row(i) =
        ((1.0 - s.beta) * (st.d.row(i).transpose() + v - u) + s.beta * vt).transpose();
  }

  if (cfg.estimator.variant == EstimatorConfig::Variant::v1_svrg &&
      (st.k + 1) % cfg.estimator.snapshot_period == 0) {
    for (int i = 0; i < n; ++i) {
      Batch b = effective_batch(p, i, effective_snapshot_size(cfg.estimator, p.shard_size(i)),
                                st.agent_streams[static_cast<size_t>(i)]);
      st.samples_total += b.size();
      st.grad_evals_total += b.size();
      st.snapshot_x.row(i) = x_plus.row(i);
      st.snapshot_grad.row(i) =
          p.stochastic_gradient(i, x_plus.row(i).transpose(), b).transpose();
    }
  }

  const Eigen::MatrixXd y_plus = mix(*cfg.mixer, st.y + d_plus - st.d);
  st.comm_rounds += cfg.mixer->rounds();

  st.x = x_plus;
  st.d = std::move(d_plus);
  st.y = y_plus;
  check_state_finite(st);

  reservoir_consider(st, cfg, z, s.alpha);
  ++st.k;
}

void step_dsgt(RunState& st, const RunConfig& cfg) {
  const ProblemInstance& p = *cfg.problem;
  const int n = st.n_agents();
  const double alpha_k = cfg.schedule.alpha / std::sqrt(static_cast<double>(st.k) + 1.0);

  const Eigen::MatrixXd z = mix(*cfg.mixer, st.x);
  st.comm_rounds += cfg.mixer->rounds();
  const Eigen::MatrixXd x_plus = z - alpha_k * st.y;

  Eigen::MatrixXd g_plus(n, p.dim());
  for (int i = 0; i < n; ++i) {
    Batch b = effective_batch(p, i, cfg.estimator.m, st.agent_streams[static_cast<size_t>(i)]);
    st.samples_total += b.size();
    st.grad_evals_total += b.size();
    g_plus.row(i) = p.stochastic_gradient(i, x_plus.row(i).transpose(), b).transpose();
  }

  const Eigen::MatrixXd y_plus = mix(*cfg.mixer, st.y + g_plus - st.d);
  st.comm_rounds += cfg.mixer->rounds();

  st.x = x_plus;
  st.d = std::move(g_plus);
  st.y = y_plus;
  check_state_finite(st);
  ++st.k;
}

RunResult run_steps_impl(const RunConfig& cfg, RunState st, std::int64_t extra_iters,
                         std::vector<TraceRecord> trace, const StepObserver& obs) {
  if (extra_iters < 0) throw ConfigError("run: negative iteration count");
  const std::int64_t end = st.k + extra_iters;
  while (st.k < end) {
    step(st, cfg);
    if (obs) obs(st);
    if (st.k % cfg.record_every == 0 || st.k == end) append_record(trace, cfg, st);
  }
  RunResult res;
  res.trace = std::move(trace);
  if (cfg.algorithm == Algorithm::deepstorm && st.candidate_tau >= 0) {
    res.tau = st.candidate_tau;
    res.output_iterate = st.candidate_z;
  } else {
    res.tau = -1;
    res.output_iterate = st.x;
  }
  res.state = std::move(st);
  return res;
}

}  // namespace

StepSizes schedule_values(const Schedule& s, std::int64_t k) {
  if (k < 0) throw ConfigError("schedule_values: k must be >= 0");
  StepSizes out;
  switch (s.family) {
    case Schedule::Family::constant: {
      const double kcbrt = cbrt_d(static_cast<double>(s.horizon));
      out.alpha = s.alpha / kcbrt;
      out.beta = 144.0 * s.smoothness * s.smoothness * s.alpha * s.alpha /
                 (static_cast<double>(s.n_agents) * kcbrt * kcbrt);
      break;
    }
    case Schedule::Family::diminishing: {
      const double base = static_cast<double>(k + s.k0);
      out.alpha = s.alpha / cbrt_d(base);
      const double alpha_next = s.alpha / cbrt_d(base + 1.0);
      out.beta = 1.0 - cbrt_d(base / (base + 1.0)) +
                 48.0 * s.smoothness * s.smoothness * alpha_next * alpha_next;
      break;
    }
    case Schedule::Family::fixed: {
      out.alpha = s.alpha;
      out.beta = s.beta_fixed;
      if (!(out.beta > 0.0) || out.beta > 1.0) {
        throw NumericError("schedule_values: fixed beta " + detail::fmt_g17(out.beta) +
                           " outside (0, 1]");
      }
      if (!(out.alpha > 0.0)) throw NumericError("schedule_values: alpha must be positive");
      return out;
    }
  }
  if (!(out.alpha > 0.0)) throw NumericError("schedule_values: alpha must be positive");
  if (!(out.beta > 0.0) || !(out.beta < 1.0)) {
    throw NumericError("schedule_values: beta_k = " + detail::fmt_g17(out.beta) +
                       " at k = " + std::to_string(k) +
                       " is outside (0,1); the alpha/L/K combination is invalid");
  }
  return out;
}

double schedule_alpha_bound(Schedule::Family family, std::int64_t k_or_k0, double smoothness,
                            double rho_tilde) {
  if (family == Schedule::Family::fixed) {
    throw ConfigError("schedule_alpha_bound: fixed family has no alpha bound");
  }
  if (k_or_k0 < 1) throw ConfigError("schedule_alpha_bound: K (or k0) must be >= 1");
  if (!(smoothness > 0.0)) throw ConfigError("schedule_alpha_bound: L must be positive");
  if (!(rho_tilde >= 0.0) || rho_tilde >= 1.0) {
    throw ConfigError("schedule_alpha_bound: rho_tilde must be in [0, 1)");
  }
  const double c = cbrt_d(static_cast<double>(k_or_k0));
  const double gap = 1.0 - rho_tilde;
  return std::min(c / (32.0 * smoothness), gap * gap * c / (64.0 * smoothness));
}

std::int64_t diminishing_k0_floor(double rho_tilde) {
  if (!(rho_tilde >= 0.0) || rho_tilde >= 1.0) {
    throw ConfigError("diminishing_k0_floor: rho_tilde must be in [0, 1)");
  }
  const double v = 2.0 / (1.0 - rho_tilde * rho_tilde * rho_tilde);
  return static_cast<std::int64_t>(std::ceil(v - 1e-12));
}

void validate_schedule(const Schedule& s) {
  if (!(s.alpha > 0.0)) throw ConfigError("schedule: alpha must be positive");
  if (!(s.smoothness > 0.0)) throw ConfigError("schedule: L must be positive");
  if (s.n_agents < 1) throw ConfigError("schedule: N must be >= 1");
  if (!(s.rho_tilde >= 0.0) || s.rho_tilde >= 1.0) {
    throw ConfigError("schedule: rho_tilde must be in [0, 1)");
  }
  const double tol = 1.0 + 1e-12;
  switch (s.family) {
    case Schedule::Family::constant: {
      if (s.horizon < 1) throw ConfigError("schedule: constant family needs K >= 1");
      const double bound = schedule_alpha_bound(s.family, s.horizon, s.smoothness, s.rho_tilde);
      if (s.alpha > bound * tol) {
        throw ConfigError(
            "schedule: alpha = " + detail::fmt_g17(s.alpha) + " violates the constant-step bound "
            "alpha <= min{ K^(1/3)/(32 L), (1-rho~)^2 K^(1/3)/(64 L) } = " +
            detail::fmt_g17(bound));
      }
      break;
    }
    case Schedule::Family::diminishing: {
      const std::int64_t floor_k0 = diminishing_k0_floor(s.rho_tilde);
      if (s.k0 < floor_k0) {
        throw ConfigError("schedule: k0 = " + std::to_string(s.k0) +
                          " violates k0 >= ceil(2/(1 - rho~^3)) = " + std::to_string(floor_k0));
      }
      const double bound = schedule_alpha_bound(s.family, s.k0, s.smoothness, s.rho_tilde);
      if (s.alpha > bound * tol) {
        throw ConfigError(
            "schedule: alpha = " + detail::fmt_g17(s.alpha) + " violates the diminishing-step "
            "bound alpha <= min{ k0^(1/3)/(32 L), (1-rho~)^2 k0^(1/3)/(64 L) } = " +
            detail::fmt_g17(bound));
      }
      break;
    }
    case Schedule::Family::fixed: {
      if (!(s.beta_fixed > 0.0) || s.beta_fixed > 1.0) {
        throw ConfigError("schedule: fixed beta must be in (0, 1]");
      }
      break;
    }
  }
}

double EstimatorConfig::sigma_hat_sq(double sigma_sq, int shard_size) const {
  switch (variant) {
    case Variant::v1_sg:
    case Variant::v2:
      return sigma_sq / static_cast<double>(std::min(m, shard_size));
    case Variant::v1_svrg: {
      const int snap = (snapshot_batch <= 0 || snapshot_batch >= shard_size) ? shard_size
                                                                             : snapshot_batch;
      return (3.0 / static_cast<double>(std::min(m, shard_size)) +
              6.0 / static_cast<double>(snap)) * sigma_sq;
    }
  }
  throw ConfigError("sigma_hat_sq: unknown variant");
}

EstimatorConfig::Variant variant_from_string(const std::string& s) {
  if (s == "v1_sg" || s == "v1-sg") return EstimatorConfig::Variant::v1_sg;
  if (s == "v1_svrg" || s == "v1-svrg") return EstimatorConfig::Variant::v1_svrg;
  if (s == "v2") return EstimatorConfig::Variant::v2;
  throw ConfigError("unknown estimator variant: '" + s + "'");
}

std::string to_string(EstimatorConfig::Variant v) {
  switch (v) {
    case EstimatorConfig::Variant::v1_sg: return "v1_sg";
    case EstimatorConfig::Variant::v1_svrg: return "v1_svrg";
    case EstimatorConfig::Variant::v2: return "v2";
  }
  return "?";
}

Algorithm algorithm_from_string(const std::string& s) {
  if (s == "deepstorm") return Algorithm::deepstorm;
  if (s == "dsgt") return Algorithm::dsgt;
  throw ConfigError("unknown algorithm: '" + s + "'");
}

std::string to_string(Algorithm a) {
  return a == Algorithm::deepstorm ? "deepstorm" : "dsgt";
}

SelectionRule selection_from_string(const std::string& s) {
  if (s == "uniform") return SelectionRule::uniform;
  if (s == "alpha_weighted") return SelectionRule::alpha_weighted;
  throw ConfigError("unknown selection rule: '" + s + "'");
}

std::string to_string(SelectionRule r) {
  return r == SelectionRule::uniform ? "uniform" : "alpha_weighted";
}

RunState init(const RunConfig& cfg) {
  validate_run_config(cfg);
  const ProblemInstance& p = *cfg.problem;
  const int n = p.n_agents();
  const int dim = p.dim();

  RunState st;
  st.selection_stream = RngStream(cfg.root_seed, kSelectionStream);
  st.agent_streams.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    st.agent_streams.emplace_back(cfg.root_seed, kAgentStreamBase + static_cast<std::uint64_t>(i));
  }

  Eigen::VectorXd x0 = Eigen::VectorXd::Zero(dim);
  if (cfg.x0_scale > 0.0) {
    RngStream init_stream(cfg.root_seed, init_stream_id(n));
    for (int j = 0; j < dim; ++j) x0[j] = cfg.x0_scale * init_stream.next_gaussian();
  }
  st.x = x0.transpose().replicate(n, 1);

  st.d.resize(n, dim);
  for (int i = 0; i < n; ++i) {
    Batch b = effective_batch(p, i, cfg.estimator.m0, st.agent_streams[static_cast<size_t>(i)]);
    st.samples_total += b.size();
    st.grad_evals_total += b.size();
    st.d.row(i) = p.stochastic_gradient(i, x0, b).transpose();
  }

  if (cfg.init_rounds == cfg.mixer->rounds()) {
    st.y = mix(*cfg.mixer, st.d);
  } else {
    const ChebyshevOperator warmup(cfg.mixer->base(), cfg.init_rounds);
    st.y = mix(warmup, st.d);
  }
  st.comm_rounds += cfg.init_rounds;

  if (cfg.algorithm == Algorithm::deepstorm &&
      cfg.estimator.variant == EstimatorConfig::Variant::v1_svrg) {
    st.snapshot_x = st.x;
    st.snapshot_grad.resize(n, dim);
    for (int i = 0; i < n; ++i) {
      Batch b = effective_batch(p, i, effective_snapshot_size(cfg.estimator, p.shard_size(i)),
                                st.agent_streams[static_cast<size_t>(i)]);
      st.samples_total += b.size();
      st.grad_evals_total += b.size();
      st.snapshot_grad.row(i) = p.stochastic_gradient(i, x0, b).transpose();
    }
    st.has_snapshot = true;
  }

  check_state_finite(st);
  return st;
}

Eigen::VectorXd estimate_vtilde(const RunConfig& cfg, RunState& st, int agent,
                                const Eigen::VectorXd& x_plus, const Eigen::VectorXd& v_plus) {
  const ProblemInstance& p = *cfg.problem;
  switch (cfg.estimator.variant) {
    case EstimatorConfig::Variant::v2:
      return v_plus;
    case EstimatorConfig::Variant::v1_sg: {
      Batch b = effective_batch(p, agent, cfg.estimator.m,
                                st.agent_streams[static_cast<size_t>(agent)]);
      st.samples_total += b.size();
      st.grad_evals_total += b.size();
      return p.stochastic_gradient(agent, x_plus, b);
    }
    case EstimatorConfig::Variant::v1_svrg: {
      if (!st.has_snapshot) {
        throw Error("estimate_vtilde: v1-SVRG snapshot missing (initialization bug)");
      }
      Batch b = effective_batch(p, agent, cfg.estimator.m,
                                st.agent_streams[static_cast<size_t>(agent)]);
      st.samples_total += b.size();
      st.grad_evals_total += 2 * b.size();
      const Eigen::VectorXd diff = p.stochastic_gradient_difference(
          agent, x_plus, st.snapshot_x.row(agent).transpose(), b);
      return diff + st.snapshot_grad.row(agent).transpose();
    }
  }
  throw ConfigError("estimate_vtilde: unknown variant");
}

void step(RunState& st, const RunConfig& cfg) {
  if (cfg.algorithm == Algorithm::dsgt) {
    step_dsgt(st, cfg);
  } else {
    step_deepstorm(st, cfg);
  }
}

RunResult run(const RunConfig& cfg, const StepObserver& obs) {
  RunState st = init(cfg);
  if (obs) obs(st);
  std::vector<TraceRecord> trace;
  append_record(trace, cfg, st);
  return run_steps_impl(cfg, std::move(st), cfg.iterations, std::move(trace), obs);
}

RunResult run_steps(const RunConfig& cfg, RunState state, std::int64_t extra_iters,
                    const StepObserver& obs) {
  validate_run_config(cfg);
  const int n = cfg.problem->n_agents();
  if (state.x.rows() != n || state.x.cols() != cfg.problem->dim() || state.d.rows() != n ||
      state.y.rows() != n || state.agent_streams.size() != static_cast<size_t>(n)) {
    throw ConfigError("run_steps: state shape does not match the configuration");
  }
  return run_steps_impl(cfg, std::move(state), extra_iters, {}, obs);
}

RunResult run_dsgt(const RunConfig& cfg, const StepObserver& obs) {
  RunConfig c = cfg;
  c.algorithm = Algorithm::dsgt;
  return run(c, obs);
}

double constant_phi0_diagnostic(const RunConfig& cfg, const RunState& init_state) {
  const ProblemInstance& p = *cfg.problem;
  const int n = p.n_agents();
  const double l = cfg.schedule.smoothness;
  const double gap = 1.0 - cfg.schedule.rho_tilde;
  const double kcbrt = cbrt_d(static_cast<double>(
      cfg.schedule.family == Schedule::Family::constant ? cfg.schedule.horizon
                                                        : cfg.iterations));
  const double n_d = static_cast<double>(n);

  const Eigen::VectorXd xbar = init_state.x.colwise().mean().transpose();
  Eigen::MatrixXd grad_rows(n, p.dim());
  for (int i = 0; i < n; ++i) {
    grad_rows.row(i) = p.full_gradient(i, init_state.x.row(i).transpose()).transpose();
  }
  const Eigen::MatrixXd r = init_state.d - grad_rows;
  const Eigen::RowVectorXd rbar = r.colwise().mean();

  return p.composite_loss(xbar) + consensus_sq(init_state.y) / (n_d * l * gap) +
         1024.0 * l * kcbrt * consensus_sq(init_state.x) / (std::pow(n_d, 5.0 / 3.0) * gap) +
         4.0 * kcbrt * r.squaredNorm() / (3.0 * std::pow(n_d, 5.0 / 3.0) * l) +
         4.0 * std::pow(n_d, 1.0 / 3.0) * kcbrt * rbar.squaredNorm() / (3.0 * l);
}

namespace {

void write_matrix_block(std::ostream& os, const char* name, const Eigen::MatrixXd& m) {
  os << "matrix " << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
  write_matrix_text(os, m);
}

Eigen::MatrixXd read_matrix_block(std::istream& is, const std::string& expect_name) {
  std::string tag, name;
  Eigen::Index rows = 0, cols = 0;
  if (!(is >> tag >> name >> rows >> cols) || tag != "matrix" || name != expect_name) {
    throw IoError("state: expected matrix block '" + expect_name + "'");
  }
  Eigen::MatrixXd m(rows, cols);
  std::string tok;
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) {
      if (!(is >> tok)) throw IoError("state: truncated matrix " + expect_name);
      m(i, j) = detail::parse_double(tok);
    }
  return m;
}

}  // namespace

void write_state(std::ostream& os, const RunState& st) {
  os << kStateMagic << ' ' << kStateVersion << '\n';
  os << "k " << st.k << '\n';
  os << "shape " << st.x.rows() << ' ' << st.x.cols() << '\n';
  os << "counters " << st.samples_total << ' ' << st.grad_evals_total << ' ' << st.comm_rounds
     << '\n';
  os << "reservoir " << detail::fmt_g17(st.weight_sum) << ' ' << st.candidate_tau << '\n';
  write_matrix_block(os, "X", st.x);
  write_matrix_block(os, "D", st.d);
  write_matrix_block(os, "Y", st.y);
  os << "snapshot " << (st.has_snapshot ? 1 : 0) << '\n';
  if (st.has_snapshot) {
    write_matrix_block(os, "SX", st.snapshot_x);
    write_matrix_block(os, "SG", st.snapshot_grad);
  }
  os << "candidate " << (st.candidate_tau >= 0 ? 1 : 0) << '\n';
  if (st.candidate_tau >= 0) write_matrix_block(os, "CZ", st.candidate_z);
  os << "streams " << st.agent_streams.size() << '\n';
  st.selection_stream.serialize(os);
  os << '\n';
  for (const auto& s : st.agent_streams) {
    s.serialize(os);
    os << '\n';
  }
  os << "end\n";
}

RunState read_state(std::istream& is) {
  std::string magic;
  int version = 0;
  if (!(is >> magic >> version) || magic != kStateMagic) {
    throw IoError("state: bad magic (not a state file)");
  }
  if (version != kStateVersion) {
    throw IoError("state: unsupported version " + std::to_string(version));
  }
  RunState st;
  std::string tag;
  Eigen::Index rows = 0, cols = 0;
  if (!(is >> tag >> st.k) || tag != "k") throw IoError("state: missing k");
  if (!(is >> tag >> rows >> cols) || tag != "shape") throw IoError("state: missing shape");
  if (!(is >> tag >> st.samples_total >> st.grad_evals_total >> st.comm_rounds) ||
      tag != "counters") {
    throw IoError("state: missing counters");
  }
  std::string wsum;
  if (!(is >> tag >> wsum >> st.candidate_tau) || tag != "reservoir") {
    throw IoError("state: missing reservoir");
  }
  st.weight_sum = detail::parse_double(wsum);
  st.x = read_matrix_block(is, "X");
  st.d = read_matrix_block(is, "D");
  st.y = read_matrix_block(is, "Y");
  if (st.x.rows() != rows || st.x.cols() != cols) throw IoError("state: shape mismatch");
  int flag = 0;
  if (!(is >> tag >> flag) || tag != "snapshot") throw IoError("state: missing snapshot flag");
  if (flag) {
    st.snapshot_x = read_matrix_block(is, "SX");
    st.snapshot_grad = read_matrix_block(is, "SG");
    st.has_snapshot = true;
  }
  if (!(is >> tag >> flag) || tag != "candidate") throw IoError("state: missing candidate flag");
  if (flag) {
    st.candidate_z = read_matrix_block(is, "CZ");
  }
  size_t n_streams = 0;
  if (!(is >> tag >> n_streams) || tag != "streams") throw IoError("state: missing streams");
  st.selection_stream = RngStream::deserialize(is);
  st.agent_streams.clear();
  st.agent_streams.reserve(n_streams);
  for (size_t i = 0; i < n_streams; ++i) {
    st.agent_streams.push_back(RngStream::deserialize(is));
  }
  if (!(is >> tag) || tag != "end") throw IoError("state: missing end marker");
  return st;
}

}  // namespace deepstorm
