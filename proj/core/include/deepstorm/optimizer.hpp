#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <vector>

#include "deepstorm/metrics.hpp"
#include "deepstorm/problems.hpp"
#include "deepstorm/proximal.hpp"
#include "deepstorm/rng.hpp"
#include "deepstorm/topology.hpp"

namespace deepstorm {

/// Step-size / momentum schedule.
///
/// constant:    alpha_k = alpha / K^(1/3),
///              beta_k  = 144 L^2 alpha^2 / (N K^(2/3)),
///              valid iff alpha <= min{ K^(1/3)/(32 L), (1-rho~)^2 K^(1/3)/(64 L) }.
/// diminishing: alpha_k = alpha / (k + k0)^(1/3),
///              beta_k  = 1 - alpha_{k+1}/alpha_k + 48 L^2 alpha_{k+1}^2,
///              valid iff k0 >= ceil(2/(1 - rho~^3)) and
///                        alpha <= min{ k0^(1/3)/(32 L), (1-rho~)^2 k0^(1/3)/(64 L) }.
/// fixed:       alpha_k = alpha, beta_k = beta_fixed with beta_fixed in (0, 1].
///              Outside the validity theory; exists for deterministic-limit
///              oracles (beta = 1 turns the recursion into plain tracking).
struct Schedule {
  enum class Family { constant, diminishing, fixed };

  Family family = Family::constant;
  double alpha = 0.0;
  double beta_fixed = 1.0;
  std::int64_t horizon = 1;  // K, constant family
  std::int64_t k0 = 1;       // diminishing family
  double smoothness = 1.0;   // L
  int n_agents = 1;          // N
  double rho_tilde = 0.0;
};

struct StepSizes {
  double alpha = 0.0;
  double beta = 0.0;
};

/// Evaluates (alpha_k, beta_k) and asserts beta_k lies in (0,1) ((0,1] for
/// the fixed family); throws NumericError otherwise.
StepSizes schedule_values(const Schedule& s, std::int64_t k);

/// Eagerly rejects parameter combinations outside the validity bounds above;
/// ConfigError messages quote the violated bound.
void validate_schedule(const Schedule& s);

/// Largest alpha the schedule family admits for the given constants.
double schedule_alpha_bound(Schedule::Family family, std::int64_t k_or_k0, double smoothness,
                            double rho_tilde);

/// Smallest admissible k0 for the diminishing family: ceil(2/(1 - rho~^3)).
std::int64_t diminishing_k0_floor(double rho_tilde);

/// Variance-reduction estimator choice for the d-update
///   d_i <- (1-beta_k)(d_i + v_i - u_i) + beta_k vtilde_i,
/// where v_i/u_i are same-batch gradients at the new/old iterate.
///
///   v1_sg:   vtilde = gradient over a fresh independent batch (m samples).
///   v1_svrg: vtilde = fresh-batch gradient difference between the new
///            iterate and a periodic snapshot, plus the stored snapshot
///            gradient; the snapshot refreshes every snapshot_period
///            iterations over snapshot_batch samples (0 = full shard).
///   v2:      vtilde aliases v (no extra samples).
///
/// Batch sizes of at least the shard size are executed as deterministic full
/// passes in sample order; smaller batches draw uniformly with replacement
/// from the agent's private stream.
struct EstimatorConfig {
  enum class Variant { v1_sg, v1_svrg, v2 };

  Variant variant = Variant::v2;
  int m = 1;
  int m0 = 1;
  int snapshot_period = 1;
  int snapshot_batch = 0;  // 0 = full shard

  /// sigma^2 / m for v1_sg and v2; (3/m + 6/|snapshot batch|) sigma^2 for v1_svrg.
  double sigma_hat_sq(double sigma_sq, int shard_size) const;
};

EstimatorConfig::Variant variant_from_string(const std::string& s);
std::string to_string(EstimatorConfig::Variant v);

enum class Algorithm { deepstorm, dsgt };
enum class SelectionRule { uniform, alpha_weighted };

Algorithm algorithm_from_string(const std::string& s);
std::string to_string(Algorithm a);
SelectionRule selection_from_string(const std::string& s);
std::string to_string(SelectionRule r);

struct RunConfig {
  std::shared_ptr<const ChebyshevOperator> mixer;  // T mixing rounds per communication
  int init_rounds = 1;                             // T0 rounds for Y^(0)
  ProblemPtr problem;
  Algorithm algorithm = Algorithm::deepstorm;
  EstimatorConfig estimator;
  Schedule schedule;
  std::int64_t iterations = 1;  // number of steps to execute
  std::uint64_t root_seed = 0;
  SelectionRule selection = SelectionRule::uniform;
  std::int64_t record_every = 1;
  double x0_scale = 0.0;  // scale of the shared random starting point (0 = origin)
};

/// Complete synchronous-round state: row i of each matrix belongs to agent i.
/// For DSGT, d holds the last stochastic gradients. The reservoir fields
/// implement the output-iterate draw (tau ~ uniform or ~ alpha_k) as a
/// sequential weighted-reservoir over Z^(k), which makes the draw exact,
/// O(1) in memory, and bit-reproducible across checkpoint/resume.
struct RunState {
  Eigen::MatrixXd x, d, y;
  Eigen::MatrixXd snapshot_x, snapshot_grad;
  bool has_snapshot = false;
  std::vector<RngStream> agent_streams;
  RngStream selection_stream;
  std::int64_t k = 0;

  Eigen::MatrixXd candidate_z;
  std::int64_t candidate_tau = -1;
  double weight_sum = 0.0;

  std::int64_t samples_total = 0;
  std::int64_t grad_evals_total = 0;
  std::int64_t comm_rounds = 0;

  int n_agents() const { return static_cast<int>(x.rows()); }
  std::int64_t samples_per_agent() const { return samples_total / std::max(1, n_agents()); }
  std::int64_t grad_evals_per_agent() const { return grad_evals_total / std::max(1, n_agents()); }
};

/// Called after init and after every step; state.k identifies the iterate.
using StepObserver = std::function<void(const RunState&)>;

struct RunResult {
  std::vector<TraceRecord> trace;
  Eigen::MatrixXd output_iterate;  // Z^(tau) (DEEPSTORM) or final X (DSGT)
  std::int64_t tau = -1;
  RunState state;
};

/// Line 1-2 of the algorithm: equal starting rows, d_i^(0) an m0-sample
/// gradient, Y^(0) = T0-round mixing of D^(0), snapshot at x^(0) for v1_svrg.
RunState init(const RunConfig& cfg);

/// One synchronous iteration at index state.k (either algorithm). Within a
/// round, each agent's local work reads only its own rows and its own stream;
/// the two mixing applications are the only cross-agent steps, and they read
/// the completed previous phase. Agent-local updates may therefore execute in
/// any order (or concurrently) without changing the result.
void step(RunState& state, const RunConfig& cfg);

/// The vtilde estimator for one agent; draws any fresh batch it needs from
/// the agent's stream and maintains the sample/evaluation counters.
Eigen::VectorXd estimate_vtilde(const RunConfig& cfg, RunState& state, int agent,
                                const Eigen::VectorXd& x_plus, const Eigen::VectorXd& v_plus);

/// init + iterations steps + output selection.
RunResult run(const RunConfig& cfg, const StepObserver& obs = {});

/// Continue a run from an existing state for extra_iters more steps.
RunResult run_steps(const RunConfig& cfg, RunState state, std::int64_t extra_iters,
                    const StepObserver& obs = {});

/// Gradient-tracking SGD baseline with alpha_k = alpha/sqrt(k+1) and no prox.
RunResult run_dsgt(const RunConfig& cfg, const StepObserver& obs = {});

/// Structured-text state serialization; bit-exact round trip.
void write_state(std::ostream& os, const RunState& state);
RunState read_state(std::istream& is);

/// Reporting-only diagnostic: the constant-schedule initial Lyapunov value.
double constant_phi0_diagnostic(const RunConfig& cfg, const RunState& init_state);

}  // namespace deepstorm
