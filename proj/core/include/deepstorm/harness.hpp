#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "deepstorm/optimizer.hpp"
#include "deepstorm/topology.hpp"

namespace deepstorm {

// Experiment configs are plain "key = value" text with [topology], [problem]
// and one or more [method NAME] sections; see parse_config. Fields left as
// "auto" are resolved against the built topology/problem:
//   rounds       -> ceil(2 / sqrt(1 - rho))
//   init_rounds  -> max(1, ceil(-2 ln(1 - rho~) / sqrt(1 - rho)))
//   k0           -> ceil(2 / (1 - rho~^3))
//   alpha        -> the schedule family's validity bound
//   m0           -> ceil(cbrt(N * K))
//   snapshot_period -> 4 passes over the shard
//   selection    -> uniform (constant family), alpha_weighted (diminishing)

struct TopologySpec {
  GraphKind graph = GraphKind::ring;
  int agents = 0;
  std::uint64_t graph_seed = 0;
  double density = 0.3;           // random graphs
  std::string mixing = "auto";    // auto | laplacian | uniform_ring
  std::optional<int> rounds = 1;  // T; nullopt = auto
  std::optional<int> init_rounds; // T0; nullopt = auto (default)
};

struct ProblemSpec {
  std::string kind = "quadratic";  // quadratic | logistic_l1
  std::uint64_t problem_seed = 0;
  int dim = 10;
  int samples = 1000;       // logistic: total samples
  double sparsity = 0.2;    // logistic
  double lambda = 1e-4;
  std::optional<double> feature_scale;  // logistic; defaults from the generator
  std::optional<double> margin_scale;
  std::optional<double> support_scale;
  double heterogeneity = 1.0;  // quadratic
  double noise = 1.0;          // quadratic
  int samples_per_agent = 32;  // quadratic
  std::string dataset;         // optional external dataset path (logistic)
};

struct MethodSpec {
  std::string name;
  Algorithm algorithm = Algorithm::deepstorm;
  EstimatorConfig::Variant variant = EstimatorConfig::Variant::v2;
  Schedule::Family schedule = Schedule::Family::diminishing;
  std::optional<double> alpha;            // nullopt = auto
  std::optional<std::int64_t> k0;         // nullopt = auto
  int m = 16;
  std::optional<int> m0;                  // nullopt = auto
  std::optional<int> snapshot_period;     // nullopt = auto
  std::optional<int> snapshot_batch;      // nullopt = full shard
  std::string selection = "auto";         // auto | uniform | alpha_weighted
};

struct ExperimentSpec {
  int n_seeds = 1;
  std::uint64_t root_seed = 0;
  std::int64_t iters = 0;
  std::int64_t record_every = 1;
  std::string output_dir = "out";
  double x0_scale = 0.0;
  TopologySpec topology;
  ProblemSpec problem;
  std::vector<MethodSpec> methods;
};

/// Strict parser: unknown keys, missing required fields, or malformed values
/// raise ConfigError with the offending line.
ExperimentSpec parse_config_text(const std::string& text);
ExperimentSpec parse_config(const std::string& path);

/// Canonical text form; parse(serialize(spec)) reproduces the spec exactly.
std::string serialize_config(const ExperimentSpec& spec);

struct BuiltMethod {
  std::string name;
  RunConfig config;  // root_seed is filled per seed at run time
};

struct BuiltExperiment {
  std::shared_ptr<const ChebyshevOperator> mixer;
  ProblemPtr problem;
  double rho = 0.0;
  double rho_tilde = 0.0;
  int init_rounds = 1;
  std::vector<BuiltMethod> methods;
};

/// Materializes graph, mixing matrix, problem and per-method run configs,
/// resolving every "auto" and validating all schedule invariants eagerly.
BuiltExperiment build_experiment(const ExperimentSpec& spec);

/// Root seed of one seeded repetition.
std::uint64_t seed_root(std::uint64_t experiment_root, int seed_index);

struct SeedStatus {
  std::string method;
  int seed_index = 0;
  bool ok = true;
  std::string detail;
};

struct ExperimentOutput {
  std::string output_dir;
  std::vector<SeedStatus> statuses;
};

/// Runs every method for n_seeds seeded repetitions and writes, under the
/// output directory:
///   <method>.seed<i>.trace.csv   per-seed trace
///   <method>.seed<i>.ckpt        final-state checkpoint (resumable)
///   summary_by_iteration.csv     across-seed mean/std keyed by iteration
///   summary_by_samples.csv       the same statistics keyed by sample count
///   run_status.csv               per-seed ok/diverged
/// Diverged seeds are recorded and excluded from the statistics; they do not
/// abort the sweep. Seeds run concurrently when DEEPSTORM_THREADS > 1.
/// output_dir_override (e.g. from the CLI) wins over DEEPSTORM_OUTPUT_DIR,
/// which wins over the spec.
ExperimentOutput run_experiment(const ExperimentSpec& spec,
                                const std::string& output_dir_override = "");

void write_checkpoint(std::ostream& os, const ExperimentSpec& spec, const std::string& method,
                      int seed_index, const RunState& state, std::uint64_t problem_hash);

struct ResumeResult {
  RunResult result;  // trace holds only the continuation rows
  ExperimentSpec spec;
  std::string method;
  int seed_index = 0;
  std::uint64_t problem_hash = 0;
};

/// Rebuilds the run from the embedded config, verifies the problem hash, and
/// continues for extra_iters. The continuation is bit-identical to an
/// uninterrupted run of the same total length.
ResumeResult resume(const std::string& checkpoint_path, std::int64_t extra_iters);

}  // namespace deepstorm
