#include <benchmark/benchmark.h>

#include "deepstorm/optimizer.hpp"
#include "deepstorm/topology.hpp"

using namespace deepstorm;

namespace {

std::shared_ptr<const ChebyshevOperator> make_ring_op(int n, int rounds) {
  const Graph g = build_graph(GraphKind::ring, n, 0);
  return std::make_shared<const ChebyshevOperator>(uniform_ring_mixing(g), rounds);
}

void BM_mix(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const int t = static_cast<int>(state.range(1));
  auto op = make_ring_op(n, t);
  Eigen::MatrixXd b = Eigen::MatrixXd::Random(n, 64);
  for (auto _ : state) {
    benchmark::DoNotOptimize(mix(*op, b));
  }
}
BENCHMARK(BM_mix)->Args({8, 1})->Args({8, 5})->Args({32, 5})->Args({64, 8});

void BM_spectral_gap(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const Graph g = build_graph(GraphKind::random_connected, n, 3, 0.3);
  const MixingMatrix w = laplacian_mixing(g);
  for (auto _ : state) {
    benchmark::DoNotOptimize(spectral_gap(w));
  }
}
BENCHMARK(BM_spectral_gap)->Arg(8)->Arg(32)->Arg(64);

RunConfig step_config(EstimatorConfig::Variant variant) {
  RunConfig cfg;
  cfg.mixer = make_ring_op(8, 1);
  cfg.init_rounds = 2;
  cfg.problem = std::make_shared<const ProblemInstance>(
      ProblemInstance::make_logistic_l1(8, 2000, 50, 0.2, 11));
  cfg.estimator.variant = variant;
  cfg.estimator.m = 16;
  cfg.estimator.m0 = 64;
  cfg.estimator.snapshot_period = 64;
  cfg.schedule.family = Schedule::Family::diminishing;
  cfg.schedule.rho_tilde = cfg.mixer->rho_tilde();
  cfg.schedule.k0 = diminishing_k0_floor(cfg.schedule.rho_tilde);
  cfg.schedule.smoothness = cfg.problem->smoothness();
  cfg.schedule.n_agents = 8;
  cfg.schedule.alpha = schedule_alpha_bound(Schedule::Family::diminishing, cfg.schedule.k0,
                                            cfg.schedule.smoothness, cfg.schedule.rho_tilde);
  cfg.iterations = 1;
  return cfg;
}

void BM_step(benchmark::State& state) {
  const auto variant = static_cast<EstimatorConfig::Variant>(state.range(0));
  RunConfig cfg = step_config(variant);
  RunState st = init(cfg);
  for (auto _ : state) {
    step(st, cfg);
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_step)
    ->Arg(static_cast<int>(EstimatorConfig::Variant::v1_sg))
    ->Arg(static_cast<int>(EstimatorConfig::Variant::v1_svrg))
    ->Arg(static_cast<int>(EstimatorConfig::Variant::v2));

}  // namespace

BENCHMARK_MAIN();
