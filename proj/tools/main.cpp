// Command-line front end: run / validate / resume experiments and inspect the
// spectral properties of the built-in graph families.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "deepstorm/errors.hpp"
#include "deepstorm/harness.hpp"
#include "deepstorm/metrics.hpp"
#include "deepstorm/optimizer.hpp"
#include "deepstorm/topology.hpp"

namespace fs = std::filesystem;
using namespace deepstorm;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitIo = 4;

struct GraphSpec {
  GraphKind kind = GraphKind::ring;
  int n = 0;
  double density = 0.3;
  std::uint64_t seed = 0;
};

// "kind:n[:density][:seed]", e.g. ring:8 or random:12:0.4:7
GraphSpec parse_graph_spec(const std::string& s) {
  std::vector<std::string> parts;
  std::istringstream is(s);
  std::string tok;
  while (std::getline(is, tok, ':')) parts.push_back(tok);
  if (parts.size() < 2) {
    throw ConfigError("graph spec must be kind:n[:density][:seed], got '" + s + "'");
  }
  GraphSpec g;
  g.kind = graph_kind_from_string(parts[0]);
  g.n = std::stoi(parts[1]);
  if (parts.size() > 2) g.density = std::stod(parts[2]);
  if (parts.size() > 3) g.seed = static_cast<std::uint64_t>(std::stoull(parts[3]));
  return g;
}

int cmd_validate(const std::string& path) {
  const ExperimentSpec spec = parse_config(path);
  const BuiltExperiment built = build_experiment(spec);
  std::cout << "config OK: " << path << "\n";
  std::cout << "  agents " << built.problem->n_agents() << ", dim " << built.problem->dim()
            << ", L = " << built.problem->smoothness()
            << ", sigma^2 = " << built.problem->sigma_sq() << "\n";
  std::cout << "  rho = " << built.rho << ", T = " << built.mixer->rounds()
            << ", rho_tilde = " << built.rho_tilde << ", T0 = " << built.init_rounds << "\n";
  for (const auto& m : built.methods) {
    std::cout << "  method " << m.name << ": " << to_string(m.config.algorithm);
    if (m.config.algorithm == Algorithm::deepstorm) {
      std::cout << " " << to_string(m.config.estimator.variant) << ", alpha = "
                << m.config.schedule.alpha << ", m = " << m.config.estimator.m
                << ", m0 = " << m.config.estimator.m0;
      if (m.config.schedule.family == Schedule::Family::diminishing) {
        std::cout << ", k0 = " << m.config.schedule.k0;
      }
      std::cout << ", selection = " << to_string(m.config.selection);
    } else {
      std::cout << ", alpha = " << m.config.schedule.alpha
                << ", m = " << m.config.estimator.m;
    }
    std::cout << "\n";
  }
  return 0;
}

int cmd_run(const std::string& path, const std::string& outdir) {
  const ExperimentSpec spec = parse_config(path);
  const ExperimentOutput out = run_experiment(spec, outdir);
  int diverged = 0;
  for (const auto& st : out.statuses) {
    if (!st.ok) {
      ++diverged;
      std::cerr << "seed diverged: " << st.method << " seed " << st.seed_index << ": "
                << st.detail << "\n";
    }
  }
  std::cout << "wrote " << out.statuses.size() - static_cast<size_t>(diverged) << "/"
            << out.statuses.size() << " runs to " << out.output_dir << "\n";
  return 0;
}

int cmd_resume(const std::string& ckpt, std::int64_t iters, std::string outdir) {
  ResumeResult r = resume(ckpt, iters);
  if (outdir.empty()) outdir = fs::path(ckpt).parent_path().string();
  if (outdir.empty()) outdir = ".";
  fs::create_directories(outdir);
  const std::string stem =
      (fs::path(outdir) / fs::path(ckpt).filename().replace_extension("").string()).string();
  {
    std::ofstream tf(stem + ".resume.trace.csv");
    if (!tf) throw IoError("cannot write " + stem + ".resume.trace.csv");
    write_trace_csv(tf, r.result.trace);
  }
  {
    std::ofstream cf(stem + ".resume.ckpt");
    if (!cf) throw IoError("cannot write " + stem + ".resume.ckpt");
    write_checkpoint(cf, r.spec, r.method, r.seed_index, r.result.state, r.problem_hash);
  }
  std::cout << "resumed " << r.method << " seed " << r.seed_index << " for " << iters
            << " iterations (now at k = " << r.result.state.k << ")\n";
  std::cout << "wrote " << stem << ".resume.trace.csv and " << stem << ".resume.ckpt\n";
  return 0;
}

int cmd_spectral(const std::string& spec_str, const std::string& mixing, int rounds,
                 const std::string& dump_path) {
  const GraphSpec gs = parse_graph_spec(spec_str);
  const Graph g = build_graph(gs.kind, gs.n, gs.seed, gs.density);
  const MixingMatrix w = [&]() {
    if (mixing == "uniform_ring") return uniform_ring_mixing(g);
    if (mixing == "laplacian") return laplacian_mixing(g);
    if (mixing == "auto") {
      return gs.kind == GraphKind::ring ? uniform_ring_mixing(g) : laplacian_mixing(g);
    }
    throw ConfigError("unknown mixing rule: '" + mixing + "'");
  }();
  const double rho = w.rho();
  const int t_rec = chebyshev_rounds_for_target(rho);
  const int t_show = rounds > 0 ? rounds : t_rec;

  std::cout << "graph: " << to_string(gs.kind) << " n=" << gs.n;
  if (gs.kind == GraphKind::random_connected) {
    std::cout << " density=" << gs.density << " seed=" << gs.seed;
  }
  std::cout << "\nedges: " << g.edges().size() << "\n";
  std::cout << "rho: " << rho << "   (spectral gap 1-rho: " << 1.0 - rho << ")\n";
  std::cout << "recommended T  = ceil(2/sqrt(1-rho)) = " << t_rec << "\n";
  std::cout << "rho_tilde by rounds:\n";
  double rho_tilde_rec = rho;
  for (int t = 1; t <= std::max(t_rec, t_show); ++t) {
    const ChebyshevOperator op(w, t);
    std::cout << "  T=" << t << ": rho_tilde = " << op.rho_tilde() << "\n";
    if (t == t_rec) rho_tilde_rec = op.rho_tilde();
  }
  const double g2 = (1.0 - rho_tilde_rec) * (1.0 - rho_tilde_rec);
  std::cout << "(1 - rho_tilde(T=" << t_rec << "))^2 = " << g2 << "\n";
  const double t0v = rho_tilde_rec > 0.0
                         ? -2.0 * std::log(1.0 - rho_tilde_rec) / std::sqrt(1.0 - rho)
                         : 0.0;
  std::cout << "recommended T0 = ceil(-2 ln(1-rho_tilde)/sqrt(1-rho)) = "
            << std::max(1, static_cast<int>(std::ceil(t0v - 1e-12))) << "\n";
  if (!dump_path.empty()) {
    std::ofstream mf(dump_path);
    if (!mf) throw IoError("cannot write " + dump_path);
    write_matrix_text(mf, w.entries());
    std::cout << "wrote mixing matrix to " << dump_path << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"decentralized composite-optimization experiment runner"};
  app.require_subcommand(1);

  std::string config_path, outdir, ckpt_path, graph_spec;
  std::string mixing = "auto";
  std::int64_t resume_iters = 0;
  int spectral_rounds = 0;

  auto* run_cmd = app.add_subcommand("run", "run all methods/seeds of an experiment config");
  run_cmd->add_option("config", config_path, "experiment config file")->required();
  run_cmd->add_option("--output-dir", outdir, "override the output directory");

  auto* val_cmd = app.add_subcommand("validate", "parse and fully validate a config");
  val_cmd->add_option("config", config_path, "experiment config file")->required();

  auto* res_cmd = app.add_subcommand("resume", "continue a checkpointed run");
  res_cmd->add_option("checkpoint", ckpt_path, "checkpoint file")->required();
  res_cmd->add_option("--iters", resume_iters, "additional iterations")->required();
  res_cmd->add_option("--output-dir", outdir, "where to write the continuation");

  auto* spec_cmd = app.add_subcommand("spectral", "print rho / rho_tilde / T / T0 for a graph");
  spec_cmd->add_option("graph", graph_spec, "kind:n[:density][:seed]")->required();
  spec_cmd->add_option("--mixing", mixing, "auto | laplacian | uniform_ring");
  spec_cmd->add_option("--rounds", spectral_rounds, "also report this round count");
  std::string dump_matrix;
  spec_cmd->add_option("--dump-matrix", dump_matrix,
                       "write the mixing matrix as plain text rows");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run_cmd->parsed()) return cmd_run(config_path, outdir);
    if (val_cmd->parsed()) return cmd_validate(config_path);
    if (res_cmd->parsed()) return cmd_resume(ckpt_path, resume_iters, outdir);
    if (spec_cmd->parsed()) return cmd_spectral(graph_spec, mixing, spectral_rounds, dump_matrix);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
