#include "deepstorm/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "deepstorm/errors.hpp"
#include "text_util.hpp"

namespace deepstorm {

namespace fs = std::filesystem;

namespace {

constexpr const char* kCheckpointMagic = "deepstorm-checkpoint";
constexpr int kCheckpointVersion = 1;

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

// Shortest decimal form that parses back to the same double.
std::string fmt_shortest(double v) {
  for (int prec = 1; prec <= 17; ++prec) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    if (detail::parse_double(buf) == v) return buf;
  }
  return detail::fmt_g17(v);
}

struct Line {
  int number = 0;
  std::string text;
};

[[noreturn]] void fail(const Line& ln, const std::string& why) {
  throw ConfigError("config line " + std::to_string(ln.number) + ": " + why + " ('" +
                    ln.text + "')");
}

double to_double(const Line& ln, const std::string& v) {
  try {
    return detail::parse_double(v);
  } catch (const Error&) {
    fail(ln, "expected a number");
  }
}

std::int64_t to_int(const Line& ln, const std::string& v) {
  try {
    return detail::parse_ll(v);
  } catch (const Error&) {
    fail(ln, "expected an integer");
  }
}

std::uint64_t to_uint(const Line& ln, const std::string& v) {
  const std::int64_t x = to_int(ln, v);
  if (x < 0) fail(ln, "expected a nonnegative integer");
  return static_cast<std::uint64_t>(x);
}

std::optional<double> to_auto_double(const Line& ln, const std::string& v) {
  if (v == "auto") return std::nullopt;
  return to_double(ln, v);
}

std::optional<std::int64_t> to_auto_int(const Line& ln, const std::string& v) {
  if (v == "auto") return std::nullopt;
  return to_int(ln, v);
}

int env_thread_count() {
  const char* e = std::getenv("DEEPSTORM_THREADS");
  if (!e) return 1;
  const int t = std::atoi(e);
  return std::max(1, t);
}

std::string env_output_dir() {
  const char* e = std::getenv("DEEPSTORM_OUTPUT_DIR");
  return e ? std::string(e) : std::string();
}

int default_init_rounds(double rho, double rho_tilde) {
  if (rho_tilde <= 0.0) return 1;
  const double v = -2.0 * std::log(1.0 - rho_tilde) / std::sqrt(1.0 - rho);
  return std::max(1, static_cast<int>(std::ceil(v - 1e-12)));
}

ProblemPtr build_problem(const ProblemSpec& ps, int agents) {
  if (!ps.dataset.empty()) {
    std::ifstream f(ps.dataset);
    if (!f) throw IoError("cannot open dataset file: " + ps.dataset);
    return std::make_shared<const ProblemInstance>(
        ProblemInstance::load_logistic_dataset(f, agents, ps.lambda, ps.problem_seed));
  }
  if (ps.kind == "quadratic") {
    const Regularizer reg =
        ps.lambda > 0.0 ? Regularizer::l1(ps.lambda) : Regularizer::zero();
    return std::make_shared<const ProblemInstance>(ProblemInstance::make_quadratic(
        agents, ps.dim, ps.problem_seed, ps.heterogeneity, ps.samples_per_agent, ps.noise, reg));
  }
  if (ps.kind == "logistic_l1") {
    return std::make_shared<const ProblemInstance>(ProblemInstance::make_logistic_l1(
        agents, ps.samples, ps.dim, ps.sparsity, ps.problem_seed, ps.lambda,
        ps.feature_scale.value_or(kDefaultFeatureScale),
        ps.margin_scale.value_or(kDefaultMarginScale),
        ps.support_scale.value_or(kDefaultSupportScale)));
  }
  throw ConfigError("unknown problem kind: '" + ps.kind + "'");
}

std::string sanitize_detail(std::string s) {
  std::replace(s.begin(), s.end(), ',', ';');
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

struct SummaryRow {
  std::string method;
  TraceRecord base;  // k / counters from the first surviving seed
  int n_seeds = 0;
  double mean[6] = {0, 0, 0, 0, 0, 0};
  double stddev[6] = {0, 0, 0, 0, 0, 0};
  bool has_accuracy = false;
};

double metric_field(const TraceRecord& r, int which) {
  switch (which) {
    case 0: return r.loss;
    case 1: return r.stationarity_def2;
    case 2: return r.stationarity_exp;
    case 3: return r.consensus;
    case 4: return r.sparsity_pct;
    default: return r.accuracy;
  }
}

void write_summary_csv(std::ostream& os, const std::vector<SummaryRow>& rows, bool by_samples) {
  const bool acc = !rows.empty() && rows.front().has_accuracy;
  if (by_samples) {
    os << "method,samples_used,k,grad_evals,comm_rounds,n_seeds";
  } else {
    os << "method,k,samples_used,grad_evals,comm_rounds,n_seeds";
  }
  static const char* names[6] = {"loss",      "stationarity_def2", "stationarity_exp",
                                 "consensus", "sparsity_pct",      "accuracy"};
  const int n_metrics = acc ? 6 : 5;
  for (int m = 0; m < n_metrics; ++m) os << ',' << names[m] << "_mean," << names[m] << "_std";
  os << '\n';
  for (const auto& r : rows) {
    if (by_samples) {
      os << r.method << ',' << r.base.samples_used << ',' << r.base.k;
    } else {
      os << r.method << ',' << r.base.k << ',' << r.base.samples_used;
    }
    os << ',' << r.base.grad_evals << ',' << r.base.comm_rounds << ',' << r.n_seeds;
    for (int m = 0; m < n_metrics; ++m) {
      os << ',' << detail::fmt_g17(r.mean[m]) << ',' << detail::fmt_g17(r.stddev[m]);
    }
    os << '\n';
  }
}

}  // namespace

ExperimentSpec parse_config_text(const std::string& text) {
  ExperimentSpec spec;
  bool saw_iters = false, saw_agents = false;
  std::string section;      // "", "topology", "problem", "method"
  MethodSpec* method = nullptr;

  std::istringstream is(text);
  std::string raw;
  int lineno = 0;
  while (std::getline(is, raw)) {
    ++lineno;
    std::string s = raw;
    const auto hash = s.find('#');
    if (hash != std::string::npos) s = s.substr(0, hash);
    s = trim(s);
    if (s.empty()) continue;
    const Line ln{lineno, trim(raw)};

    if (s.front() == '[') {
      if (s.back() != ']') fail(ln, "unterminated section header");
      const std::string inner = trim(s.substr(1, s.size() - 2));
      if (inner == "topology") {
        section = "topology";
      } else if (inner == "problem") {
        section = "problem";
      } else if (inner.rfind("method", 0) == 0) {
        const std::string name = trim(inner.substr(6));
        if (name.empty()) fail(ln, "method section needs a name: [method NAME]");
        for (const auto& m : spec.methods)
          if (m.name == name) fail(ln, "duplicate method name '" + name + "'");
        spec.methods.emplace_back();
        spec.methods.back().name = name;
        method = &spec.methods.back();
        section = "method";
      } else {
        fail(ln, "unknown section [" + inner + "]");
      }
      continue;
    }

    const auto eq = s.find('=');
    if (eq == std::string::npos) fail(ln, "expected 'key = value'");
    const std::string key = trim(s.substr(0, eq));
    const std::string val = trim(s.substr(eq + 1));
    if (key.empty() || val.empty()) fail(ln, "expected 'key = value'");

    try {
      if (section.empty()) {
        if (key == "seeds") spec.n_seeds = static_cast<int>(to_int(ln, val));
        else if (key == "root_seed") spec.root_seed = to_uint(ln, val);
        else if (key == "iters") { spec.iters = to_int(ln, val); saw_iters = true; }
        else if (key == "record_every") spec.record_every = to_int(ln, val);
        else if (key == "output_dir") spec.output_dir = val;
        else if (key == "x0_scale") spec.x0_scale = to_double(ln, val);
        else fail(ln, "unknown key '" + key + "'");
      } else if (section == "topology") {
        auto& t = spec.topology;
        if (key == "graph") t.graph = graph_kind_from_string(val);
        else if (key == "agents") { t.agents = static_cast<int>(to_int(ln, val)); saw_agents = true; }
        else if (key == "graph_seed") t.graph_seed = to_uint(ln, val);
        else if (key == "density") t.density = to_double(ln, val);
        else if (key == "mixing") t.mixing = val;
        else if (key == "rounds") {
          const auto v = to_auto_int(ln, val);
          t.rounds = v ? std::optional<int>(static_cast<int>(*v)) : std::nullopt;
        } else if (key == "init_rounds") {
          const auto v = to_auto_int(ln, val);
          t.init_rounds = v ? std::optional<int>(static_cast<int>(*v)) : std::nullopt;
        } else fail(ln, "unknown key '" + key + "' in [topology]");
      } else if (section == "problem") {
        auto& p = spec.problem;
        if (key == "kind") p.kind = val;
        else if (key == "problem_seed") p.problem_seed = to_uint(ln, val);
        else if (key == "dim") p.dim = static_cast<int>(to_int(ln, val));
        else if (key == "samples") p.samples = static_cast<int>(to_int(ln, val));
        else if (key == "sparsity") p.sparsity = to_double(ln, val);
        else if (key == "lambda") p.lambda = to_double(ln, val);
        else if (key == "feature_scale") p.feature_scale = to_double(ln, val);
        else if (key == "margin_scale") p.margin_scale = to_double(ln, val);
        else if (key == "support_scale") p.support_scale = to_double(ln, val);
        else if (key == "heterogeneity") p.heterogeneity = to_double(ln, val);
        else if (key == "noise") p.noise = to_double(ln, val);
        else if (key == "samples_per_agent") p.samples_per_agent = static_cast<int>(to_int(ln, val));
        else if (key == "dataset") p.dataset = val;
        else fail(ln, "unknown key '" + key + "' in [problem]");
      } else {
        if (!method) fail(ln, "key outside any section");
        if (key == "algorithm") method->algorithm = algorithm_from_string(val);
        else if (key == "variant") method->variant = variant_from_string(val);
        else if (key == "schedule") {
          if (val == "constant") method->schedule = Schedule::Family::constant;
          else if (val == "diminishing") method->schedule = Schedule::Family::diminishing;
          else fail(ln, "schedule must be constant or diminishing");
        }
        else if (key == "alpha") method->alpha = to_auto_double(ln, val);
        else if (key == "k0") method->k0 = to_auto_int(ln, val);
        else if (key == "m") method->m = static_cast<int>(to_int(ln, val));
        else if (key == "m0") {
          const auto v = to_auto_int(ln, val);
          method->m0 = v ? std::optional<int>(static_cast<int>(*v)) : std::nullopt;
        } else if (key == "snapshot_period") {
          const auto v = to_auto_int(ln, val);
          method->snapshot_period = v ? std::optional<int>(static_cast<int>(*v)) : std::nullopt;
        } else if (key == "snapshot_batch") {
          if (val == "full") method->snapshot_batch = std::nullopt;
          else method->snapshot_batch = static_cast<int>(to_int(ln, val));
        } else if (key == "selection") {
          if (val != "auto" && val != "uniform" && val != "alpha_weighted") {
            fail(ln, "selection must be auto, uniform or alpha_weighted");
          }
          method->selection = val;
        } else fail(ln, "unknown key '" + key + "' in [method]");
      }
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      fail(ln, e.what());
    }
  }

  if (!saw_iters) throw ConfigError("config: missing required key 'iters'");
  if (!saw_agents) throw ConfigError("config: missing required key 'agents' in [topology]");
  if (spec.methods.empty()) throw ConfigError("config: at least one [method NAME] is required");
  if (spec.n_seeds < 1) throw ConfigError("config: seeds must be >= 1");
  if (spec.iters < 1) throw ConfigError("config: iters must be >= 1");
  if (spec.record_every < 1) throw ConfigError("config: record_every must be >= 1");
  return spec;
}

ExperimentSpec parse_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << f.rdbuf();
  return parse_config_text(buf.str());
}

std::string serialize_config(const ExperimentSpec& spec) {
  std::ostringstream os;
  auto opt_int = [](const std::optional<int>& v) {
    return v ? std::to_string(*v) : std::string("auto");
  };
  os << "seeds = " << spec.n_seeds << '\n';
  os << "root_seed = " << spec.root_seed << '\n';
  os << "iters = " << spec.iters << '\n';
  os << "record_every = " << spec.record_every << '\n';
  os << "output_dir = " << spec.output_dir << '\n';
  os << "x0_scale = " << fmt_shortest(spec.x0_scale) << '\n';
  os << "\n[topology]\n";
  const auto& t = spec.topology;
  os << "graph = " << to_string(t.graph) << '\n';
  os << "agents = " << t.agents << '\n';
  os << "graph_seed = " << t.graph_seed << '\n';
  os << "density = " << fmt_shortest(t.density) << '\n';
  os << "mixing = " << t.mixing << '\n';
  os << "rounds = " << opt_int(t.rounds) << '\n';
  os << "init_rounds = " << opt_int(t.init_rounds) << '\n';
  os << "\n[problem]\n";
  const auto& p = spec.problem;
  os << "kind = " << p.kind << '\n';
  os << "problem_seed = " << p.problem_seed << '\n';
  os << "dim = " << p.dim << '\n';
  os << "samples = " << p.samples << '\n';
  os << "sparsity = " << fmt_shortest(p.sparsity) << '\n';
  os << "lambda = " << fmt_shortest(p.lambda) << '\n';
  if (p.feature_scale) os << "feature_scale = " << fmt_shortest(*p.feature_scale) << '\n';
  if (p.margin_scale) os << "margin_scale = " << fmt_shortest(*p.margin_scale) << '\n';
  if (p.support_scale) os << "support_scale = " << fmt_shortest(*p.support_scale) << '\n';
  os << "heterogeneity = " << fmt_shortest(p.heterogeneity) << '\n';
  os << "noise = " << fmt_shortest(p.noise) << '\n';
  os << "samples_per_agent = " << p.samples_per_agent << '\n';
  if (!p.dataset.empty()) os << "dataset = " << p.dataset << '\n';
  for (const auto& m : spec.methods) {
    os << "\n[method " << m.name << "]\n";
    os << "algorithm = " << to_string(m.algorithm) << '\n';
    os << "variant = " << to_string(m.variant) << '\n';
    os << "schedule = "
       << (m.schedule == Schedule::Family::constant ? "constant" : "diminishing") << '\n';
    os << "alpha = " << (m.alpha ? fmt_shortest(*m.alpha) : std::string("auto")) << '\n';
    os << "k0 = " << (m.k0 ? std::to_string(*m.k0) : std::string("auto")) << '\n';
    os << "m = " << m.m << '\n';
    os << "m0 = " << opt_int(m.m0) << '\n';
    os << "snapshot_period = " << opt_int(m.snapshot_period) << '\n';
    os << "snapshot_batch = "
       << (m.snapshot_batch ? std::to_string(*m.snapshot_batch) : std::string("full")) << '\n';
    os << "selection = " << m.selection << '\n';
  }
  return os.str();
}

std::uint64_t seed_root(std::uint64_t experiment_root, int seed_index) {
  return derive_stream_seed(experiment_root,
                            0x100000000ULL + static_cast<std::uint64_t>(seed_index));
}

BuiltExperiment build_experiment(const ExperimentSpec& spec) {
  if (spec.iters < 1) throw ConfigError("experiment: iters must be >= 1");
  if (spec.n_seeds < 1) throw ConfigError("experiment: seeds must be >= 1");
  if (spec.methods.empty()) throw ConfigError("experiment: no methods configured");

  const auto& ts = spec.topology;
  const Graph g = build_graph(ts.graph, ts.agents, ts.graph_seed, ts.density);
  MixingMatrix w = [&]() {
    if (ts.mixing == "uniform_ring") return uniform_ring_mixing(g);
    if (ts.mixing == "laplacian") return laplacian_mixing(g);
    if (ts.mixing == "auto") {
      return ts.graph == GraphKind::ring ? uniform_ring_mixing(g) : laplacian_mixing(g);
    }
    throw ConfigError("unknown mixing rule: '" + ts.mixing + "'");
  }();
  const double rho = w.rho();
  const int rounds = ts.rounds ? *ts.rounds : chebyshev_rounds_for_target(rho);
  auto mixer = std::make_shared<const ChebyshevOperator>(std::move(w), rounds);
  const double rho_tilde = mixer->rho_tilde();
  const int t0 = ts.init_rounds ? *ts.init_rounds : default_init_rounds(rho, rho_tilde);

  BuiltExperiment built;
  built.mixer = mixer;
  built.problem = build_problem(spec.problem, ts.agents);
  built.rho = rho;
  built.rho_tilde = rho_tilde;
  built.init_rounds = t0;

  const double smoothness = built.problem->smoothness();
  const int n = built.problem->n_agents();

  for (const auto& ms : spec.methods) {
    RunConfig cfg;
    cfg.mixer = mixer;
    cfg.init_rounds = t0;
    cfg.problem = built.problem;
    cfg.algorithm = ms.algorithm;
    cfg.iterations = spec.iters;
    cfg.record_every = spec.record_every;
    cfg.x0_scale = spec.x0_scale;

    Schedule sch;
    sch.family = ms.schedule;
    sch.smoothness = smoothness;
    sch.n_agents = n;
    sch.rho_tilde = rho_tilde;
    sch.horizon = spec.iters;
    sch.k0 = ms.k0 ? *ms.k0 : diminishing_k0_floor(rho_tilde);
    const std::int64_t bound_arg =
        ms.schedule == Schedule::Family::constant ? spec.iters : sch.k0;
    const double bound = schedule_alpha_bound(ms.schedule, bound_arg, smoothness, rho_tilde);
    sch.alpha = ms.alpha ? *ms.alpha : bound;
    cfg.schedule = sch;
    if (ms.algorithm == Algorithm::deepstorm) validate_schedule(sch);

    EstimatorConfig est;
    est.variant = ms.variant;
    est.m = ms.m;
    est.m0 = ms.m0 ? *ms.m0
                   : static_cast<int>(std::ceil(std::cbrt(static_cast<double>(n) *
                                                          static_cast<double>(spec.iters))));
    const int shard = built.problem->shard_size(0);
    est.snapshot_period =
        ms.snapshot_period ? *ms.snapshot_period
                           : std::max(1, 4 * ((shard + ms.m - 1) / std::max(1, ms.m)));
    est.snapshot_batch = ms.snapshot_batch.value_or(0);
    cfg.estimator = est;

    if (ms.selection == "uniform") cfg.selection = SelectionRule::uniform;
    else if (ms.selection == "alpha_weighted") cfg.selection = SelectionRule::alpha_weighted;
    else cfg.selection = ms.schedule == Schedule::Family::constant
                             ? SelectionRule::uniform
                             : SelectionRule::alpha_weighted;

    built.methods.push_back(BuiltMethod{ms.name, std::move(cfg)});
  }
  return built;
}

void write_checkpoint(std::ostream& os, const ExperimentSpec& spec, const std::string& method,
                      int seed_index, const RunState& state, std::uint64_t problem_hash) {
  const std::string config = serialize_config(spec);
  const auto lines = static_cast<std::int64_t>(std::count(config.begin(), config.end(), '\n'));
  os << kCheckpointMagic << ' ' << kCheckpointVersion << '\n';
  os << "method " << method << '\n';
  os << "seed_index " << seed_index << '\n';
  os << "problem_hash " << problem_hash << '\n';
  os << "config_lines " << lines << '\n';
  os << config;
  write_state(os, state);
}

ResumeResult resume(const std::string& checkpoint_path, std::int64_t extra_iters) {
  if (extra_iters < 0) throw ConfigError("resume: extra_iters must be >= 0");
  std::ifstream f(checkpoint_path);
  if (!f) throw IoError("cannot open checkpoint: " + checkpoint_path);

  std::string magic, tag;
  int version = 0;
  if (!(f >> magic >> version) || magic != kCheckpointMagic) {
    throw IoError("not a checkpoint file: " + checkpoint_path);
  }
  if (version != kCheckpointVersion) {
    throw IoError("unsupported checkpoint version " + std::to_string(version));
  }
  ResumeResult out;
  std::uint64_t stored_hash = 0;
  std::int64_t config_lines = 0;
  if (!(f >> tag >> out.method) || tag != "method") throw IoError("checkpoint: missing method");
  if (!(f >> tag >> out.seed_index) || tag != "seed_index") {
    throw IoError("checkpoint: missing seed_index");
  }
  if (!(f >> tag >> stored_hash) || tag != "problem_hash") {
    throw IoError("checkpoint: missing problem_hash");
  }
  if (!(f >> tag >> config_lines) || tag != "config_lines") {
    throw IoError("checkpoint: missing config_lines");
  }
  std::string rest_of_line;
  std::getline(f, rest_of_line);
  std::ostringstream config;
  for (std::int64_t i = 0; i < config_lines; ++i) {
    std::string line;
    if (!std::getline(f, line)) throw IoError("checkpoint: truncated config block");
    config << line << '\n';
  }
  out.spec = parse_config_text(config.str());
  RunState state = read_state(f);

  BuiltExperiment built = build_experiment(out.spec);
  out.problem_hash = built.problem->data_hash();
  if (out.problem_hash != stored_hash) {
    throw IoError("checkpoint was produced for a different problem (hash mismatch)");
  }
  const auto it = std::find_if(built.methods.begin(), built.methods.end(),
                               [&](const BuiltMethod& m) { return m.name == out.method; });
  if (it == built.methods.end()) {
    throw IoError("checkpoint method '" + out.method + "' not present in its config");
  }
  RunConfig cfg = it->config;
  cfg.root_seed = seed_root(out.spec.root_seed, out.seed_index);
  if (state.x.rows() != built.problem->n_agents() || state.x.cols() != built.problem->dim()) {
    throw IoError("checkpoint state shape does not match the problem");
  }
  out.result = run_steps(cfg, std::move(state), extra_iters);
  return out;
}

ExperimentOutput run_experiment(const ExperimentSpec& spec,
                                const std::string& output_dir_override) {
  BuiltExperiment built = build_experiment(spec);

  std::string outdir = output_dir_override;
  if (outdir.empty()) outdir = env_output_dir();
  if (outdir.empty()) outdir = spec.output_dir;
  std::error_code ec;
  fs::create_directories(outdir, ec);
  if (ec) throw IoError("cannot create output directory '" + outdir + "': " + ec.message());

  struct Job {
    size_t method_idx;
    int seed;
  };
  std::vector<Job> jobs;
  for (size_t mi = 0; mi < built.methods.size(); ++mi)
    for (int s = 0; s < spec.n_seeds; ++s) jobs.push_back({mi, s});

  std::vector<SeedStatus> statuses(jobs.size());
  std::vector<std::vector<TraceRecord>> traces(jobs.size());
  const std::uint64_t problem_hash = built.problem->data_hash();

  std::atomic<size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      const size_t idx = next.fetch_add(1);
      if (idx >= jobs.size()) return;
      const Job job = jobs[idx];
      const BuiltMethod& bm = built.methods[job.method_idx];
      SeedStatus& status = statuses[idx];
      status.method = bm.name;
      status.seed_index = job.seed;
      try {
        RunConfig cfg = bm.config;
        cfg.root_seed = seed_root(spec.root_seed, job.seed);
        RunResult res = run(cfg);

        const std::string stem =
            (fs::path(outdir) / (bm.name + ".seed" + std::to_string(job.seed))).string();
        {
          std::ofstream tf(stem + ".trace.csv");
          if (!tf) throw IoError("cannot write " + stem + ".trace.csv");
          write_trace_csv(tf, res.trace);
        }
        {
          std::ofstream cf(stem + ".ckpt");
          if (!cf) throw IoError("cannot write " + stem + ".ckpt");
          write_checkpoint(cf, spec, bm.name, job.seed, res.state, problem_hash);
        }
        traces[idx] = std::move(res.trace);
        status.ok = true;
      } catch (const NumericError& e) {
        status.ok = false;
        status.detail = e.what();
      }
    }
  };

  const int threads = std::min<int>(env_thread_count(), static_cast<int>(jobs.size()));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads - 1; ++t) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();
  }

  // Across-seed statistics, iteration- and sample-aligned views.
  std::vector<SummaryRow> rows;
  for (size_t mi = 0; mi < built.methods.size(); ++mi) {
    std::vector<const std::vector<TraceRecord>*> ok;
    for (size_t idx = 0; idx < jobs.size(); ++idx) {
      if (jobs[idx].method_idx == mi && statuses[idx].ok) ok.push_back(&traces[idx]);
    }
    if (ok.empty()) continue;
    const size_t len = ok.front()->size();
    for (const auto* t : ok) {
      if (t->size() != len) throw NumericError("summary: seeds produced different trace grids");
    }
    for (size_t r = 0; r < len; ++r) {
      SummaryRow row;
      row.method = built.methods[mi].name;
      row.base = (*ok.front())[r];
      row.n_seeds = static_cast<int>(ok.size());
      row.has_accuracy = row.base.has_accuracy;
      const int n_metrics = row.has_accuracy ? 6 : 5;
      for (int m = 0; m < n_metrics; ++m) {
        double mean = 0.0;
        for (const auto* t : ok) mean += metric_field((*t)[r], m);
        mean /= static_cast<double>(ok.size());
        double var = 0.0;
        for (const auto* t : ok) {
          const double d = metric_field((*t)[r], m) - mean;
          var += d * d;
        }
        row.mean[m] = mean;
        row.stddev[m] = ok.size() > 1 ? std::sqrt(var / static_cast<double>(ok.size() - 1)) : 0.0;
      }
      rows.push_back(std::move(row));
    }
  }

  {
    std::ofstream f(fs::path(outdir) / "summary_by_iteration.csv");
    if (!f) throw IoError("cannot write summary_by_iteration.csv");
    write_summary_csv(f, rows, /*by_samples=*/false);
  }
  {
    std::vector<SummaryRow> by_samples = rows;
    std::stable_sort(by_samples.begin(), by_samples.end(),
                     [](const SummaryRow& a, const SummaryRow& b) {
                       if (a.method != b.method) return a.method < b.method;
                       return a.base.samples_used < b.base.samples_used;
                     });
    std::ofstream f(fs::path(outdir) / "summary_by_samples.csv");
    if (!f) throw IoError("cannot write summary_by_samples.csv");
    write_summary_csv(f, by_samples, /*by_samples=*/true);
  }
  {
    std::ofstream f(fs::path(outdir) / "run_status.csv");
    if (!f) throw IoError("cannot write run_status.csv");
    f << "method,seed,status,detail\n";
    for (const auto& st : statuses) {
      f << st.method << ',' << st.seed_index << ',' << (st.ok ? "ok" : "diverged") << ','
        << sanitize_detail(st.detail) << '\n';
    }
  }

  ExperimentOutput out;
  out.output_dir = outdir;
  out.statuses = std::move(statuses);
  return out;
}

}  // namespace deepstorm
