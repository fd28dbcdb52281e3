#include "deepstorm/topology.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <queue>
#include <set>
#include <sstream>
#include <string>

#include "deepstorm/errors.hpp"
#include "deepstorm/rng.hpp"
#include "text_util.hpp"

namespace deepstorm {

namespace {

constexpr double kSymTol = 1e-12;
constexpr double kRowSumTol = 1e-12;

bool connected(int n, const std::vector<std::vector<int>>& adj) {
  if (n <= 0) return false;
  std::vector<char> seen(n, 0);
  std::queue<int> q;
  q.push(0);
  seen[0] = 1;
  int count = 1;
  while (!q.empty()) {
    const int u = q.front();
    q.pop();
    for (int v : adj[u]) {
      if (!seen[v]) {
        seen[v] = 1;
        ++count;
        q.push(v);
      }
    }
  }
  return count == n;
}

std::vector<std::vector<int>> adjacency_lists(int n, const std::vector<std::pair<int, int>>& edges) {
  std::vector<std::vector<int>> adj(n);
  for (auto [i, j] : edges) {
    adj[i].push_back(j);
    adj[j].push_back(i);
  }
  return adj;
}

Eigen::VectorXd symmetric_eigenvalues(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) {
    throw NumericError("symmetric eigensolver failed to converge");
  }
  return es.eigenvalues();
}

double consensus_orthogonal_norm(const Eigen::MatrixXd& w) {
  const int n = static_cast<int>(w.rows());
  const Eigen::MatrixXd m =
      w - Eigen::MatrixXd::Constant(n, n, 1.0 / static_cast<double>(n));
  return symmetric_eigenvalues(m).cwiseAbs().maxCoeff();
}

// Shared three-term recursion behind mix() and the operator-matrix build.
// The mu sequence is tracked through consecutive ratios to avoid overflow of
// the raw Chebyshev values for large T.
Eigen::MatrixXd cheby_apply(const Eigen::MatrixXd& w, double rho, int rounds,
                            const Eigen::MatrixXd& b) {
  Eigen::MatrixXd prev = b;
  Eigen::MatrixXd cur = w * b;
  double ratio = rho;  // mu_{t-1} / mu_t, starting at mu_0/mu_1 = rho
  for (int t = 1; t < rounds; ++t) {
    const double ratio_next = 1.0 / (2.0 / rho - ratio);  // mu_t / mu_{t+1}
    const double c1 = (2.0 / rho) * ratio_next;           // 2 mu_t / (rho mu_{t+1})
    const double c2 = ratio * ratio_next;                 // mu_{t-1} / mu_{t+1}
    Eigen::MatrixXd next = c1 * (w * cur) - c2 * prev;
    prev = std::move(cur);
    cur = std::move(next);
    ratio = ratio_next;
  }
  return cur;
}

Eigen::MatrixXd replicate_column_average(const Eigen::MatrixXd& b) {
  const Eigen::RowVectorXd avg = b.colwise().mean();
  Eigen::MatrixXd out(b.rows(), b.cols());
  out = avg.replicate(b.rows(), 1);
  return out;
}

}  // namespace

GraphKind graph_kind_from_string(const std::string& s) {
  if (s == "ring") return GraphKind::ring;
  if (s == "ladder") return GraphKind::ladder;
  if (s == "random" || s == "random_connected") return GraphKind::random_connected;
  if (s == "complete") return GraphKind::complete;
  if (s == "path") return GraphKind::path;
  throw ConfigError("unknown graph kind: '" + s + "'");
}

std::string to_string(GraphKind k) {
  switch (k) {
    case GraphKind::ring: return "ring";
    case GraphKind::ladder: return "ladder";
    case GraphKind::random_connected: return "random";
    case GraphKind::complete: return "complete";
    case GraphKind::path: return "path";
  }
  return "?";
}

Graph::Graph(int n_agents, std::vector<std::pair<int, int>> edges)
    : n_agents_(n_agents) {
  if (n_agents_ < 1) throw ConfigError("Graph: n_agents must be >= 1");
  std::set<std::pair<int, int>> dedup;
  for (auto [i, j] : edges) {
    if (i == j) throw ConfigError("Graph: self-loop on agent " + std::to_string(i));
    if (i < 0 || j < 0 || i >= n_agents_ || j >= n_agents_) {
      throw ConfigError("Graph: edge endpoint out of range");
    }
    dedup.emplace(std::min(i, j), std::max(i, j));
  }
  edges_.assign(dedup.begin(), dedup.end());
  degree_.assign(n_agents_, 0);
  for (auto [i, j] : edges_) {
    ++degree_[i];
    ++degree_[j];
  }
  if (!connected(n_agents_, adjacency_lists(n_agents_, edges_))) {
    throw ConfigError("Graph: not connected");
  }
}

bool Graph::has_edge(int i, int j) const {
  if (i > j) std::swap(i, j);
  return std::binary_search(edges_.begin(), edges_.end(), std::make_pair(i, j));
}

int Graph::degree(int i) const { return degree_.at(i); }

bool Graph::is_ring() const {
  if (n_agents_ < 3) return false;
  return std::all_of(degree_.begin(), degree_.end(), [](int d) { return d == 2; });
}

Eigen::MatrixXd Graph::laplacian() const {
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(n_agents_, n_agents_);
  for (auto [i, j] : edges_) {
    l(i, j) = -1.0;
    l(j, i) = -1.0;
    l(i, i) += 1.0;
    l(j, j) += 1.0;
  }
  return l;
}

void Graph::save(std::ostream& os) const {
  os << "n " << n_agents_ << "\n";
  for (auto [i, j] : edges_) os << i << " " << j << "\n";
}

Graph Graph::load(std::istream& is) {
  std::string tag;
  int n = 0;
  if (!(is >> tag >> n) || tag != "n") throw IoError("Graph::load: bad header");
  std::vector<std::pair<int, int>> edges;
  int i, j;
  while (is >> i >> j) edges.emplace_back(i, j);
  return Graph(n, std::move(edges));
}

Graph build_graph(GraphKind kind, int n, std::uint64_t seed, double density) {
  if (n < 2) throw ConfigError("build_graph: need at least 2 agents");
  std::vector<std::pair<int, int>> edges;
  switch (kind) {
    case GraphKind::ring: {
      if (n < 3) throw ConfigError("build_graph: ring needs n >= 3");
      for (int i = 0; i < n; ++i) edges.emplace_back(i, (i + 1) % n);
      break;
    }
    case GraphKind::path: {
      for (int i = 0; i + 1 < n; ++i) edges.emplace_back(i, i + 1);
      break;
    }
    case GraphKind::complete: {
      for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) edges.emplace_back(i, j);
      break;
    }
    case GraphKind::ladder: {
      if (n % 2 != 0) throw ConfigError("build_graph: ladder needs even n");
      const int m = n / 2;
      for (int i = 0; i + 1 < m; ++i) {
        edges.emplace_back(i, i + 1);
        edges.emplace_back(m + i, m + i + 1);
      }
      for (int i = 0; i < m; ++i) edges.emplace_back(i, m + i);
      break;
    }
    case GraphKind::random_connected: {
      if (!(density > 0.0) || density > 1.0) {
        throw ConfigError("build_graph: random graph density must be in (0, 1]");
      }
      RngStream rng(seed, 0x67726170 /* "grap" */);
      for (int attempt = 0; attempt < 1000; ++attempt) {
        edges.clear();
        for (int i = 0; i < n; ++i)
          for (int j = i + 1; j < n; ++j)
            if (rng.next_unit() < density) edges.emplace_back(i, j);
        if (connected(n, adjacency_lists(n, edges))) {
          return Graph(n, std::move(edges));
        }
      }
      throw ConfigError(
          "build_graph: no connected sample in 1000 attempts; density " +
          detail::fmt_g17(density) + " looks infeasible for n = " + std::to_string(n));
    }
  }
  return Graph(n, std::move(edges));
}

MixingMatrix::MixingMatrix(Graph graph, Eigen::MatrixXd entries)
    : graph_(std::move(graph)), entries_(std::move(entries)) {
  const int n = graph_.n_agents();
  if (entries_.rows() != n || entries_.cols() != n) {
    throw ConfigError("MixingMatrix: dimension mismatch with graph");
  }
  if ((entries_ - entries_.transpose()).cwiseAbs().maxCoeff() > kSymTol) {
    throw ConfigError("MixingMatrix: not symmetric within 1e-12");
  }
  const Eigen::VectorXd row_sums = entries_.rowwise().sum();
  if ((row_sums.array() - 1.0).abs().maxCoeff() > kRowSumTol) {
    throw ConfigError("MixingMatrix: row sums deviate from 1 beyond 1e-12");
  }
  for (int i = 0; i < n; ++i) {
    if (!(entries_(i, i) > 0.0)) {
      throw ConfigError("MixingMatrix: nonpositive self-weight at agent " +
                        std::to_string(i));
    }
    for (int j = i + 1; j < n; ++j) {
      const bool edge = graph_.has_edge(i, j);
      if (edge && !(entries_(i, j) > 0.0)) {
        throw ConfigError("MixingMatrix: nonpositive weight on edge (" +
                          std::to_string(i) + "," + std::to_string(j) + ")");
      }
      if (!edge && entries_(i, j) != 0.0) {
        throw ConfigError("MixingMatrix: nonzero weight off the edge set at (" +
                          std::to_string(i) + "," + std::to_string(j) + ")");
      }
    }
  }
  rho_ = consensus_orthogonal_norm(entries_);
  if (!(rho_ < 1.0)) {
    throw ConfigError("MixingMatrix: rho = " + detail::fmt_g17(rho_) +
                      " >= 1 (mixing does not contract)");
  }
}

MixingMatrix laplacian_mixing(const Graph& g) {
  const Eigen::MatrixXd l = g.laplacian();
  const double lmax = symmetric_eigenvalues(l).maxCoeff();
  if (!(lmax > 0.0)) throw NumericError("laplacian_mixing: lambda_max <= 0");
  const int n = g.n_agents();
  Eigen::MatrixXd w = Eigen::MatrixXd::Identity(n, n) - l / lmax;
  return MixingMatrix(g, std::move(w));
}

MixingMatrix uniform_ring_mixing(const Graph& g) {
  if (!g.is_ring()) {
    throw ConfigError("uniform_ring_mixing: graph is not a ring with n >= 3");
  }
  const int n = g.n_agents();
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) w(i, i) = 1.0 / 3.0;
  for (auto [i, j] : g.edges()) {
    w(i, j) = 1.0 / 3.0;
    w(j, i) = 1.0 / 3.0;
  }
  return MixingMatrix(g, std::move(w));
}

double spectral_gap(const MixingMatrix& w) {
  return consensus_orthogonal_norm(w.entries());
}

int chebyshev_rounds_for_target(double rho) {
  if (!(rho >= 0.0) || rho >= 1.0) {
    throw ConfigError("chebyshev_rounds_for_target: rho must be in [0, 1)");
  }
  // Snap to the integer when 2/sqrt(1-rho) lands on one up to rounding.
  const double t = 2.0 / std::sqrt(1.0 - rho);
  return static_cast<int>(std::ceil(t - 1e-12));
}

ChebyshevOperator::ChebyshevOperator(MixingMatrix base, int rounds)
    : base_(std::move(base)), rounds_(rounds) {
  if (rounds_ < 1) throw ConfigError("ChebyshevOperator: rounds must be >= 1");
  const int n = base_.n_agents();
  const double rho = base_.rho();
  if (rho < kDegenerateRho) {
    matrix_ = Eigen::MatrixXd::Constant(n, n, 1.0 / static_cast<double>(n));
    rho_tilde_ = 0.0;
    return;
  }
  if (rounds_ == 1) {
    matrix_ = base_.entries();
    rho_tilde_ = rho;
    return;
  }
  matrix_ = cheby_apply(base_.entries(), rho, rounds_, Eigen::MatrixXd::Identity(n, n));
  rho_tilde_ = consensus_orthogonal_norm(matrix_);
  const double bound = 2.0 * std::pow(1.0 - std::sqrt(1.0 - rho), rounds_);
  if (rho_tilde_ > bound + 1e-10) {
    throw NumericError("ChebyshevOperator: measured rho_tilde " +
                       detail::fmt_g17(rho_tilde_) + " exceeds bound " +
                       detail::fmt_g17(bound));
  }
}

Eigen::MatrixXd mix(const ChebyshevOperator& op, const Eigen::MatrixXd& b) {
  if (b.rows() != op.base().n_agents()) {
    throw ConfigError("mix: input row count does not match agent count");
  }
  const double rho = op.base().rho();
  if (rho < kDegenerateRho) return replicate_column_average(b);
  if (op.rounds() == 1) return op.base().entries() * b;
  return cheby_apply(op.base().entries(), rho, op.rounds(), b);
}

Eigen::MatrixXd mix_once(const MixingMatrix& w, const Eigen::MatrixXd& b) {
  if (b.rows() != w.n_agents()) {
    throw ConfigError("mix_once: input row count does not match agent count");
  }
  return w.entries() * b;
}

void write_matrix_text(std::ostream& os, const Eigen::MatrixXd& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) os << ' ';
      os << detail::fmt_g17(m(i, j));
    }
    os << '\n';
  }
}

Eigen::MatrixXd read_matrix_text(std::istream& is) {
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::vector<double> row;
    std::string tok;
    while (ls >> tok) row.push_back(detail::parse_double(tok));
    if (row.empty()) continue;
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw IoError("read_matrix_text: ragged rows");
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw IoError("read_matrix_text: empty input");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()),
                    static_cast<Eigen::Index>(rows.front().size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      m(i, j) = rows[static_cast<size_t>(i)][static_cast<size_t>(j)];
  return m;
}

}  // namespace deepstorm
