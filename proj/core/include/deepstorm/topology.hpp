#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <utility>
#include <vector>

namespace deepstorm {

enum class GraphKind { ring, ladder, random_connected, complete, path };

GraphKind graph_kind_from_string(const std::string& s);
std::string to_string(GraphKind k);

/// Connected undirected communication graph. Edges are stored as (i, j) pairs
/// with i < j; no self-loops. Connectivity is validated at construction.
class Graph {
 public:
  Graph(int n_agents, std::vector<std::pair<int, int>> edges);

  int n_agents() const { return n_agents_; }
  const std::vector<std::pair<int, int>>& edges() const { return edges_; }
  bool has_edge(int i, int j) const;
  int degree(int i) const;
  bool is_ring() const;

  /// Combinatorial Laplacian D - A.
  Eigen::MatrixXd laplacian() const;

  /// Edge-list text form: first line "n <N>", then one "i j" line per edge.
  void save(std::ostream& os) const;
  static Graph load(std::istream& is);

 private:
  int n_agents_ = 0;
  std::vector<std::pair<int, int>> edges_;
  std::vector<int> degree_;
};

/// Deterministic graph construction for the built-in families.
///
/// For random_connected, `density` is the Erdos-Renyi edge probability; the
/// sample is redrawn until connected (at most 1000 attempts, after which the
/// density is reported as infeasible).
Graph build_graph(GraphKind kind, int n, std::uint64_t seed, double density = 0.0);

/// Symmetric weight matrix for one gossip round. Construction verifies:
/// symmetry and unit row sums to 1e-12, strictly positive diagonal, zero
/// pattern matching the graph edges exactly, and rho < 1.
class MixingMatrix {
 public:
  MixingMatrix(Graph graph, Eigen::MatrixXd entries);

  const Graph& graph() const { return graph_; }
  const Eigen::MatrixXd& entries() const { return entries_; }
  int n_agents() const { return graph_.n_agents(); }

  /// ||W - (1/N) e e^T||_2 cached at construction.
  double rho() const { return rho_; }

 private:
  Graph graph_;
  Eigen::MatrixXd entries_;
  double rho_ = 0.0;
};

/// W = I - L / lambda_max(L) for the combinatorial Laplacian L.
MixingMatrix laplacian_mixing(const Graph& g);

/// Ring-only circulant weights: 1/3 self, 1/3 per neighbor. Requires a ring
/// with n >= 3.
MixingMatrix uniform_ring_mixing(const Graph& g);

/// Exact operator 2-norm of W - (1/N) e e^T, i.e. the largest eigenvalue
/// magnitude of W restricted to the consensus-orthogonal subspace. Computed
/// by full symmetric eigendecomposition.
double spectral_gap(const MixingMatrix& w);

/// Smallest T for which the accelerated contraction factor is graph
/// independent: ceil(2 / sqrt(1 - rho)). Requires 0 <= rho < 1.
int chebyshev_rounds_for_target(double rho);

// Below this value of rho the base matrix is already an exact averager and
// the mu recursion (mu_1 = 1/rho) is singular; mixing short-circuits to the
// exact average.
inline constexpr double kDegenerateRho = 1e-12;

/// Multi-round gossip operator: a degree-T Chebyshev polynomial of W scaled
/// so that the consensus eigenvalue stays exactly 1. With T = 1 it is W
/// itself. rho_tilde() is the measured operator norm of the polynomial on the
/// consensus-orthogonal subspace; it is bounded by 2 (1 - sqrt(1 - rho))^T.
class ChebyshevOperator {
 public:
  ChebyshevOperator(MixingMatrix base, int rounds);

  const MixingMatrix& base() const { return base_; }
  int rounds() const { return rounds_; }
  double rho_tilde() const { return rho_tilde_; }

  /// The dense N x N matrix performing one application of the operator.
  const Eigen::MatrixXd& matrix() const { return matrix_; }

 private:
  MixingMatrix base_;
  int rounds_ = 1;
  double rho_tilde_ = 0.0;
  Eigen::MatrixXd matrix_;
};

/// Apply the T-round Chebyshev recursion to the rows of b (N x p):
///   B_0 = b, B_1 = W B_0, mu_0 = 1, mu_1 = 1/rho,
///   mu_{t+1} = (2/rho) mu_t - mu_{t-1},
///   B_{t+1} = (2 mu_t / (rho mu_{t+1})) W B_t - (mu_{t-1} / mu_{t+1}) B_{t-1}.
/// Column averages of the output equal those of the input for every T.
Eigen::MatrixXd mix(const ChebyshevOperator& op, const Eigen::MatrixXd& b);

/// One plain round, Z = W b.
Eigen::MatrixXd mix_once(const MixingMatrix& w, const Eigen::MatrixXd& b);

/// Rows of space-separated decimals, full round-trip precision.
void write_matrix_text(std::ostream& os, const Eigen::MatrixXd& m);
Eigen::MatrixXd read_matrix_text(std::istream& is);

}  // namespace deepstorm
