#pragma once

#include "dsa/common.hpp"

#include <cstdint>
#include <iosfwd>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace dsa {

/// Undirected simple graph on nodes 0..n-1. Self-loops are implicit and never stored.
class Graph {
 public:
  using Edge = std::pair<int, int>;

  Graph() = default;
  explicit Graph(int n);
  Graph(int n, const std::vector<Edge>& edges);

  int nodes() const { return n_; }
  const std::set<Edge>& edges() const { return edges_; }

  /// Adds {i, j}; i == j is accepted and ignored. Returns false for duplicates.
  bool add_edge(int i, int j);
  bool has_edge(int i, int j) const;
  int degree(int i) const;
  bool connected() const;

  static Graph path(int n);
  static Graph ring(int n);
  static Graph complete(int n);
  /// Random spanning tree plus each remaining pair with probability `extra_p`.
  static Graph random_connected(int n, double extra_p, std::uint64_t seed);

 private:
  int n_ = 0;
  std::set<Edge> edges_;  // stored with first < second
};

/// Reads "i j" pairs (1-based), one per line; '#' starts a comment.
Graph read_edge_list(std::istream& in);
Graph load_edge_list(const std::string& path);

/// Doubly stochastic weights together with their certified contraction.
struct MixingMatrix {
  Matrix weights;
  double rho_bar = 0;  // 1 - ||U^T A U||_2
};

/// Orthonormal basis U (n x (n-1)) of the complement of span{1}.
struct ProjectionBasis {
  Matrix U;
  int nodes() const { return static_cast<int>(U.rows()); }
};

/// Periodic sequence of doubly stochastic matrices with a joint-contraction certificate
/// over every window of `block` consecutive steps.
struct MixingSchedule {
  std::vector<Matrix> matrices;  // one period
  int block = 1;
  double rho_bar = 0;

  int nodes() const { return matrices.empty() ? 0 : static_cast<int>(matrices.front().rows()); }
  int period() const { return static_cast<int>(matrices.size()); }
  const Matrix& at(long t) const { return matrices[static_cast<std::size_t>(t % period())]; }
  bool time_varying() const { return period() > 1; }
};

inline constexpr double kStochasticTolerance = 1e-12;

/// True when every entry is nonnegative and every row and column sums to 1 within `tol`.
bool is_doubly_stochastic(const Matrix& m, double tol = kStochasticTolerance);

/// Metropolis–Hastings weights: A_ij = 1/(1+max(deg_i,deg_j)) on edges.
/// Throws ConnectivityError unless `require_connected` is false.
MixingMatrix build_metropolis_weights(const Graph& graph, bool require_connected = true);

/// Exact averaging 11^T/n; only valid for complete graphs.
MixingMatrix build_uniform_weights(const Graph& graph);

/// Wraps a user-supplied matrix after checking double stochasticity and sparsity.
MixingMatrix certify_mixing_matrix(const Matrix& weights, const Graph* sparsity = nullptr);

ProjectionBasis build_projection_basis(int n);

/// ||U^T M U||_2. Throws ValidationError if `m` is not doubly stochastic.
double spectral_contraction(const Matrix& m, const ProjectionBasis& basis);
double spectral_contraction(const Matrix& m);

/// How the edges of a connected graph are spread over the steps of one period.
enum class EdgePolicy { RoundRobin, Random };

MixingSchedule make_static_schedule(const MixingMatrix& mixing);

/// Period-B schedule: edges distributed over B steps, Metropolis weights per step.
MixingSchedule make_tv_schedule(const Graph& graph, int block, EdgePolicy policy, std::uint64_t seed);

/// Explicit per-step edge sets; windows of `block` consecutive steps must be jointly connected.
MixingSchedule make_tv_schedule(int n, const std::vector<std::vector<Graph::Edge>>& steps, int block);

/// 1 - max_t ||U^T A(t+B-1)...A(t) U||_2 over one period. Nonpositive means a violation.
double validate_joint_connectivity(const MixingSchedule& schedule);

void write_matrix_csv(std::ostream& out, const Matrix& m);
Matrix read_matrix_csv(std::istream& in);
Matrix load_matrix_csv(const std::string& path);

}  // namespace dsa
