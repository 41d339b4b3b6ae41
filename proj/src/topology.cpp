#include "dsa/topology.hpp"

#include "dsa/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <numeric>
#include <ostream>
#include <queue>
#include <sstream>

namespace dsa {

Graph::Graph(int n) : n_(n) {
  if (n < 1) throw DimensionError("graph needs at least one node");
}

Graph::Graph(int n, const std::vector<Edge>& edges) : Graph(n) {
  for (const auto& [i, j] : edges) add_edge(i, j);
}

bool Graph::add_edge(int i, int j) {
  if (i < 0 || j < 0 || i >= n_ || j >= n_)
    throw DimensionError("edge (" + std::to_string(i + 1) + "," + std::to_string(j + 1) +
                         ") out of range");
  if (i == j) return false;
  return edges_.insert({std::min(i, j), std::max(i, j)}).second;
}

bool Graph::has_edge(int i, int j) const {
  if (i == j) return true;
  return edges_.count({std::min(i, j), std::max(i, j)}) > 0;
}

int Graph::degree(int i) const {
  int d = 0;
  for (const auto& [a, b] : edges_)
    if (a == i || b == i) ++d;
  return d;
}

bool Graph::connected() const {
  std::vector<std::vector<int>> adj(n_);
  for (const auto& [a, b] : edges_) {
    adj[a].push_back(b);
    adj[b].push_back(a);
  }
  std::vector<char> seen(n_, 0);
  std::queue<int> q;
  q.push(0);
  seen[0] = 1;
  int count = 1;
  while (!q.empty()) {
    const int u = q.front();
    q.pop();
    for (int v : adj[u])
      if (!seen[v]) {
        seen[v] = 1;
        ++count;
        q.push(v);
      }
  }
  return count == n_;
}

Graph Graph::path(int n) {
  Graph g(n);
  for (int i = 0; i + 1 < n; ++i) g.add_edge(i, i + 1);
  return g;
}

Graph Graph::ring(int n) {
  Graph g = path(n);
  if (n > 2) g.add_edge(n - 1, 0);
  return g;
}

Graph Graph::complete(int n) {
  Graph g(n);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) g.add_edge(i, j);
  return g;
}

Graph Graph::random_connected(int n, double extra_p, std::uint64_t seed) {
  Rng rng(seed);
  Graph g(n);
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (int i = n - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);
  for (int k = 1; k < n; ++k) g.add_edge(order[k], order[rng.below(k)]);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (!g.has_edge(i, j) && rng.uniform() < extra_p) g.add_edge(i, j);
  return g;
}

Graph read_edge_list(std::istream& in) {
  std::vector<Graph::Edge> edges;
  int n = 0;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto pos = line.find('#'); pos != std::string::npos) line.erase(pos);
    std::istringstream ls(line);
    int i, j;
    if (!(ls >> i)) continue;
    if (!(ls >> j) || i < 1 || j < 1)
      throw ValidationError("edge list line " + std::to_string(lineno) + ": expected 'i j' (1-based)");
    edges.emplace_back(i - 1, j - 1);
    n = std::max({n, i, j});
  }
  if (n == 0) throw ValidationError("edge list is empty");
  return Graph(n, edges);
}

Graph load_edge_list(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open edge list " + path);
  return read_edge_list(in);
}

bool is_doubly_stochastic(const Matrix& m, double tol) {
  if (m.rows() != m.cols() || m.rows() == 0) return false;
  if ((m.array() < 0).any() || !m.allFinite()) return false;
  const Vector rows = m.rowwise().sum();
  const Vector cols = m.colwise().sum().transpose();
  return (rows.array() - 1).abs().maxCoeff() <= tol && (cols.array() - 1).abs().maxCoeff() <= tol;
}

namespace {

Matrix metropolis_matrix(const Graph& graph) {
  const int n = graph.nodes();
  std::vector<int> deg(n, 0);
  for (const auto& [a, b] : graph.edges()) {
    ++deg[a];
    ++deg[b];
  }
  Matrix a = Matrix::Zero(n, n);
  for (const auto& [i, j] : graph.edges()) {
    const double w = 1.0 / (1.0 + std::max(deg[i], deg[j]));
    a(i, j) = w;
    a(j, i) = w;
  }
  for (int i = 0; i < n; ++i) a(i, i) = 1.0 - (a.row(i).sum());
  return a;
}

}  // namespace

MixingMatrix build_metropolis_weights(const Graph& graph, bool require_connected) {
  if (require_connected && !graph.connected())
    throw ConnectivityError("graph is not connected; no contracting mixing matrix exists");
  MixingMatrix out;
  out.weights = metropolis_matrix(graph);
  out.rho_bar = 1.0 - spectral_contraction(out.weights);
  return out;
}

MixingMatrix build_uniform_weights(const Graph& graph) {
  const int n = graph.nodes();
  if (static_cast<long>(graph.edges().size()) != static_cast<long>(n) * (n - 1) / 2)
    throw ValidationError("uniform averaging weights require a complete graph");
  MixingMatrix out;
  out.weights = Matrix::Constant(n, n, 1.0 / n);
  out.rho_bar = 1.0 - spectral_contraction(out.weights);
  return out;
}

MixingMatrix certify_mixing_matrix(const Matrix& weights, const Graph* sparsity) {
  if (!is_doubly_stochastic(weights))
    throw ValidationError("mixing matrix is not doubly stochastic");
  if (sparsity) {
    if (sparsity->nodes() != weights.rows()) throw DimensionError("mixing matrix / graph size mismatch");
    for (int i = 0; i < weights.rows(); ++i)
      for (int j = 0; j < weights.cols(); ++j)
        if (weights(i, j) != 0.0 && !sparsity->has_edge(i, j))
          throw ValidationError("mixing weight on non-edge (" + std::to_string(i + 1) + "," +
                                std::to_string(j + 1) + ")");
  }
  MixingMatrix out;
  out.weights = weights;
  out.rho_bar = 1.0 - spectral_contraction(weights);
  return out;
}

ProjectionBasis build_projection_basis(int n) {
  if (n < 2) throw DimensionError("projection basis needs n >= 2");
  // Householder reflector mapping e_1 onto 1/sqrt(n); its trailing columns span 1^perp.
  Vector w = Vector::Constant(n, 1.0 / std::sqrt(static_cast<double>(n)));
  w(0) -= 1.0;
  const Matrix h = Matrix::Identity(n, n) - (2.0 / w.squaredNorm()) * w * w.transpose();
  return ProjectionBasis{h.rightCols(n - 1)};
}

double spectral_contraction(const Matrix& m, const ProjectionBasis& basis) {
  if (!is_doubly_stochastic(m)) throw ValidationError("matrix is not doubly stochastic");
  if (m.rows() != basis.U.rows()) throw DimensionError("basis / matrix size mismatch");
  return spectral_norm(basis.U.transpose() * m * basis.U);
}

double spectral_contraction(const Matrix& m) {
  if (!is_doubly_stochastic(m)) throw ValidationError("matrix is not doubly stochastic");
  if (m.rows() == 1) return 0.0;
  return spectral_contraction(m, build_projection_basis(static_cast<int>(m.rows())));
}

MixingSchedule make_static_schedule(const MixingMatrix& mixing) {
  MixingSchedule s;
  s.matrices = {mixing.weights};
  s.block = 1;
  s.rho_bar = mixing.rho_bar;
  return s;
}

MixingSchedule make_tv_schedule(int n, const std::vector<std::vector<Graph::Edge>>& steps, int block) {
  if (block < 1) throw ConfigError("block length must be >= 1");
  if (steps.empty()) throw ConfigError("schedule needs at least one step");
  const int period = static_cast<int>(steps.size());
  for (int t = 0; t < period; ++t) {
    Graph window(n);
    for (int k = 0; k < block; ++k)
      for (const auto& [i, j] : steps[(t + k) % period]) window.add_edge(i, j);
    if (!window.connected())
      throw ConnectivityError("window starting at step " + std::to_string(t) +
                              " is not jointly connected");
  }
  MixingSchedule s;
  s.block = block;
  for (const auto& edges : steps) s.matrices.push_back(metropolis_matrix(Graph(n, edges)));
  s.rho_bar = validate_joint_connectivity(s);
  return s;
}

MixingSchedule make_tv_schedule(const Graph& graph, int block, EdgePolicy policy, std::uint64_t seed) {
  if (block < 1) throw ConfigError("block length must be >= 1");
  std::vector<std::vector<Graph::Edge>> steps(block);
  Rng rng(seed);
  int k = 0;
  for (const auto& e : graph.edges()) {
    const auto slot = policy == EdgePolicy::RoundRobin ? k++ % block : static_cast<int>(rng.below(block));
    steps[slot].push_back(e);
  }
  return make_tv_schedule(graph.nodes(), steps, block);
}

double validate_joint_connectivity(const MixingSchedule& schedule) {
  if (schedule.matrices.empty()) throw ConfigError("empty schedule");
  const int n = schedule.nodes();
  if (n == 1) return 1.0;
  const ProjectionBasis basis = build_projection_basis(n);
  double worst = 0.0;
  for (int t = 0; t < schedule.period(); ++t) {
    Matrix prod = Matrix::Identity(n, n);
    for (int k = 0; k < schedule.block; ++k) prod = schedule.at(t + k) * prod;
    worst = std::max(worst, spectral_norm(basis.U.transpose() * prod * basis.U));
  }
  return 1.0 - worst;
}

void write_matrix_csv(std::ostream& out, const Matrix& m) {
  out << std::setprecision(17);
  for (int i = 0; i < m.rows(); ++i) {
    for (int j = 0; j < m.cols(); ++j) out << (j ? "," : "") << m(i, j);
    out << '\n';
  }
}

Matrix read_matrix_csv(std::istream& in) {
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos || line[0] == '#') continue;
    std::vector<double> row;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw ValidationError("malformed CSV cell '" + cell + "'");
      }
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw ValidationError("ragged CSV matrix");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ValidationError("empty CSV matrix");
  Matrix m(rows.size(), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(i, j) = rows[i][j];
  return m;
}

Matrix load_matrix_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path);
  return read_matrix_csv(in);
}

}  // namespace dsa
