#include "feonet/sparsity.hpp"

#include <algorithm>
#include <deque>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_set>

#include "feonet/error.hpp"

namespace feonet {

BasisGraph BasisGraph::from_edges(int n, const std::vector<std::pair<int, int>>& edges) {
  BasisGraph g;
  g.n_vertices = n;
  g.adjacency.assign(n, {});
  for (auto [u, v] : edges) {
    if (u < 0 || v < 0 || u >= n || v >= n) throw Error(ErrorCode::index_out_of_range, "edge endpoint out of range");
    if (u == v) continue;
    g.adjacency[u].push_back(v);
    g.adjacency[v].push_back(u);
  }
  for (auto& adj : g.adjacency) {
    std::sort(adj.begin(), adj.end());
    adj.erase(std::unique(adj.begin(), adj.end()), adj.end());
  }
  return g;
}

std::size_t BasisGraph::edge_count() const {
  std::size_t twice = 0;
  for (const auto& adj : adjacency) twice += adj.size();
  return twice / 2;
}

SparsityPattern::SparsityPattern(int n, std::vector<std::vector<int>> rows, int c_level) : n_(n), c_level_(c_level) {
  if (static_cast<int>(rows.size()) != n) throw Error(ErrorCode::dimension_mismatch, "pattern row count");
  row_offsets_.assign(n + 1, 0);
  std::size_t total = 0;
  for (auto& r : rows) {
    std::sort(r.begin(), r.end());
    r.erase(std::unique(r.begin(), r.end()), r.end());
    if (!r.empty() && (r.front() < 0 || r.back() >= n)) {
      throw Error(ErrorCode::index_out_of_range, "pattern column out of range");
    }
    total += r.size();
  }
  cols_.reserve(total);
  std::vector<std::int64_t> col_count(n, 0);
  for (int i = 0; i < n; ++i) {
    for (int j : rows[i]) {
      cols_.push_back(j);
      ++col_count[j];
    }
    row_offsets_[i + 1] = static_cast<std::int64_t>(cols_.size());
  }
  col_offsets_.assign(n + 1, 0);
  for (int j = 0; j < n; ++j) col_offsets_[j + 1] = col_offsets_[j] + col_count[j];
  col_rows_.resize(total);
  col_positions_.resize(total);
  std::vector<std::int64_t> fill(col_offsets_.begin(), col_offsets_.end() - 1);
  for (int i = 0; i < n; ++i) {
    for (std::int64_t p = row_offsets_[i]; p < row_offsets_[i + 1]; ++p) {
      const auto slot = fill[cols_[p]]++;
      col_rows_[slot] = i;
      col_positions_[slot] = p;
    }
  }
}

std::int64_t SparsityPattern::position(int i, int j) const {
  const auto r = row(i);
  const auto it = std::lower_bound(r.begin(), r.end(), j);
  if (it == r.end() || *it != j) return -1;
  return row_offsets_[i] + (it - r.begin());
}

bool SparsityPattern::contains(int i, int j) const { return position(i, j) >= 0; }

bool SparsityPattern::is_symmetric() const {
  for (int i = 0; i < n_; ++i) {
    for (int j : row(i)) {
      if (!contains(j, i)) return false;
    }
  }
  return true;
}

bool SparsityPattern::contains(const SparsityPattern& other) const {
  if (other.n_ != n_) return false;
  for (int i = 0; i < n_; ++i) {
    const auto mine = row(i);
    const auto theirs = other.row(i);
    if (!std::includes(mine.begin(), mine.end(), theirs.begin(), theirs.end())) return false;
  }
  return true;
}

bool SparsityPattern::operator==(const SparsityPattern& other) const {
  return n_ == other.n_ && row_offsets_ == other.row_offsets_ && cols_ == other.cols_;
}

BasisGraph build_basis_graph(const Mesh& mesh, const DofMap& dof) {
  std::vector<std::pair<int, int>> edges;
  const int nv = mesh.vertices_per_element();
  edges.reserve(static_cast<std::size_t>(mesh.element_count()) * nv * (nv - 1) / 2);
  for (int e = 0; e < mesh.element_count(); ++e) {
    for (int a = 0; a < nv; ++a) {
      const int u = dof.dof(mesh.elements(e, a));
      if (u < 0) continue;
      for (int b = a + 1; b < nv; ++b) {
        const int v = dof.dof(mesh.elements(e, b));
        if (v >= 0) edges.emplace_back(u, v);
      }
    }
  }
  return BasisGraph::from_edges(dof.size(), edges);
}

namespace {

// BFS from `source` up to depth `radius`, reusing scratch buffers; appends the
// visited vertices (in BFS order) to `visited`.
void bfs(const BasisGraph& graph, int source, int radius, std::vector<int>& dist, std::vector<int>& visited) {
  visited.clear();
  dist[source] = 0;
  visited.push_back(source);
  for (std::size_t head = 0; head < visited.size(); ++head) {
    const int u = visited[head];
    if (dist[u] == radius) continue;
    for (int v : graph.adjacency[u]) {
      if (dist[v] == kUnreachable) {
        dist[v] = dist[u] + 1;
        visited.push_back(v);
      }
    }
  }
}

void reset(std::vector<int>& dist, const std::vector<int>& visited) {
  for (int v : visited) dist[v] = kUnreachable;
}

void check_vertex(const BasisGraph& graph, int v) {
  if (v < 0 || v >= graph.n_vertices) {
    throw Error(ErrorCode::index_out_of_range, "vertex " + std::to_string(v) + " of " + std::to_string(graph.n_vertices));
  }
}

}  // namespace

std::vector<int> ball(const BasisGraph& graph, int v, int r) {
  check_vertex(graph, v);
  if (r < 0) throw Error(ErrorCode::precondition, "ball radius must be non-negative");
  std::vector<int> dist(graph.n_vertices, kUnreachable), visited;
  bfs(graph, v, r, dist, visited);
  std::sort(visited.begin(), visited.end());
  return visited;
}

SparsityPattern build_pattern(const BasisGraph& graph, int c_level) {
  if (c_level < 1) throw Error(ErrorCode::precondition, "connectivity level must be >= 1");
  if (!is_connected(graph)) {
    warn("basis graph is disconnected; pattern rows cannot reach every dof");
  }
  std::vector<std::vector<int>> rows(graph.n_vertices);
  std::vector<int> dist(graph.n_vertices, kUnreachable), visited;
  for (int i = 0; i < graph.n_vertices; ++i) {
    bfs(graph, i, c_level, dist, visited);
    rows[i] = visited;
    reset(dist, visited);
  }
  return SparsityPattern(graph.n_vertices, std::move(rows), c_level);
}

SparsityPattern full_pattern(int n) {
  std::vector<int> all(n);
  std::iota(all.begin(), all.end(), 0);
  return SparsityPattern(n, std::vector<std::vector<int>>(n, all), 0);
}

SparsityPattern identity_pattern(int n) {
  std::vector<std::vector<int>> rows(n);
  for (int i = 0; i < n; ++i) rows[i] = {i};
  return SparsityPattern(n, std::move(rows), 0);
}

double sparsity_measure(const SparsityPattern& pattern) {
  const double dense = static_cast<double>(pattern.size()) * pattern.size();
  return 1.0 - static_cast<double>(pattern.nnz()) / dense;
}

SparsityPattern random_pattern(int n, std::int64_t nnz, std::mt19937_64& rng) {
  const std::int64_t total = static_cast<std::int64_t>(n) * n;
  if (n < 1 || nnz < n || nnz > total) {
    throw Error(ErrorCode::infeasible, "cannot place " + std::to_string(nnz) + " entries in a " + std::to_string(n) +
                                           "x" + std::to_string(n) + " pattern without empty rows/columns");
  }
  std::unordered_set<std::int64_t> taken;
  taken.reserve(static_cast<std::size_t>(nnz) * 2);
  std::vector<std::vector<int>> rows(n);
  const auto place = [&](int i, int j) {
    if (taken.insert(static_cast<std::int64_t>(i) * n + j).second) rows[i].push_back(j);
  };
  std::uniform_int_distribution<int> pick(0, n - 1);

  if (nnz >= 2 * static_cast<std::int64_t>(n) - 1) {
    // One entry per row, then one per still-empty column: at most 2n-1 entries.
    std::vector<char> col_hit(n, 0);
    for (int i = 0; i < n; ++i) {
      const int j = pick(rng);
      place(i, j);
      col_hit[j] = 1;
    }
    for (int j = 0; j < n; ++j) {
      if (!col_hit[j]) place(pick(rng), j);
    }
  } else {
    // Too few entries for the two-pass seed; a random permutation covers
    // every row and column with exactly n entries.
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    for (int i = 0; i < n; ++i) place(i, perm[i]);
  }

  std::int64_t remaining = nnz - static_cast<std::int64_t>(taken.size());
  if (remaining > 0 && total - static_cast<std::int64_t>(taken.size()) <= 4 * remaining && total <= 50'000'000) {
    // Dense fill: partial Fisher-Yates over the free slots.
    std::vector<std::int64_t> free_slots;
    free_slots.reserve(static_cast<std::size_t>(total - taken.size()));
    for (std::int64_t s = 0; s < total; ++s) {
      if (!taken.count(s)) free_slots.push_back(s);
    }
    for (std::int64_t k = 0; k < remaining; ++k) {
      std::uniform_int_distribution<std::int64_t> d(k, static_cast<std::int64_t>(free_slots.size()) - 1);
      std::swap(free_slots[k], free_slots[d(rng)]);
      place(static_cast<int>(free_slots[k] / n), static_cast<int>(free_slots[k] % n));
    }
  } else {
    std::uniform_int_distribution<std::int64_t> slot(0, total - 1);
    while (remaining > 0) {
      const std::int64_t s = slot(rng);
      if (taken.count(s)) continue;
      place(static_cast<int>(s / n), static_cast<int>(s % n));
      --remaining;
    }
  }
  return SparsityPattern(n, std::move(rows), 0);
}

bool is_connected(const BasisGraph& graph) {
  if (graph.n_vertices <= 1) return true;
  std::vector<int> dist(graph.n_vertices, kUnreachable), visited;
  bfs(graph, 0, kUnreachable, dist, visited);
  return static_cast<int>(visited.size()) == graph.n_vertices;
}

int graph_distance(const BasisGraph& graph, int u, int v) {
  check_vertex(graph, u);
  check_vertex(graph, v);
  std::vector<int> dist(graph.n_vertices, kUnreachable), visited;
  bfs(graph, u, kUnreachable, dist, visited);
  return dist[v];
}

int eccentricity(const BasisGraph& graph, int v) {
  check_vertex(graph, v);
  std::vector<int> dist(graph.n_vertices, kUnreachable), visited;
  bfs(graph, v, kUnreachable, dist, visited);
  return dist[visited.back()];
}

int diameter(const BasisGraph& graph) {
  int d = 0;
  for (int v = 0; v < graph.n_vertices; ++v) d = std::max(d, eccentricity(graph, v));
  return d;
}

std::vector<int> connected_components(const BasisGraph& graph) {
  std::vector<int> label(graph.n_vertices, -1);
  std::vector<int> dist(graph.n_vertices, kUnreachable), visited;
  int next = 0;
  for (int s = 0; s < graph.n_vertices; ++s) {
    if (label[s] >= 0) continue;
    bfs(graph, s, kUnreachable, dist, visited);
    for (int v : visited) label[v] = next;
    ++next;
  }
  return label;
}

SparsityPattern compose(const SparsityPattern& a, const SparsityPattern& b) {
  if (a.size() != b.size()) throw Error(ErrorCode::dimension_mismatch, "pattern sizes differ");
  const int n = a.size();
  std::vector<std::vector<int>> rows(n);
  std::vector<char> mark(n, 0);
  for (int i = 0; i < n; ++i) {
    for (int k : a.row(i)) {
      for (int j : b.row(k)) {
        if (!mark[j]) {
          mark[j] = 1;
          rows[i].push_back(j);
        }
      }
    }
    for (int j : rows[i]) mark[j] = 0;
  }
  return SparsityPattern(n, std::move(rows), 0);
}

void write_pattern(std::ostream& out, const SparsityPattern& pattern) {
  out << "pat " << pattern.size() << ' ' << pattern.nnz() << ' ' << pattern.c_level() << '\n';
  for (int i = 0; i < pattern.size(); ++i) {
    for (int j : pattern.row(i)) out << i << ' ' << j << '\n';
  }
}

SparsityPattern read_pattern(std::istream& in) {
  std::string tag;
  int n = 0, c_level = 0;
  std::int64_t nnz = 0;
  if (!(in >> tag >> n >> nnz >> c_level) || tag != "pat" || n < 0 || nnz < 0) {
    throw Error(ErrorCode::parse_error, "expected 'pat <n> <nnz> <c_level>' header");
  }
  std::vector<std::vector<int>> rows(n);
  for (std::int64_t k = 0; k < nnz; ++k) {
    int i = 0, j = 0;
    if (!(in >> i >> j)) throw Error(ErrorCode::parse_error, "truncated pattern block at entry " + std::to_string(k));
    if (i < 0 || j < 0 || i >= n || j >= n) throw Error(ErrorCode::index_out_of_range, "pattern entry out of range");
    rows[i].push_back(j);
  }
  SparsityPattern p(n, std::move(rows), c_level);
  if (p.nnz() != nnz) throw Error(ErrorCode::parse_error, "duplicate entries in pattern block");
  return p;
}

}  // namespace feonet
