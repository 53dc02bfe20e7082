#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "feonet/mesh.hpp"

namespace feonet {

/// Basis-support graph: vertices are interior dofs, edges join dofs whose
/// hat functions share an element.
struct BasisGraph {
  int n_vertices = 0;
  std::vector<std::vector<int>> adjacency;  // sorted, no self loops

  static BasisGraph from_edges(int n, const std::vector<std::pair<int, int>>& edges);
  std::size_t edge_count() const;
};

inline constexpr int kUnreachable = std::numeric_limits<int>::max();

/// Row-compressed set of allowed (row, column) positions with a column index
/// for transposed traversal. Immutable once built.
class SparsityPattern {
 public:
  SparsityPattern() = default;
  /// Rows are sorted and deduplicated on construction.
  SparsityPattern(int n, std::vector<std::vector<int>> rows, int c_level);

  int size() const { return n_; }
  std::int64_t nnz() const { return static_cast<std::int64_t>(cols_.size()); }
  int c_level() const { return c_level_; }

  std::span<const int> row(int i) const {
    return {cols_.data() + row_offsets_[i], static_cast<std::size_t>(row_offsets_[i + 1] - row_offsets_[i])};
  }
  std::int64_t row_begin(int i) const { return row_offsets_[i]; }
  int row_size(int i) const { return static_cast<int>(row_offsets_[i + 1] - row_offsets_[i]); }
  int col_at(std::int64_t position) const { return cols_[position]; }

  /// Positions (into the value array) of column j, ordered by row.
  std::span<const std::int64_t> column_positions(int j) const {
    return {col_positions_.data() + col_offsets_[j], static_cast<std::size_t>(col_offsets_[j + 1] - col_offsets_[j])};
  }
  std::span<const int> column_rows(int j) const {
    return {col_rows_.data() + col_offsets_[j], static_cast<std::size_t>(col_offsets_[j + 1] - col_offsets_[j])};
  }

  bool contains(int i, int j) const;
  /// Value-array position of (i, j), or -1 when not allowed.
  std::int64_t position(int i, int j) const;
  bool is_full() const { return nnz() == static_cast<std::int64_t>(n_) * n_; }
  bool is_symmetric() const;
  /// Row-wise containment: every allowed position of `other` is allowed here.
  bool contains(const SparsityPattern& other) const;
  bool operator==(const SparsityPattern& other) const;

  const std::vector<std::int64_t>& row_offsets() const { return row_offsets_; }
  const std::vector<int>& columns() const { return cols_; }

 private:
  int n_ = 0;
  int c_level_ = 0;
  std::vector<std::int64_t> row_offsets_{0};
  std::vector<int> cols_;
  std::vector<std::int64_t> col_offsets_{0};
  std::vector<int> col_rows_;
  std::vector<std::int64_t> col_positions_;
};

BasisGraph build_basis_graph(const Mesh& mesh, const DofMap& dof);

/// Vertices within graph distance r of v, sorted. r may be kUnreachable.
std::vector<int> ball(const BasisGraph& graph, int v, int r);

/// Row i allows ball(i, c_level). Warns (does not throw) on a disconnected graph.
SparsityPattern build_pattern(const BasisGraph& graph, int c_level);
SparsityPattern full_pattern(int n);
SparsityPattern identity_pattern(int n);

/// 1 - nnz / n^2
double sparsity_measure(const SparsityPattern& pattern);

/// Exactly nnz uniformly placed positions with no empty row or column.
SparsityPattern random_pattern(int n, std::int64_t nnz, std::mt19937_64& rng);

bool is_connected(const BasisGraph& graph);
int graph_distance(const BasisGraph& graph, int u, int v);
/// Largest finite distance from v.
int eccentricity(const BasisGraph& graph, int v);
int diameter(const BasisGraph& graph);
/// Component label per vertex, labels 0..k-1 in order of first appearance.
std::vector<int> connected_components(const BasisGraph& graph);

/// Boolean product: (i, j) allowed iff some k has (i, k) in a and (k, j) in b.
SparsityPattern compose(const SparsityPattern& a, const SparsityPattern& b);

/// `pat <n> <nnz> <c_level>` header followed by `i j` lines.
void write_pattern(std::ostream& out, const SparsityPattern& pattern);
SparsityPattern read_pattern(std::istream& in);

}  // namespace feonet
