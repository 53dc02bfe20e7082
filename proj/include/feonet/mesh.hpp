#pragma once

#include <array>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <vector>

#include <Eigen/Dense>

namespace feonet {

/// Uniform-grid metadata kept for meshes produced by the builders, used for
/// point location and nested-grid prolongation.
struct StructuredGrid {
  int n = 0;       // cells per axis
  double a = 0.0;  // domain lower bound (per axis)
  double b = 1.0;  // domain upper bound (per axis)
};

/// P1 simplicial mesh in 1D (segments) or 2D (triangles).
///
/// `nodes` is node_count x dim, `elements` is element_count x (dim+1) with
/// zero-based vertex indices. In 2D every triangle is stored counter-clockwise.
struct Mesh {
  int dim = 0;
  Eigen::MatrixXd nodes;
  Eigen::MatrixXi elements;
  std::vector<int> boundary_nodes;  // sorted, unique
  double h_max = 0.0;
  std::optional<StructuredGrid> grid;

  int node_count() const { return static_cast<int>(nodes.rows()); }
  int element_count() const { return static_cast<int>(elements.rows()); }
  int vertices_per_element() const { return dim + 1; }
  bool is_boundary(int node) const;
};

/// Interior-node numbering: the unknowns of a homogeneous-Dirichlet P1 problem.
struct DofMap {
  std::vector<int> interior_nodes;  // dof -> node, ascending node index
  std::vector<int> node_to_dof;     // node -> dof, -1 on boundary nodes
  std::optional<std::array<int, 2>> grid_shape;

  int size() const { return static_cast<int>(interior_nodes.size()); }
  int dof(int node) const { return node_to_dof[node]; }
};

struct MeshQuality {
  double h_max = 0.0;
  double min_measure = 0.0;    // smallest element length/area
  double shape_ratio = 0.0;    // max_E h_E / rho_E
};

Mesh build_interval(int n, double a, double b);

/// (n+1)^2 grid nodes, row-major node index j*(n+1)+i, every cell split along
/// its (+1,+1) diagonal.
Mesh build_square(int n, double a, double b);

Mesh parse_mesh(std::istream& in);
Mesh load_mesh(const std::filesystem::path& path);
void write_mesh(std::ostream& out, const Mesh& mesh);
void save_mesh(const std::filesystem::path& path, const Mesh& mesh);

/// Flip negatively oriented triangles; throws inverted_element on a
/// degenerate one. Idempotent.
void orient_elements(Mesh& mesh);

double element_measure(const Mesh& mesh, int element);
double signed_area(const Mesh& mesh, int element);
MeshQuality mesh_quality(const Mesh& mesh);

/// Structural checks; throws on the first violation found.
void validate_mesh(const Mesh& mesh);

DofMap build_dofmap(const Mesh& mesh);

}  // namespace feonet
