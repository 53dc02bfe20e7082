#include "feonet/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>

#include "feonet/error.hpp"

namespace feonet {

bool Mesh::is_boundary(int node) const {
  return std::binary_search(boundary_nodes.begin(), boundary_nodes.end(), node);
}

namespace {

void require_resolution(int n) {
  if (n < 2) {
    throw Error(ErrorCode::invalid_resolution, "need n >= 2, got " + std::to_string(n));
  }
}

double element_diameter(const Mesh& mesh, int e) {
  double h = 0.0;
  const int nv = mesh.vertices_per_element();
  for (int p = 0; p < nv; ++p) {
    for (int q = p + 1; q < nv; ++q) {
      const auto d = mesh.nodes.row(mesh.elements(e, p)) - mesh.nodes.row(mesh.elements(e, q));
      h = std::max(h, d.norm());
    }
  }
  return h;
}

void compute_h_max(Mesh& mesh) {
  mesh.h_max = 0.0;
  for (int e = 0; e < mesh.element_count(); ++e) {
    mesh.h_max = std::max(mesh.h_max, element_diameter(mesh, e));
  }
}

// Reads the next non-empty, comment-stripped line. Returns false at EOF.
bool next_line(std::istream& in, std::string& line, int& line_no) {
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (line.find_first_not_of(" \t\r") != std::string::npos) return true;
  }
  return false;
}

[[noreturn]] void parse_fail(int line_no, const std::string& what) {
  throw Error(ErrorCode::parse_error, "line " + std::to_string(line_no) + ": " + what);
}

template <typename T>
std::vector<T> read_values(std::istream& in, int count, int& line_no, const char* what) {
  std::string line;
  if (!next_line(in, line, line_no)) parse_fail(line_no, std::string("unexpected end of file reading ") + what);
  std::istringstream ss(line);
  std::vector<T> values(count);
  for (auto& v : values) {
    if (!(ss >> v)) parse_fail(line_no, std::string("expected ") + std::to_string(count) + " values for " + what);
  }
  std::string extra;
  if (ss >> extra) parse_fail(line_no, std::string("trailing token '") + extra + "' in " + what);
  return values;
}

}  // namespace

Mesh build_interval(int n, double a, double b) {
  require_resolution(n);
  Mesh mesh;
  mesh.dim = 1;
  mesh.nodes.resize(n + 1, 1);
  const double h = (b - a) / n;
  for (int i = 0; i <= n; ++i) mesh.nodes(i, 0) = (i == n) ? b : a + i * h;
  mesh.elements.resize(n, 2);
  for (int e = 0; e < n; ++e) mesh.elements.row(e) << e, e + 1;
  mesh.boundary_nodes = {0, n};
  mesh.grid = StructuredGrid{n, a, b};
  compute_h_max(mesh);
  return mesh;
}

Mesh build_square(int n, double a, double b) {
  require_resolution(n);
  Mesh mesh;
  mesh.dim = 2;
  const int m = n + 1;
  const double h = (b - a) / n;
  const auto coord = [&](int i) { return (i == n) ? b : a + i * h; };
  mesh.nodes.resize(m * m, 2);
  for (int j = 0; j < m; ++j) {
    for (int i = 0; i < m; ++i) mesh.nodes.row(j * m + i) << coord(i), coord(j);
  }
  mesh.elements.resize(2 * n * n, 3);
  int e = 0;
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      const int v00 = j * m + i;
      const int v10 = v00 + 1;
      const int v01 = v00 + m;
      const int v11 = v01 + 1;
      mesh.elements.row(e++) << v00, v10, v11;
      mesh.elements.row(e++) << v00, v11, v01;
    }
  }
  for (int j = 0; j < m; ++j) {
    for (int i = 0; i < m; ++i) {
      if (i == 0 || j == 0 || i == n || j == n) mesh.boundary_nodes.push_back(j * m + i);
    }
  }
  mesh.grid = StructuredGrid{n, a, b};
  compute_h_max(mesh);
  return mesh;
}

double signed_area(const Mesh& mesh, int element) {
  const Eigen::Vector2d p0 = mesh.nodes.row(mesh.elements(element, 0)).transpose();
  const Eigen::Vector2d p1 = mesh.nodes.row(mesh.elements(element, 1)).transpose();
  const Eigen::Vector2d p2 = mesh.nodes.row(mesh.elements(element, 2)).transpose();
  const Eigen::Vector2d u = p1 - p0;
  const Eigen::Vector2d v = p2 - p0;
  return 0.5 * (u.x() * v.y() - u.y() * v.x());
}

double element_measure(const Mesh& mesh, int element) {
  if (mesh.dim == 1) {
    return std::abs(mesh.nodes(mesh.elements(element, 1), 0) - mesh.nodes(mesh.elements(element, 0), 0));
  }
  return std::abs(signed_area(mesh, element));
}

void orient_elements(Mesh& mesh) {
  for (int e = 0; e < mesh.element_count(); ++e) {
    if (mesh.dim == 1) {
      if (mesh.nodes(mesh.elements(e, 0), 0) > mesh.nodes(mesh.elements(e, 1), 0)) {
        std::swap(mesh.elements(e, 0), mesh.elements(e, 1));
      }
      if (element_measure(mesh, e) <= 0.0) {
        throw Error(ErrorCode::inverted_element, "degenerate element " + std::to_string(e));
      }
      continue;
    }
    const double area = signed_area(mesh, e);
    const double scale = std::max(element_diameter(mesh, e), 1e-300);
    if (std::abs(area) <= 1e-14 * scale * scale) {
      throw Error(ErrorCode::inverted_element, "degenerate element " + std::to_string(e));
    }
    if (area < 0.0) std::swap(mesh.elements(e, 1), mesh.elements(e, 2));
  }
}

MeshQuality mesh_quality(const Mesh& mesh) {
  MeshQuality q;
  q.min_measure = std::numeric_limits<double>::infinity();
  for (int e = 0; e < mesh.element_count(); ++e) {
    const double h = element_diameter(mesh, e);
    const double measure = element_measure(mesh, e);
    q.h_max = std::max(q.h_max, h);
    q.min_measure = std::min(q.min_measure, measure);
    double rho = measure;  // 1D: the inscribed "ball" is the segment itself
    if (mesh.dim == 2) {
      double perimeter = 0.0;
      for (int p = 0; p < 3; ++p) {
        perimeter += (mesh.nodes.row(mesh.elements(e, p)) - mesh.nodes.row(mesh.elements(e, (p + 1) % 3))).norm();
      }
      rho = 4.0 * measure / perimeter;  // inscribed circle diameter
    }
    q.shape_ratio = std::max(q.shape_ratio, h / rho);
  }
  return q;
}

void validate_mesh(const Mesh& mesh) {
  if (mesh.dim != 1 && mesh.dim != 2) {
    throw Error(ErrorCode::parse_error, "dimension must be 1 or 2");
  }
  if (mesh.nodes.cols() != mesh.dim || mesh.elements.cols() != mesh.dim + 1) {
    throw Error(ErrorCode::dimension_mismatch, "node/element array shapes do not match dim");
  }
  const int nn = mesh.node_count();
  std::vector<char> used(nn, 0);
  for (int e = 0; e < mesh.element_count(); ++e) {
    for (int p = 0; p <= mesh.dim; ++p) {
      const int v = mesh.elements(e, p);
      if (v < 0 || v >= nn) {
        throw Error(ErrorCode::index_out_of_range,
                    "element " + std::to_string(e) + " references node " + std::to_string(v) + " of " +
                        std::to_string(nn));
      }
      for (int q = 0; q < p; ++q) {
        if (mesh.elements(e, q) == v) {
          throw Error(ErrorCode::inverted_element, "element " + std::to_string(e) + " repeats vertex " + std::to_string(v));
        }
      }
      used[v] = 1;
    }
    if (mesh.dim == 2 && signed_area(mesh, e) <= 0.0) {
      throw Error(ErrorCode::inverted_element, "element " + std::to_string(e) + " is not positively oriented");
    }
  }
  for (int b : mesh.boundary_nodes) {
    if (b < 0 || b >= nn) {
      throw Error(ErrorCode::index_out_of_range, "boundary node " + std::to_string(b) + " of " + std::to_string(nn));
    }
    if (!used[b]) {
      throw Error(ErrorCode::dangling_boundary_node, "boundary node " + std::to_string(b) + " belongs to no element");
    }
  }
}

Mesh parse_mesh(std::istream& in) {
  int line_no = 0;
  std::string line;
  if (!next_line(in, line, line_no)) parse_fail(line_no, "empty mesh file");
  std::istringstream header(line);
  std::string tag;
  int dim = 0, nn = 0, ne = 0, nb = 0;
  if (!(header >> tag >> dim >> nn >> ne >> nb) || tag != "mesh") {
    parse_fail(line_no, "expected 'mesh <dim> <node_count> <element_count> <boundary_count>'");
  }
  if ((dim != 1 && dim != 2) || nn < 0 || ne < 0 || nb < 0) parse_fail(line_no, "invalid header values");

  Mesh mesh;
  mesh.dim = dim;
  mesh.nodes.resize(nn, dim);
  for (int i = 0; i < nn; ++i) {
    const auto xs = read_values<double>(in, dim, line_no, "node coordinates");
    for (int d = 0; d < dim; ++d) mesh.nodes(i, d) = xs[d];
  }
  mesh.elements.resize(ne, dim + 1);
  for (int e = 0; e < ne; ++e) {
    const auto vs = read_values<long long>(in, dim + 1, line_no, "element indices");
    for (int p = 0; p <= dim; ++p) {
      if (vs[p] < 0 || vs[p] >= nn) {
        throw Error(ErrorCode::index_out_of_range, "line " + std::to_string(line_no) + ": element " + std::to_string(e) +
                                                       " references node " + std::to_string(vs[p]) + " of " +
                                                       std::to_string(nn));
      }
      mesh.elements(e, p) = static_cast<int>(vs[p]);
    }
  }
  // Boundary indices may be spread over lines in any grouping.
  mesh.boundary_nodes.reserve(nb);
  while (static_cast<int>(mesh.boundary_nodes.size()) < nb) {
    if (!next_line(in, line, line_no)) parse_fail(line_no, "unexpected end of file reading boundary node indices");
    std::istringstream ss(line);
    std::string token;
    while (ss >> token) {
      if (static_cast<int>(mesh.boundary_nodes.size()) == nb) parse_fail(line_no, "more boundary indices than declared");
      long long b = 0;
      std::size_t used = 0;
      try {
        b = std::stoll(token, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != token.size()) parse_fail(line_no, "bad boundary node index '" + token + "'");
      if (b < 0 || b >= nn) {
        throw Error(ErrorCode::index_out_of_range,
                    "line " + std::to_string(line_no) + ": boundary node " + std::to_string(b) + " of " + std::to_string(nn));
      }
      mesh.boundary_nodes.push_back(static_cast<int>(b));
    }
  }
  if (next_line(in, line, line_no)) parse_fail(line_no, "unexpected content after boundary list");

  std::sort(mesh.boundary_nodes.begin(), mesh.boundary_nodes.end());
  mesh.boundary_nodes.erase(std::unique(mesh.boundary_nodes.begin(), mesh.boundary_nodes.end()),
                            mesh.boundary_nodes.end());
  orient_elements(mesh);
  validate_mesh(mesh);
  compute_h_max(mesh);
  return mesh;
}

Mesh load_mesh(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "cannot open mesh file " + path.string());
  return parse_mesh(in);
}

void write_mesh(std::ostream& out, const Mesh& mesh) {
  out << "mesh " << mesh.dim << ' ' << mesh.node_count() << ' ' << mesh.element_count() << ' '
      << mesh.boundary_nodes.size() << '\n';
  out << std::setprecision(17);
  for (int i = 0; i < mesh.node_count(); ++i) {
    for (int d = 0; d < mesh.dim; ++d) out << (d ? " " : "") << mesh.nodes(i, d);
    out << '\n';
  }
  for (int e = 0; e < mesh.element_count(); ++e) {
    for (int p = 0; p <= mesh.dim; ++p) out << (p ? " " : "") << mesh.elements(e, p);
    out << '\n';
  }
  for (int b : mesh.boundary_nodes) out << b << '\n';
}

void save_mesh(const std::filesystem::path& path, const Mesh& mesh) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::io, "cannot write mesh file " + path.string());
  write_mesh(out, mesh);
}

DofMap build_dofmap(const Mesh& mesh) {
  DofMap dof;
  dof.node_to_dof.assign(mesh.node_count(), -1);
  for (int v = 0; v < mesh.node_count(); ++v) {
    if (!mesh.is_boundary(v)) {
      dof.node_to_dof[v] = dof.size();
      dof.interior_nodes.push_back(v);
    }
  }
  if (mesh.grid && mesh.dim == 2) dof.grid_shape = std::array<int, 2>{mesh.grid->n - 1, mesh.grid->n - 1};
  if (mesh.grid && mesh.dim == 1) dof.grid_shape = std::array<int, 2>{mesh.grid->n - 1, 1};
  return dof;
}

}  // namespace feonet
