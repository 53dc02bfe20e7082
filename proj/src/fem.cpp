#include "feonet/fem.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <string>
#include <tuple>

#include <Eigen/SparseLU>

#include "feonet/error.hpp"

namespace feonet {

namespace {

using Triplet = Eigen::Triplet<double>;

struct QuadPoint {
  std::array<double, 3> bary;  // barycentric coordinates (1D uses the first two)
  double weight;               // fraction of the element measure
};

// Exact for quadratics on triangles; 2-point Gauss on segments.
const std::array<QuadPoint, 3> kTriangleRule = {{
    {{2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0}, 1.0 / 3.0},
    {{1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0}, 1.0 / 3.0},
    {{1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0}, 1.0 / 3.0},
}};

const std::array<QuadPoint, 2> kSegmentRule = [] {
  const double g = 0.5 / std::sqrt(3.0);
  return std::array<QuadPoint, 2>{{{{0.5 + g, 0.5 - g, 0.0}, 0.5}, {{0.5 - g, 0.5 + g, 0.0}, 0.5}}};
}();

std::vector<QuadPoint> accurate_rule(int dim) {
  if (dim == 1) {
    const double r = std::sqrt(0.6);
    const auto at = [](double xi) { return std::array<double, 3>{0.5 * (1.0 - xi), 0.5 * (1.0 + xi), 0.0}; };
    return {{at(-r), 5.0 / 18.0}, {at(0.0), 8.0 / 18.0}, {at(r), 5.0 / 18.0}};
  }
  // Dunavant degree 5, 7 points.
  const double a1 = 0.059715871789770, b1 = 0.470142064105115, w1 = 0.132394152788506;
  const double a2 = 0.797426985353087, b2 = 0.101286507323456, w2 = 0.125939180544827;
  return {{{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0}, 0.225},
          {{a1, b1, b1}, w1}, {{b1, a1, b1}, w1}, {{b1, b1, a1}, w1},
          {{a2, b2, b2}, w2}, {{b2, a2, b2}, w2}, {{b2, b2, a2}, w2}};
}

// Per-element P1 geometry: measure, vertex coordinates, barycentric gradients.
struct ElementGeometry {
  int nv = 0;
  double measure = 0.0;
  std::array<Point, 3> vertex{};
  std::array<Eigen::Vector2d, 3> grad{};

  Point at(const QuadPoint& q) const {
    Point x = Point::Zero();
    for (int a = 0; a < nv; ++a) x += q.bary[a] * vertex[a];
    return x;
  }
};

ElementGeometry element_geometry(const Mesh& mesh, int e) {
  ElementGeometry g;
  g.nv = mesh.dim + 1;
  for (int a = 0; a < g.nv; ++a) {
    const int v = mesh.elements(e, a);
    g.vertex[a] = Point(mesh.nodes(v, 0), mesh.dim == 2 ? mesh.nodes(v, 1) : 0.0);
  }
  if (mesh.dim == 1) {
    const double h = g.vertex[1].x() - g.vertex[0].x();
    g.measure = std::abs(h);
    if (!(g.measure > 0.0)) throw Error(ErrorCode::assembly_failure, "degenerate element " + std::to_string(e));
    g.grad[0] = Eigen::Vector2d(-1.0 / h, 0.0);
    g.grad[1] = Eigen::Vector2d(1.0 / h, 0.0);
    return g;
  }
  Eigen::Matrix2d J;
  J.col(0) = g.vertex[1] - g.vertex[0];
  J.col(1) = g.vertex[2] - g.vertex[0];
  const double det = J.determinant();
  g.measure = 0.5 * std::abs(det);
  const double scale = J.cwiseAbs().maxCoeff();
  if (!(g.measure > 1e-14 * scale * scale)) {
    throw Error(ErrorCode::assembly_failure, "degenerate element " + std::to_string(e));
  }
  const Eigen::Matrix2d Jinv = J.inverse();
  g.grad[1] = Jinv.row(0).transpose();
  g.grad[2] = Jinv.row(1).transpose();
  g.grad[0] = -g.grad[1] - g.grad[2];
  return g;
}

template <typename Rule>
void for_each_point(const Mesh& mesh, const Rule& rule2d, const std::array<QuadPoint, 2>& rule1d,
                    const std::function<void(const QuadPoint&)>& body) {
  if (mesh.dim == 1) {
    for (const auto& q : rule1d) body(q);
  } else {
    for (const auto& q : rule2d) body(q);
  }
}

SparseMatrix from_triplets(int n, const std::vector<Triplet>& triplets) {
  SparseMatrix A(n, n);
  A.setFromTriplets(triplets.begin(), triplets.end());
  A.makeCompressed();
  return A;
}

void check_ellipticity(const Eigen::Matrix2d& a, int dim, int element) {
  bool ok = true;
  if (dim == 1) {
    ok = a(0, 0) > 0.0;
  } else {
    ok = std::abs(a(0, 1) - a(1, 0)) <= 1e-12 * a.cwiseAbs().maxCoeff() &&
         Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d>(a).eigenvalues().minCoeff() > 0.0;
  }
  if (!ok) {
    throw Error(ErrorCode::assembly_failure,
                "diffusion tensor not symmetric positive-definite in element " + std::to_string(element));
  }
}

}  // namespace

CoefficientSet CoefficientSet::constant(double diffusion, Eigen::Vector2d advection, double reaction) {
  CoefficientSet c;
  c.diffusion = [diffusion](const Point&) { return Eigen::Matrix2d(diffusion * Eigen::Matrix2d::Identity()); };
  c.advection = [advection](const Point&) { return advection; };
  c.reaction = [reaction](const Point&) { return reaction; };
  return c;
}

FemSystem assemble_elliptic(const Mesh& mesh, const DofMap& dof, const CoefficientSet& coeffs,
                            const AssemblyOptions& options) {
  std::vector<Triplet> k_trip, m_trip, s_trip;
  const int nv = mesh.dim + 1;
  k_trip.reserve(mesh.element_count() * nv * nv);
  m_trip.reserve(mesh.element_count() * nv * nv);
  s_trip.reserve(mesh.element_count() * nv * nv);

  for (int e = 0; e < mesh.element_count(); ++e) {
    const ElementGeometry g = element_geometry(mesh, e);
    Eigen::Matrix3d Kloc = Eigen::Matrix3d::Zero();  // (test a, trial b)
    Eigen::Matrix3d Sloc = Eigen::Matrix3d::Zero();
    Eigen::Matrix3d Mloc = Eigen::Matrix3d::Zero();
    for (int a = 0; a < nv; ++a) {
      for (int b = 0; b < nv; ++b) {
        Sloc(a, b) = g.measure * g.grad[b].dot(g.grad[a]);
        Mloc(a, b) = g.measure * (a == b ? 2.0 : 1.0) / ((nv == 3) ? 12.0 : 6.0);
      }
    }
    for_each_point(mesh, kTriangleRule, kSegmentRule, [&](const QuadPoint& q) {
      const Point x = g.at(q);
      const Eigen::Matrix2d amat = coeffs.diffusion(x);
      if (options.verify_ellipticity) check_ellipticity(amat, mesh.dim, e);
      const Eigen::Vector2d bvec = coeffs.advection(x);
      const double c = coeffs.reaction(x);
      const double w = q.weight * g.measure;
      for (int a = 0; a < nv; ++a) {
        for (int b = 0; b < nv; ++b) {
          double integrand = 0.0;
          if (mesh.dim == 1) {
            integrand = amat(0, 0) * g.grad[b].x() * g.grad[a].x() + bvec.x() * g.grad[b].x() * q.bary[a];
          } else {
            integrand = g.grad[a].dot(amat * g.grad[b]) + bvec.dot(g.grad[b]) * q.bary[a];
          }
          integrand += c * q.bary[b] * q.bary[a];
          Kloc(a, b) += w * integrand;
        }
      }
    });
    for (int a = 0; a < nv; ++a) {
      const int row = dof.dof(mesh.elements(e, a));
      if (row < 0) continue;
      for (int b = 0; b < nv; ++b) {
        const int col = dof.dof(mesh.elements(e, b));
        if (col < 0) continue;
        k_trip.emplace_back(row, col, Kloc(a, b));
        s_trip.emplace_back(row, col, Sloc(a, b));
        m_trip.emplace_back(row, col, Mloc(a, b));
      }
    }
  }

  FemSystem sys;
  sys.dof = dof;
  sys.K = from_triplets(dof.size(), k_trip);
  sys.M = from_triplets(dof.size(), m_trip);
  sys.stiff_only = from_triplets(dof.size(), s_trip);
  return sys;
}

Eigen::VectorXd assemble_load(const Mesh& mesh, const DofMap& dof, const ScalarField& f) {
  Eigen::VectorXd F = Eigen::VectorXd::Zero(dof.size());
  const int nv = mesh.dim + 1;
  for (int e = 0; e < mesh.element_count(); ++e) {
    const ElementGeometry g = element_geometry(mesh, e);
    for_each_point(mesh, kTriangleRule, kSegmentRule, [&](const QuadPoint& q) {
      const double fw = f(g.at(q)) * q.weight * g.measure;
      for (int a = 0; a < nv; ++a) {
        const int row = dof.dof(mesh.elements(e, a));
        if (row >= 0) F[row] += fw * q.bary[a];
      }
    });
  }
  return F;
}

HelmholtzPair assemble_helmholtz(const Mesh& mesh, const DofMap& dof) {
  FemSystem sys = assemble_elliptic(mesh, dof, CoefficientSet::laplacian());
  return {std::move(sys.stiff_only), std::move(sys.M)};
}

SparseMatrix helmholtz_matrix(const SparseMatrix& stiff_only, const SparseMatrix& M, double k) {
  SparseMatrix A = (k * k) * M - stiff_only;
  A.makeCompressed();
  return A;
}

FemSystem assemble_burgers(const Mesh& mesh, const DofMap& dof, double nu) {
  if (mesh.dim != 1) throw Error(ErrorCode::dimension_mismatch, "Burgers assembly needs a 1D mesh");
  if (!(nu > 0.0)) throw Error(ErrorCode::precondition, "viscosity must be positive");
  FemSystem sys = assemble_elliptic(mesh, dof, CoefficientSet::laplacian());
  sys.nu = nu;
  sys.K = nu * sys.stiff_only;

  std::vector<BurgersTensor::Entry> raw;
  for (int e = 0; e < mesh.element_count(); ++e) {
    const ElementGeometry g = element_geometry(mesh, e);
    for (int a = 0; a < 2; ++a) {
      const int i = dof.dof(mesh.elements(e, a));
      if (i < 0) continue;
      for (int b = 0; b < 2; ++b) {
        const int j = dof.dof(mesh.elements(e, b));
        if (j < 0) continue;
        // \int lambda_a lambda_b = h (1 + delta_ab) / 6; phi_c' is constant
        const double mass = g.measure * (a == b ? 2.0 : 1.0) / 6.0;
        for (int c = 0; c < 2; ++c) {
          const int k = dof.dof(mesh.elements(e, c));
          if (k < 0) continue;
          raw.push_back({i, j, k, mass * g.grad[c].x()});
        }
      }
    }
  }
  std::sort(raw.begin(), raw.end(), [](const auto& l, const auto& r) {
    return std::tie(l.i, l.j, l.k) < std::tie(r.i, r.j, r.k);
  });
  BurgersTensor T;
  for (const auto& entry : raw) {
    if (!T.entries.empty() && T.entries.back().i == entry.i && T.entries.back().j == entry.j &&
        T.entries.back().k == entry.k) {
      T.entries.back().value += entry.value;
    } else {
      T.entries.push_back(entry);
    }
  }
  sys.T = std::move(T);
  return sys;
}

Eigen::VectorXd BurgersTensor::apply(const Eigen::VectorXd& alpha) const {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(alpha.size());
  for (const auto& t : entries) out[t.i] += t.value * alpha[t.j] * alpha[t.k];
  return out;
}

SparseMatrix BurgersTensor::jacobian(const Eigen::VectorXd& alpha) const {
  std::vector<Triplet> trip;
  trip.reserve(2 * entries.size());
  for (const auto& t : entries) {
    trip.emplace_back(t.i, t.j, t.value * alpha[t.k]);
    trip.emplace_back(t.i, t.k, t.value * alpha[t.j]);
  }
  return from_triplets(static_cast<int>(alpha.size()), trip);
}

Eigen::VectorXd burgers_residual(const FemSystem& system, const Eigen::VectorXd& alpha, const Eigen::VectorXd& F) {
  if (!system.T) throw Error(ErrorCode::family_mismatch, "system carries no Burgers tensor");
  return system.nu * (system.stiff_only * alpha) + system.T->apply(alpha) - F;
}

SparseMatrix burgers_jacobian(const FemSystem& system, const Eigen::VectorXd& alpha) {
  if (!system.T) throw Error(ErrorCode::family_mismatch, "system carries no Burgers tensor");
  SparseMatrix J = system.nu * system.stiff_only + system.T->jacobian(alpha);
  J.makeCompressed();
  return J;
}

NewtonReport newton_burgers(const FemSystem& system, const Eigen::VectorXd& F, const NewtonOptions& options) {
  NewtonReport report;
  Eigen::VectorXd alpha = Eigen::VectorXd::Zero(F.size());
  Eigen::VectorXd R = burgers_residual(system, alpha, F);
  Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>> lu;
  while (R.norm() > options.tolerance) {
    if (report.iterations == options.max_iterations) {
      throw Error(ErrorCode::solver_failure, "Newton did not converge in " + std::to_string(options.max_iterations) +
                                                 " iterations, |R| = " + std::to_string(R.norm()));
    }
    const SparseMatrix J = burgers_jacobian(system, alpha);
    lu.compute(J);
    if (lu.info() != Eigen::Success) throw Error(ErrorCode::solver_failure, "singular Burgers Jacobian");
    alpha -= lu.solve(R);
    R = burgers_residual(system, alpha, F);
    ++report.iterations;
    if (!R.allFinite()) throw Error(ErrorCode::solver_failure, "Newton iterate became non-finite");
  }
  report.solution.alpha = std::move(alpha);
  report.residual_norm = R.norm();
  return report;
}

struct DirectSolver::Impl {
  SparseMatrix A;
  Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>> lu;
  double tolerance;
};

DirectSolver::DirectSolver(const SparseMatrix& A, double tolerance) : impl_(std::make_unique<Impl>()) {
  if (A.rows() != A.cols()) throw Error(ErrorCode::dimension_mismatch, "system matrix is not square");
  impl_->A = A;
  impl_->A.makeCompressed();
  impl_->tolerance = tolerance;
  impl_->lu.compute(impl_->A);
  if (impl_->lu.info() != Eigen::Success) {
    throw Error(ErrorCode::solver_failure, "sparse LU factorization failed: " + impl_->lu.lastErrorMessage());
  }
}

DirectSolver::~DirectSolver() = default;
DirectSolver::DirectSolver(DirectSolver&&) noexcept = default;
DirectSolver& DirectSolver::operator=(DirectSolver&&) noexcept = default;

Eigen::VectorXd DirectSolver::solve(const Eigen::VectorXd& b) const {
  if (b.size() != impl_->A.rows()) throw Error(ErrorCode::dimension_mismatch, "right-hand side length");
  Eigen::VectorXd x = impl_->lu.solve(b);
  const double bnorm = b.norm();
  if (bnorm == 0.0) return x;
  Eigen::VectorXd r = b - impl_->A * x;
  if (r.norm() > impl_->tolerance * bnorm) {
    x += impl_->lu.solve(r);
    r = b - impl_->A * x;
  }
  const double rel = r.norm() / bnorm;
  if (!(rel <= impl_->tolerance)) {
    throw Error(ErrorCode::solver_failure, "relative residual " + std::to_string(rel) + " above tolerance");
  }
  return x;
}

Eigen::MatrixXd DirectSolver::solve_rows(const Eigen::MatrixXd& B) const {
  Eigen::MatrixXd X(B.rows(), B.cols());
  for (Eigen::Index s = 0; s < B.rows(); ++s) X.row(s) = solve(B.row(s).transpose()).transpose();
  return X;
}

FemSolution solve_direct(const SparseMatrix& A, const Eigen::VectorXd& F) {
  return {DirectSolver(A).solve(F)};
}

FemSolution solve_direct(const FemSystem& system, const Eigen::VectorXd& F) { return solve_direct(system.K, F); }

double energy_norm(const Eigen::VectorXd& w, const SparseMatrix& A) {
  return std::sqrt(std::max(0.0, w.dot(A * w)));
}

double rel_l2_error(const Eigen::VectorXd& u, const Eigen::VectorXd& v, const SparseMatrix& M) {
  const double ref = energy_norm(v, M);
  if (ref == 0.0) throw Error(ErrorCode::undefined_reference, "reference has zero norm");
  return energy_norm(u - v, M) / ref;
}

double h1_semi_error(const Eigen::VectorXd& u, const Eigen::VectorXd& v, const SparseMatrix& stiff_only) {
  const double ref = energy_norm(v, stiff_only);
  if (ref == 0.0) throw Error(ErrorCode::undefined_reference, "reference has zero H1 seminorm");
  return energy_norm(u - v, stiff_only) / ref;
}

double l2_error_against(const Mesh& mesh, const DofMap& dof, const Eigen::VectorXd& alpha, const ScalarField& exact) {
  const auto rule = accurate_rule(mesh.dim);
  double sum = 0.0;
  for (int e = 0; e < mesh.element_count(); ++e) {
    const ElementGeometry g = element_geometry(mesh, e);
    for (const auto& q : rule) {
      double uh = 0.0;
      for (int a = 0; a < g.nv; ++a) {
        const int d = dof.dof(mesh.elements(e, a));
        if (d >= 0) uh += alpha[d] * q.bary[a];
      }
      const double diff = uh - exact(g.at(q));
      sum += q.weight * g.measure * diff * diff;
    }
  }
  return std::sqrt(sum);
}

double l2_norm_of(const Mesh& mesh, const ScalarField& field) {
  const auto rule = accurate_rule(mesh.dim);
  double sum = 0.0;
  for (int e = 0; e < mesh.element_count(); ++e) {
    const ElementGeometry g = element_geometry(mesh, e);
    for (const auto& q : rule) {
      const double v = field(g.at(q));
      sum += q.weight * g.measure * v * v;
    }
  }
  return std::sqrt(sum);
}

double evaluate_structured(const Mesh& mesh, const DofMap& dof, const Eigen::VectorXd& alpha, const Point& x) {
  if (!mesh.grid) throw Error(ErrorCode::precondition, "point evaluation needs a structured mesh");
  const auto& grid = *mesh.grid;
  const double h = (grid.b - grid.a) / grid.n;
  const auto locate = [&](double coord, int& cell, double& local) {
    const double s = (coord - grid.a) / h;
    cell = std::clamp(static_cast<int>(std::floor(s)), 0, grid.n - 1);
    local = s - cell;
  };
  const auto value = [&](int node) {
    const int d = dof.dof(node);
    return d < 0 ? 0.0 : alpha[d];
  };
  int i = 0;
  double s = 0.0;
  locate(x.x(), i, s);
  if (mesh.dim == 1) return (1.0 - s) * value(i) + s * value(i + 1);
  int j = 0;
  double t = 0.0;
  locate(x.y(), j, t);
  const int m = grid.n + 1;
  const int v00 = j * m + i, v10 = v00 + 1, v01 = v00 + m, v11 = v01 + 1;
  if (s >= t) return (1.0 - s) * value(v00) + (s - t) * value(v10) + t * value(v11);
  return (1.0 - t) * value(v00) + s * value(v11) + (t - s) * value(v01);
}

Eigen::VectorXd prolongate(const Mesh& coarse, const DofMap& coarse_dof, const Eigen::VectorXd& alpha,
                           const Mesh& fine, const DofMap& fine_dof) {
  Eigen::VectorXd out(fine_dof.size());
  for (int d = 0; d < fine_dof.size(); ++d) {
    const int v = fine_dof.interior_nodes[d];
    const Point x(fine.nodes(v, 0), fine.dim == 2 ? fine.nodes(v, 1) : 0.0);
    out[d] = evaluate_structured(coarse, coarse_dof, alpha, x);
  }
  return out;
}

void write_coo(std::ostream& out, const SparseMatrix& A) {
  const Eigen::SparseMatrix<double, Eigen::RowMajor> R = A;
  out << "coo " << R.rows() << ' ' << R.cols() << ' ' << R.nonZeros() << '\n' << std::setprecision(17);
  for (int i = 0; i < R.outerSize(); ++i) {
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(R, i); it; ++it) {
      out << it.row() << ' ' << it.col() << ' ' << it.value() << '\n';
    }
  }
}

}  // namespace feonet
