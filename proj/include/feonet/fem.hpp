#pragma once

#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "feonet/mesh.hpp"

namespace feonet {

using SparseMatrix = Eigen::SparseMatrix<double>;
using Point = Eigen::Vector2d;  // 1D meshes use (x, 0)
using ScalarField = std::function<double(const Point&)>;

/// Coefficients of  -div(a grad u) + b . grad u + c u = f.
struct CoefficientSet {
  std::function<Eigen::Matrix2d(const Point&)> diffusion;
  std::function<Eigen::Vector2d(const Point&)> advection;
  ScalarField reaction;

  static CoefficientSet constant(double diffusion, Eigen::Vector2d advection, double reaction);
  static CoefficientSet laplacian() { return constant(1.0, Eigen::Vector2d::Zero(), 0.0); }
};

struct AssemblyOptions {
  bool verify_ellipticity = false;
};

/// Sparse rank-3 tensor T[i][j][k] = \int phi_i phi_j phi_k' dx on interior dofs.
struct BurgersTensor {
  struct Entry {
    int i, j, k;
    double value;
  };
  std::vector<Entry> entries;  // merged, sorted by (i, j, k)

  /// N_i(alpha) = sum_{j,k} T[i][j][k] alpha_j alpha_k
  Eigen::VectorXd apply(const Eigen::VectorXd& alpha) const;
  /// J_{ij} = sum_k (T[i][j][k] + T[i][k][j]) alpha_k
  SparseMatrix jacobian(const Eigen::VectorXd& alpha) const;
};

struct FemSystem {
  SparseMatrix K;           // system matrix; for Burgers this is nu * stiff_only
  SparseMatrix M;           // mass
  SparseMatrix stiff_only;  // pure Laplacian stiffness
  std::optional<BurgersTensor> T;
  double nu = 0.0;
  DofMap dof;

  int size() const { return dof.size(); }
};

struct FemSolution {
  Eigen::VectorXd alpha;
};

/// K[i][j] = B[phi_j, phi_i]: rows are indexed by the test function.
FemSystem assemble_elliptic(const Mesh& mesh, const DofMap& dof, const CoefficientSet& coeffs,
                            const AssemblyOptions& options = {});

Eigen::VectorXd assemble_load(const Mesh& mesh, const DofMap& dof, const ScalarField& f);

struct HelmholtzPair {
  SparseMatrix stiff_only;
  SparseMatrix M;
};
HelmholtzPair assemble_helmholtz(const Mesh& mesh, const DofMap& dof);

/// System matrix of  Laplace(u) + k^2 u = q  after integration by parts.
SparseMatrix helmholtz_matrix(const SparseMatrix& stiff_only, const SparseMatrix& M, double k);

FemSystem assemble_burgers(const Mesh& mesh, const DofMap& dof, double nu);

/// R(alpha) = nu K_stiff alpha + N(alpha) - F
Eigen::VectorXd burgers_residual(const FemSystem& system, const Eigen::VectorXd& alpha, const Eigen::VectorXd& F);
SparseMatrix burgers_jacobian(const FemSystem& system, const Eigen::VectorXd& alpha);

struct NewtonReport {
  FemSolution solution;
  int iterations = 0;
  double residual_norm = 0.0;
};

struct NewtonOptions {
  int max_iterations = 20;
  double tolerance = 1e-10;
};

NewtonReport newton_burgers(const FemSystem& system, const Eigen::VectorXd& F, const NewtonOptions& options = {});

/// Sparse LU with a cached factorization. Every solve is checked against the
/// relative residual bound and refined once before reporting failure.
class DirectSolver {
 public:
  explicit DirectSolver(const SparseMatrix& A, double tolerance = 1e-10);
  ~DirectSolver();
  DirectSolver(DirectSolver&&) noexcept;
  DirectSolver& operator=(DirectSolver&&) noexcept;

  Eigen::VectorXd solve(const Eigen::VectorXd& b) const;
  /// Solves every row of B (samples x dofs) and returns the same layout.
  Eigen::MatrixXd solve_rows(const Eigen::MatrixXd& B) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

FemSolution solve_direct(const SparseMatrix& A, const Eigen::VectorXd& F);
FemSolution solve_direct(const FemSystem& system, const Eigen::VectorXd& F);

/// ||u - v||_M / ||v||_M, ||w||_M = sqrt(w' M w)
double rel_l2_error(const Eigen::VectorXd& u, const Eigen::VectorXd& v, const SparseMatrix& M);
double h1_semi_error(const Eigen::VectorXd& u, const Eigen::VectorXd& v, const SparseMatrix& stiff_only);
double energy_norm(const Eigen::VectorXd& w, const SparseMatrix& A);

/// L2 distance between the FE function and an analytic field, integrated with
/// a degree-5 element rule (independent of the assembly quadrature).
double l2_error_against(const Mesh& mesh, const DofMap& dof, const Eigen::VectorXd& alpha, const ScalarField& exact);
double l2_norm_of(const Mesh& mesh, const ScalarField& field);

/// Evaluates the P1 function sum_i alpha_i phi_i at a point of a structured mesh.
double evaluate_structured(const Mesh& mesh, const DofMap& dof, const Eigen::VectorXd& alpha, const Point& x);

/// Nodal interpolation of a coarse structured solution onto a nested fine mesh.
Eigen::VectorXd prolongate(const Mesh& coarse, const DofMap& coarse_dof, const Eigen::VectorXd& alpha,
                           const Mesh& fine, const DofMap& fine_dof);

/// `coo <rows> <cols> <nnz>` header followed by `i j value` lines.
void write_coo(std::ostream& out, const SparseMatrix& A);

}  // namespace feonet
