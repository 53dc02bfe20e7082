#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "feonet/network.hpp"
#include "feonet/sparsity.hpp"

namespace feonet {

/// E_ij(t) = I + t e_ij, or an invertible diagonal matrix.
struct ElementaryFactor {
  enum class Kind { transvection, diagonal };
  Kind kind = Kind::transvection;
  int i = 0, j = 0;
  double t = 0.0;
  Eigen::VectorXd d;

  static ElementaryFactor transvection(int i, int j, double t);
  static ElementaryFactor diagonal(Eigen::VectorXd d);

  ElementaryFactor inverse() const;
  Eigen::MatrixXd dense(int n) const;
  /// A <- F A
  void apply_left(Eigen::MatrixXd& A) const;
};

/// Dense product of a factor list, left to right.
Eigen::MatrixXd product(const std::vector<ElementaryFactor>& factors, int n);

/// M = F_1 F_2 ... F_r: transvections followed by one diagonal factor.
/// Row exchanges use E_pq(1) E_qp(-1) E_pq(1); its sign ends up in the diagonal.
std::vector<ElementaryFactor> factor_elementary(const Eigen::MatrixXd& M);

/// Rewrites E_ij(t) as a product of edge transvections along a shortest path,
/// using E_ij(st) = E_ik(s) E_kj(t) E_ik(-s) E_kj(-t) with s = 1.
std::vector<ElementaryFactor> expand_transvection(const ElementaryFactor& factor, const BasisGraph& graph);

using RowSparse = Eigen::SparseMatrix<double, Eigen::RowMajor>;

struct GSparseFactorization {
  int n = 0;
  Eigen::MatrixXd target;
  std::vector<ElementaryFactor> chain;  // edge transvections and diagonals; product = target
  std::vector<RowSparse> factors;       // fused chain; product = target
  double product_checksum = 0.0;        // max |prod(factors) - target| / max |target|
  bool g_sparse = false;

  Eigen::MatrixXd product() const;
  /// Factorization of the inverse: chain reversed and inverted, then re-fused.
  GSparseFactorization inverse(const BasisGraph& graph) const;
};

/// Greedy right-to-left fusion of a chain while each partial product stays
/// inside the C=1 pattern of `graph`.
std::vector<RowSparse> fuse_chain(const std::vector<ElementaryFactor>& chain, const BasisGraph& graph, int n);

/// True when every off-diagonal nonzero of A sits on a graph edge.
bool is_g_sparse(const RowSparse& A, const BasisGraph& graph);

GSparseFactorization gsparse_factorization(const Eigen::MatrixXd& M, const BasisGraph& graph);

struct RealizationOptions {
  int max_layers = 10000;
};

/// Exact ReLU network for x -> target x on {||x||_inf <= R}. All weight
/// matrices share the C=1 pattern of the graph.
SparseNetwork<double> realize_relu(const GSparseFactorization& fact, const BasisGraph& graph, double R,
                                   const RealizationOptions& options = {});
SparseNetwork<double> realize_relu(const Eigen::MatrixXd& M, const BasisGraph& graph, double R,
                                   const RealizationOptions& options = {});

struct GeneralActivation {
  Activation activation = Activation::sigmoid;
  double t0 = 0.0;
};

struct GeneralRealization {
  SparseNetwork<double> net;
  std::vector<double> deltas;
  double eta = 0.0;
  double sampled_error = 0.0;  // max_inf |net(x) - Mx| over sampled box points
};

/// Approximate realization with sigma-blocks (sigma(d M z + t0) - sigma(t0)) / (d sigma'(t0)).
GeneralRealization realize_general(const GSparseFactorization& fact, const BasisGraph& graph, double R, double epsilon,
                                   const GeneralActivation& act, std::uint64_t seed = 1,
                                   const RealizationOptions& options = {});
GeneralRealization realize_general(const Eigen::MatrixXd& M, const BasisGraph& graph, double R, double epsilon,
                                   const GeneralActivation& act, std::uint64_t seed = 1,
                                   const RealizationOptions& options = {});

/// Structural check: every layer's dense matrix is zero off the C=1 pattern.
bool layers_g_sparse(const SparseNetwork<double>& net, const BasisGraph& graph);

}  // namespace feonet
