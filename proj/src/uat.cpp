#include "feonet/uat.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <random>

#include "feonet/error.hpp"

namespace feonet {

ElementaryFactor ElementaryFactor::transvection(int i, int j, double t) {
  if (i == j) throw Error(ErrorCode::precondition, "transvection needs i != j");
  ElementaryFactor f;
  f.kind = Kind::transvection;
  f.i = i;
  f.j = j;
  f.t = t;
  return f;
}

ElementaryFactor ElementaryFactor::diagonal(Eigen::VectorXd d) {
  ElementaryFactor f;
  f.kind = Kind::diagonal;
  f.d = std::move(d);
  return f;
}

ElementaryFactor ElementaryFactor::inverse() const {
  if (kind == Kind::transvection) return transvection(i, j, -t);
  return diagonal(d.cwiseInverse());
}

Eigen::MatrixXd ElementaryFactor::dense(int n) const {
  if (kind == Kind::diagonal) return d.asDiagonal();
  Eigen::MatrixXd E = Eigen::MatrixXd::Identity(n, n);
  E(i, j) = t;
  return E;
}

void ElementaryFactor::apply_left(Eigen::MatrixXd& A) const {
  if (kind == Kind::diagonal) {
    A = d.asDiagonal() * A;
  } else {
    A.row(i) += t * A.row(j);
  }
}

Eigen::MatrixXd product(const std::vector<ElementaryFactor>& factors, int n) {
  Eigen::MatrixXd P = Eigen::MatrixXd::Identity(n, n);
  for (auto it = factors.rbegin(); it != factors.rend(); ++it) it->apply_left(P);
  return P;
}

std::vector<ElementaryFactor> factor_elementary(const Eigen::MatrixXd& M) {
  if (M.rows() != M.cols()) throw Error(ErrorCode::dimension_mismatch, "factorization needs a square matrix");
  const int n = static_cast<int>(M.rows());
  Eigen::MatrixXd A = M;
  const double scale = n == 0 ? 0.0 : A.cwiseAbs().maxCoeff();
  if (n > 0 && !(scale > 0.0 && std::isfinite(scale))) {
    throw Error(ErrorCode::factorization_failure, "matrix is zero or not finite");
  }
  const double tiny = 1e-10 * scale;

  // Ops in the order they are applied; E_k ... E_1 M = D at the end.
  std::vector<ElementaryFactor> ops;
  auto apply = [&](int i, int j, double t) {
    ops.push_back(ElementaryFactor::transvection(i, j, t));
    A.row(i) += t * A.row(j);
  };

  for (int c = 0; c < n; ++c) {
    int p = c;
    for (int r = c + 1; r < n; ++r)
      if (std::abs(A(r, c)) > std::abs(A(p, c))) p = r;
    if (std::abs(A(p, c)) < tiny) {
      throw Error(ErrorCode::factorization_failure,
                  "pivot below 1e-10 * max|M| in column " + std::to_string(c) + ": matrix is singular or numerically so");
    }
    if (p != c && std::abs(A(c, c)) < 0.1 * std::abs(A(p, c))) {
      // rows (c, p) -> (p, -c)
      apply(c, p, 1.0);
      apply(p, c, -1.0);
      apply(c, p, 1.0);
    }
    for (int r = c + 1; r < n; ++r) {
      if (A(r, c) == 0.0) continue;
      apply(r, c, -A(r, c) / A(c, c));
      A(r, c) = 0.0;
    }
  }
  for (int c = n - 1; c >= 0; --c) {
    for (int r = 0; r < c; ++r) {
      if (A(r, c) == 0.0) continue;
      apply(r, c, -A(r, c) / A(c, c));
      A(r, c) = 0.0;
    }
  }
  Eigen::VectorXd d = A.diagonal();
  for (int c = 0; c < n; ++c) {
    if (std::abs(d[c]) < tiny) throw Error(ErrorCode::factorization_failure, "vanishing diagonal after elimination");
  }

  std::vector<ElementaryFactor> factors;
  factors.reserve(ops.size() + 1);
  for (const auto& op : ops) factors.push_back(op.inverse());
  factors.push_back(ElementaryFactor::diagonal(std::move(d)));
  return factors;
}

namespace {

bool adjacent(const BasisGraph& graph, int i, int j) {
  const auto& a = graph.adjacency[i];
  return std::binary_search(a.begin(), a.end(), j);
}

std::vector<int> shortest_path(const BasisGraph& graph, int from, int to) {
  std::vector<int> parent(graph.n_vertices, -1);
  std::deque<int> queue{from};
  parent[from] = from;
  while (!queue.empty()) {
    const int v = queue.front();
    queue.pop_front();
    if (v == to) break;
    for (int w : graph.adjacency[v]) {
      if (parent[w] != -1) continue;
      parent[w] = v;
      queue.push_back(w);
    }
  }
  if (parent[to] == -1) return {};
  std::vector<int> path{to};
  while (path.back() != from) path.push_back(parent[path.back()]);
  std::reverse(path.begin(), path.end());
  return path;
}

void expand_along(const std::vector<int>& path, std::size_t first, double t, std::vector<ElementaryFactor>& out) {
  const int i = path[first];
  if (first + 2 == path.size()) {
    out.push_back(ElementaryFactor::transvection(i, path[first + 1], t));
    return;
  }
  const int k = path[first + 1];
  out.push_back(ElementaryFactor::transvection(i, k, 1.0));
  expand_along(path, first + 1, t, out);
  out.push_back(ElementaryFactor::transvection(i, k, -1.0));
  expand_along(path, first + 1, -t, out);
}

void check_vertex(const BasisGraph& graph, int v) {
  if (v < 0 || v >= graph.n_vertices) {
    throw Error(ErrorCode::index_out_of_range, "vertex " + std::to_string(v) + " outside the graph");
  }
}

}  // namespace

std::vector<ElementaryFactor> expand_transvection(const ElementaryFactor& factor, const BasisGraph& graph) {
  if (factor.kind == ElementaryFactor::Kind::diagonal) return {factor};
  check_vertex(graph, factor.i);
  check_vertex(graph, factor.j);
  if (adjacent(graph, factor.i, factor.j)) return {factor};
  const std::vector<int> path = shortest_path(graph, factor.i, factor.j);
  if (path.empty()) {
    throw Error(ErrorCode::not_expandable, "no path between " + std::to_string(factor.i) + " and " +
                                               std::to_string(factor.j) + ": vertices lie in different components");
  }
  std::vector<ElementaryFactor> out;
  expand_along(path, 0, factor.t, out);
  return out;
}

bool is_g_sparse(const RowSparse& A, const BasisGraph& graph) {
  if (A.rows() != graph.n_vertices || A.cols() != graph.n_vertices) return false;
  for (int i = 0; i < A.outerSize(); ++i) {
    for (RowSparse::InnerIterator it(A, i); it; ++it) {
      const int j = static_cast<int>(it.col());
      if (j != i && !adjacent(graph, i, j)) return false;
    }
  }
  return true;
}

std::vector<RowSparse> fuse_chain(const std::vector<ElementaryFactor>& chain, const BasisGraph& graph, int n) {
  if (graph.n_vertices != n) throw Error(ErrorCode::dimension_mismatch, "graph size differs from the matrix size");
  Eigen::MatrixXd P = Eigen::MatrixXd::Identity(n, n);
  std::vector<std::vector<int>> support(n);
  std::vector<char> mark(static_cast<std::size_t>(n) * n, 0);
  auto at = [n](int i, int j) { return static_cast<std::size_t>(i) * n + j; };
  auto reset = [&] {
    for (int i = 0; i < n; ++i) {
      for (int j : support[i]) {
        P(i, j) = 0.0;
        mark[at(i, j)] = 0;
      }
      P(i, i) = 1.0;
      support[i].assign(1, i);
      mark[at(i, i)] = 1;
    }
  };
  for (int i = 0; i < n; ++i) support[i].assign(1, i), mark[at(i, i)] = 1;

  bool dirty = false;
  std::vector<RowSparse> reversed;
  auto emit = [&] {
    std::vector<Eigen::Triplet<double>> triplets;
    for (int i = 0; i < n; ++i)
      for (int j : support[i]) triplets.emplace_back(i, j, P(i, j));
    RowSparse F(n, n);
    F.setFromTriplets(triplets.begin(), triplets.end());
    reversed.push_back(std::move(F));
    reset();
    dirty = false;
  };
  auto fits = [&](int i, int j) {
    for (int c : support[j])
      if (!mark[at(i, c)] && c != i && !adjacent(graph, i, c)) return false;
    return true;
  };

  for (auto it = chain.rbegin(); it != chain.rend(); ++it) {
    const ElementaryFactor& f = *it;
    if (f.kind == ElementaryFactor::Kind::diagonal) {
      if (f.d.size() != n) throw Error(ErrorCode::dimension_mismatch, "diagonal factor has the wrong size");
      for (int i = 0; i < n; ++i)
        for (int j : support[i]) P(i, j) *= f.d[i];
      dirty = true;
      continue;
    }
    if (f.i == f.j || !adjacent(graph, f.i, f.j)) {
      throw Error(ErrorCode::precondition, "chain factor E_" + std::to_string(f.i) + "," + std::to_string(f.j) +
                                               " is not on a graph edge; expand it first");
    }
    if (!fits(f.i, f.j)) emit();
    for (int c : support[f.j]) {
      if (!mark[at(f.i, c)]) {
        mark[at(f.i, c)] = 1;
        support[f.i].push_back(c);
      }
    }
    P.row(f.i) += f.t * P.row(f.j);
    dirty = true;
  }
  if (dirty || reversed.empty()) emit();
  std::reverse(reversed.begin(), reversed.end());
  return reversed;
}

Eigen::MatrixXd GSparseFactorization::product() const {
  Eigen::MatrixXd P = Eigen::MatrixXd::Identity(n, n);
  for (const RowSparse& F : factors) P = P * F;
  return P;
}

namespace {

void finish(GSparseFactorization& f, const BasisGraph& graph) {
  const RowSparse target = f.target.sparseView(0.0, 0.0);
  if (is_g_sparse(target, graph)) {
    f.factors = {target};
  } else {
    f.factors = fuse_chain(f.chain, graph, f.n);
  }
  f.g_sparse = std::all_of(f.factors.begin(), f.factors.end(), [&](const RowSparse& F) { return is_g_sparse(F, graph); });
  const double scale = std::max(f.target.cwiseAbs().maxCoeff(), 1e-300);
  f.product_checksum = (f.product() - f.target).cwiseAbs().maxCoeff() / scale;
}

}  // namespace

GSparseFactorization GSparseFactorization::inverse(const BasisGraph& graph) const {
  GSparseFactorization out;
  out.n = n;
  out.target = target.partialPivLu().inverse();
  out.chain.reserve(chain.size());
  for (auto it = chain.rbegin(); it != chain.rend(); ++it) out.chain.push_back(it->inverse());
  finish(out, graph);
  return out;
}

GSparseFactorization gsparse_factorization(const Eigen::MatrixXd& M, const BasisGraph& graph) {
  if (M.rows() != graph.n_vertices || M.cols() != graph.n_vertices) {
    throw Error(ErrorCode::dimension_mismatch, "matrix size differs from the graph size");
  }
  GSparseFactorization f;
  f.n = static_cast<int>(M.rows());
  f.target = M;
  for (const ElementaryFactor& e : factor_elementary(M)) {
    for (ElementaryFactor& piece : expand_transvection(e, graph)) f.chain.push_back(std::move(piece));
  }
  finish(f, graph);
  return f;
}

namespace {

/// Copies a G-sparse matrix into a layer on the C=1 pattern.
SparseLayer<double> make_layer(const std::shared_ptr<const SparsityPattern>& pattern, const RowSparse& W,
                               Eigen::VectorXd bias) {
  SparseLayer<double> layer;
  layer.pattern = pattern;
  layer.values = Eigen::VectorXd::Zero(pattern->nnz());
  for (int i = 0; i < W.outerSize(); ++i) {
    for (RowSparse::InnerIterator it(W, i); it; ++it) {
      const auto pos = pattern->position(i, static_cast<int>(it.col()));
      if (pos < 0) throw Error(ErrorCode::precondition, "factor entry outside the C=1 pattern");
      layer.values[pos] = it.value();
    }
  }
  layer.bias = std::move(bias);
  return layer;
}

RowSparse sparse_identity(int n, double value) {
  RowSparse I(n, n);
  I.reserve(Eigen::VectorXi::Constant(n, 1));
  for (int i = 0; i < n; ++i) I.insert(i, i) = value;
  I.makeCompressed();
  return I;
}

double inf_norm(const RowSparse& A) {
  double best = 0.0;
  for (int i = 0; i < A.outerSize(); ++i) {
    double s = 0.0;
    for (RowSparse::InnerIterator it(A, i); it; ++it) s += std::abs(it.value());
    best = std::max(best, s);
  }
  return best;
}

void check_depth(std::size_t m, const RealizationOptions& options) {
  if (m > static_cast<std::size_t>(options.max_layers)) {
    throw Error(ErrorCode::realization_too_deep, "realization needs " + std::to_string(m) + " layers, cap is " +
                                                     std::to_string(options.max_layers));
  }
}

}  // namespace

SparseNetwork<double> realize_relu(const GSparseFactorization& fact, const BasisGraph& graph, double R,
                                   const RealizationOptions& options) {
  if (!(R > 0.0) || !std::isfinite(R)) throw Error(ErrorCode::precondition, "box radius must be positive");
  if (!fact.g_sparse) throw Error(ErrorCode::precondition, "factorization is not G-sparse");
  const std::size_t m = fact.factors.size();
  check_depth(m, options);
  const int n = fact.n;
  auto pattern = std::make_shared<const SparsityPattern>(build_pattern(graph, 1));

  // Shift each hidden layer by c_l, the exact bound of |(P_l x)_i| over the box
  // plus one, so every ReLU input stays positive and the shift is undone next layer.
  SparseNetwork<double> net;
  net.activation = Activation::relu;
  Eigen::MatrixXd P = Eigen::MatrixXd::Identity(n, n);
  Eigen::VectorXd c = Eigen::VectorXd::Zero(n);
  for (std::size_t l = 0; l < m; ++l) {
    const RowSparse& Ml = fact.factors[m - 1 - l];
    P = Ml * P;
    Eigen::VectorXd bias;
    Eigen::VectorXd shifted = Ml * c;
    if (l + 1 < m) {
      Eigen::VectorXd next = (R * P.cwiseAbs().rowwise().sum()).array() + 1.0;
      bias = next - shifted;
      c = std::move(next);
    } else {
      bias = -shifted;
    }
    net.layers.push_back(make_layer(pattern, Ml, std::move(bias)));
  }
  return net;
}

SparseNetwork<double> realize_relu(const Eigen::MatrixXd& M, const BasisGraph& graph, double R,
                                   const RealizationOptions& options) {
  return realize_relu(gsparse_factorization(M, graph), graph, R, options);
}

GeneralRealization realize_general(const GSparseFactorization& fact, const BasisGraph& graph, double R, double epsilon,
                                   const GeneralActivation& act, std::uint64_t seed, const RealizationOptions& options) {
  if (!(R > 0.0) || !std::isfinite(R)) throw Error(ErrorCode::precondition, "box radius must be positive");
  if (!(epsilon > 0.0)) throw Error(ErrorCode::precondition, "epsilon must be positive");
  if (!fact.g_sparse) throw Error(ErrorCode::precondition, "factorization is not G-sparse");
  const Activation a = act.activation;
  const double t0 = act.t0;
  const double s0 = activate(a, t0);
  const double ds = activate_derivative(a, t0);
  if (a == Activation::relu && t0 <= 0.0) {
    throw Error(ErrorCode::precondition, "relu is not C^1 with nonzero slope at t0 <= 0; use t0 > 0 or realize_relu");
  }
  if (!(std::abs(ds) > 1e-12) || !std::isfinite(ds)) {
    throw Error(ErrorCode::precondition, "activation derivative vanishes at t0");
  }
  const std::size_t m = fact.factors.size();
  check_depth(m + 1, options);
  const int n = fact.n;

  // Factors in application order with their norms; a_max is the largest tail product.
  std::vector<const RowSparse*> Ms(m);
  std::vector<double> norms(m);
  for (std::size_t l = 0; l < m; ++l) {
    Ms[l] = &fact.factors[m - 1 - l];
    norms[l] = inf_norm(*Ms[l]);
  }
  double a_max = 1.0, tail = 1.0;
  for (std::size_t l = m; l-- > 1;) {
    tail *= norms[l];
    a_max = std::max(a_max, tail);
  }
  GeneralRealization out;
  out.eta = std::min(1.0, epsilon / (static_cast<double>(m) * a_max));

  auto phi = [&](double delta, double u) { return (activate(a, delta * u + t0) - s0) / (delta * ds); };
  auto block_error = [&](double delta, double radius) {
    double worst = 0.0;
    constexpr int kPoints = 1000;
    for (int k = 0; k <= kPoints; ++k) {
      const double u = radius * (2.0 * k / kPoints - 1.0);
      worst = std::max(worst, std::abs(phi(delta, u) - u));
    }
    return worst;
  };

  double radius = R;  // R_{l-1}
  out.deltas.resize(m);
  for (std::size_t l = 0; l < m; ++l) {
    const double u_max = norms[l] * radius;
    double delta = 1.0;
    while (block_error(delta, u_max) > out.eta) {
      delta *= 0.5;
      if (delta < 1e-12) {
        throw Error(ErrorCode::tolerance_unreachable,
                    "no delta above 1e-12 meets eta = " + std::to_string(out.eta) + " on radius " + std::to_string(u_max));
      }
    }
    out.deltas[l] = delta;
    radius = norms[l] * radius + 1.0;
  }

  auto pattern = std::make_shared<const SparsityPattern>(build_pattern(graph, 1));
  SparseNetwork<double> net;
  net.activation = a;
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(n);
  for (std::size_t l = 0; l < m; ++l) {
    const RowSparse& Ml = *Ms[l];
    if (l == 0) {
      net.layers.push_back(make_layer(pattern, out.deltas[0] * Ml, Eigen::VectorXd::Constant(n, t0)));
    } else {
      const double g = out.deltas[l] / (out.deltas[l - 1] * ds);
      Eigen::VectorXd bias = Eigen::VectorXd::Constant(n, t0) - (g * s0) * (Ml * ones);
      net.layers.push_back(make_layer(pattern, g * Ml, std::move(bias)));
    }
  }
  const double last = out.deltas[m - 1] * ds;
  net.layers.push_back(make_layer(pattern, sparse_identity(n, 1.0 / last), Eigen::VectorXd::Constant(n, -s0 / last)));
  out.net = std::move(net);

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> box(-R, R);
  constexpr int kSamples = 1000;
  Batch<double> X(kSamples, n);
  for (int s = 0; s < kSamples; ++s)
    for (int i = 0; i < n; ++i) X(s, i) = box(rng);
  const Batch<double> Y = forward(out.net, X);
  const Batch<double> exact = X * fact.target.transpose();
  out.sampled_error = (Y - exact).cwiseAbs().maxCoeff();
  return out;
}

GeneralRealization realize_general(const Eigen::MatrixXd& M, const BasisGraph& graph, double R, double epsilon,
                                   const GeneralActivation& act, std::uint64_t seed, const RealizationOptions& options) {
  return realize_general(gsparse_factorization(M, graph), graph, R, epsilon, act, seed, options);
}

bool layers_g_sparse(const SparseNetwork<double>& net, const BasisGraph& graph) {
  for (const auto& layer : net.layers) {
    const Eigen::MatrixXd W = layer.dense();
    if (W.rows() != graph.n_vertices) return false;
    for (int i = 0; i < W.rows(); ++i)
      for (int j = 0; j < W.cols(); ++j)
        if (W(i, j) != 0.0 && i != j && !adjacent(graph, i, j)) return false;
  }
  return true;
}

}  // namespace feonet
