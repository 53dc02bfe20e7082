#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "feonet/error.hpp"
#include "feonet/sparsity.hpp"

namespace feonet {

enum class Activation { identity, relu, swish, sigmoid };

std::string to_string(Activation a);
Activation parse_activation(std::string_view tag);

/// Global Lipschitz constant used by the stability bound.
double lipschitz_constant(Activation a);

template <class Scalar>
inline Scalar logistic(Scalar x) {
  return Scalar(1) / (Scalar(1) + std::exp(-x));
}

template <class Scalar>
inline Scalar activate(Activation a, Scalar x) {
  switch (a) {
    case Activation::identity: return x;
    case Activation::relu: return x > Scalar(0) ? x : Scalar(0);
    case Activation::swish: return x * logistic(x);
    case Activation::sigmoid: return logistic(x);
  }
  return x;
}

// relu'(0) = 0
template <class Scalar>
inline Scalar activate_derivative(Activation a, Scalar x) {
  switch (a) {
    case Activation::identity: return Scalar(1);
    case Activation::relu: return x > Scalar(0) ? Scalar(1) : Scalar(0);
    case Activation::swish: {
      const Scalar s = logistic(x);
      return s + x * s * (Scalar(1) - s);
    }
    case Activation::sigmoid: {
      const Scalar s = logistic(x);
      return s * (Scalar(1) - s);
    }
  }
  return Scalar(1);
}

template <class Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
/// Batches are (samples x width), column-major, so one feature is contiguous.
template <class Scalar>
using Batch = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <class Scalar>
using RowMajorMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class Scalar>
struct SparseLayer {
  std::shared_ptr<const SparsityPattern> pattern;
  Vec<Scalar> values;  // aligned with pattern positions
  Vec<Scalar> bias;

  int width() const { return pattern->size(); }

  /// Dense weight matrix; zero off-pattern.
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> dense() const {
    const int n = width();
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> W = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>::Zero(n, n);
    for (int i = 0; i < n; ++i) {
      const auto b = pattern->row_begin(i);
      const auto r = pattern->row(i);
      for (std::size_t k = 0; k < r.size(); ++k) W(i, r[k]) = values[b + k];
    }
    return W;
  }

  /// y = W x
  Vec<Scalar> apply(const Vec<Scalar>& x) const {
    const int n = width();
    Vec<Scalar> y(n);
    for (int i = 0; i < n; ++i) {
      const auto b = pattern->row_begin(i);
      const auto r = pattern->row(i);
      Scalar s(0);
      for (std::size_t k = 0; k < r.size(); ++k) s += values[b + k] * x[r[k]];
      y[i] = s;
    }
    return y;
  }

  /// y = W^T x
  Vec<Scalar> apply_transpose(const Vec<Scalar>& x) const {
    const int n = width();
    Vec<Scalar> y(n);
    for (int j = 0; j < n; ++j) {
      const auto pos = pattern->column_positions(j);
      const auto rows = pattern->column_rows(j);
      Scalar s(0);
      for (std::size_t k = 0; k < pos.size(); ++k) s += values[pos[k]] * x[rows[k]];
      y[j] = s;
    }
    return y;
  }
};

/// Every layer has width N_h; `activation` follows layers 1..L-1, the last is affine.
template <class Scalar>
struct SparseNetwork {
  std::vector<SparseLayer<Scalar>> layers;
  Activation activation = Activation::swish;
  std::uint64_t generation = 0;  // bumped on every parameter update

  int depth() const { return static_cast<int>(layers.size()); }
  int width() const { return layers.empty() ? 0 : layers.front().width(); }
  void touch() { ++generation; }
};

template <class Scalar>
struct ForwardCache {
  std::vector<Batch<Scalar>> inputs;  // layer inputs: z^(0) .. z^(L-1)
  std::vector<Batch<Scalar>> pre;     // pre-activations of layers 1..L
  const void* owner = nullptr;
  std::uint64_t generation = 0;
};

template <class Scalar>
struct NetworkGradients {
  std::vector<Vec<Scalar>> values;
  std::vector<Vec<Scalar>> bias;
};

enum class InitMode {
  fan_in,    // Normal(0, 1/row nnz)
  gaussian,  // Normal(0, sigma^2) on every allowed position
};

/// Y = Z W^T + 1 b^T for one layer.
template <class Scalar>
void layer_forward(const SparseLayer<Scalar>& layer, const Batch<Scalar>& Z, Batch<Scalar>& Y) {
  const SparsityPattern& p = *layer.pattern;
  const int n = p.size();
  Y.resize(Z.rows(), n);
  if (p.is_full()) {
    Eigen::Map<const RowMajorMatrix<Scalar>> W(layer.values.data(), n, n);
    Y.noalias() = Z * W.transpose();
    Y.rowwise() += layer.bias.transpose();
    return;
  }
  for (int i = 0; i < n; ++i) {
    auto y = Y.col(i);
    y.setConstant(layer.bias[i]);
    const auto b = p.row_begin(i);
    const auto r = p.row(i);
    for (std::size_t k = 0; k < r.size(); ++k) y.noalias() += layer.values[b + k] * Z.col(r[k]);
  }
}

template <class Scalar>
SparseNetwork<Scalar> init_network(std::shared_ptr<const SparsityPattern> pattern, int layers, Activation activation,
                                   std::mt19937_64& rng, InitMode mode = InitMode::fan_in, double sigma = 1.0) {
  if (layers < 1) throw Error(ErrorCode::precondition, "network needs at least one layer");
  const int n = pattern->size();
  for (int i = 0; i < n; ++i) {
    if (pattern->row_size(i) == 0) throw Error(ErrorCode::empty_row, "pattern row " + std::to_string(i) + " is empty");
  }
  SparseNetwork<Scalar> net;
  net.activation = activation;
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int l = 0; l < layers; ++l) {
    SparseLayer<Scalar> layer;
    layer.pattern = pattern;
    layer.values.resize(pattern->nnz());
    layer.bias = Vec<Scalar>::Zero(n);
    for (int i = 0; i < n; ++i) {
      const double scale = mode == InitMode::fan_in ? 1.0 / std::sqrt(static_cast<double>(pattern->row_size(i))) : sigma;
      const auto b = pattern->row_begin(i);
      for (int k = 0; k < pattern->row_size(i); ++k) layer.values[b + k] = static_cast<Scalar>(scale * normal(rng));
    }
    net.layers.push_back(std::move(layer));
  }
  return net;
}

/// Z0 is (samples x N_h). Returns the output batch; fills `cache` when given.
template <class Scalar>
Batch<Scalar> forward(const SparseNetwork<Scalar>& net, const Batch<Scalar>& Z0, ForwardCache<Scalar>* cache = nullptr) {
  if (net.layers.empty()) throw Error(ErrorCode::precondition, "empty network");
  if (Z0.cols() != net.width()) {
    throw Error(ErrorCode::dimension_mismatch,
                "input width " + std::to_string(Z0.cols()) + " != network width " + std::to_string(net.width()));
  }
  const int L = net.depth();
  if (cache) {
    cache->inputs.resize(L);
    cache->pre.resize(L);
    cache->owner = &net;
    cache->generation = net.generation;
  }
  Batch<Scalar> z = Z0, y;
  for (int l = 0; l < L; ++l) {
    layer_forward(net.layers[l], z, y);
    if (cache) {
      cache->inputs[l] = std::move(z);
      cache->pre[l] = y;
    }
    if (l + 1 < L && net.activation != Activation::identity) {
      const Activation a = net.activation;
      z = y.unaryExpr([a](Scalar v) { return activate(a, v); });
    } else {
      z = std::move(y);
    }
  }
  return z;
}

template <class Scalar>
Vec<Scalar> forward(const SparseNetwork<Scalar>& net, const Vec<Scalar>& z0) {
  Batch<Scalar> Z = z0.transpose();
  return forward(net, Z).row(0).transpose();
}

/// Reverse mode through a cached forward pass. `grad_output` is dLoss/dOutput
/// with the batch layout of the forward output.
template <class Scalar>
NetworkGradients<Scalar> backward(const SparseNetwork<Scalar>& net, const ForwardCache<Scalar>& cache,
                                  const Batch<Scalar>& grad_output) {
  if (cache.owner != &net || cache.generation != net.generation) {
    throw Error(ErrorCode::stale_cache, "forward cache does not match the current network parameters");
  }
  const int L = net.depth();
  if (static_cast<int>(cache.pre.size()) != L || grad_output.rows() != cache.pre.back().rows() ||
      grad_output.cols() != net.width()) {
    throw Error(ErrorCode::dimension_mismatch, "gradient shape does not match the forward cache");
  }
  NetworkGradients<Scalar> g;
  g.values.resize(L);
  g.bias.resize(L);
  Batch<Scalar> delta = grad_output;  // dLoss / d pre-activation of layer l
  Batch<Scalar> next;
  for (int l = L - 1; l >= 0; --l) {
    const SparseLayer<Scalar>& layer = net.layers[l];
    const SparsityPattern& p = *layer.pattern;
    const Batch<Scalar>& Z = cache.inputs[l];
    const int n = p.size();
    g.bias[l] = delta.colwise().sum().transpose();
    g.values[l].resize(p.nnz());
    const bool dense = p.is_full();
    if (dense) {
      Eigen::Map<RowMajorMatrix<Scalar>> G(g.values[l].data(), n, n);
      G.noalias() = delta.transpose() * Z;
    } else {
      for (int i = 0; i < n; ++i) {
        const auto b = p.row_begin(i);
        const auto r = p.row(i);
        const auto d = delta.col(i);
        for (std::size_t k = 0; k < r.size(); ++k) g.values[l][b + k] = d.dot(Z.col(r[k]));
      }
    }
    if (l == 0) break;
    next.resize(delta.rows(), n);
    if (dense) {
      Eigen::Map<const RowMajorMatrix<Scalar>> W(layer.values.data(), n, n);
      next.noalias() = delta * W;
    } else {
      for (int j = 0; j < n; ++j) {
        auto out = next.col(j);
        out.setZero();
        const auto pos = p.column_positions(j);
        const auto rows = p.column_rows(j);
        for (std::size_t k = 0; k < pos.size(); ++k) out.noalias() += layer.values[pos[k]] * delta.col(rows[k]);
      }
    }
    const Activation a = net.activation;
    if (a != Activation::identity) {
      next.array() *= cache.pre[l - 1].unaryExpr([a](Scalar v) { return activate_derivative(a, v); }).array();
    }
    delta.swap(next);
  }
  return g;
}

/// Power iteration on W^T W: 200 iterations or relative change below 1e-9.
template <class Scalar>
double spectral_norm(const SparseLayer<Scalar>& layer, int max_iterations = 200, double tolerance = 1e-9) {
  const int n = layer.width();
  if (n == 0) return 0.0;
  Vec<Scalar> v = Vec<Scalar>::Ones(n) / std::sqrt(static_cast<Scalar>(n));
  // A fixed deterministic perturbation avoids starting orthogonal to the top singular vector.
  for (int i = 0; i < n; ++i) v[i] += Scalar(1e-3) * std::sin(Scalar(1.0 + i));
  v.normalize();
  double sigma = 0.0;
  for (int it = 0; it < max_iterations; ++it) {
    Vec<Scalar> w = layer.apply_transpose(layer.apply(v));
    const double lambda = static_cast<double>(w.norm());
    if (lambda == 0.0) return 0.0;
    v = w / static_cast<Scalar>(lambda);
    const double next = std::sqrt(lambda);
    if (it > 0 && std::abs(next - sigma) <= tolerance * next) {
      sigma = next;
      break;
    }
    sigma = next;
  }
  return sigma;
}

/// Maximum absolute column sum.
template <class Scalar>
double norm1(const SparseLayer<Scalar>& layer) {
  double best = 0.0;
  for (int j = 0; j < layer.width(); ++j) {
    double s = 0.0;
    for (auto pos : layer.pattern->column_positions(j)) s += std::abs(static_cast<double>(layer.values[pos]));
    best = std::max(best, s);
  }
  return best;
}

/// Maximum absolute row sum.
template <class Scalar>
double norm_inf(const SparseLayer<Scalar>& layer) {
  double best = 0.0;
  for (int i = 0; i < layer.width(); ++i) {
    const auto b = layer.pattern->row_begin(i);
    double s = 0.0;
    for (int k = 0; k < layer.pattern->row_size(i); ++k) s += std::abs(static_cast<double>(layer.values[b + k]));
    best = std::max(best, s);
  }
  return best;
}

struct ParamCount {
  std::int64_t weights = 0;
  std::int64_t biases = 0;
  std::int64_t total() const { return weights + biases; }
  std::int64_t bytes_at_8() const { return 8 * total(); }
  std::int64_t bytes_at_4() const { return 4 * total(); }
};

template <class Scalar>
ParamCount param_count(const SparseNetwork<Scalar>& net) {
  ParamCount c;
  for (const auto& layer : net.layers) {
    c.weights += static_cast<std::int64_t>(layer.values.size());
    c.biases += static_cast<std::int64_t>(layer.bias.size());
  }
  return c;
}

/// The published "# Params" convention: every layer contributes its interior
/// pattern nnz plus one bias per mesh node (boundary nodes included).
inline std::int64_t reported_param_count(int layers, std::int64_t pattern_nnz, std::int64_t mesh_nodes) {
  return static_cast<std::int64_t>(layers) * (pattern_nnz + mesh_nodes);
}

/// Megabytes at 4 bytes per parameter.
inline double reported_memory_mb(std::int64_t params) { return 4.0 * static_cast<double>(params) / 1e6; }

}  // namespace feonet
