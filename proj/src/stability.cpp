#include "feonet/stability.hpp"

#include <algorithm>
#include <cmath>

#include "feonet/error.hpp"

namespace feonet {

double bound_product(const SparseNetwork<double>& net, double lipschitz) {
  double b = 1.0;
  for (const auto& layer : net.layers) b *= lipschitz * spectral_norm(layer);
  return b;
}

double bound_product(const SparseNetwork<double>& net) {
  return bound_product(net, lipschitz_constant(net.activation));
}

SensitivityReport sensitivity(const SparseNetwork<double>& net, const Batch<double>& inputs, double noise_fraction,
                              int trials, std::mt19937_64& rng) {
  if (!(noise_fraction > 0.0)) throw Error(ErrorCode::precondition, "noise_fraction must be positive");
  if (inputs.rows() == 0) throw Error(ErrorCode::precondition, "no inputs");
  if (inputs.cols() != net.width()) throw Error(ErrorCode::dimension_mismatch, "input width differs from the network");

  SensitivityReport r;
  r.n_h = net.width();
  const double L = lipschitz_constant(net.activation);
  r.bound = 1.0;
  for (const auto& layer : net.layers) {
    r.spectral_norms.push_back(spectral_norm(layer));
    r.bound *= L * r.spectral_norms.back();
  }

  const int rows = trials > 0 ? std::min<int>(trials, static_cast<int>(inputs.rows())) : static_cast<int>(inputs.rows());
  const Batch<double> F = inputs.topRows(rows);
  const double radius = noise_fraction * inputs.rowwise().norm().maxCoeff();
  if (!(radius > 0.0)) throw Error(ErrorCode::precondition, "inputs are all zero");

  std::normal_distribution<double> normal;
  Batch<double> D(rows, F.cols());
  for (int s = 0; s < rows; ++s) {
    for (int i = 0; i < D.cols(); ++i) D(s, i) = normal(rng);
    D.row(s) *= radius / D.row(s).norm();
  }
  const Batch<double> Y = forward(net, F);
  const Batch<double> Yp = forward(net, Batch<double>(F + D));
  const Eigen::VectorXd ratio = (Yp - Y).rowwise().norm() / radius;

  r.trials = rows;
  r.mean = ratio.mean();
  r.max = ratio.maxCoeff();
  r.std = rows > 1 ? std::sqrt((ratio.array() - r.mean).square().sum() / (rows - 1)) : 0.0;
  return r;
}

int gamma(const SparsityPattern& pattern) {
  int g = 0;
  for (int i = 0; i < pattern.size(); ++i) g = std::max(g, pattern.row_size(i));
  return g;
}

double max_abs_weight(const SparseNetwork<double>& net) {
  double w = 0.0;
  for (const auto& layer : net.layers)
    if (layer.values.size() > 0) w = std::max(w, layer.values.cwiseAbs().maxCoeff());
  return w;
}

}  // namespace feonet
