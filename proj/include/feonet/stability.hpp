#pragma once

#include <random>
#include <string>
#include <vector>

#include "feonet/network.hpp"

namespace feonet {

struct SensitivityReport {
  std::vector<double> spectral_norms;
  double bound = 0.0;  // L_sigma^L prod ||W_l||_2
  double mean = 0.0;
  double std = 0.0;
  double max = 0.0;
  int n_h = 0;
  int trials = 0;
  std::string mode = "untrained-gaussian";
};

/// Product of layer spectral norms times L_sigma^L.
double bound_product(const SparseNetwork<double>& net, double lipschitz);
double bound_product(const SparseNetwork<double>& net);

/// Empirical sensitivity ||net(f + d) - net(f)|| / ||d|| with d uniform on the
/// sphere of radius noise_fraction * max_j ||f_j||. One perturbation per input
/// row; `trials` caps the number of rows used (0 uses all).
SensitivityReport sensitivity(const SparseNetwork<double>& net, const Batch<double>& inputs, double noise_fraction,
                              int trials, std::mt19937_64& rng);

/// Largest row of the pattern.
int gamma(const SparsityPattern& pattern);

/// Largest |weight| over all layers.
double max_abs_weight(const SparseNetwork<double>& net);

}  // namespace feonet
