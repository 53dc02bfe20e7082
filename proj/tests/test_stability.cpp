#include "doctest.h"

#include <cmath>
#include <random>

#include "feonet/error.hpp"
#include "feonet/stability.hpp"

using namespace feonet;

namespace {

std::shared_ptr<const SparsityPattern> grid_pattern(int n, int c) {
  Mesh m = build_square(n, 0.0, 1.0);
  return std::make_shared<const SparsityPattern>(build_pattern(build_basis_graph(m, build_dofmap(m)), c));
}

Batch<double> random_inputs(int rows, int cols, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Batch<double> X(rows, cols);
  for (Eigen::Index k = 0; k < X.size(); ++k) X.data()[k] = g(rng);
  return X;
}

}  // namespace

TEST_CASE("gamma") {
  CHECK(gamma(*grid_pattern(20, 1)) == 7);
  CHECK(gamma(identity_pattern(9)) == 1);
  CHECK(gamma(*grid_pattern(6, 8)) == 25);
  for (int n : {16, 32, 64, 128}) CHECK(gamma(*grid_pattern(n, 3)) == gamma(*grid_pattern(16, 3)));
}

TEST_CASE("bound_product") {
  auto p = std::make_shared<const SparsityPattern>(identity_pattern(5));
  std::mt19937_64 rng(1);
  SparseNetwork<double> net = init_network<double>(p, 4, Activation::swish, rng);
  for (auto& l : net.layers) l.values.setOnes();
  CHECK(bound_product(net) == doctest::Approx(std::pow(1.1, 4)));
  CHECK(bound_product(net, 1.0) == doctest::Approx(1.0));

  // sparse Gaussian layers sit below (L omega gamma)^L
  auto q = grid_pattern(16, 2);
  SparseNetwork<double> g = init_network<double>(q, 6, Activation::swish, rng, InitMode::gaussian, 1.0);
  const double L = lipschitz_constant(Activation::swish);
  CHECK(bound_product(g) <= std::pow(L * max_abs_weight(g) * gamma(*q), 6));
  for (const auto& layer : g.layers) CHECK(spectral_norm(layer) <= std::sqrt(norm1(layer) * norm_inf(layer)) * (1 + 1e-9));
}

TEST_CASE("sensitivity") {
  std::mt19937_64 rng(3);
  SUBCASE("linear layer is bounded by its spectral norm") {
    auto p = grid_pattern(8, 2);
    SparseNetwork<double> net = init_network<double>(p, 1, Activation::identity, rng, InitMode::gaussian, 1.0);
    const Batch<double> X = random_inputs(500, p->size(), rng);
    const SensitivityReport r = sensitivity(net, X, 0.01, 0, rng);
    CHECK(r.trials == 500);
    CHECK(r.max <= r.bound * (1 + 1e-9));
    CHECK(r.mean > 0.0);
    // the top right singular vector attains the norm
    const Eigen::MatrixXd W = net.layers[0].dense();
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(W, Eigen::ComputeThinV);
    const Eigen::VectorXd v = svd.matrixV().col(0);
    const double gain = (W * v).norm() / v.norm();
    CHECK(gain == doctest::Approx(r.bound).epsilon(1e-6));
  }
  SUBCASE("soundness for swish and relu") {
    for (Activation a : {Activation::swish, Activation::relu}) {
      auto p = grid_pattern(10, 3);
      SparseNetwork<double> net = init_network<double>(p, 4, a, rng, InitMode::gaussian, 1.0);
      const Batch<double> X = random_inputs(200, p->size(), rng);
      const SensitivityReport r = sensitivity(net, X, 0.01, 100, rng);
      CHECK(r.trials == 100);
      CHECK(r.mean <= r.bound);
      CHECK(r.max <= r.bound);
      CHECK(r.spectral_norms.size() == 4);
      CHECK(r.std >= 0.0);
    }
  }
  SUBCASE("input checks") {
    auto p = grid_pattern(6, 1);
    SparseNetwork<double> net = init_network<double>(p, 2, Activation::swish, rng);
    CHECK_THROWS_AS(sensitivity(net, random_inputs(4, 25, rng), 0.0, 0, rng), Error);
    CHECK_THROWS_AS(sensitivity(net, random_inputs(4, 24, rng), 0.01, 0, rng), Error);
  }
}

TEST_CASE("dense Gaussian spectral norms follow 2 sigma sqrt(N)") {
  std::mt19937_64 rng(8);
  for (int n : {100, 400}) {
    auto p = std::make_shared<const SparsityPattern>(full_pattern(n));
    SparseNetwork<double> net = init_network<double>(p, 1, Activation::identity, rng, InitMode::gaussian, 1.0);
    CHECK(spectral_norm(net.layers[0]) == doctest::Approx(2.0 * std::sqrt(n)).epsilon(0.1));
  }
}
