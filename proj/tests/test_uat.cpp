#include "doctest.h"

#include <cmath>
#include <numeric>
#include <random>

#include "feonet/error.hpp"
#include "feonet/fem.hpp"
#include "feonet/uat.hpp"

using namespace feonet;

namespace {

BasisGraph grid_graph(int n) {
  Mesh m = build_square(n, 0.0, 1.0);
  return build_basis_graph(m, build_dofmap(m));
}

BasisGraph path_graph(int n) {
  std::vector<std::pair<int, int>> e;
  for (int i = 0; i + 1 < n; ++i) e.emplace_back(i, i + 1);
  return BasisGraph::from_edges(n, e);
}

Eigen::MatrixXd dense_product(const std::vector<ElementaryFactor>& f, int n) {
  Eigen::MatrixXd P = Eigen::MatrixXd::Identity(n, n);
  for (const auto& x : f) P = P * x.dense(n);
  return P;
}

Eigen::MatrixXd well_conditioned(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Eigen::MatrixXd M(n, n);
  for (Eigen::Index k = 0; k < M.size(); ++k) M.data()[k] = g(rng);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(M, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::VectorXd s(n);
  for (int i = 0; i < n; ++i) s[i] = std::pow(10.0, 2.5 * i / std::max(1, n - 1));  // condition ~316
  return svd.matrixU() * s.asDiagonal() * svd.matrixV().transpose();
}

}  // namespace

TEST_CASE("commutator identity") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> size(3, 50);
  std::uniform_real_distribution<double> coef(-3.0, 3.0);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = size(rng);
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    const int i = idx[0], j = idx[1], k = idx[2];
    const double s = coef(rng), t = coef(rng);
    const Eigen::MatrixXd rhs = ElementaryFactor::transvection(i, k, s).dense(n) *
                                ElementaryFactor::transvection(k, j, t).dense(n) *
                                ElementaryFactor::transvection(i, k, -s).dense(n) *
                                ElementaryFactor::transvection(k, j, -t).dense(n);
    worst = std::max(worst, (rhs - ElementaryFactor::transvection(i, j, s * t).dense(n)).cwiseAbs().maxCoeff());
  }
  CHECK(worst <= 1e-12);
}

TEST_CASE("elementary factors") {
  const auto E = ElementaryFactor::transvection(0, 2, 1.5);
  CHECK((E.dense(3) * E.inverse().dense(3) - Eigen::Matrix3d::Identity()).norm() == 0.0);
  Eigen::MatrixXd A = Eigen::MatrixXd::Random(3, 3), B = A;
  E.apply_left(A);
  CHECK((A - E.dense(3) * B).norm() < 1e-15);
  CHECK_THROWS_AS(ElementaryFactor::transvection(1, 1, 2.0), Error);
  const auto D = ElementaryFactor::diagonal(Eigen::Vector3d(2, -1, 4));
  CHECK((D.dense(3) * D.inverse().dense(3) - Eigen::Matrix3d::Identity()).norm() < 1e-15);
  CHECK((product({E, D}, 3) - E.dense(3) * D.dense(3)).norm() < 1e-15);
}

TEST_CASE("factor_elementary") {
  SUBCASE("identity gives only a unit diagonal") {
    const auto f = factor_elementary(Eigen::MatrixXd::Identity(4, 4));
    REQUIRE(f.size() == 1);
    CHECK(f[0].kind == ElementaryFactor::Kind::diagonal);
    CHECK(f[0].d == Eigen::VectorXd::Ones(4));
  }
  SUBCASE("diagonal input") {
    const auto f = factor_elementary(Eigen::Vector2d(2, 3).asDiagonal());
    REQUIRE(f.size() == 1);
    CHECK(f[0].d == Eigen::Vector2d(2, 3));
  }
  SUBCASE("row exchange through the transvection triple") {
    Eigen::Matrix2d P;
    P << 0, 1, 1, 0;
    const auto f = factor_elementary(P);
    CHECK((product(f, 2) - P).cwiseAbs().maxCoeff() < 1e-15);
    CHECK(f.back().d.prod() == doctest::Approx(-1.0));
  }
  SUBCASE("random well-conditioned matrices") {
    std::mt19937_64 rng(2);
    for (int n : {5, 25, 64}) {
      const Eigen::MatrixXd M = well_conditioned(n, rng);
      const auto f = factor_elementary(M);
      const double err = (product(f, n) - M).cwiseAbs().maxCoeff();
      INFO("n=" << n);
      CHECK(err <= 1e-9 * M.cwiseAbs().maxCoeff());
      CHECK((dense_product(f, n) - M).cwiseAbs().maxCoeff() <= 1e-9 * M.cwiseAbs().maxCoeff());
    }
  }
  SUBCASE("singular input is refused") {
    Eigen::Matrix3d S;
    S << 1, 2, 3, 2, 4, 6, 0, 1, 1;
    try {
      factor_elementary(S);
      FAIL("expected factorization_failure");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::factorization_failure);
      CHECK(std::string(e.what()).find("column") != std::string::npos);
    }
  }
}

TEST_CASE("expand_transvection") {
  SUBCASE("path 1-2-3") {
    const BasisGraph g = path_graph(3);
    const auto out = expand_transvection(ElementaryFactor::transvection(0, 2, 0.7), g);
    REQUIRE(out.size() == 4);
    CHECK((out[0].i == 0 && out[0].j == 1 && out[0].t == 1.0));
    CHECK((out[1].i == 1 && out[1].j == 2 && out[1].t == 0.7));
    CHECK((out[2].i == 0 && out[2].j == 1 && out[2].t == -1.0));
    CHECK((out[3].i == 1 && out[3].j == 2 && out[3].t == -0.7));
    CHECK((dense_product(out, 3) - ElementaryFactor::transvection(0, 2, 0.7).dense(3)).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("edges are returned unchanged") {
    const auto out = expand_transvection(ElementaryFactor::transvection(1, 0, 2.0), path_graph(3));
    REQUIRE(out.size() == 1);
    CHECK(out[0].t == 2.0);
  }
  SUBCASE("anti-diagonal corners of the 5x5 grid") {
    const BasisGraph g = grid_graph(6);
    const int a = 4, b = 20;  // (5,1) and (1,5) in one-based grid coordinates
    REQUIRE(graph_distance(g, a, b) == 8);
    const auto E = ElementaryFactor::transvection(a, b, -1.3);
    const auto out = expand_transvection(E, g);
    CHECK(out.size() == 3u * (1u << 7) - 2u);
    CHECK(out.size() <= std::pow(4.0, 7));
    for (const auto& f : out) {
      const auto& adj = g.adjacency[f.i];
      CHECK(std::binary_search(adj.begin(), adj.end(), f.j));
    }
    CHECK((product(out, 25) - E.dense(25)).cwiseAbs().maxCoeff() <= 1e-10);
  }
  SUBCASE("different components cannot be joined") {
    const BasisGraph g = BasisGraph::from_edges(4, {{0, 1}, {2, 3}});
    try {
      expand_transvection(ElementaryFactor::transvection(0, 3, 1.0), g);
      FAIL("expected not_expandable");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::not_expandable);
    }
  }
}

TEST_CASE("gsparse_factorization") {
  SUBCASE("Poisson stiffness at N_h=25") {
    const Mesh m = build_square(6, -1.0, 1.0);
    const DofMap dof = build_dofmap(m);
    const BasisGraph g = build_basis_graph(m, dof);
    const Eigen::MatrixXd K = assemble_elliptic(m, dof, CoefficientSet::laplacian()).K;
    const GSparseFactorization f = gsparse_factorization(K, g);
    CHECK(f.g_sparse);
    CHECK(f.product_checksum <= 1e-12);
    CHECK(f.factors.size() == 1);  // K is already G-sparse
    const auto fused = fuse_chain(f.chain, g, 25);
    CHECK(fused.size() < f.chain.size());
    Eigen::MatrixXd P = Eigen::MatrixXd::Identity(25, 25);
    for (const auto& F : fused) {
      CHECK(is_g_sparse(F, g));
      P = P * F;
    }
    CHECK((P - K).cwiseAbs().maxCoeff() <= 1e-12 * K.cwiseAbs().maxCoeff());
    for (const auto& F : f.factors) {
      CHECK(is_g_sparse(F, g));
      CHECK(std::abs(Eigen::MatrixXd(F).determinant()) > 0.0);
    }
    const GSparseFactorization inv = f.inverse(g);
    CHECK(inv.g_sparse);
    CHECK(inv.product_checksum <= 1e-10);
    CHECK((inv.product() * K - Eigen::MatrixXd::Identity(25, 25)).cwiseAbs().maxCoeff() <= 1e-10);
  }
  SUBCASE("a G-sparse matrix fuses into one factor") {
    const BasisGraph g = path_graph(5);
    Eigen::MatrixXd T = Eigen::MatrixXd::Zero(5, 5);
    for (int i = 0; i < 5; ++i) {
      T(i, i) = 4.0;
      if (i + 1 < 5) T(i, i + 1) = T(i + 1, i) = -1.0;
    }
    const GSparseFactorization d = gsparse_factorization(Eigen::Vector<double, 5>(1, 2, 3, 4, 5).asDiagonal(), g);
    CHECK(d.factors.size() == 1);
    const GSparseFactorization t = gsparse_factorization(T, g);
    CHECK(t.g_sparse);
    CHECK(t.factors.size() == 1);
    CHECK(t.product_checksum < 1e-14);
    CHECK(fuse_chain(t.chain, g, 5).size() >= 1);
  }
  SUBCASE("block-diagonal obstruction on a disconnected graph") {
    const BasisGraph g = BasisGraph::from_edges(4, {{0, 1}, {2, 3}});
    Eigen::Matrix4d M = Eigen::Matrix4d::Identity();
    M(0, 3) = 0.5;
    try {
      gsparse_factorization(M, g);
      FAIL("expected not_expandable");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::not_expandable);
    }
    // block-diagonal matrices are still representable
    Eigen::Matrix4d B = Eigen::Matrix4d::Identity();
    B(0, 1) = 2.0;
    B(3, 2) = -1.0;
    CHECK(gsparse_factorization(B, g).g_sparse);
  }
  SUBCASE("fusion refuses non-edge factors") {
    CHECK_THROWS_AS(fuse_chain({ElementaryFactor::transvection(0, 2, 1.0)}, path_graph(3), 3), Error);
  }
}

TEST_CASE("realize_relu") {
  const Mesh m = build_square(6, -1.0, 1.0);
  const DofMap dof = build_dofmap(m);
  const BasisGraph g = build_basis_graph(m, dof);
  std::mt19937_64 rng(4);

  SUBCASE("identity") {
    const SparseNetwork<double> net = realize_relu(Eigen::MatrixXd::Identity(25, 25), g, 3.0);
    std::uniform_real_distribution<double> box(-3.0, 3.0);
    Batch<double> X(100, 25);
    for (Eigen::Index k = 0; k < X.size(); ++k) X.data()[k] = box(rng);
    CHECK((forward(net, X) - X).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("inverse stiffness against direct solves") {
    const SparseMatrix K = assemble_elliptic(m, dof, CoefficientSet::laplacian()).K;
    const GSparseFactorization inv = gsparse_factorization(Eigen::MatrixXd(K), g).inverse(g);
    std::uniform_real_distribution<double> u(-0.05, 0.05);
    Batch<double> F(100, 25);
    for (Eigen::Index k = 0; k < F.size(); ++k) F.data()[k] = u(rng);
    const double R = F.cwiseAbs().maxCoeff();
    const SparseNetwork<double> net = realize_relu(inv, g, R);
    CHECK(net.activation == Activation::relu);
    CHECK(net.depth() == static_cast<int>(inv.factors.size()));
    CHECK(layers_g_sparse(net, g));
    const Batch<double> out = forward(net, F);
    for (int s = 0; s < 100; ++s) {
      const Eigen::VectorXd alpha = solve_direct(K, F.row(s).transpose()).alpha;
      CHECK((out.row(s).transpose() - alpha).cwiseAbs().maxCoeff() <= 1e-6 * alpha.cwiseAbs().maxCoeff());
    }
    // every hidden preactivation is strictly positive on the box corners
    ForwardCache<double> cache;
    Batch<double> corners(2, 25);
    corners.row(0).setConstant(R);
    corners.row(1).setConstant(-R);
    forward(net, corners, &cache);
    for (int l = 0; l + 1 < net.depth(); ++l) CHECK(cache.pre[l].minCoeff() > 0.0);
  }
  SUBCASE("depth cap") {
    RealizationOptions opt;
    opt.max_layers = 3;
    const Eigen::MatrixXd K = assemble_elliptic(m, dof, CoefficientSet::laplacian()).K;
    try {
      realize_relu(Eigen::MatrixXd(K).inverse().eval(), g, 1.0, opt);
      FAIL("expected realization_too_deep");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::realization_too_deep);
    }
  }
}

TEST_CASE("realize_general") {
  const BasisGraph g = grid_graph(6);
  SUBCASE("sigmoid at t0 = 0") {
    const GeneralRealization r =
        realize_general(Eigen::MatrixXd::Identity(25, 25), g, 1.0, 1e-3, {Activation::sigmoid, 0.0});
    CHECK(r.sampled_error <= 1e-3);
    CHECK(r.eta == doctest::Approx(1e-3));
    CHECK(layers_g_sparse(r.net, g));
    CHECK(r.net.depth() == 2);
  }
  SUBCASE("swish at t0 = 1") {
    const GeneralRealization r =
        realize_general(Eigen::MatrixXd::Identity(25, 25), g, 1.0, 1e-6, {Activation::swish, 1.0});
    CHECK(r.sampled_error <= 1e-6);
    CHECK(r.deltas[0] < 1e-3);
  }
  SUBCASE("a longer chain") {
    const Mesh m = build_square(6, -1.0, 1.0);
    const DofMap dof = build_dofmap(m);
    const Eigen::MatrixXd K = assemble_elliptic(m, dof, CoefficientSet::laplacian()).K;
    const GSparseFactorization f = gsparse_factorization(K, g);
    const GeneralRealization r = realize_general(f, g, 0.1, 1e-2, {Activation::sigmoid, 0.0});
    CHECK(r.sampled_error <= 1e-2);
    CHECK(r.net.depth() == static_cast<int>(f.factors.size()) + 1);
    CHECK(layers_g_sparse(r.net, g));
  }
  SUBCASE("relu without a smooth point is rejected") {
    try {
      realize_general(Eigen::MatrixXd::Identity(25, 25), g, 1.0, 1e-3, {Activation::relu, 0.0});
      FAIL("expected precondition");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::precondition);
    }
  }
}
