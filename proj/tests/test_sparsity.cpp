#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "feonet/error.hpp"
#include "feonet/sparsity.hpp"

using namespace feonet;

namespace {

BasisGraph grid_graph(int n) {
  Mesh m = build_square(n, 0.0, 1.0);
  return build_basis_graph(m, build_dofmap(m));
}

// dof of one-based interior grid coordinates (i, j), n-1 per row
int dof_of(int n, int i, int j) { return (n - 1) * (j - 1) + (i - 1); }

// Independent nnz oracle on the structured grid. With the (+1,+1) diagonal the
// graph metric between (i,j) and (i',j') is max(|di|,|dj|) when di, dj share a
// sign and |di|+|dj| otherwise; count lattice points within distance c.
std::int64_t lattice_nnz(int n, int c) {
  const int m = n - 1;
  std::int64_t total = 0;
  for (int j = 0; j < m; ++j) {
    for (int i = 0; i < m; ++i) {
      for (int jj = 0; jj < m; ++jj) {
        const int dj = jj - j;
        if (std::abs(dj) > c) continue;
        for (int ii = 0; ii < m; ++ii) {
          const int di = ii - i;
          const int dist = (di >= 0) == (dj >= 0) || di == 0 || dj == 0 ? std::max(std::abs(di), std::abs(dj))
                                                                        : std::abs(di) + std::abs(dj);
          if (dist <= c) ++total;
        }
      }
    }
  }
  return total;
}

BasisGraph two_cliques() {
  return BasisGraph::from_edges(6, {{0, 1}, {1, 2}, {0, 2}, {3, 4}, {4, 5}, {3, 5}});
}

}  // namespace

TEST_CASE("basis graph on the 6x6 grid") {
  const int n = 6;
  BasisGraph g = grid_graph(n);
  CHECK(g.n_vertices == 25);
  // grid node (2,2) is dof 6, node 7 one-based
  const int v = dof_of(n, 2, 2);
  CHECK(v == 6);
  std::vector<int> expected{dof_of(n, 1, 1), dof_of(n, 2, 1), dof_of(n, 1, 2), dof_of(n, 3, 2), dof_of(n, 2, 3), dof_of(n, 3, 3)};
  std::sort(expected.begin(), expected.end());
  CHECK(g.adjacency[v] == expected);
  // one-based: {1,2,6,8,12,13}
  std::vector<int> one_based;
  for (int u : g.adjacency[v]) one_based.push_back(u + 1);
  CHECK(one_based == std::vector<int>{1, 2, 6, 8, 12, 13});
  // triangulation with the opposite diagonal, numbered bottom-up
  std::vector<std::pair<int, int>> edges;
  for (int j = 1; j < n; ++j) {
    for (int i = 1; i < n; ++i) {
      const int u = dof_of(n, i, j);
      if (i + 1 < n) edges.emplace_back(u, dof_of(n, i + 1, j));
      if (j + 1 < n) edges.emplace_back(u, dof_of(n, i, j + 1));
      if (i + 1 < n && j > 1) edges.emplace_back(u, dof_of(n, i + 1, j - 1));
    }
  }
  BasisGraph anti = BasisGraph::from_edges(25, edges);
  std::vector<int> anti_one_based;
  for (int u : anti.adjacency[6]) anti_one_based.push_back(u + 1);
  CHECK(anti_one_based == std::vector<int>{2, 3, 6, 8, 11, 12});
  // both triangulations give the same table counts
  CHECK(build_pattern(anti, 1).nnz() == 137);

  BasisGraph path = grid_graph(2);
  CHECK(path.n_vertices == 1);
  Mesh line = build_interval(4, 0.0, 1.0);
  BasisGraph p = build_basis_graph(line, build_dofmap(line));
  CHECK(p.adjacency[0] == std::vector<int>{1});
  CHECK(p.adjacency[1] == std::vector<int>{0, 2});
  CHECK(p.adjacency[2] == std::vector<int>{1});
}

TEST_CASE("balls") {
  BasisGraph g = grid_graph(6);
  CHECK(ball(g, 12, 0) == std::vector<int>{12});
  CHECK(ball(g, 0, 100).size() == 25);
  CHECK(ball(g, 0, kUnreachable).size() == 25);
  std::int64_t s4 = 0, s8 = 0;
  for (int v = 0; v < 25; ++v) {
    s4 += static_cast<std::int64_t>(ball(g, v, 4).size());
    s8 += static_cast<std::int64_t>(ball(g, v, 8).size());
  }
  CHECK(s4 == 555);
  CHECK(s8 == 625);
}

TEST_CASE("published weight counts") {
  struct Cell {
    int n, c;
    std::int64_t nnz;
  };
  const Cell cells[] = {
      {6, 1, 137},         {6, 4, 555},          {6, 8, 625},         {11, 1, 622},        {11, 4, 3930},
      {11, 8, 8392},       {11, 15, 9970},       {31, 1, 6062},       {31, 4, 47930},      {31, 8, 149352},
      {31, 15, 384860},    {51, 1, 17102},       {51, 4, 140730},     {51, 8, 463912},     {51, 15, 1340060},
      {101, 1, 69202},     {101, 4, 586230},     {101, 8, 2009812},   {101, 15, 6251560},
  };
  for (const auto& cell : cells) {
    BasisGraph g = grid_graph(cell.n);
    SparsityPattern p = build_pattern(g, cell.c);
    INFO("N_h=" << g.n_vertices << " C=" << cell.c);
    CHECK(p.nnz() == cell.nnz);
  }
  // the lattice oracle agrees with BFS on small grids
  for (int n : {6, 11, 16}) {
    for (int c : {1, 2, 3, 5, 8}) CHECK(build_pattern(grid_graph(n), c).nnz() == lattice_nnz(n, c));
  }
}

TEST_CASE("sparsity measure") {
  CHECK(std::round(sparsity_measure(build_pattern(grid_graph(6), 1)) * 1e4) / 1e4 == doctest::Approx(0.7808));
  CHECK(sparsity_measure(full_pattern(25)) == 0.0);
  CHECK(std::round(sparsity_measure(build_pattern(grid_graph(101), 1)) * 1e4) / 1e4 == doctest::Approx(0.9993));
}

TEST_CASE("pattern invariants") {
  BasisGraph g = grid_graph(16);
  const int D = diameter(g);
  CHECK(D == 2 * 14);
  SparsityPattern prev = build_pattern(g, 1);
  CHECK(prev.is_symmetric());
  for (int c = 2; c <= D; ++c) {
    SparsityPattern next = build_pattern(g, c);
    REQUIRE(next.contains(prev));
    prev = std::move(next);
  }
  CHECK(prev.is_full());
  CHECK(!build_pattern(g, D - 1).is_full());
  for (int i = 0; i < prev.size(); ++i) CHECK(prev.contains(i, i));
}

TEST_CASE("receptive field composition") {
  for (int n : {6, 11, 16}) {
    BasisGraph g = grid_graph(n);
    for (int c : {1, 2, 3}) {
      SparsityPattern base = build_pattern(g, c);
      SparsityPattern acc = base;
      for (int L = 2; L <= 4; ++L) {
        acc = compose(acc, base);
        SparsityPattern direct = build_pattern(g, L * c);
        INFO("n=" << n << " c=" << c << " L=" << L);
        CHECK(acc.row_offsets() == direct.row_offsets());
        CHECK(acc.columns() == direct.columns());
      }
    }
  }
}

TEST_CASE("connectivity and distance") {
  for (int n = 2; n <= 64; ++n) REQUIRE(is_connected(grid_graph(n)));
  BasisGraph cl = two_cliques();
  CHECK(!is_connected(cl));
  CHECK(graph_distance(cl, 0, 4) == kUnreachable);
  CHECK(graph_distance(cl, 0, 2) == 1);
  CHECK(connected_components(cl) == std::vector<int>{0, 0, 0, 1, 1, 1});

  BasisGraph g = grid_graph(6);
  // (1,5) and (5,1) corners lie on the anti-diagonal
  CHECK(graph_distance(g, dof_of(6, 1, 5), dof_of(6, 5, 1)) == 8);
  CHECK(graph_distance(g, dof_of(6, 1, 1), dof_of(6, 5, 5)) == 4);

  std::vector<std::string> warnings;
  set_warning_handler([&](const std::string& w) { warnings.push_back(w); });
  SparsityPattern p = build_pattern(cl, 1);
  set_warning_handler(nullptr);
  CHECK(warnings.size() == 1);
  CHECK(p.nnz() == 18);
}

TEST_CASE("random patterns") {
  std::mt19937_64 rng(1);
  SparsityPattern perm = random_pattern(3, 3, rng);
  CHECK(perm.nnz() == 3);
  for (int i = 0; i < 3; ++i) {
    CHECK(perm.row_size(i) == 1);
    CHECK(perm.column_rows(i).size() == 1);
  }
  const std::int64_t target = build_pattern(grid_graph(16), 4).nnz();
  for (int seed = 0; seed < 10; ++seed) {
    std::mt19937_64 r(static_cast<std::uint64_t>(seed));
    SparsityPattern p = random_pattern(225, target, r);
    CHECK(p.nnz() == target);
    CHECK(p.c_level() == 0);
    for (int i = 0; i < 225; ++i) {
      REQUIRE(p.row_size(i) > 0);
      REQUIRE(!p.column_rows(i).empty());
    }
  }
  for (std::int64_t nnz : {225, 300, 449, 450, 20000, 225 * 225}) {
    std::mt19937_64 r(9);
    CHECK(random_pattern(225, nnz, r).nnz() == nnz);
  }
  try {
    random_pattern(5, 4, rng);
    FAIL("infeasible count accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::infeasible);
  }
}

TEST_CASE("pattern text round trip") {
  SparsityPattern p = build_pattern(grid_graph(6), 2);
  std::stringstream s;
  write_pattern(s, p);
  CHECK(s.str().rfind("pat 25 ", 0) == 0);
  SparsityPattern q = read_pattern(s);
  CHECK(q == p);
  CHECK(q.c_level() == 2);
}
