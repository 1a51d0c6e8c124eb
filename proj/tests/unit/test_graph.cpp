#include <doctest.h>

#include <cmath>
#include <queue>

#include "error.hpp"
#include "fixtures.hpp"
#include "graph.hpp"

using namespace rgcn;

namespace {

std::vector<std::size_t> bfs_labels(const SpatialGraph& g) {
  const std::size_t none = static_cast<std::size_t>(-1);
  std::vector<std::size_t> label(g.size(), none);
  std::size_t next = 0;
  for (std::size_t s = 0; s < g.size(); ++s) {
    if (label[s] != none) continue;
    std::queue<std::size_t> q;
    q.push(s);
    label[s] = next;
    while (!q.empty()) {
      const std::size_t v = q.front();
      q.pop();
      for (std::size_t w : g.neighbors(v))
        if (label[w] == none) {
          label[w] = next;
          q.push(w);
        }
    }
    ++next;
  }
  return label;
}

SpatialGraph random_graph(std::size_t n, double p, Prng& rng) {
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (rng.uniform() < p) edges.push_back({i, j, std::nullopt});
  return from_edge_list(n, edges);
}

}  // namespace

TEST_CASE("from_edge_list") {
  const SpatialGraph path = from_edge_list(3, std::vector<Edge>{{0, 1, {}}, {1, 2, {}}});
  CHECK(path.degree(0) == 1);
  CHECK(path.degree(1) == 2);
  CHECK(path.degree(2) == 1);
  CHECK_FALSE(path.weighted());
  CHECK(path.adjacency().at(1, 0) == 1.0);

  CHECK_THROWS_AS(from_edge_list(2, std::vector<Edge>{{0, 0, {}}}), Error);
  CHECK_THROWS_AS(from_edge_list(4, std::vector<Edge>{{0, 1, 2.0}, {1, 0, 2.0}}), Error);
  CHECK_THROWS_AS(from_edge_list(2, std::vector<Edge>{{0, 2, {}}}), Error);
  CHECK_THROWS_AS(from_edge_list(2, std::vector<Edge>{{0, 1, -1.0}}), Error);

  SUBCASE("edges round-trip") {
    Prng rng(1);
    const SpatialGraph g = rgcn::testing::random_connected_graph(15, 10, rng, true);
    std::vector<Edge> edges;
    for (const auto& e : g.edges()) edges.push_back({e.dst, e.src, e.weight});
    const SpatialGraph again = from_edge_list(15, edges);
    CHECK(again.adjacency().to_dense() == g.adjacency().to_dense());
    for (std::size_t i = 0; i < 15; ++i)
      for (std::size_t j = 0; j < 15; ++j)
        CHECK(g.adjacency().at(i, j) == g.adjacency().at(j, i));
  }
  SUBCASE("node ids must be unique") {
    SpatialGraph g = path;
    CHECK_THROWS_AS(g.set_node_ids({"a", "b", "a"}), Error);
    g.set_node_ids({"a", "b", "c"});
    CHECK(g.node_ids()[2] == "c");
  }
}

TEST_CASE("row_normalize") {
  // 4-cycle is 2-regular
  const SpatialGraph cyc =
      from_edge_list(4, std::vector<Edge>{{0, 1, {}}, {1, 2, {}}, {2, 3, {}}, {3, 0, {}}});
  const SparseMatrix cn = row_normalize(cyc);
  for (double v : cn.values()) CHECK(v == 0.5);

  const SparseMatrix p = row_normalize(rgcn::testing::path_graph(3));
  CHECK(p.at(1, 0) == 0.5);
  CHECK(p.at(1, 1) == 0.0);
  CHECK(p.at(1, 2) == 0.5);

  CHECK_THROWS_WITH_AS(row_normalize(from_edge_list(3, std::vector<Edge>{{0, 1, {}}})),
                       doctest::Contains("2"), Error);

  Prng rng(2);
  const SpatialGraph w = rgcn::testing::random_connected_graph(20, 15, rng, true);
  const SparseMatrix n = row_normalize(w);
  for (std::size_t i = 0; i < 20; ++i) {
    double s = 0.0;
    for (double v : n.row_values(i)) s += v;
    CHECK(std::abs(s - 1.0) <= 1e-12);
    // weighted degree in the denominator
    const auto cols = w.neighbors(i);
    const auto vals = w.neighbor_weights(i);
    CHECK(std::abs(n.at(i, cols[0]) - vals[0] / w.weighted_degree(i)) <= 1e-15);
  }
}

TEST_CASE("renormalized_laplacian") {
  CHECK(renormalized_laplacian(from_edge_list(1, std::vector<Edge>{})).to_dense() ==
        Matrix::from_rows({{1.0}}));
  const Matrix two = renormalized_laplacian(rgcn::testing::path_graph(2)).to_dense();
  for (double v : two.values()) CHECK(std::abs(v - 0.5) <= 1e-15);

  Prng rng(3);
  const SpatialGraph g = rgcn::testing::random_connected_graph(12, 8, rng);
  const Matrix l = renormalized_laplacian(g).to_dense();
  CHECK(max_abs_diff(l, l.transposed()) <= 1e-12);
  // D̃^½𝟙 is an eigenvector with eigenvalue 1
  std::vector<double> s(12);
  for (std::size_t i = 0; i < 12; ++i) s[i] = std::sqrt(static_cast<double>(g.degree(i) + 1));
  const Matrix v = Matrix::column(s);
  CHECK(max_abs_diff(matmul(l, v), v) <= 1e-12);
}

TEST_CASE("connected components") {
  CHECK(component_count(connected_components(rgcn::testing::path_graph(5))) == 1);
  const SpatialGraph two = from_edge_list(4, std::vector<Edge>{{0, 1, {}}, {2, 3, {}}});
  CHECK(component_count(connected_components(two)) == 2);

  Prng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const SpatialGraph g = random_graph(25, 0.06, rng);
    const auto labels = connected_components(g);
    const auto oracle = bfs_labels(g);
    for (std::size_t i = 0; i < 25; ++i)
      for (std::size_t j = 0; j < 25; ++j)
        CHECK((labels[i] == labels[j]) == (oracle[i] == oracle[j]));
  }
  const std::vector<std::size_t> ends{0, 4};
  CHECK_FALSE(induces_connected(rgcn::testing::path_graph(5), ends));
  const std::vector<std::size_t> mid{1, 2, 3};
  CHECK(induces_connected(rgcn::testing::path_graph(5), mid));
}

TEST_CASE("symmetrize_flows") {
  const SpatialGraph a = symmetrize_flows(2, std::vector<WeightedArc>{{0, 1, 2.0}, {1, 0, 4.0}});
  CHECK(a.adjacency().at(0, 1) == 3.0);
  CHECK(a.adjacency().at(1, 0) == 3.0);

  const SpatialGraph b = symmetrize_flows(2, std::vector<WeightedArc>{{0, 1, 2.0}});
  CHECK(b.adjacency().at(0, 1) == 1.0);

  const SpatialGraph c = symmetrize_flows(3, std::vector<WeightedArc>{{0, 1, 0.0}, {1, 2, 5.0}, {2, 1, 5.0}});
  CHECK(c.edge_count() == 1);
  CHECK(c.adjacency().at(2, 1) == 5.0);

  CHECK_THROWS_AS(symmetrize_flows(2, std::vector<WeightedArc>{{0, 1, -1.0}}), Error);
}
