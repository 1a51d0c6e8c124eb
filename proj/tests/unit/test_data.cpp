#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>
#include <unistd.h>

#include "csv.hpp"
#include "data.hpp"
#include "error.hpp"
#include "fixtures.hpp"

using namespace rgcn;
using rgcn::testing::TempDir;
namespace fs = std::filesystem;

namespace {

const char* kNodes =
    "node_id,income,density,target\n"
    "a,1.5,10,0.2\n"
    "b,2.5,20,\n"
    "c,4,15,0.9\n";
const char* kEdges = "src,dst\na,b\nb,c\n";

// 4x4 normal equations solved by Gaussian elimination with partial pivoting
std::vector<double> least_squares(const Matrix& x, const std::vector<double>& y) {
  const std::size_t c = x.cols();
  Matrix a(c, c + 1);
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < c; ++j) {
      for (std::size_t k = 0; k < c; ++k) a(j, k) += x(i, j) * x(i, k);
      a(j, c) += x(i, j) * y[i];
    }
  for (std::size_t col = 0; col < c; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < c; ++r)
      if (std::abs(a(r, col)) > std::abs(a(piv, col))) piv = r;
    for (std::size_t k = 0; k <= c; ++k) std::swap(a(col, k), a(piv, k));
    for (std::size_t r = 0; r < c; ++r) {
      if (r == col) continue;
      const double f = a(r, col) / a(col, col);
      for (std::size_t k = col; k <= c; ++k) a(r, k) -= f * a(col, k);
    }
  }
  std::vector<double> b(c);
  for (std::size_t j = 0; j < c; ++j) b[j] = a(j, c) / a(j, j);
  return b;
}

}  // namespace

TEST_CASE("load_dataset") {
  TempDir dir;
  write_file_atomic(dir.path / "nodes.csv", kNodes);
  write_file_atomic(dir.path / "edges.csv", kEdges);
  const LoadedData loaded = load_dataset(dir.path / "nodes.csv", dir.path / "edges.csv");
  const Dataset& d = loaded.dataset;
  CHECK(d.size() == 3);
  CHECK(d.feature_names == std::vector<std::string>{"income", "density"});
  CHECK(d.features(2, 0) == 4.0);
  CHECK_FALSE(d.target[1].has_value());
  CHECK(d.labeled_nodes() == std::vector<std::size_t>{0, 2});
  CHECK(loaded.graph.degree(1) == 2);

  SUBCASE("round trip") {
    write_file_atomic(dir.path / "nodes2.csv", format_node_csv(d));
    write_file_atomic(dir.path / "edges2.csv", format_edge_csv(loaded.graph));
    const LoadedData again = load_dataset(dir.path / "nodes2.csv", dir.path / "edges2.csv");
    CHECK(again.dataset.node_ids == d.node_ids);
    CHECK(again.dataset.features == d.features);
    CHECK(again.dataset.target == d.target);
    CHECK(again.graph.adjacency().to_dense() == loaded.graph.adjacency().to_dense());
  }
  SUBCASE("unknown id in edges") {
    write_file_atomic(dir.path / "bad.csv", "src,dst\na,zz\n");
    CHECK_THROWS_WITH_AS(load_dataset(dir.path / "nodes.csv", dir.path / "bad.csv"),
                         doctest::Contains("zz"), Error);
  }
  SUBCASE("non-numeric feature") {
    write_file_atomic(dir.path / "bad.csv", "node_id,x,target\na,hello,1\n");
    CHECK_THROWS_AS(load_dataset(dir.path / "bad.csv", dir.path / "edges.csv"), Error);
  }
  SUBCASE("duplicate node id") {
    write_file_atomic(dir.path / "bad.csv", "node_id,x,target\na,1,1\na,2,1\n");
    CHECK_THROWS_WITH_AS(load_dataset(dir.path / "bad.csv", dir.path / "edges.csv"),
                         doctest::Contains("duplicate"), Error);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(load_dataset(dir.path / "nope.csv", dir.path / "edges.csv"), Error);
  }
  SUBCASE("vote columns become the target") {
    write_file_atomic(dir.path / "votes.csv",
                      "node_id,x,dem,rep\na,1,60,40\nb,2,0,5\nc,3,7,7\n");
    LoadOptions opts;
    opts.dem_column = "dem";
    opts.rep_column = "rep";
    const Dataset v = load_dataset(dir.path / "votes.csv", dir.path / "edges.csv", opts).dataset;
    CHECK(v.feature_names == std::vector<std::string>{"x"});
    CHECK(*v.target[0] == doctest::Approx(0.6));
    CHECK(*v.target[1] == 0.0);
    CHECK(*v.target[2] == 0.5);
  }
  SUBCASE("weighted flows are averaged") {
    write_file_atomic(dir.path / "flows.csv", "src,dst,weight\na,b,2\nb,a,4\nb,c,2\n");
    LoadOptions opts;
    opts.symmetrize_flows = true;
    const SpatialGraph g = load_dataset(dir.path / "nodes.csv", dir.path / "flows.csv", opts).graph;
    CHECK(g.weighted());
    CHECK(g.adjacency().at(0, 1) == 3.0);
    CHECK(g.adjacency().at(2, 1) == 1.0);
  }
}

TEST_CASE("csv parsing") {
  const CsvTable t = parse_csv("a,\"b,c\",d\n1,\"x \"\"y\"\"\",3\n\n");
  CHECK(t.header == std::vector<std::string>{"a", "b,c", "d"});
  REQUIRE(t.rows.size() == 1);
  CHECK(t.rows[0][1] == "x \"y\"");
  CHECK(parse_csv(format_csv(t)).rows == t.rows);
  CHECK_THROWS_AS(t.column("zz"), Error);
  CHECK(format_double(0.1) == "0.1");
  CHECK(parse_double(format_double(1.0 / 3.0), "x") == 1.0 / 3.0);
  CHECK_THROWS_AS(parse_double("abc", "cell"), Error);
  CHECK_THROWS_AS(parse_double("nan", "cell"), Error);
}

TEST_CASE("standardize") {
  Dataset d;
  d.node_ids = {"a", "b", "c"};
  d.feature_names = {"x", "y"};
  d.features = Matrix::from_rows({{1, 5}, {2, 7}, {3, 12}});
  d.target.assign(3, std::nullopt);
  d.roles.assign(3, Role::None);
  const Dataset s = standardize(d);
  const double z = std::sqrt(1.5);
  CHECK(s.features(0, 0) == doctest::Approx(-z).epsilon(1e-14));
  CHECK(s.features(1, 0) == 0.0);
  CHECK(s.features(2, 0) == doctest::Approx(z).epsilon(1e-14));
  for (std::size_t c = 0; c < 2; ++c) {
    const auto col = s.features.column_values(c);
    double mean = 0.0, var = 0.0;
    for (double v : col) mean += v / 3.0;
    for (double v : col) var += (v - mean) * (v - mean) / 3.0;
    CHECK(std::abs(mean) <= 1e-9);
    CHECK(std::abs(std::sqrt(var) - 1.0) <= 1e-9);
  }
  CHECK(max_abs_diff(standardize(s).features, s.features) <= 1e-12);

  d.features(1, 1) = 5;
  d.features(2, 1) = 5;
  CHECK_THROWS_WITH_AS(standardize(d), doctest::Contains("y"), Error);
}

TEST_CASE("vote_share") {
  const std::vector<double> dem{3, 0, 5, 60}, rep{3, 4, 0, 40};
  const auto r = vote_share(dem, rep);
  CHECK(r[0] == 0.5);
  CHECK(r[1] == 0.0);
  CHECK(r[2] == 1.0);
  CHECK(r[3] == doctest::Approx(0.6).epsilon(1e-15));
  const std::vector<double> zero{0};
  CHECK_THROWS_AS(vote_share(zero, zero), Error);

  Prng rng(1);
  for (int k = 0; k < 200; ++k) {
    const std::vector<double> a{rng.uniform(0, 100)}, b{rng.uniform(0.01, 100)};
    const double v = vote_share(a, b)[0];
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("split") {
  CHECK(split_sizes(10, {}) == std::array<std::size_t, 3>{6, 2, 2});
  CHECK(split_sizes(3108, {}) == std::array<std::size_t, 3>{1866, 621, 621});

  Dataset d;
  for (int i = 0; i < 25; ++i) {
    d.node_ids.push_back("n" + std::to_string(i));
    d.target.push_back(i % 6 == 5 ? std::nullopt : std::optional<double>(i));
  }
  d.features = Matrix(25, 1);
  d.feature_names = {"x"};
  d.roles.assign(25, Role::None);

  Prng r1(5), r2(5);
  const Dataset a = split(d, {}, r1);
  const Dataset b = split(d, {}, r2);
  CHECK(a.roles == b.roles);
  const auto labeled = a.labeled_nodes();
  std::set<std::size_t> seen;
  for (Role role : {Role::Train, Role::Validation, Role::Test})
    for (std::size_t i : a.nodes_with(role)) CHECK(seen.insert(i).second);
  CHECK(seen == std::set<std::size_t>(labeled.begin(), labeled.end()));
  for (std::size_t i = 0; i < 25; ++i)
    if (!d.target[i]) CHECK(a.roles[i] == Role::None);
  const auto sizes = split_sizes(labeled.size(), {});
  CHECK(a.nodes_with(Role::Train).size() == sizes[0]);

  Dataset tiny = d;
  for (std::size_t i = 2; i < 25; ++i) tiny.target[i] = std::nullopt;
  Prng r3(1);
  CHECK_THROWS_AS(split(tiny, {}, r3), Error);
  CHECK_THROWS_AS(split(d, {0.5, 0.2, 0.2}, r3), Error);

  SUBCASE("split table pins roles") {
    const CsvTable t = parse_csv("node_id,split\nn0,test\nn1,val\nn2,train\n");
    const Dataset pinned = apply_split_table(d, t);
    CHECK(pinned.roles[0] == Role::Test);
    CHECK(pinned.roles[1] == Role::Validation);
    CHECK(pinned.roles[2] == Role::Train);
    CHECK(pinned.roles[3] == Role::None);
    CHECK_THROWS_AS(apply_split_table(d, parse_csv("node_id,split\nn0,holdout\n")), Error);
  }
}

TEST_CASE("synthetic generator") {
  SynthOptions o;
  o.grid = 8;
  o.regions = 3;
  o.seed = 12;
  const SyntheticTruth a = synth_generate(o);
  const SyntheticTruth b = synth_generate(o);
  CHECK(a.dataset.features == b.dataset.features);
  CHECK(a.dataset.target == b.dataset.target);
  CHECK(a.allocation == b.allocation);
  CHECK(a.graph.size() == 64);
  CHECK(regions_connected(a.graph, a.allocation));
  CHECK(a.allocation.nonempty_regions() == 3);
  for (std::size_t j = 0; j < 3; ++j)
    for (std::size_t q = 0; q < j; ++q) {
      double d2 = 0.0;
      for (std::size_t k = 0; k < 4; ++k) d2 += std::pow(a.coefficients(j, k) - a.coefficients(q, k), 2);
      CHECK(d2 >= 1.0);
    }
  for (const auto& t : a.dataset.target) {
    CHECK(*t >= 0.0);
    CHECK(*t <= 1.0);
  }

  SUBCASE("single noiseless regime is recoverable by OLS on the logit") {
    SynthOptions s = o;
    s.regions = 1;
    s.noise_sd = 0.0;
    s.gamma = 0.0;
    const SyntheticTruth t = synth_generate(s);
    std::vector<double> logit;
    for (const auto& y : t.dataset.target) logit.push_back(std::log(*y / (1.0 - *y)));
    const auto beta = least_squares(t.dataset.features, logit);
    for (std::size_t k = 0; k < 4; ++k) CHECK(std::abs(beta[k] - t.coefficients(0, k)) <= 1e-6);
  }
  SUBCASE("grid graph") {
    const SpatialGraph g = grid_graph(4);
    CHECK(g.edge_count() == 24);
    CHECK(g.degree(0) == 2);
    CHECK(g.degree(5) == 4);
  }
  SUBCASE("rejects tiny grids") {
    SynthOptions s = o;
    s.grid = 3;
    CHECK_THROWS_AS(synth_generate(s), Error);
  }
}
