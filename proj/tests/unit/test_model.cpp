#include <doctest.h>

#include <cmath>
#include <numeric>

#include "error.hpp"
#include "fixtures.hpp"
#include "model.hpp"

using namespace rgcn;
using rgcn::testing::random_matrix;

namespace {

struct Instance {
  SpatialGraph graph;
  Matrix x;
  std::vector<double> target;
  std::vector<std::size_t> train;
  Allocation alloc;
};

Instance make_instance(std::size_t n, std::size_t c0, std::size_t p, std::uint64_t seed) {
  Prng rng(seed);
  Instance in;
  in.graph = rgcn::testing::random_connected_graph(n, n, rng);
  in.x = random_matrix(n, c0, rng);
  for (std::size_t i = 0; i < n; ++i) in.target.push_back(rng.uniform());
  for (std::size_t i = 0; i < n; ++i)
    if (rng.uniform() < 0.6) in.train.push_back(i);
  std::vector<std::size_t> labels(n);
  for (auto& l : labels) l = rng.below(p);
  in.alloc = Allocation(labels, p);
  return in;
}

NetworkConfig small_config(Variant v, std::size_t c0, std::size_t hidden, std::size_t p,
                           Activation out) {
  NetworkConfig c;
  c.variant = v;
  c.dims = {c0, hidden, hidden};
  c.regions = p;
  c.output = out;
  return c;
}

}  // namespace

TEST_CASE("init_params is deterministic and respects the Glorot range") {
  const NetworkConfig c = small_config(Variant::Gcn, 4, 16, 1, Activation::Sigmoid);
  Prng a(7), b(7);
  const ModelParams pa = init_params(c, 10, a);
  const ModelParams pb = init_params(c, 10, b);
  CHECK(pa == pb);
  const double bound = std::sqrt(6.0 / (4 + 16));
  for (double v : pa.layers[0].theta.values()) CHECK(std::abs(v) <= bound);
  for (double v : pa.layers[0].psi.values()) CHECK(v == 0.0);
}

TEST_CASE("init_params draws have mean zero within three standard errors") {
  NetworkConfig c = small_config(Variant::Gcn, 100, 100, 1, Activation::Sigmoid);
  c.dims = {100, 100};
  Prng rng(3);
  const ModelParams p = init_params(c, 1, rng);
  const auto& v = p.layers[0].theta.values();
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
  const double s = std::sqrt(6.0 / 200.0);
  const double se = (s / std::sqrt(3.0)) / std::sqrt(static_cast<double>(v.size()));
  CHECK(std::abs(mean) < 3.0 * se);
}

TEST_CASE("regiongcn init sets unit region weights and zero region biases") {
  const NetworkConfig c = small_config(Variant::RegionGcn, 3, 5, 4, Activation::Sigmoid);
  Prng rng(1);
  const ModelParams p = init_params(c, 9, rng);
  REQUIRE(p.regional.size() == 2);
  for (double v : p.regional[1].omega.values()) CHECK(v == 1.0);
  for (double v : p.regional[1].psi.values()) CHECK(v == 0.0);
}

TEST_CASE("gconv_forward hand cases") {
  const SpatialGraph two = from_edge_list(2, std::vector<Edge>{{0, 1, std::nullopt}});
  const SparseMatrix dinva = row_normalize(two);

  SUBCASE("zero weights leave sigmoid of the bias") {
    LayerParams layer{Matrix(1, 2), Matrix(1, 2), Matrix::from_rows({{0.3, -1.2}})};
    const Matrix out = gconv_forward(Matrix::from_rows({{5.0}, {-2.0}}), dinva, layer,
                                     Activation::Sigmoid);
    for (std::size_t i = 0; i < 2; ++i) {
      CHECK(out(i, 0) == doctest::Approx(1.0 / (1.0 + std::exp(-0.3))).epsilon(1e-15));
      CHECK(out(i, 1) == doctest::Approx(1.0 / (1.0 + std::exp(1.2))).epsilon(1e-15));
    }
  }
  SUBCASE("2-cycle with unit weights") {
    LayerParams layer{Matrix::from_rows({{1.0}}), Matrix::from_rows({{1.0}}), Matrix(1, 1)};
    const Matrix out =
        gconv_forward(Matrix::from_rows({{1.0}, {1.0}}), dinva, layer, Activation::Relu);
    CHECK(out == Matrix::from_rows({{2.0}, {2.0}}));
  }
  SUBCASE("bias shift moves pre-activations exactly") {
    Prng rng(11);
    const Matrix x = random_matrix(2, 3, rng);
    LayerParams layer{random_matrix(3, 2, rng), random_matrix(3, 2, rng), random_matrix(1, 2, rng)};
    const Matrix base = gconv_forward(x, dinva, layer, Activation::Identity);
    layer.psi(0, 1) += 0.25;
    const Matrix shifted = gconv_forward(x, dinva, layer, Activation::Identity);
    for (std::size_t i = 0; i < 2; ++i) {
      CHECK(shifted(i, 0) == base(i, 0));
      CHECK(shifted(i, 1) - base(i, 1) == doctest::Approx(0.25).epsilon(1e-14));
    }
  }
}

TEST_CASE("basic_gconv_forward") {
  Prng rng(5);
  SUBCASE("single node reduces to a dense layer") {
    const SpatialGraph one = from_edge_list(1, std::vector<Edge>{});
    const SparseMatrix lap = renormalized_laplacian(one);
    const Matrix x = random_matrix(1, 3, rng);
    const Matrix theta = random_matrix(3, 2, rng);
    const Matrix psi = random_matrix(1, 2, rng);
    const Matrix out = basic_gconv_forward(x, lap, theta, psi, Activation::Sigmoid);
    const Matrix pre = matmul(x, theta);
    for (std::size_t c = 0; c < 2; ++c)
      CHECK(out(0, c) == doctest::Approx(activate(pre(0, c) + psi(0, c), Activation::Sigmoid)));
  }
  const SpatialGraph g = rgcn::testing::random_connected_graph(7, 5, rng);
  const SparseMatrix lap = renormalized_laplacian(g);
  const Matrix x = random_matrix(7, 3, rng);
  SUBCASE("zero weights") {
    const Matrix psi = Matrix::from_rows({{0.5, -0.5}});
    const Matrix out = basic_gconv_forward(x, lap, Matrix(3, 2), psi, Activation::Relu);
    for (std::size_t i = 0; i < 7; ++i) {
      CHECK(out(i, 0) == 0.5);
      CHECK(out(i, 1) == 0.0);
    }
  }
  SUBCASE("matches composition of spmm, matmul and activation") {
    const Matrix theta = random_matrix(3, 4, rng);
    const Matrix psi = random_matrix(1, 4, rng);
    const Matrix out = basic_gconv_forward(x, lap, theta, psi, Activation::Sigmoid);
    Matrix pre = matmul(lap.to_dense(), matmul(x, theta));
    for (std::size_t i = 0; i < 7; ++i)
      for (std::size_t c = 0; c < 4; ++c) pre(i, c) += psi(0, c);
    CHECK(max_abs_diff(out, activation(pre, Activation::Sigmoid)) <= 1e-12);
  }
}

TEST_CASE("gwconv_forward") {
  Prng rng(17);
  const SpatialGraph g = rgcn::testing::random_connected_graph(5, 3, rng);
  const SparseMatrix dinva = row_normalize(g);
  const Matrix x = random_matrix(5, 3, rng);
  LayerParams layer{random_matrix(3, 4, rng), random_matrix(3, 4, rng), random_matrix(1, 4, rng)};

  CHECK(max_abs_diff(gwconv_forward(x, dinva, layer, {Matrix(5, 3, 1.0)}, Activation::Relu),
                     gconv_forward(x, dinva, layer, Activation::Relu)) <= 1e-12);

  const Matrix annihilated = gwconv_forward(x, dinva, layer, {Matrix(5, 3)}, Activation::Sigmoid);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t c = 0; c < 4; ++c)
      CHECK(annihilated(i, c) == doctest::Approx(activate(layer.psi(0, c), Activation::Sigmoid)));

  const Matrix omega = random_matrix(5, 3, rng);
  const Matrix out = gwconv_forward(x, dinva, layer, {omega}, Activation::Sigmoid);
  // direct evaluation with dense D⁻¹A
  const Matrix a = dinva.to_dense();
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t c = 0; c < 4; ++c) {
      double pre = layer.psi(0, c);
      for (std::size_t k = 0; k < 3; ++k) {
        double nb = 0.0;
        for (std::size_t j = 0; j < 5; ++j) nb += a(i, j) * x(j, k) * omega(j, k);
        pre += nb * layer.theta(k, c) + x(i, k) * omega(i, k) * layer.phi(k, c);
      }
      CHECK(out(i, c) == doctest::Approx(activate(pre, Activation::Sigmoid)).epsilon(1e-13));
    }
  }
}

TEST_CASE("regconv_forward") {
  Prng rng(23);
  const SpatialGraph path = rgcn::testing::path_graph(4);
  const SparseMatrix dinva = row_normalize(path);
  const Matrix x = random_matrix(4, 2, rng);
  LayerParams layer{random_matrix(2, 3, rng), random_matrix(2, 3, rng), random_matrix(1, 3, rng)};
  const Allocation alloc({0, 0, 1, 1}, 2);

  SUBCASE("unit weights and shared bias reduce to gconv") {
    RegionLayerParams reg{Matrix(2, 3, 1.0), Matrix(2, 3)};
    for (std::size_t j = 0; j < 2; ++j)
      for (std::size_t c = 0; c < 3; ++c) reg.psi(j, c) = layer.psi(0, c);
    CHECK(max_abs_diff(regconv_forward(x, dinva, layer, reg, alloc, Activation::Relu),
                       gconv_forward(x, dinva, layer, Activation::Relu)) <= 1e-12);
  }
  SUBCASE("zero region weights leave the region bias") {
    RegionLayerParams reg{Matrix(2, 3), random_matrix(2, 3, rng)};
    const Matrix out = regconv_forward(x, dinva, layer, reg, alloc, Activation::Identity);
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t c = 0; c < 3; ++c) CHECK(out(i, c) == reg.psi(alloc[i], c));
  }
  SUBCASE("elementwise hand expansion on a 4-path") {
    RegionLayerParams reg{random_matrix(2, 3, rng), random_matrix(2, 3, rng)};
    const Matrix out = regconv_forward(x, dinva, layer, reg, alloc, Activation::Identity);
    const std::vector<std::vector<std::size_t>> nbrs{{1}, {0, 2}, {1, 3}, {2}};
    for (std::size_t i = 0; i < 4; ++i) {
      for (std::size_t c = 0; c < 3; ++c) {
        double s = 0.0;
        for (std::size_t k = 0; k < 2; ++k) {
          double avg = 0.0;
          for (std::size_t j : nbrs[i]) avg += x(j, k);
          avg /= static_cast<double>(nbrs[i].size());
          s += avg * layer.theta(k, c) + x(i, k) * layer.phi(k, c);
        }
        const double expected = s * reg.omega(alloc[i], c) + reg.psi(alloc[i], c);
        CHECK(out(i, c) == doctest::Approx(expected).epsilon(1e-13));
      }
    }
  }
  SUBCASE("label out of range") {
    RegionLayerParams reg{Matrix(2, 3, 1.0), Matrix(2, 3)};
    Allocation bad;
    bad.labels = {0, 0, 2, 1};
    bad.regions = 2;
    CHECK_THROWS_AS(regconv_forward(x, dinva, layer, reg, bad, Activation::Relu), Error);
  }
}

TEST_CASE("forward pass") {
  const Instance in = make_instance(6, 3, 2, 31);
  const NetworkConfig c = small_config(Variant::RegionGcn, 3, 4, 2, Activation::Sigmoid);
  const ModelContext ctx = ModelContext::build(c.variant, in.graph);

  SUBCASE("all-zero parameters predict 0.5") {
    Prng rng(1);
    ModelParams p = zeros_like(init_params(c, 6, rng));
    for (double y : forward(p, c, ctx, in.x, &in.alloc)) CHECK(y == 0.5);
  }
  SUBCASE("matches manual composition of two RegConv layers and the head") {
    Prng rng(2);
    ModelParams p = init_params(c, 6, rng);
    rgcn::testing::jitter(p, rng, 0.5);
    const SparseMatrix dinva = row_normalize(in.graph);
    const Matrix h1 = regconv_forward(in.x, dinva, p.layers[0], p.regional[0], in.alloc,
                                      Activation::Relu);
    const Matrix h2 =
        regconv_forward(h1, dinva, p.layers[1], p.regional[1], in.alloc, Activation::Relu);
    const auto pred = forward(p, c, ctx, in.x, &in.alloc);
    for (std::size_t i = 0; i < 6; ++i) {
      double q = p.head.b(0, 0);
      for (std::size_t k = 0; k < 4; ++k) q += h2(i, k) * p.head.u(k, 0);
      CHECK(std::abs(pred[i] - activate(q, Activation::Sigmoid)) <= 1e-12);
      CHECK(pred[i] > 0.0);
      CHECK(pred[i] < 1.0);
    }
  }
  SUBCASE("relu output is non-negative") {
    NetworkConfig rc = c;
    rc.output = Activation::Relu;
    Prng rng(3);
    ModelParams p = init_params(rc, 6, rng);
    rgcn::testing::jitter(p, rng, 1.0);
    for (double y : forward(p, rc, ctx, in.x, &in.alloc)) CHECK(y >= 0.0);
  }
}

TEST_CASE("loss_and_grads") {
  const Instance in = make_instance(30, 4, 3, 41);

  SUBCASE("perfect predictions give zero loss and zero gradients") {
    const NetworkConfig c = small_config(Variant::Gcn, 4, 8, 1, Activation::Sigmoid);
    const ModelContext ctx = ModelContext::build(c.variant, in.graph);
    Prng rng(4);
    const ModelParams p = init_params(c, 30, rng);
    const auto pred = forward(p, c, ctx, in.x);
    const LossAndGrads lg = loss_and_grads(p, c, ctx, in.x, pred, in.train);
    CHECK(lg.loss == 0.0);
    ModelParams g = lg.grads;
    for (const auto& t : trainable_tensors(g, c.variant))
      for (double v : t.value->values()) CHECK(v == 0.0);
  }

  SUBCASE("labels outside the training mask are ignored") {
    const NetworkConfig c = small_config(Variant::RegionGcn, 4, 8, 3, Activation::Sigmoid);
    const ModelContext ctx = ModelContext::build(c.variant, in.graph);
    Prng rng(5);
    ModelParams p = init_params(c, 30, rng);
    rgcn::testing::jitter(p, rng, 0.3);
    std::vector<double> perturbed = in.target;
    std::size_t outside = 0;
    while (std::find(in.train.begin(), in.train.end(), outside) != in.train.end()) ++outside;
    perturbed[outside] += 10.0;
    const auto a = loss_and_grads(p, c, ctx, in.x, in.target, in.train, &in.alloc);
    const auto b = loss_and_grads(p, c, ctx, in.x, perturbed, in.train, &in.alloc);
    CHECK(a.loss == b.loss);
    CHECK(a.grads == b.grads);
  }

  SUBCASE("empty training mask is rejected") {
    const NetworkConfig c = small_config(Variant::Gcn, 4, 8, 1, Activation::Sigmoid);
    const ModelContext ctx = ModelContext::build(c.variant, in.graph);
    Prng rng(6);
    const ModelParams p = init_params(c, 30, rng);
    CHECK_THROWS_AS(loss_and_grads(p, c, ctx, in.x, in.target, {}), Error);
  }

  for (Variant v : {Variant::Gcn, Variant::Gwgcn, Variant::RegionGcn, Variant::Ann,
                    Variant::BasicGcn}) {
    for (Activation tau : {Activation::Sigmoid, Activation::Relu}) {
      CAPTURE(to_string(v));
      CAPTURE(to_string(tau));
      const NetworkConfig c = small_config(v, 4, 8, 3, tau);
      const ModelContext ctx = ModelContext::build(v, in.graph);
      Prng rng(100 + static_cast<int>(v));
      ModelParams p = init_params(c, 30, rng);
      rgcn::testing::jitter(p, rng, 0.3);
      p.head.b(0, 0) = 0.5;  // keeps relu outputs mostly active
      const auto check = rgcn::testing::check_gradients(p, c, ctx, in.x, in.target, in.train,
                                                        v == Variant::RegionGcn ? &in.alloc : nullptr);
      CHECK(check.checked > 0);
      CHECK(check.max_relative_error <= 1e-4);
    }
  }
}

TEST_CASE("localized loss agrees with the full forward pass") {
  const Instance in = make_instance(100, 3, 4, 51);
  const NetworkConfig c = small_config(Variant::RegionGcn, 3, 6, 4, Activation::Sigmoid);
  const ModelContext ctx = ModelContext::build(c.variant, in.graph);
  Prng rng(52);
  ModelParams p = init_params(c, 100, rng);
  rgcn::testing::jitter(p, rng, 0.4);
  LocalizedLoss eval(p, c, ctx, in.x, in.target, in.train, in.alloc);

  const double base = mse_on(forward(p, c, ctx, in.x, &in.alloc), in.target, in.train);
  CHECK(std::abs(eval.loss() - base) <= 1e-12);

  const std::size_t node = 17;
  const std::vector<std::size_t> self{node};
  CHECK(eval.loss_if_moved(self, in.alloc[node]) == eval.loss());

  Allocation current = in.alloc;
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t i = rng.below(100);
    const std::size_t j = rng.below(4);
    const std::vector<std::size_t> moved{i};
    const double local = eval.loss_if_moved(moved, j);
    Allocation tentative = current;
    tentative.labels[i] = j;
    const double full = mse_on(forward(p, c, ctx, in.x, &tentative), in.target, in.train);
    worst = std::max(worst, std::abs(local - full));
    if (trial % 3 == 0) {
      eval.apply(moved, j);
      current = tentative;
      worst = std::max(worst, std::abs(eval.loss() - full));
    }
  }
  CHECK(worst <= 1e-10);
  CHECK(eval.allocation() == current);
}

TEST_CASE("moves far from training nodes do not change the loss") {
  // path 0-…-9 with training labels only at the far end
  const SpatialGraph g = rgcn::testing::path_graph(10);
  Prng rng(60);
  const Matrix x = random_matrix(10, 2, rng);
  std::vector<double> target(10, 0.3);
  const std::vector<std::size_t> train{8, 9};
  const Allocation alloc({0, 0, 0, 0, 0, 1, 1, 1, 1, 1}, 2);
  const NetworkConfig c = small_config(Variant::RegionGcn, 2, 3, 2, Activation::Sigmoid);
  const ModelContext ctx = ModelContext::build(c.variant, g);
  ModelParams p = init_params(c, 10, rng);
  rgcn::testing::jitter(p, rng, 0.5);
  LocalizedLoss eval(p, c, ctx, x, target, train, alloc);
  const std::vector<std::size_t> node{2};
  CHECK(eval.loss_if_moved(node, 1) == eval.loss());
}

TEST_CASE("transfer reproduces the stage-one model exactly") {
  const Instance in = make_instance(25, 3, 5, 71);
  NetworkConfig gcn = small_config(Variant::Gcn, 3, 6, 1, Activation::Sigmoid);
  Prng rng(72);
  ModelParams p = init_params(gcn, 25, rng);
  rgcn::testing::jitter(p, rng, 0.5);
  const ModelContext ctx = ModelContext::build(Variant::Gcn, in.graph);
  const auto before = forward(p, gcn, ctx, in.x);
  NetworkConfig reg = gcn;
  reg.variant = Variant::RegionGcn;
  reg.regions = 5;
  const ModelParams transferred = transfer_to_regional(p, 5);
  const auto after = forward(transferred, reg, ctx, in.x, &in.alloc);
  for (std::size_t i = 0; i < before.size(); ++i) CHECK(std::abs(before[i] - after[i]) <= 1e-12);
}

TEST_CASE("early stopping follows a scripted validation curve") {
  const std::vector<double> curve{5, 4, 3, 3.1, 3.2, 3.3, 1.0, 1.0};
  std::function<double(int&, std::size_t)> step = [&](int& state, std::size_t e) {
    state = static_cast<int>(e);
    return curve[e - 1];
  };
  const auto out = run_early_stopping<int>(0, curve.size(), 3, step);
  CHECK(out.epochs_run == 6);
  CHECK(out.best_epoch == 3);
  CHECK(out.best == 3);
  CHECK(out.best_validation == 3.0);
}

TEST_CASE("early stopping does not count epochs equal to the minimum") {
  EarlyStopping stop(2);
  CHECK(stop.observe(2.0).improved);
  CHECK_FALSE(stop.observe(2.0).stop);
  CHECK_FALSE(stop.observe(2.0).stop);
  CHECK_FALSE(stop.observe(2.5).stop);
  CHECK(stop.observe(2.5).stop);
}

namespace {

Dataset make_split_dataset(const Instance& in) {
  Dataset d;
  const std::size_t n = in.x.rows();
  for (std::size_t i = 0; i < n; ++i) d.node_ids.push_back(std::to_string(i));
  d.feature_names = {"a", "b", "c"};
  d.features = in.x;
  for (double t : in.target) d.target.emplace_back(t);
  d.roles.assign(n, Role::None);
  for (std::size_t i = 0; i < n; ++i) d.roles[i] = i % 5 < 3 ? Role::Train : (i % 5 == 3 ? Role::Validation : Role::Test);
  return d;
}

}  // namespace

TEST_CASE("training is deterministic per seed") {
  const Instance in = make_instance(40, 3, 2, 81);
  const Dataset d = make_split_dataset(in);
  TrainSpec spec;
  spec.network = small_config(Variant::Gcn, 3, 6, 1, Activation::Sigmoid);
  spec.stage1.max_epochs = 30;
  spec.stage1.learning_rate = 1e-2;
  Prng r1(9), r2(9);
  const TrainResult a = train(d, in.graph, spec, r1);
  const TrainResult b = train(d, in.graph, spec, r2);
  REQUIRE(a.log.size() == b.log.size());
  for (std::size_t k = 0; k < a.log.size(); ++k) {
    CHECK(a.log[k].train_loss == b.log[k].train_loss);
    CHECK(a.log[k].validation_loss == b.log[k].validation_loss);
  }
  CHECK(a.params == b.params);
}

TEST_CASE("regiongcn training runs both stages and keeps an allocation") {
  const Instance in = make_instance(40, 3, 2, 91);
  const Dataset d = make_split_dataset(in);
  TrainSpec spec;
  spec.network = small_config(Variant::RegionGcn, 3, 6, 3, Activation::Sigmoid);
  spec.stage1.max_epochs = 20;
  spec.stage1.learning_rate = 1e-2;
  spec.stage2.max_epochs = 20;
  spec.stage2.learning_rate = 1e-2;
  spec.stage2.region_interval = 5;
  Prng rng(10);
  const TrainResult r = train(d, in.graph, spec, rng);
  REQUIRE(r.allocation.has_value());
  CHECK(r.allocation->regions == 3);
  bool saw_stage2 = false;
  for (const auto& e : r.log) saw_stage2 |= e.stage == 2;
  CHECK(saw_stage2);

  SUBCASE("fixed allocation without zoning stays untouched") {
    TrainSpec fixed = spec;
    fixed.regions.init = RegionInit::Fixed;
    fixed.regions.adaptive = false;
    std::vector<std::size_t> labels(40);
    for (std::size_t i = 0; i < 40; ++i) labels[i] = i % 3;
    fixed.regions.fixed = Allocation(labels, 3);
    Prng rng2(10);
    const TrainResult rf = train(d, in.graph, fixed, rng2);
    CHECK(*rf.allocation == *fixed.regions.fixed);
    CHECK(rf.zoning_moves == 0);
  }
}

TEST_CASE("divergence is reported with the epoch") {
  const Instance in = make_instance(20, 3, 2, 95);
  const Dataset d = make_split_dataset(in);
  TrainSpec spec;
  spec.network = small_config(Variant::Ann, 3, 4, 1, Activation::Identity);
  spec.network.hidden = Activation::Identity;
  spec.stage1.max_epochs = 50;
  spec.stage1.learning_rate = 1e300;
  Prng rng(1);
  CHECK_THROWS_WITH_AS(train(d, in.graph, spec, rng), doctest::Contains("epoch"), Error);
}
