#include "fixtures.hpp"

#include <unistd.h>

#include <algorithm>
#include <cmath>

namespace rgcn::testing {

TempDir::TempDir(const std::string& tag) {
  static int counter = 0;
  path = std::filesystem::temp_directory_path() /
         (tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  std::filesystem::remove_all(path);
  std::filesystem::create_directories(path);
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path, ec);
}

Matrix random_matrix(std::size_t rows, std::size_t cols, Prng& rng, double scale) {
  Matrix m(rows, cols);
  for (double& v : m.values()) v = scale * rng.uniform(-1.0, 1.0);
  return m;
}

SpatialGraph random_connected_graph(std::size_t n, std::size_t extra, Prng& rng, bool weighted) {
  std::vector<Edge> edges;
  std::vector<std::vector<char>> present(n, std::vector<char>(n, 0));
  auto add = [&](std::size_t a, std::size_t b) {
    if (a == b || present[a][b]) return;
    present[a][b] = present[b][a] = 1;
    Edge e{a, b, std::nullopt};
    if (weighted) e.weight = 0.5 + rng.uniform();
    edges.push_back(e);
  };
  for (std::size_t v = 1; v < n; ++v) add(v, rng.below(v));
  for (std::size_t k = 0; k < extra; ++k) add(rng.below(n), rng.below(n));
  return from_edge_list(n, edges);
}

SpatialGraph path_graph(std::size_t n) {
  std::vector<Edge> edges;
  for (std::size_t i = 0; i + 1 < n; ++i) edges.push_back({i, i + 1, std::nullopt});
  return from_edge_list(n, edges);
}

void jitter(ModelParams& params, Prng& rng, double scale) {
  auto shake = [&](Matrix& m) {
    for (double& v : m.values()) v += scale * rng.uniform(-1.0, 1.0);
  };
  for (auto& l : params.layers) {
    shake(l.theta);
    shake(l.phi);
    shake(l.psi);
  }
  for (auto& r : params.regional) {
    shake(r.omega);
    shake(r.psi);
  }
  for (auto& w : params.local) shake(w.omega);
  shake(params.head.u);
  shake(params.head.b);
}

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

namespace {

// signs of every relu pre-activation; a change between the two probes means
// the difference quotient straddles a kink
std::vector<char> relu_pattern(const ForwardTrace& trace, const NetworkConfig& config) {
  std::vector<char> out;
  if (config.hidden == Activation::Relu)
    for (const auto& layer : trace.layers)
      for (double v : layer.pre_activation.values()) out.push_back(v > 0.0);
  if (config.output == Activation::Relu)
    for (double v : trace.head_pre.values()) out.push_back(v > 0.0);
  return out;
}

}  // namespace

GradientCheck check_gradients(const ModelParams& params, const NetworkConfig& config,
                              const ModelContext& ctx, const Matrix& x,
                              const std::vector<double>& target,
                              const std::vector<std::size_t>& train, const Allocation* alloc,
                              double h) {
  const LossAndGrads lg = loss_and_grads(params, config, ctx, x, target, train, alloc);
  ModelParams probe = params;
  ModelParams grads = lg.grads;
  auto tensors = trainable_tensors(probe, config.variant);
  auto analytic = trainable_tensors(grads, config.variant);
  GradientCheck out;
  for (std::size_t t = 0; t < tensors.size(); ++t) {
    auto& values = tensors[t].value->values();
    for (std::size_t k = 0; k < values.size(); ++k) {
      const double saved = values[k];
      values[k] = saved + h;
      const ForwardTrace up = forward_trace(probe, config, ctx, x, alloc);
      values[k] = saved - h;
      const ForwardTrace down = forward_trace(probe, config, ctx, x, alloc);
      values[k] = saved;
      if (relu_pattern(up, config) != relu_pattern(down, config)) {
        ++out.kinks;
        continue;
      }
      const double numeric = (mse_on(up.predictions.values(), target, train) -
                              mse_on(down.predictions.values(), target, train)) /
                             (2.0 * h);
      out.max_relative_error = std::max(
          out.max_relative_error, relative_error(analytic[t].value->values()[k], numeric));
      ++out.checked;
    }
  }
  return out;
}

}  // namespace rgcn::testing
