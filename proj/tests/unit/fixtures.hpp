#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "data.hpp"
#include "graph.hpp"
#include "model.hpp"
#include "numerics.hpp"
#include "regions.hpp"

namespace rgcn::testing {

/// Fresh directory under the system temp dir, removed on destruction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag = "rgcn");
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

Matrix random_matrix(std::size_t rows, std::size_t cols, Prng& rng, double scale = 1.0);

/// Connected random graph: a random spanning tree plus `extra` random edges.
SpatialGraph random_connected_graph(std::size_t n, std::size_t extra, Prng& rng,
                                    bool weighted = false);

SpatialGraph path_graph(std::size_t n);

/// Perturbs every parameter of a freshly initialized model so that region
/// rows, biases and local weights are all distinct.
void jitter(ModelParams& params, Prng& rng, double scale);

/// Max relative error |a - f| / max(|a|, |f|, floor).
double relative_error(double analytic, double numeric, double floor = 1e-6);

struct GradientCheck {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  /// Entries skipped because the ±h probes fall on different sides of a relu kink.
  std::size_t kinks = 0;
};

/// Compares every trainable gradient entry against central differences.
/// Entries whose probes cross a relu kink are counted, not compared.
GradientCheck check_gradients(const ModelParams& params, const NetworkConfig& config,
                              const ModelContext& ctx, const Matrix& x,
                              const std::vector<double>& target,
                              const std::vector<std::size_t>& train, const Allocation* alloc,
                              double h = 1e-5);

}  // namespace rgcn::testing
