#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "graph.hpp"
#include "numerics.hpp"

namespace rgcn {

struct LinearModel {
  double intercept = 0.0;
  std::vector<double> coefficients;
  std::vector<std::string> feature_names;

  std::vector<double> predict(const Matrix& x) const;
};

/// Least squares with an intercept through Householder QR. A column that is
/// (numerically) a combination of earlier ones raises an error naming it.
LinearModel ols_fit(const Matrix& x, std::span<const double> y,
                    std::span<const std::string> names = {});

/// [X | D⁻¹A·X]
Matrix slx_augment(const SpatialGraph& g, const Matrix& x);
std::vector<std::string> slx_names(std::span<const std::string> names);

struct Metrics {
  double rmse = 0.0;
  double mae = 0.0;
  double r2 = 0.0;
};

/// R² uses the sum of squares of y_true about its own mean.
Metrics eval_metrics(std::span<const double> y_true, std::span<const double> y_pred);

struct PairedTTest {
  double mean_difference = 0.0;
  double t = 0.0;
  std::size_t df = 0;
  /// P(T ≥ t) under the null; small when `a` tends to exceed `b`.
  double p_value = 1.0;
};

/// Paired test on d = a - b with the one-sided alternative mean(d) > 0.
PairedTTest paired_t_test(std::span<const double> a, std::span<const double> b);

}  // namespace rgcn
