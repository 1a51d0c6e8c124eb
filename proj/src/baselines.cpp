#include "baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <boost/math/distributions/students_t.hpp>

#include "error.hpp"

namespace rgcn {

std::vector<double> LinearModel::predict(const Matrix& x) const {
  if (x.cols() != coefficients.size()) {
    throw dimension_mismatch("linear model expects " + std::to_string(coefficients.size()) +
                             " features, got " + std::to_string(x.cols()));
  }
  std::vector<double> out(x.rows(), intercept);
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t k = 0; k < x.cols(); ++k) out[i] += x(i, k) * coefficients[k];
  return out;
}

LinearModel ols_fit(const Matrix& x, std::span<const double> y, std::span<const std::string> names) {
  const std::size_t m = x.rows();
  const std::size_t c = x.cols() + 1;  // column 0 is the intercept
  if (y.size() != m) throw dimension_mismatch("ols: row count differs from target length");
  if (m < c) {
    throw invalid_argument("ols needs at least " + std::to_string(c) + " rows, got " +
                           std::to_string(m));
  }
  if (!names.empty() && names.size() != x.cols())
    throw dimension_mismatch("ols: feature name count differs from column count");
  auto column_name = [&](std::size_t j) {
    if (j == 0) return std::string("intercept");
    return names.empty() ? "column " + std::to_string(j - 1) : names[j - 1];
  };

  // column-major copy of [1 | X]
  std::vector<std::vector<double>> a(c, std::vector<double>(m, 1.0));
  for (std::size_t j = 1; j < c; ++j)
    for (std::size_t i = 0; i < m; ++i) a[j][i] = x(i, j - 1);
  std::vector<double> b(y.begin(), y.end());
  std::vector<double> norms(c);
  for (std::size_t j = 0; j < c; ++j) {
    double s = 0.0;
    for (double v : a[j]) s += v * v;
    norms[j] = std::sqrt(s);
  }

  std::vector<double> diag(c);
  for (std::size_t k = 0; k < c; ++k) {
    double s = 0.0;
    for (std::size_t i = k; i < m; ++i) s += a[k][i] * a[k][i];
    const double alpha = std::sqrt(s);
    if (!(alpha > 1e-10 * std::max(norms[k], 1e-300))) {
      throw invalid_argument("design matrix is rank deficient at " + column_name(k));
    }
    const double r = a[k][k] > 0 ? -alpha : alpha;
    // v = x - r e_k, stored in place
    a[k][k] -= r;
    double vnorm2 = 0.0;
    for (std::size_t i = k; i < m; ++i) vnorm2 += a[k][i] * a[k][i];
    auto reflect = [&](std::vector<double>& col) {
      double dot = 0.0;
      for (std::size_t i = k; i < m; ++i) dot += a[k][i] * col[i];
      const double f = 2.0 * dot / vnorm2;
      for (std::size_t i = k; i < m; ++i) col[i] -= f * a[k][i];
    };
    for (std::size_t j = k + 1; j < c; ++j) reflect(a[j]);
    reflect(b);
    diag[k] = r;
  }

  std::vector<double> beta(c);
  for (std::size_t k = c; k-- > 0;) {
    double s = b[k];
    for (std::size_t j = k + 1; j < c; ++j) s -= a[j][k] * beta[j];
    beta[k] = s / diag[k];
  }
  LinearModel model;
  model.intercept = beta[0];
  model.coefficients.assign(beta.begin() + 1, beta.end());
  if (!names.empty()) model.feature_names.assign(names.begin(), names.end());
  return model;
}

Matrix slx_augment(const SpatialGraph& g, const Matrix& x) {
  return hconcat(x, spmm(row_normalize(g), x));
}

std::vector<std::string> slx_names(std::span<const std::string> names) {
  std::vector<std::string> out(names.begin(), names.end());
  for (const auto& n : names) out.push_back("lag_" + n);
  return out;
}

Metrics eval_metrics(std::span<const double> y_true, std::span<const double> y_pred) {
  if (y_true.size() != y_pred.size()) throw dimension_mismatch("metrics: length mismatch");
  const std::size_t m = y_true.size();
  if (m < 2) throw invalid_argument("metrics need at least 2 values");
  double mean = 0.0;
  for (double v : y_true) mean += v;
  mean /= static_cast<double>(m);
  double sse = 0.0, sae = 0.0, sst = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double e = y_true[i] - y_pred[i];
    sse += e * e;
    sae += std::abs(e);
    sst += (y_true[i] - mean) * (y_true[i] - mean);
  }
  if (sst == 0.0) throw invalid_argument("R² is undefined for a constant target");
  Metrics out;
  out.rmse = std::sqrt(sse / static_cast<double>(m));
  out.mae = sae / static_cast<double>(m);
  out.r2 = 1.0 - sse / sst;
  return out;
}

PairedTTest paired_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw dimension_mismatch("paired test: length mismatch");
  const std::size_t k = a.size();
  if (k < 2) throw invalid_argument("paired test needs at least 2 pairs");
  std::vector<double> d(k);
  for (std::size_t i = 0; i < k; ++i) d[i] = a[i] - b[i];
  double mean = 0.0;
  for (double v : d) mean += v;
  mean /= static_cast<double>(k);
  double var = 0.0;
  for (double v : d) var += (v - mean) * (v - mean);
  var /= static_cast<double>(k - 1);

  PairedTTest out;
  out.mean_difference = mean;
  out.df = k - 1;
  if (var == 0.0) {
    out.t = mean == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), mean);
    out.p_value = mean > 0.0 ? 0.0 : (mean < 0.0 ? 1.0 : 0.5);
    return out;
  }
  out.t = mean / std::sqrt(var / static_cast<double>(k));
  const boost::math::students_t dist(static_cast<double>(out.df));
  out.p_value = boost::math::cdf(boost::math::complement(dist, out.t));
  return out;
}

}  // namespace rgcn
