#include "numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "error.hpp"

namespace rgcn {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (values_.size() != rows * cols) {
    throw dimension_mismatch("matrix value count " + std::to_string(values_.size()) +
                             " does not match shape " + std::to_string(rows) + "x" +
                             std::to_string(cols));
  }
}

Matrix Matrix::from_rows(const std::vector<std::vector<double>>& rows) {
  const std::size_t cols = rows.empty() ? 0 : rows.front().size();
  Matrix m(rows.size(), cols);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != cols) throw dimension_mismatch("ragged rows");
    std::copy(rows[r].begin(), rows[r].end(), m.row(r).begin());
  }
  return m;
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::column(std::span<const double> values) {
  return Matrix(values.size(), 1, std::vector<double>(values.begin(), values.end()));
}

Matrix Matrix::transposed() const {
  Matrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

std::vector<double> Matrix::column_values(std::size_t c) const {
  std::vector<double> out(rows_);
  for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
  return out;
}

bool Matrix::all_finite() const noexcept {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

SparseMatrix::SparseMatrix(std::size_t n, std::vector<std::size_t> offsets,
                           std::vector<std::size_t> columns, std::vector<double> values)
    : n_(n), offsets_(std::move(offsets)), columns_(std::move(columns)), values_(std::move(values)) {
  if (offsets_.size() != n_ + 1 || offsets_.front() != 0 || offsets_.back() != columns_.size() ||
      columns_.size() != values_.size()) {
    throw invalid_argument("inconsistent compressed-row arrays");
  }
  for (std::size_t r = 0; r < n_; ++r) {
    if (offsets_[r] > offsets_[r + 1]) throw invalid_argument("row offsets must be non-decreasing");
    for (std::size_t k = offsets_[r]; k < offsets_[r + 1]; ++k) {
      if (columns_[k] >= n_) throw invalid_argument("column index out of range");
      if (k > offsets_[r] && columns_[k] <= columns_[k - 1]) {
        throw invalid_argument("column indices must be strictly increasing within a row");
      }
      if (!std::isfinite(values_[k])) throw numeric_error("non-finite sparse value");
    }
  }
}

SparseMatrix SparseMatrix::from_triplets(std::size_t n, std::vector<Entry> entries) {
  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });
  std::vector<std::size_t> counts(n + 1, 0);
  std::vector<std::size_t> columns;
  std::vector<double> values;
  columns.reserve(entries.size());
  values.reserve(entries.size());
  for (std::size_t k = 0; k < entries.size(); ++k) {
    const Entry& e = entries[k];
    if (e.row >= n || e.col >= n) throw invalid_argument("triplet index out of range");
    if (k > 0 && entries[k - 1].row == e.row && entries[k - 1].col == e.col) {
      values.back() += e.value;
      continue;
    }
    columns.push_back(e.col);
    values.push_back(e.value);
    counts[e.row + 1] += 1;
  }
  for (std::size_t r = 0; r < n; ++r) counts[r + 1] += counts[r];
  return SparseMatrix(n, std::move(counts), std::move(columns), std::move(values));
}

double SparseMatrix::at(std::size_t r, std::size_t c) const noexcept {
  const auto cols = row_columns(r);
  const auto it = std::lower_bound(cols.begin(), cols.end(), c);
  if (it == cols.end() || *it != c) return 0.0;
  return values_[offsets_[r] + static_cast<std::size_t>(it - cols.begin())];
}

SparseMatrix SparseMatrix::transposed() const {
  std::vector<Entry> entries;
  entries.reserve(nonzeros());
  for (std::size_t r = 0; r < n_; ++r)
    for (std::size_t k = offsets_[r]; k < offsets_[r + 1]; ++k)
      entries.push_back({columns_[k], r, values_[k]});
  return from_triplets(n_, std::move(entries));
}

Matrix SparseMatrix::to_dense() const {
  Matrix d(n_, n_);
  for (std::size_t r = 0; r < n_; ++r)
    for (std::size_t k = offsets_[r]; k < offsets_[r + 1]; ++k) d(r, columns_[k]) = values_[k];
  return d;
}

Matrix spmm(const SparseMatrix& a, const Matrix& x) {
  if (a.n() != x.rows()) {
    throw dimension_mismatch("spmm: sparse is " + std::to_string(a.n()) + "x" +
                             std::to_string(a.n()) + ", dense has " + std::to_string(x.rows()) +
                             " rows");
  }
  Matrix out(a.n(), x.cols());
  for (std::size_t r = 0; r < a.n(); ++r) {
    auto dst = out.row(r);
    const auto cols = a.row_columns(r);
    const auto vals = a.row_values(r);
    for (std::size_t k = 0; k < cols.size(); ++k) {
      const auto src = x.row(cols[k]);
      for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += vals[k] * src[c];
    }
  }
  return out;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw dimension_mismatch("matmul: " + std::to_string(a.rows()) + "x" +
                             std::to_string(a.cols()) + " times " + std::to_string(b.rows()) +
                             "x" + std::to_string(b.cols()));
  }
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto dst = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      const auto src = b.row(k);
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += aik * src[j];
    }
  }
  return out;
}

Matrix matmul_at_b(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw dimension_mismatch("matmul_at_b: row counts differ");
  Matrix out(a.cols(), b.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const auto ar = a.row(r);
    const auto br = b.row(r);
    for (std::size_t i = 0; i < ar.size(); ++i) {
      if (ar[i] == 0.0) continue;
      auto dst = out.row(i);
      for (std::size_t j = 0; j < br.size(); ++j) dst[j] += ar[i] * br[j];
    }
  }
  return out;
}

Matrix matmul_a_bt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw dimension_mismatch("matmul_a_bt: column counts differ");
  Matrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const auto ar = a.row(i);
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const auto br = b.row(j);
      double s = 0.0;
      for (std::size_t k = 0; k < ar.size(); ++k) s += ar[k] * br[k];
      out(i, j) = s;
    }
  }
  return out;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw dimension_mismatch("hadamard: shapes differ");
  }
  Matrix out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.values()[i] *= b.values()[i];
  return out;
}

Matrix hconcat(const Matrix& left, const Matrix& right) {
  if (left.rows() != right.rows()) {
    throw dimension_mismatch("hconcat: row counts " + std::to_string(left.rows()) + " and " +
                             std::to_string(right.rows()));
  }
  Matrix out(left.rows(), left.cols() + right.cols());
  for (std::size_t r = 0; r < left.rows(); ++r) {
    auto dst = out.row(r);
    std::copy(left.row(r).begin(), left.row(r).end(), dst.begin());
    std::copy(right.row(r).begin(), right.row(r).end(), dst.begin() + left.cols());
  }
  return out;
}

Matrix column_sums(const Matrix& a) {
  Matrix out(1, a.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const auto src = a.row(r);
    for (std::size_t c = 0; c < src.size(); ++c) out(0, c) += src[c];
  }
  return out;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw dimension_mismatch("max_abs_diff: shapes differ");
  }
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a.values()[i] - b.values()[i]));
  return m;
}

double activate(double x, Activation kind) noexcept {
  switch (kind) {
    case Activation::Relu:
      return x > 0.0 ? x : 0.0;
    case Activation::Sigmoid:
      // split by sign so exp never overflows
      if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
      {
        const double e = std::exp(x);
        return e / (1.0 + e);
      }
    case Activation::Identity:
      return x;
  }
  return x;
}

double activate_grad(double x, Activation kind) noexcept {
  switch (kind) {
    case Activation::Relu:
      return x > 0.0 ? 1.0 : 0.0;
    case Activation::Sigmoid: {
      const double s = activate(x, Activation::Sigmoid);
      return s * (1.0 - s);
    }
    case Activation::Identity:
      return 1.0;
  }
  return 1.0;
}

Matrix activation(const Matrix& x, Activation kind) {
  Matrix out = x;
  for (double& v : out.values()) v = activate(v, kind);
  return out;
}

Matrix activation_grad(const Matrix& x, Activation kind) {
  Matrix out = x;
  for (double& v : out.values()) v = activate_grad(v, kind);
  return out;
}

std::string_view to_string(Activation kind) noexcept {
  switch (kind) {
    case Activation::Relu:
      return "relu";
    case Activation::Sigmoid:
      return "sigmoid";
    case Activation::Identity:
      return "identity";
  }
  return "identity";
}

Activation activation_from_string(std::string_view name) {
  if (name == "relu") return Activation::Relu;
  if (name == "sigmoid") return Activation::Sigmoid;
  if (name == "identity" || name == "linear") return Activation::Identity;
  throw invalid_argument("unknown activation '" + std::string(name) + "'");
}

void adam_step(Matrix& params, const Matrix& grads, AdamState& state, double lr,
               double weight_decay) {
  const std::size_t n = params.size();
  if (grads.rows() != params.rows() || grads.cols() != params.cols()) {
    throw dimension_mismatch("adam_step: gradient shape differs from parameter shape");
  }
  if (state.m.size() != n || state.v.size() != n) {
    throw dimension_mismatch("adam_step: optimizer state has wrong size");
  }
  for (double g : grads.values()) {
    if (!std::isfinite(g)) throw numeric_error("adam_step: non-finite gradient");
  }
  state.t += 1;
  const double t = static_cast<double>(state.t);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);
  auto& p = params.values();
  const auto& g = grads.values();
  for (std::size_t i = 0; i < n; ++i) {
    const double gi = g[i] + weight_decay * p[i];
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * gi;
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * gi * gi;
    const double m_hat = state.m[i] / correction1;
    const double v_hat = state.v[i] / correction2;
    p[i] -= lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
  }
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t mix_seed(std::uint64_t seed, std::string_view label, std::uint64_t index) {
  // FNV-1a over the label
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (char c : label) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  return splitmix64(splitmix64(seed ^ h) + index);
}

double Prng::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

std::size_t Prng::below(std::size_t bound) {
  if (bound == 0) throw invalid_argument("Prng::below requires a positive bound");
  // rejection sampling keeps the draw unbiased
  const std::uint64_t b = bound;
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % b;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return static_cast<std::size_t>(x % b);
}

double Prng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  // Box-Muller; 1 - u keeps the log argument in (0, 1]
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

Prng Prng::substream(std::string_view label, std::uint64_t index) const {
  return Prng(mix_seed(seed_, label, index));
}

}  // namespace rgcn
