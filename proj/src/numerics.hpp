#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <vector>

namespace rgcn {

/// Row-major dense matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), values_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  static Matrix from_rows(const std::vector<std::vector<double>>& rows);
  static Matrix identity(std::size_t n);
  static Matrix column(std::span<const double> values);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  double& operator()(std::size_t r, std::size_t c) noexcept { return values_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept {
    return values_[r * cols_ + c];
  }

  std::span<double> row(std::size_t r) noexcept { return {values_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept {
    return {values_.data() + r * cols_, cols_};
  }

  std::vector<double>& values() noexcept { return values_; }
  const std::vector<double>& values() const noexcept { return values_; }

  Matrix transposed() const;
  std::vector<double> column_values(std::size_t c) const;
  bool all_finite() const noexcept;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

/// Square sparse matrix in compressed-row layout.
class SparseMatrix {
 public:
  struct Entry {
    std::size_t row;
    std::size_t col;
    double value;
  };

  SparseMatrix() = default;
  explicit SparseMatrix(std::size_t n) : n_(n), offsets_(n + 1, 0) {}
  /// Validates offsets and strictly increasing column indices per row.
  SparseMatrix(std::size_t n, std::vector<std::size_t> offsets, std::vector<std::size_t> columns,
               std::vector<double> values);

  /// Builds from unordered triplets; duplicate coordinates are summed.
  static SparseMatrix from_triplets(std::size_t n, std::vector<Entry> entries);

  std::size_t n() const noexcept { return n_; }
  std::size_t nonzeros() const noexcept { return columns_.size(); }
  const std::vector<std::size_t>& offsets() const noexcept { return offsets_; }
  const std::vector<std::size_t>& columns() const noexcept { return columns_; }
  const std::vector<double>& values() const noexcept { return values_; }

  std::span<const std::size_t> row_columns(std::size_t r) const noexcept {
    return {columns_.data() + offsets_[r], offsets_[r + 1] - offsets_[r]};
  }
  std::span<const double> row_values(std::size_t r) const noexcept {
    return {values_.data() + offsets_[r], offsets_[r + 1] - offsets_[r]};
  }

  double at(std::size_t r, std::size_t c) const noexcept;
  SparseMatrix transposed() const;
  Matrix to_dense() const;

 private:
  std::size_t n_ = 0;
  std::vector<std::size_t> offsets_{0};
  std::vector<std::size_t> columns_;
  std::vector<double> values_;
};

Matrix spmm(const SparseMatrix& a, const Matrix& x);
Matrix matmul(const Matrix& a, const Matrix& b);
/// aᵀ·b without materializing the transpose.
Matrix matmul_at_b(const Matrix& a, const Matrix& b);
/// a·bᵀ without materializing the transpose.
Matrix matmul_a_bt(const Matrix& a, const Matrix& b);
Matrix hadamard(const Matrix& a, const Matrix& b);
Matrix hconcat(const Matrix& left, const Matrix& right);
/// Sum over rows, returned as a 1×cols matrix.
Matrix column_sums(const Matrix& a);
double max_abs_diff(const Matrix& a, const Matrix& b);

enum class Activation { Relu, Sigmoid, Identity };

double activate(double x, Activation kind) noexcept;
/// Derivative at the pre-activation value; relu'(0) is 0.
double activate_grad(double x, Activation kind) noexcept;
Matrix activation(const Matrix& x, Activation kind);
Matrix activation_grad(const Matrix& x, Activation kind);

std::string_view to_string(Activation kind) noexcept;
Activation activation_from_string(std::string_view name);

/// Adam moments for one parameter tensor.
struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  AdamState() = default;
  explicit AdamState(std::size_t size) : m(size, 0.0), v(size, 0.0) {}
};

/// One Adam step with coupled L2: the decay term is added to the gradient
/// before the moment updates. Throws on non-finite gradients.
void adam_step(Matrix& params, const Matrix& grads, AdamState& state, double lr,
               double weight_decay);

/// Seedable 64-bit generator (mt19937_64) with portable uniform and normal
/// draws. Sub-streams are derived from a master seed and a label.
class Prng {
 public:
  explicit Prng(std::uint64_t seed = 0) : engine_(seed), seed_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, bound); bound must be positive.
  std::size_t below(std::size_t bound);
  double normal();

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[below(i)]);
    }
  }

  /// Independent stream keyed by label (e.g. "split", "init", "walks").
  Prng substream(std::string_view label, std::uint64_t index = 0) const;

  /// The first n values of a stream are a pure function of the seed.
  friend bool operator==(const Prng& a, const Prng& b) { return a.engine_ == b.engine_; }

 private:
  std::mt19937_64 engine_;
  std::uint64_t seed_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t mix_seed(std::uint64_t seed, std::string_view label, std::uint64_t index = 0);

}  // namespace rgcn
