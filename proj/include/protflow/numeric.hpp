#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <string_view>
#include <vector>

namespace protflow {

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Matrix identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }

  void fill(double v);
  bool all_finite() const noexcept;
  bool same_shape(const Matrix& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  Matrix& operator+=(const Matrix& other);
  Matrix& operator-=(const Matrix& other);
  Matrix& operator*=(double s);

  friend bool operator==(const Matrix& a, const Matrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(double s, Matrix a);

/// a * b
Matrix matmul(const Matrix& a, const Matrix& b);
/// a^T * b
Matrix matmul_tn(const Matrix& a, const Matrix& b);
/// a * b^T
Matrix matmul_nt(const Matrix& a, const Matrix& b);
/// out += a^T * b, shapes must already agree.
void matmul_tn_acc(const Matrix& a, const Matrix& b, Matrix& out);

Matrix transpose(const Matrix& a);
double trace(const Matrix& a);
double frobenius_norm(const Matrix& a);
double max_abs_diff(const Matrix& a, const Matrix& b);
/// Rows [begin, begin + count) as a new matrix.
Matrix slice_rows(const Matrix& a, std::size_t begin, std::size_t count);

// ---------------------------------------------------------------------------
// Random numbers

/// Counter-based generator: draw i is a pure function of (key, i), so any
/// stream position can be reproduced and child streams split off by name or
/// index without consuming draws from the parent.
class Rng {
 public:
  struct State {
    std::uint64_t key = 0;
    std::uint64_t counter = 0;
  };

  explicit Rng(std::uint64_t seed = 0) : state_{mix(seed ^ 0x6a09e667f3bcc908ULL), 0} {}
  explicit Rng(State state) : state_(state) {}

  std::uint64_t next_u64();
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  /// Uniform integer on [0, n). n must be positive.
  std::uint64_t uniform_int(std::uint64_t n);
  /// Standard normal via Box-Muller; consumes two raw draws per value.
  double normal();

  Rng split(std::uint64_t index) const;
  Rng split(std::string_view name) const;

  State state() const noexcept { return state_; }

  static std::uint64_t mix(std::uint64_t z);

 private:
  State state_;
};

/// I.i.d. standard normal matrix. Dimensions must be positive.
Matrix gaussian(Rng& rng, std::size_t rows, std::size_t cols);

// ---------------------------------------------------------------------------
// Moments and symmetric linear algebra

struct Moments {
  std::vector<double> mean;
  Matrix cov;
};

/// Sample mean and unbiased (n - 1) covariance of the rows of x.
Moments mean_cov(const Matrix& x);

struct SymmetricEigen {
  std::vector<double> values;  // ascending
  Matrix vectors;              // column j is the eigenvector for values[j]
};

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
SymmetricEigen jacobi_eigen(const Matrix& s, double tol = 1e-14, int max_sweeps = 100);

/// Principal square root of a symmetric positive semi-definite matrix.
/// Eigenvalues in [-1e-6, 0) are clamped to zero; anything below is NotPSD.
Matrix psd_sqrt(const Matrix& s);

// ---------------------------------------------------------------------------
// Gradient checking

/// Objective returning f(params) and writing df/dparams into grad.
using GradFn = std::function<double(std::span<const double> params, std::span<double> grad)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
};

/// Compares the analytic gradient against central differences coordinate by
/// coordinate. Relative error uses max(|a|, |b|, 1e-8) as denominator.
GradCheckResult grad_check(const GradFn& f, std::span<const double> params, double h = 1e-5);

}  // namespace protflow
