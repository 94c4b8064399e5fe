#include "protflow/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "protflow/error.hpp"

namespace protflow {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw Error(Errc::kShapeMismatch, "matrix data length " + std::to_string(data_.size()) +
                                          " != " + std::to_string(rows) + "x" +
                                          std::to_string(cols));
  }
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw Error(Errc::kShapeMismatch, "ragged initializer");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Matrix(r, c, std::move(data));
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Matrix::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Matrix& Matrix::operator+=(const Matrix& other) {
  if (!same_shape(other)) throw Error(Errc::kShapeMismatch, "operator+=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Matrix& Matrix::operator-=(const Matrix& other) {
  if (!same_shape(other)) throw Error(Errc::kShapeMismatch, "operator-=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

Matrix& Matrix::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
Matrix operator*(double s, Matrix a) { return a *= s; }

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw Error(Errc::kShapeMismatch, "matmul inner dimension");
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  Matrix c(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    double* ci = c.data() + i * m;
    const double* ai = a.data() + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = ai[p];
      const double* bp = b.data() + p * m;
      for (std::size_t j = 0; j < m; ++j) ci[j] += aip * bp[j];
    }
  }
  return c;
}

void matmul_tn_acc(const Matrix& a, const Matrix& b, Matrix& out) {
  if (a.rows() != b.rows() || out.rows() != a.cols() || out.cols() != b.cols()) {
    throw Error(Errc::kShapeMismatch, "matmul_tn");
  }
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  for (std::size_t r = 0; r < n; ++r) {
    const double* ar = a.data() + r * k;
    const double* br = b.data() + r * m;
    for (std::size_t i = 0; i < k; ++i) {
      const double ari = ar[i];
      double* oi = out.data() + i * m;
      for (std::size_t j = 0; j < m; ++j) oi[j] += ari * br[j];
    }
  }
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  Matrix out(a.cols(), b.cols());
  matmul_tn_acc(a, b, out);
  return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw Error(Errc::kShapeMismatch, "matmul_nt");
  const std::size_t n = a.rows(), k = a.cols(), m = b.rows();
  Matrix c(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    const double* ai = a.data() + i * k;
    for (std::size_t j = 0; j < m; ++j) {
      const double* bj = b.data() + j * k;
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += ai[p] * bj[p];
      c(i, j) = s;
    }
  }
  return c;
}

Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

double trace(const Matrix& a) {
  double s = 0.0;
  for (std::size_t i = 0; i < std::min(a.rows(), a.cols()); ++i) s += a(i, i);
  return s;
}

double frobenius_norm(const Matrix& a) {
  double s = 0.0;
  for (double v : a.values()) s += v * v;
  return std::sqrt(s);
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) throw Error(Errc::kShapeMismatch, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

Matrix slice_rows(const Matrix& a, std::size_t begin, std::size_t count) {
  if (begin + count > a.rows()) throw Error(Errc::kShapeMismatch, "slice_rows out of range");
  std::vector<double> data(a.data() + begin * a.cols(), a.data() + (begin + count) * a.cols());
  return Matrix(count, a.cols(), std::move(data));
}

// ---------------------------------------------------------------------------

std::uint64_t Rng::mix(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t Rng::next_u64() {
  ++state_.counter;
  return mix(state_.key + state_.counter * 0x9e3779b97f4a7c15ULL);
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

std::uint64_t Rng::uniform_int(std::uint64_t n) {
  if (n == 0) throw Error(Errc::kInvalidArgument, "uniform_int(0)");
  // Lemire's multiply-and-reject; exact for every n.
  std::uint64_t x = next_u64();
  unsigned __int128 m = static_cast<unsigned __int128>(x) * n;
  auto low = static_cast<std::uint64_t>(m);
  if (low < n) {
    const std::uint64_t threshold = (0 - n) % n;
    while (low < threshold) {
      x = next_u64();
      m = static_cast<unsigned __int128>(x) * n;
      low = static_cast<std::uint64_t>(m);
    }
  }
  return static_cast<std::uint64_t>(m >> 64);
}

double Rng::normal() {
  const double u1 = 1.0 - uniform();  // (0, 1]
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Rng Rng::split(std::uint64_t index) const {
  return Rng(State{mix(state_.key ^ mix(index + 0x243f6a8885a308d3ULL)), 0});
}

Rng Rng::split(std::string_view name) const {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char ch : name) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return Rng(State{mix(state_.key ^ mix(h ^ 0x13198a2e03707344ULL)), 0});
}

Matrix gaussian(Rng& rng, std::size_t rows, std::size_t cols) {
  if (rows == 0 || cols == 0) {
    throw Error(Errc::kInvalidArgument, "gaussian: dimensions must be positive");
  }
  Matrix m(rows, cols);
  for (double& v : m.values()) v = rng.normal();
  return m;
}

// ---------------------------------------------------------------------------

Moments mean_cov(const Matrix& x) {
  const std::size_t n = x.rows(), d = x.cols();
  if (n < 2) throw Error(Errc::kTooFewSamples, "mean_cov needs at least 2 rows, got " + std::to_string(n));
  Moments m{std::vector<double>(d, 0.0), Matrix(d, d)};
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < d; ++j) m.mean[j] += x(r, j);
  for (double& v : m.mean) v /= static_cast<double>(n);

  Matrix centered = x;
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < d; ++j) centered(r, j) -= m.mean[j];
  m.cov = matmul_tn(centered, centered);
  m.cov *= 1.0 / static_cast<double>(n - 1);
  // Exact symmetry regardless of accumulation order.
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = i + 1; j < d; ++j) m.cov(j, i) = m.cov(i, j);
  return m;
}

SymmetricEigen jacobi_eigen(const Matrix& s, double tol, int max_sweeps) {
  const std::size_t n = s.rows();
  if (s.cols() != n) throw Error(Errc::kShapeMismatch, "jacobi_eigen needs a square matrix");
  Matrix a = s;
  Matrix v = Matrix::identity(n);

  auto off_norm = [&] {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) sum += a(i, j) * a(i, j);
    return std::sqrt(2.0 * sum);
  };
  const double scale = std::max(frobenius_norm(a), 1e-300);

  for (int sweep = 0; sweep < max_sweeps && off_norm() > tol * scale; ++sweep) {
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (std::abs(apq) < 1e-300) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double sn = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - sn * akq;
          a(k, q) = sn * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - sn * aqk;
          a(q, k) = sn * apk + c * aqk;
        }
        a(p, q) = a(q, p) = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - sn * vkq;
          v(k, q) = sn * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return a(i, i) < a(j, j); });
  SymmetricEigen out{std::vector<double>(n), Matrix(n, n)};
  for (std::size_t j = 0; j < n; ++j) {
    out.values[j] = a(order[j], order[j]);
    for (std::size_t k = 0; k < n; ++k) out.vectors(k, j) = v(k, order[j]);
  }
  return out;
}

Matrix psd_sqrt(const Matrix& s) {
  const std::size_t n = s.rows();
  if (s.cols() != n) throw Error(Errc::kShapeMismatch, "psd_sqrt needs a square matrix");
  if (!s.all_finite()) throw Error(Errc::kNonFiniteValue, "psd_sqrt input");
  double max_abs = 0.0;
  for (double v : s.values()) max_abs = std::max(max_abs, std::abs(v));
  const double sym_tol = 1e-9 * std::max(1.0, max_abs);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (std::abs(s(i, j) - s(j, i)) > sym_tol) {
        throw Error(Errc::kNotSymmetric, "asymmetry at (" + std::to_string(i) + "," +
                                             std::to_string(j) + ")");
      }

  const SymmetricEigen eig = jacobi_eigen(s);
  const double psd_tol = 1e-6 * std::max(1.0, max_abs);
  double lambda_max = 0.0;
  for (double lambda : eig.values) lambda_max = std::max(lambda_max, std::abs(lambda));
  // Eigenvalues inside the round-off band of a zero eigenvalue are zero.
  const double noise = 4.0 * static_cast<double>(n) * std::numeric_limits<double>::epsilon() * lambda_max;
  Matrix scaled = eig.vectors;  // V * diag(sqrt(lambda))
  for (std::size_t j = 0; j < n; ++j) {
    double lambda = eig.values[j];
    if (lambda < -psd_tol) {
      throw Error(Errc::kNotPsd, "eigenvalue " + std::to_string(lambda));
    }
    const double root = lambda > noise ? std::sqrt(lambda) : 0.0;
    for (std::size_t k = 0; k < n; ++k) scaled(k, j) *= root;
  }
  Matrix r = matmul_nt(scaled, eig.vectors);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double avg = 0.5 * (r(i, j) + r(j, i));
      r(i, j) = r(j, i) = avg;
    }
  return r;
}

// ---------------------------------------------------------------------------

GradCheckResult grad_check(const GradFn& f, std::span<const double> params, double h) {
  if (!(h > 0.0)) throw Error(Errc::kInvalidArgument, "grad_check step must be positive");
  std::vector<double> x(params.begin(), params.end());
  std::vector<double> analytic(x.size(), 0.0);
  std::vector<double> scratch(x.size(), 0.0);
  const double f0 = f(x, analytic);
  if (!std::isfinite(f0)) throw Error(Errc::kNonFiniteValue, "objective at base point");

  GradCheckResult result;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(analytic[i])) {
      throw Error(Errc::kNonFiniteValue, "analytic gradient coordinate " + std::to_string(i));
    }
    const double saved = x[i];
    x[i] = saved + h;
    const double fp = f(x, scratch);
    x[i] = saved - h;
    const double fm = f(x, scratch);
    x[i] = saved;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw Error(Errc::kNonFiniteValue, "objective near coordinate " + std::to_string(i));
    }
    const double numeric = (fp - fm) / (2.0 * h);
    const double denom = std::max({std::abs(numeric), std::abs(analytic[i]), 1e-8});
    const double rel = std::abs(numeric - analytic[i]) / denom;
    if (rel > result.max_rel_error) {
      result.max_rel_error = rel;
      result.worst_index = i;
    }
  }
  return result;
}

}  // namespace protflow
