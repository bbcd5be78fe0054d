#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace resadmm {

struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Basic-operation tally for the calling thread. Kernels bump it with the
// schoolbook counts used by the cost model (matmul p*r*(2q-1), etc).
struct OpCounter {
  std::uint64_t ops = 0;
};

inline OpCounter& op_counter() {
  thread_local OpCounter c;
  return c;
}

inline void count_ops(std::uint64_t k) { op_counter().ops += k; }

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) throw ShapeError("Matrix: data length does not match rows*cols");
  }
  Matrix(std::initializer_list<std::initializer_list<double>> init) {
    rows_ = init.size();
    cols_ = rows_ ? init.begin()->size() : 0;
    data_.reserve(rows_ * cols_);
    for (const auto& r : init) {
      if (r.size() != cols_) throw ShapeError("Matrix: ragged initializer");
      data_.insert(data_.end(), r.begin(), r.end());
    }
  }

  static Matrix zeros(std::size_t r, std::size_t c) { return Matrix(r, c, 0.0); }
  static Matrix ones(std::size_t r, std::size_t c) { return Matrix(r, c, 1.0); }
  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }
  static Matrix scalar(double v) { return Matrix(1, 1, v); }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }
  double& operator[](std::size_t k) { return data_[k]; }
  double operator[](std::size_t k) const { return data_[k]; }

  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }

  bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }
  bool operator==(const Matrix& o) const = default;

  std::string shape_str() const {
    std::ostringstream s;
    s << rows_ << "x" << cols_;
    return s.str();
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

namespace detail {
inline void require_same(const Matrix& a, const Matrix& b, const char* op) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
}
}  // namespace detail

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows())
    throw ShapeError("matmul: inner dimensions " + a.shape_str() + " * " + b.shape_str());
  const std::size_t p = a.rows(), q = a.cols(), r = b.cols();
  Matrix c(p, r);
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = 0; j < r; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < q; ++k) s += a(i, k) * b(k, j);
      c(i, j) = s;
    }
  if (q > 0) count_ops(static_cast<std::uint64_t>(p * r * (2 * q - 1)));
  return c;
}

inline Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

// a^T b and a b^T without materializing the transpose; same summation order as matmul.
inline Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows())
    throw ShapeError("matmul_tn: inner dimensions " + a.shape_str() + "^T * " + b.shape_str());
  const std::size_t p = a.cols(), q = a.rows(), r = b.cols();
  Matrix c(p, r);
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = 0; j < r; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < q; ++k) s += a(k, i) * b(k, j);
      c(i, j) = s;
    }
  if (q > 0) count_ops(static_cast<std::uint64_t>(p * r * (2 * q - 1)));
  return c;
}

inline Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols())
    throw ShapeError("matmul_nt: inner dimensions " + a.shape_str() + " * " + b.shape_str() + "^T");
  const std::size_t p = a.rows(), q = a.cols(), r = b.rows();
  Matrix c(p, r);
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = 0; j < r; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < q; ++k) s += a(i, k) * b(j, k);
      c(i, j) = s;
    }
  if (q > 0) count_ops(static_cast<std::uint64_t>(p * r * (2 * q - 1)));
  return c;
}

inline Matrix hadamard(const Matrix& a, const Matrix& b) {
  detail::require_same(a, b, "hadamard");
  Matrix c(a.rows(), a.cols());
  for (std::size_t k = 0; k < a.size(); ++k) c[k] = a[k] * b[k];
  count_ops(a.size());
  return c;
}

// alpha*a + b
inline Matrix axpy(double alpha, const Matrix& a, const Matrix& b) {
  detail::require_same(a, b, "axpy");
  Matrix c(a.rows(), a.cols());
  for (std::size_t k = 0; k < a.size(); ++k) c[k] = alpha * a[k] + b[k];
  count_ops(2 * a.size());
  return c;
}

inline Matrix add(const Matrix& a, const Matrix& b) {
  detail::require_same(a, b, "add");
  Matrix c(a.rows(), a.cols());
  for (std::size_t k = 0; k < a.size(); ++k) c[k] = a[k] + b[k];
  count_ops(a.size());
  return c;
}

inline Matrix sub(const Matrix& a, const Matrix& b) {
  detail::require_same(a, b, "sub");
  Matrix c(a.rows(), a.cols());
  for (std::size_t k = 0; k < a.size(); ++k) c[k] = a[k] - b[k];
  count_ops(a.size());
  return c;
}

inline Matrix scale(double alpha, const Matrix& a) {
  Matrix c(a.rows(), a.cols());
  for (std::size_t k = 0; k < a.size(); ++k) c[k] = alpha * a[k];
  count_ops(a.size());
  return c;
}

// alpha*a + beta*b
inline Matrix lincomb(double alpha, const Matrix& a, double beta, const Matrix& b) {
  detail::require_same(a, b, "lincomb");
  Matrix c(a.rows(), a.cols());
  for (std::size_t k = 0; k < a.size(); ++k) c[k] = alpha * a[k] + beta * b[k];
  count_ops(3 * a.size());
  return c;
}

template <class F>
Matrix map(const Matrix& a, F&& f) {
  Matrix c(a.rows(), a.cols());
  for (std::size_t k = 0; k < a.size(); ++k) c[k] = f(a[k]);
  count_ops(a.size());
  return c;
}

// adds s to the diagonal of a square matrix
inline Matrix add_diag(const Matrix& a, double s) {
  if (a.rows() != a.cols()) throw ShapeError("add_diag: matrix not square " + a.shape_str());
  Matrix c = a;
  for (std::size_t i = 0; i < a.rows(); ++i) c(i, i) += s;
  count_ops(a.rows());
  return c;
}

inline double inner(const Matrix& a, const Matrix& b) {
  detail::require_same(a, b, "inner");
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

inline double frob_norm_sq(const Matrix& a) { return inner(a, a); }
inline double frob_norm(const Matrix& a) { return std::sqrt(frob_norm_sq(a)); }

inline double max_abs(const Matrix& a) {
  double m = 0.0;
  for (double v : a.data()) m = std::max(m, std::abs(v));
  return m;
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
  detail::require_same(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, std::abs(a[k] - b[k]));
  return m;
}

inline bool all_finite(const Matrix& a) {
  for (double v : a.data())
    if (!std::isfinite(v)) return false;
  return true;
}

// Lower Cholesky factor of a symmetric positive definite matrix.
inline Matrix cholesky(const Matrix& a) {
  const std::size_t n = a.rows();
  if (a.cols() != n) throw ShapeError("cholesky: matrix not square " + a.shape_str());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < i; ++j)
      if (std::abs(a(i, j) - a(j, i)) > 1e-12 * (1.0 + std::abs(a(i, j))))
        throw NumericalError("cholesky: matrix not symmetric at (" + std::to_string(i) + "," +
                             std::to_string(j) + ")");
  Matrix l(n, n);
  std::uint64_t ops = 0;
  for (std::size_t j = 0; j < n; ++j) {
    double d = a(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    ops += 2 * j + 1;
    if (!(d > 0.0) || !std::isfinite(d)) {
      std::ostringstream m;
      m << "cholesky: non-positive pivot " << d << " at index " << j;
      throw NumericalError(m.str());
    }
    const double ljj = std::sqrt(d);
    l(j, j) = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / ljj;
      ops += 2 * j + 1;
    }
  }
  count_ops(ops);
  return l;
}

// Solves A X = B for SPD A.
inline Matrix spd_solve(const Matrix& a, const Matrix& b) {
  if (b.rows() != a.rows()) throw ShapeError("spd_solve: rhs " + b.shape_str() + " vs " + a.shape_str());
  const Matrix l = cholesky(a);
  const std::size_t n = a.rows(), m = b.cols();
  Matrix x = b;
  for (std::size_t c = 0; c < m; ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      double s = x(i, c);
      for (std::size_t k = 0; k < i; ++k) s -= l(i, k) * x(k, c);
      x(i, c) = s / l(i, i);
    }
    for (std::size_t ii = n; ii-- > 0;) {
      double s = x(ii, c);
      for (std::size_t k = ii + 1; k < n; ++k) s -= l(k, ii) * x(k, c);
      x(ii, c) = s / l(ii, ii);
    }
  }
  count_ops(static_cast<std::uint64_t>(2 * n * n * m));
  return x;
}

// Solves X A = B for SPD A (the W-update shape), via A X^T = B^T.
inline Matrix spd_solve_right(const Matrix& b, const Matrix& a) {
  return transpose(spd_solve(a, transpose(b)));
}

}  // namespace resadmm
