// Copyright 2026 The jna Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

/// Dense double-precision vectors and matrices plus the handful of
/// elementwise and BLAS-1/2 style operations the rest of the library
/// is built from. Row-major storage throughout.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace jna {

class DimensionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class StateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NormalizationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a training loop encounters a non-finite value.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Vector {
 public:
  Vector() = default;
  explicit Vector(std::size_t dim, double fill = 0.0) : data_(dim, fill) {}
  Vector(std::initializer_list<double> init) : data_(init) {}

  std::size_t dim() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> span() { return {data_.data(), data_.size()}; }
  std::span<const double> span() const { return {data_.data(), data_.size()}; }

  auto begin() { return data_.begin(); }
  auto end() { return data_.end(); }
  auto begin() const { return data_.begin(); }
  auto end() const { return data_.end(); }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

 private:
  std::vector<double> data_;
};

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    Matrix m(rows.size(), rows.size() ? rows.begin()->size() : 0);
    std::size_t i = 0;
    for (const auto& row : rows) {
      if (row.size() != m.cols_) throw DimensionError("from_rows: ragged initializer");
      std::copy(row.begin(), row.end(), m.data_.begin() + static_cast<std::ptrdiff_t>(i * m.cols_));
      ++i;
    }
    return m;
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> span() { return {data_.data(), data_.size()}; }
  std::span<const double> span() const { return {data_.data(), data_.size()}; }

  std::span<double> row_span(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row_span(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  Vector row_vec(std::size_t r) const {
    Vector v(cols_);
    std::copy_n(data_.data() + r * cols_, cols_, v.data());
    return v;
  }

  void set_row(std::size_t r, const Vector& v) {
    if (v.dim() != cols_) throw DimensionError("set_row: length " + std::to_string(v.dim()) +
                                               " vs " + std::to_string(cols_) + " cols");
    std::copy_n(v.data(), cols_, data_.data() + r * cols_);
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;  // row-major
};

inline std::string shape_str(const Matrix& m) {
  return "(" + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + ")";
}

// ---- vector ops ----

inline void require_same_dim(const Vector& a, const Vector& b, const char* op) {
  if (a.dim() != b.dim())
    throw DimensionError(std::string(op) + ": dims " + std::to_string(a.dim()) + " vs " +
                         std::to_string(b.dim()));
}

inline double dot(const Vector& a, const Vector& b) {
  require_same_dim(a, b, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) s += a[i] * b[i];
  return s;
}

inline Vector add(const Vector& a, const Vector& b) {
  require_same_dim(a, b, "add");
  Vector out(a.dim());
  for (std::size_t i = 0; i < a.dim(); ++i) out[i] = a[i] + b[i];
  return out;
}

inline Vector sub(const Vector& a, const Vector& b) {
  require_same_dim(a, b, "sub");
  Vector out(a.dim());
  for (std::size_t i = 0; i < a.dim(); ++i) out[i] = a[i] - b[i];
  return out;
}

inline Vector scale(const Vector& a, double c) {
  Vector out(a.dim());
  for (std::size_t i = 0; i < a.dim(); ++i) out[i] = a[i] * c;
  return out;
}

inline Vector hadamard(const Vector& a, const Vector& b) {
  require_same_dim(a, b, "hadamard");
  Vector out(a.dim());
  for (std::size_t i = 0; i < a.dim(); ++i) out[i] = a[i] * b[i];
  return out;
}

/// y += c * x
inline void axpy(double c, const Vector& x, Vector& y) {
  require_same_dim(x, y, "axpy");
  for (std::size_t i = 0; i < x.dim(); ++i) y[i] += c * x[i];
}

inline double sum(const Vector& a) {
  double s = 0.0;
  for (double v : a) s += v;
  return s;
}

inline double l2_norm(const Vector& a) { return std::sqrt(dot(a, a)); }

inline Vector l2_normalize(const Vector& a) {
  double n = l2_norm(a);
  if (n == 0.0) throw NormalizationError("l2_normalize: zero vector");
  return scale(a, 1.0 / n);
}

inline std::size_t argmax(const Vector& a) {
  if (a.empty()) throw std::invalid_argument("argmax: empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < a.dim(); ++i)
    if (a[i] > a[best]) best = i;
  return best;
}

// ---- elementwise maps ----

inline Vector tanh_map(const Vector& x) {
  Vector out(x.dim());
  for (std::size_t i = 0; i < x.dim(); ++i) out[i] = std::tanh(x[i]);
  return out;
}

inline Matrix tanh_map(const Matrix& x) {
  Matrix out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) out.data()[i] = std::tanh(x.data()[i]);
  return out;
}

inline Vector sigmoid_map(const Vector& x) {
  Vector out(x.dim());
  for (std::size_t i = 0; i < x.dim(); ++i) out[i] = 1.0 / (1.0 + std::exp(-x[i]));
  return out;
}

/// Softmax with max-subtraction. Output is strictly positive and sums to 1.
inline Vector softmax(const Vector& x) {
  if (x.empty()) throw std::invalid_argument("softmax: empty input");
  double m = x[0];
  for (double v : x) m = std::max(m, v);
  Vector out(x.dim());
  double denom = 0.0;
  for (std::size_t i = 0; i < x.dim(); ++i) {
    out[i] = std::exp(x[i] - m);
    denom += out[i];
  }
  for (std::size_t i = 0; i < x.dim(); ++i) out[i] /= denom;
  return out;
}

/// Gradient of softmax: given y = softmax(x) and dL/dy, returns dL/dx.
inline Vector softmax_backward(const Vector& y, const Vector& dy) {
  require_same_dim(y, dy, "softmax_backward");
  double s = 0.0;
  for (std::size_t i = 0; i < y.dim(); ++i) s += y[i] * dy[i];
  Vector dx(y.dim());
  for (std::size_t i = 0; i < y.dim(); ++i) dx[i] = y[i] * (dy[i] - s);
  return dx;
}

// ---- matrix ops ----

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows())
    throw DimensionError("matmul: inner dimensions differ, " + shape_str(a) + " x " + shape_str(b));
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      double aik = a(i, k);
      const auto brow = b.row_span(k);
      auto orow = out.row_span(i);
      for (std::size_t j = 0; j < b.cols(); ++j) orow[j] += aik * brow[j];
    }
  }
  return out;
}

inline Matrix transpose(const Matrix& a) {
  Matrix out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

/// A * x
inline Vector matvec(const Matrix& a, const Vector& x) {
  if (a.cols() != x.dim())
    throw DimensionError("matvec: " + shape_str(a) + " x vector(" + std::to_string(x.dim()) + ")");
  Vector out(a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const auto row = a.row_span(i);
    double s = 0.0;
    for (std::size_t j = 0; j < a.cols(); ++j) s += row[j] * x[j];
    out[i] = s;
  }
  return out;
}

/// acc += A * x
inline void add_matvec(const Matrix& a, const Vector& x, Vector& acc) {
  if (a.cols() != x.dim() || a.rows() != acc.dim())
    throw DimensionError("add_matvec: " + shape_str(a) + " with vectors " +
                         std::to_string(x.dim()) + ", " + std::to_string(acc.dim()));
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const auto row = a.row_span(i);
    double s = 0.0;
    for (std::size_t j = 0; j < a.cols(); ++j) s += row[j] * x[j];
    acc[i] += s;
  }
}

/// A^T * x
inline Vector matvec_t(const Matrix& a, const Vector& x) {
  if (a.rows() != x.dim())
    throw DimensionError("matvec_t: " + shape_str(a) + "^T x vector(" + std::to_string(x.dim()) + ")");
  Vector out(a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const auto row = a.row_span(i);
    double xi = x[i];
    for (std::size_t j = 0; j < a.cols(); ++j) out[j] += xi * row[j];
  }
  return out;
}

/// acc += A^T * x
inline void add_matvec_t(const Matrix& a, const Vector& x, Vector& acc) {
  if (a.rows() != x.dim() || a.cols() != acc.dim())
    throw DimensionError("add_matvec_t: " + shape_str(a) + " with vectors " +
                         std::to_string(x.dim()) + ", " + std::to_string(acc.dim()));
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const auto row = a.row_span(i);
    double xi = x[i];
    for (std::size_t j = 0; j < a.cols(); ++j) acc[j] += xi * row[j];
  }
}

/// acc += u * v^T
inline void add_outer(Matrix& acc, const Vector& u, const Vector& v) {
  if (acc.rows() != u.dim() || acc.cols() != v.dim())
    throw DimensionError("add_outer: " + shape_str(acc) + " += (" + std::to_string(u.dim()) +
                         ")(" + std::to_string(v.dim()) + ")^T");
  for (std::size_t i = 0; i < u.dim(); ++i) {
    auto row = acc.row_span(i);
    double ui = u[i];
    for (std::size_t j = 0; j < v.dim(); ++j) row[j] += ui * v[j];
  }
}

inline bool all_finite(std::span<const double> xs) {
  for (double v : xs)
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace jna
