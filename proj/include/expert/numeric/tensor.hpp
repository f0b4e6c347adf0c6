// Copyright 2026 The EXPERT Authors.
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

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace expert {

using Scalar = double;

// Thrown when operand extents are incompatible.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Thrown when a value that must be finite is NaN or infinite.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dense row-major matrix. Vectors are stored as 1 x n.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, Scalar fill = 0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Tensor(std::size_t rows, std::size_t cols, std::vector<Scalar> values)
      : rows_(rows), cols_(cols), data_(std::move(values)) {
    if (data_.size() != rows_ * cols_) {
      throw DimensionError("tensor value count does not match its extents");
    }
  }

  static Tensor from_rows(
      std::initializer_list<std::initializer_list<Scalar>> rows) {
    Tensor t;
    t.rows_ = rows.size();
    t.cols_ = rows.size() == 0 ? 0 : rows.begin()->size();
    t.data_.reserve(t.rows_ * t.cols_);
    for (const auto& r : rows) {
      if (r.size() != t.cols_) throw DimensionError("ragged tensor rows");
      t.data_.insert(t.data_.end(), r.begin(), r.end());
    }
    return t;
  }

  static Tensor row_vector(std::span<const Scalar> values) {
    return Tensor(1, values.size(),
                  std::vector<Scalar>(values.begin(), values.end()));
  }

  static Tensor zeros_like(const Tensor& other) {
    return Tensor(other.rows_, other.cols_);
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  std::vector<std::size_t> shape() const { return {rows_, cols_}; }
  bool same_shape(const Tensor& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_;
  }

  Scalar& operator()(std::size_t r, std::size_t c) {
    return data_[r * cols_ + c];
  }
  Scalar operator()(std::size_t r, std::size_t c) const {
    return data_[r * cols_ + c];
  }
  Scalar& operator[](std::size_t i) { return data_[i]; }
  Scalar operator[](std::size_t i) const { return data_[i]; }

  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }
  std::span<Scalar> values() { return data_; }
  std::span<const Scalar> values() const { return data_; }
  std::span<Scalar> row(std::size_t r) {
    return {data_.data() + r * cols_, cols_};
  }
  std::span<const Scalar> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  void fill(Scalar v) { std::fill(data_.begin(), data_.end(), v); }

  Tensor transposed() const {
    Tensor t(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r)
      for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
    return t;
  }

  bool all_finite() const {
    for (Scalar v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  std::string shape_string() const {
    std::ostringstream os;
    os << "[" << rows_ << " x " << cols_ << "]";
    return os.str();
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<Scalar> data_;
};

inline Scalar max_abs_diff(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw DimensionError("max_abs_diff shape mismatch");
  Scalar m = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

namespace kernels {

// c += a * b, a: m x k, b: k x n.
inline void gemm_nn(const Tensor& a, const Tensor& b, Tensor& c) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  const Scalar* pa = a.data();
  const Scalar* pb = b.data();
  Scalar* pc = c.data();
  for (std::size_t i = 0; i < m; ++i) {
    Scalar* crow = pc + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const Scalar av = pa[i * k + p];
      if (av == 0) continue;
      const Scalar* brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// c += a * b^T, a: m x k, b: n x k.
inline void gemm_nt(const Tensor& a, const Tensor& b, Tensor& c) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  const Scalar* pa = a.data();
  const Scalar* pb = b.data();
  Scalar* pc = c.data();
  for (std::size_t i = 0; i < m; ++i) {
    const Scalar* arow = pa + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const Scalar* brow = pb + j * k;
      Scalar s = 0;
      for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
      pc[i * n + j] += s;
    }
  }
}

// c += a^T * b, a: k x m, b: k x n.
inline void gemm_tn(const Tensor& a, const Tensor& b, Tensor& c) {
  const std::size_t k = a.rows(), m = a.cols(), n = b.cols();
  const Scalar* pa = a.data();
  const Scalar* pb = b.data();
  Scalar* pc = c.data();
  for (std::size_t p = 0; p < k; ++p) {
    const Scalar* brow = pb + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const Scalar av = pa[p * m + i];
      if (av == 0) continue;
      Scalar* crow = pc + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace kernels
}  // namespace expert
