/* tinyst - desk-scale end-to-end speech translation toolkit.
 * Copyright (C) 2026 tinyst contributors. All rights reserved.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *   http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <limits>
#include <vector>

#include "tinyst/error.hpp"

namespace tinyst {

// Dense row-major tensor of doubles. All training math runs in 64-bit
// precision; file formats narrow to f32 at the serialization boundary.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<long> shape, double fill = 0.0)
      : shape_(std::move(shape)) {
    long n = 1;
    for (long d : shape_) {
      assert(d >= 0);
      n *= d;
    }
    data_.assign(static_cast<std::size_t>(n), fill);
  }

  Tensor(std::initializer_list<long> shape, double fill = 0.0)
      : Tensor(std::vector<long>(shape), fill) {}

  static Tensor zeros(std::vector<long> shape) { return Tensor(std::move(shape)); }

  static Tensor from_rows(long rows, long cols, const std::vector<double>& v) {
    Tensor t({rows, cols});
    assert(static_cast<long>(v.size()) == rows * cols);
    t.data_ = v;
    return t;
  }

  long ndim() const { return static_cast<long>(shape_.size()); }
  long dim(long i) const { return shape_[static_cast<std::size_t>(i)]; }
  const std::vector<long>& shape() const { return shape_; }
  long size() const { return static_cast<long>(data_.size()); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& vec() { return data_; }
  const std::vector<double>& vec() const { return data_; }

  double& operator[](long i) { return data_[static_cast<std::size_t>(i)]; }
  double operator[](long i) const { return data_[static_cast<std::size_t>(i)]; }

  double& at(long i, long j) {
    assert(ndim() == 2);
    return data_[static_cast<std::size_t>(i * shape_[1] + j)];
  }
  double at(long i, long j) const {
    assert(ndim() == 2);
    return data_[static_cast<std::size_t>(i * shape_[1] + j)];
  }
  double& at(long i, long j, long k) {
    assert(ndim() == 3);
    return data_[static_cast<std::size_t>((i * shape_[1] + j) * shape_[2] + k)];
  }
  double at(long i, long j, long k) const {
    assert(ndim() == 3);
    return data_[static_cast<std::size_t>((i * shape_[1] + j) * shape_[2] + k)];
  }
  double& at(long i, long j, long k, long l) {
    assert(ndim() == 4);
    return data_[static_cast<std::size_t>(
        ((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l)];
  }
  double at(long i, long j, long k, long l) const {
    assert(ndim() == 4);
    return data_[static_cast<std::size_t>(
        ((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l)];
  }

  // Pointer to row i of a 2-D tensor.
  double* row(long i) { return data_.data() + i * shape_[1]; }
  const double* row(long i) const { return data_.data() + i * shape_[1]; }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  Tensor& operator+=(const Tensor& other) {
    assert(same_shape(other));
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
  }

  Tensor& operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
  }

  bool operator==(const Tensor& other) const {
    return shape_ == other.shape_ && data_ == other.data_;
  }

 private:
  std::vector<long> shape_;
  std::vector<double> data_;
};

// c = a @ b for 2-D tensors, a: [m,k], b: [k,n].
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  assert(a.ndim() == 2 && b.ndim() == 2 && a.dim(1) == b.dim(0));
  long m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor c({m, n});
  for (long i = 0; i < m; ++i) {
    const double* ai = a.row(i);
    double* ci = c.row(i);
    for (long p = 0; p < k; ++p) {
      double av = ai[p];
      if (av == 0.0) continue;
      const double* bp = b.row(p);
      for (long j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
  return c;
}

// c = a @ b^T, a: [m,k], b: [n,k].
inline Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  assert(a.ndim() == 2 && b.ndim() == 2 && a.dim(1) == b.dim(1));
  long m = a.dim(0), k = a.dim(1), n = b.dim(0);
  Tensor c({m, n});
  for (long i = 0; i < m; ++i) {
    const double* ai = a.row(i);
    double* ci = c.row(i);
    for (long j = 0; j < n; ++j) {
      const double* bj = b.row(j);
      double s = 0.0;
      for (long p = 0; p < k; ++p) s += ai[p] * bj[p];
      ci[j] = s;
    }
  }
  return c;
}

// c = a^T @ b, a: [k,m], b: [k,n].
inline Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  assert(a.ndim() == 2 && b.ndim() == 2 && a.dim(0) == b.dim(0));
  long k = a.dim(0), m = a.dim(1), n = b.dim(1);
  Tensor c({m, n});
  for (long p = 0; p < k; ++p) {
    const double* ap = a.row(p);
    const double* bp = b.row(p);
    for (long i = 0; i < m; ++i) {
      double av = ap[i];
      if (av == 0.0) continue;
      double* ci = c.row(i);
      for (long j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
  return c;
}

inline double log_sum_exp(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  double m = a > b ? a : b;
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

}  // namespace tinyst
