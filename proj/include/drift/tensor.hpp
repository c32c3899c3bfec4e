// Copyright 2026 The DRIFT Toolkit Authors
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
#include <cstring>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "drift/error.hpp"

namespace drift {

enum class DType { f32, f64 };

inline const char* dtype_name(DType t) { return t == DType::f32 ? "f32" : "f64"; }

using Shape = std::vector<std::size_t>;

inline std::string shape_string(const Shape& s) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ')';
  return os.str();
}

inline std::size_t shape_numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>{});
}

/// Dense row-major tensor. Values are always held as double; an f32 tensor
/// holds only float-representable values (rounded on construction) so that
/// it narrows losslessly when serialized.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape, DType dtype = DType::f64)
      : shape_(std::move(shape)), dtype_(dtype), data_(checked_numel(shape_), 0.0) {}

  Tensor(Shape shape, std::vector<double> data, DType dtype = DType::f64)
      : shape_(std::move(shape)), dtype_(dtype), data_(std::move(data)) {
    if (checked_numel(shape_) != data_.size()) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_string(shape_));
    }
    if (dtype_ == DType::f32) {
      for (double& v : data_) v = static_cast<double>(static_cast<float>(v));
    }
  }

  static Tensor vector(std::initializer_list<double> values) {
    return Tensor({values.size()}, std::vector<double>(values));
  }

  static Tensor full(Shape shape, double value, DType dtype = DType::f64) {
    Tensor t(std::move(shape), dtype);
    std::fill(t.data_.begin(), t.data_.end(), value);
    if (dtype == DType::f32) {
      for (double& v : t.data_) v = static_cast<double>(static_cast<float>(v));
    }
    return t;
  }

  const Shape& shape() const noexcept { return shape_; }
  DType dtype() const noexcept { return dtype_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t numel() const noexcept { return data_.size(); }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& at(std::size_t r, std::size_t c) { return data_[r * shape_.back() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * shape_.back() + c]; }

  /// Same shape, dtype and bit pattern of every value.
  bool bit_equal(const Tensor& o) const {
    return shape_ == o.shape_ && dtype_ == o.dtype_ && data_.size() == o.data_.size() &&
           (data_.empty() ||
            std::memcmp(data_.data(), o.data_.data(), data_.size() * sizeof(double)) == 0);
  }

 private:
  static std::size_t checked_numel(const Shape& s) {
    for (std::size_t e : s) {
      if (e == 0) throw ShapeError("tensor extents must be positive, got " + shape_string(s));
    }
    return shape_numel(s);
  }

  Shape shape_;
  DType dtype_ = DType::f64;
  std::vector<double> data_;
};

namespace detail {

inline void require_same(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
  if (a.dtype() != b.dtype()) {
    throw ShapeError(std::string(op) + ": dtype mismatch " + dtype_name(a.dtype()) + " vs " +
                     dtype_name(b.dtype()));
  }
}

template <typename F>
Tensor zip(const Tensor& a, const Tensor& b, const char* op, F f) {
  require_same(a, b, op);
  std::vector<double> out(a.numel());
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(x[i], y[i]);
  return Tensor(a.shape(), std::move(out), a.dtype());
}

}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) {
  return detail::zip(a, b, "add", [](double x, double y) { return x + y; });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  return detail::zip(a, b, "sub", [](double x, double y) { return x - y; });
}

inline Tensor scale(const Tensor& a, double c) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (double& v : out) v *= c;
  return Tensor(a.shape(), std::move(out), a.dtype());
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double dot(const Tensor& a, const Tensor& b) {
  detail::require_same(a, b, "dot");
  return dot(a.data(), b.data());
}

inline double l2_norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline double l2_norm(const Tensor& a) { return l2_norm(a.data()); }

/// Cosine of the angle between two flattened vectors, clamped to [-1, 1].
/// Throws DegenerateInputError when either operand has zero norm.
inline double cosine_sim(std::span<const double> a, std::span<const double> b) {
  const double aa = dot(a, a);
  const double bb = dot(b, b);
  if (aa == 0.0 || bb == 0.0) {
    throw DegenerateInputError("cosine_sim: zero-norm operand");
  }
  const double sq = aa * bb;
  const double denom = std::isnormal(sq) ? std::sqrt(sq) : std::sqrt(aa) * std::sqrt(bb);
  return std::clamp(dot(a, b) / denom, -1.0, 1.0);
}

inline double cosine_sim(const Tensor& a, const Tensor& b) {
  detail::require_same(a, b, "cosine_sim");
  return cosine_sim(a.data(), b.data());
}

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0]) {
    throw ShapeError("matmul: incompatible shapes " + shape_string(a.shape()) + " x " +
                     shape_string(b.shape()));
  }
  if (a.dtype() != b.dtype()) throw ShapeError("matmul: dtype mismatch");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  std::vector<double> out(m * n, 0.0);
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double s = x[i * k + p];
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += s * y[p * n + j];
    }
  }
  return Tensor({m, n}, std::move(out), a.dtype());
}

inline bool all_finite(std::span<const double> a) {
  return std::all_of(a.begin(), a.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace drift
