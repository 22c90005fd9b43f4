/* Copyright 2026 The mmdnet Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "mmdnet/errors.hpp"

namespace mmdnet {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string to_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ',';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

/// True when no element is NaN or +-Inf. Tests the exponent bits with an
/// integer OR-reduction, which vectorizes.
template <typename T>
bool all_finite(std::span<const T> values) {
  if constexpr (std::is_same_v<T, float> || std::is_same_v<T, double>) {
    using Bits = std::conditional_t<std::is_same_v<T, float>, std::uint32_t, std::uint64_t>;
    constexpr Bits exponent = static_cast<Bits>(std::is_same_v<T, float> ? 0x7f800000ull : 0x7ff0000000000000ull);
    Bits bad = 0;
    for (T v : values) bad |= static_cast<Bits>((std::bit_cast<Bits>(v) & exponent) == exponent);
    return bad == 0;
  } else {
    for (T v : values) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }
}

/// Dense row-major array with an explicit shape.
///
/// A Tensor is a plain value. Gradient bookkeeping lives in the Graph that
/// records operations on it (see autodiff.hpp).
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  /// Validates that the extents are positive, cover `values` exactly, and
  /// that every value is finite.
  Tensor(Shape shape, std::vector<T> values) : shape_(std::move(shape)), data_(std::move(values)) {
    for (std::size_t extent : shape_) {
      if (extent == 0) throw ShapeError("tensor extent must be positive, got " + to_string(shape_));
    }
    if (shape_size(shape_) != data_.size()) {
      throw ShapeError("shape " + to_string(shape_) + " needs " + std::to_string(shape_size(shape_)) +
                       " values, got " + std::to_string(data_.size()));
    }
    if (!all_finite<T>(data_)) throw NumericError("tensor constructed from non-finite values");
  }

  static Tensor zeros(Shape shape) {
    Tensor t;
    t.data_.assign(shape_size(shape), T(0));
    t.shape_ = std::move(shape);
    return t;
  }

  static Tensor filled(Shape shape, T value) {
    Tensor t = zeros(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
  }

  /// Skips the finiteness scan. Used by ops that check their own output.
  static Tensor unchecked(Shape shape, std::vector<T> values) {
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = std::move(values);
    return t;
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  /// Same data under a new shape with the same element count.
  Tensor reshaped(Shape shape) const {
    if (shape_size(shape) != data_.size()) {
      throw ShapeError("cannot reshape " + to_string(shape_) + " to " + to_string(shape));
    }
    return unchecked(std::move(shape), data_);
  }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return Tensor<U>::unchecked(shape_, std::move(out));
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<T> data_;
};

template <typename T>
Tensor<T> tensor_from(Shape shape, std::vector<T> values) {
  return Tensor<T>(std::move(shape), std::move(values));
}

}  // namespace mmdnet
