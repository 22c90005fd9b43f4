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

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "mmdnet/autodiff.hpp"
#include "mmdnet/ops.hpp"

namespace mmdnet {

inline constexpr std::size_t kKernelSide = 3;
inline constexpr std::size_t kPoolSide = 2;

namespace detail {

// Rows are output pixels (n, oy, ox); columns follow the kernel layout
// (ky, kx, c), so a [3,3,C,F] kernel viewed as [9C, F] multiplies directly.
template <typename T>
void im2col(std::span<const T> in, std::size_t n, std::size_t h, std::size_t w, std::size_t c, std::vector<T>& col) {
  const std::size_t ho = h - kKernelSide + 1, wo = w - kKernelSide + 1;
  const std::size_t row_len = kKernelSide * kKernelSide * c;
  col.resize(n * ho * wo * row_len);
  T* dst = col.data();
  for (std::size_t b = 0; b < n; ++b) {
    const T* image = in.data() + b * h * w * c;
    for (std::size_t oy = 0; oy < ho; ++oy) {
      for (std::size_t ox = 0; ox < wo; ++ox) {
        for (std::size_t ky = 0; ky < kKernelSide; ++ky) {
          const T* src = image + ((oy + ky) * w + ox) * c;
          std::copy(src, src + kKernelSide * c, dst);
          dst += kKernelSide * c;
        }
      }
    }
  }
}

template <typename T>
void col2im_add(std::span<const T> col, std::size_t n, std::size_t h, std::size_t w, std::size_t c, std::span<T> out) {
  const std::size_t ho = h - kKernelSide + 1, wo = w - kKernelSide + 1;
  const T* src = col.data();
  for (std::size_t b = 0; b < n; ++b) {
    T* image = out.data() + b * h * w * c;
    for (std::size_t oy = 0; oy < ho; ++oy) {
      for (std::size_t ox = 0; ox < wo; ++ox) {
        for (std::size_t ky = 0; ky < kKernelSide; ++ky) {
          T* dst = image + ((oy + ky) * w + ox) * c;
          for (std::size_t i = 0; i < kKernelSide * c; ++i) dst[i] += src[i];
          src += kKernelSide * c;
        }
      }
    }
  }
}

}  // namespace detail

/// Valid (unpadded), stride-1 3x3 cross-correlation plus bias.
/// input [N,H,W,Cin], kernel [3,3,Cin,Cout], bias [Cout] -> [N,H-2,W-2,Cout].
template <typename T>
Var<T> conv2d(Var<T> input, Var<T> kernel, Var<T> bias) {
  detail::require_rank("conv2d", input.shape(), 4);
  detail::require_rank("conv2d", kernel.shape(), 4);
  detail::require_rank("conv2d", bias.shape(), 1);
  const Shape& is = input.shape();
  const std::size_t n = is[0], h = is[1], w = is[2], c = is[3];
  if (h < kKernelSide || w < kKernelSide) {
    throw ShapeError("conv2d: spatial extent must be at least 3, got " + to_string(is));
  }
  const Shape& ks = kernel.shape();
  if (ks[0] != kKernelSide || ks[1] != kKernelSide || ks[2] != c) {
    throw ShapeError("conv2d: kernel " + to_string(ks) + " does not match input " + to_string(is));
  }
  const std::size_t f = ks[3];
  if (bias.shape()[0] != f) throw ShapeError("conv2d: bias " + to_string(bias.shape()) + " vs " + std::to_string(f) + " filters");

  const std::size_t ho = h - kKernelSide + 1, wo = w - kKernelSide + 1;
  const std::size_t rows = n * ho * wo, k = kKernelSide * kKernelSide * c;
  std::vector<T> col;
  detail::im2col(input.value().data(), n, h, w, c, col);
  std::vector<T> out(rows * f);
  detail::MatrixMap<T> y(out.data(), rows, f);
  y.noalias() = detail::ConstMatrixMap<T>(col.data(), rows, k) * detail::ConstMatrixMap<T>(kernel.value().data().data(), k, f);
  y.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(bias.value().data().data(), f);

  Graph<T>& graph = input.graph();
  const bool keep_col = graph.requires_grad(kernel.id());
  return graph.record(
      "conv2d", Tensor<T>::unchecked({n, ho, wo, f}, std::move(out)), {input, kernel, bias},
      [ii = input.id(), ik = kernel.id(), ib = bias.id(), n, h, w, c, f, rows, k,
       col = keep_col ? std::move(col) : std::vector<T>{}](Graph<T>& g, std::size_t, std::span<const T> grad) {
        detail::ConstMatrixMap<T> dy(grad.data(), rows, f);
        if (auto dk = g.accumulator(ik); !dk.empty()) {
          detail::MatrixMap<T>(dk.data(), k, f).noalias() += detail::ConstMatrixMap<T>(col.data(), rows, k).transpose() * dy;
        }
        if (auto db = g.accumulator(ib); !db.empty()) {
          Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(db.data(), f) += dy.colwise().sum();
        }
        if (auto dx = g.accumulator(ii); !dx.empty()) {
          std::vector<T> dcol(rows * k);
          detail::MatrixMap<T>(dcol.data(), rows, k).noalias() =
              dy * detail::ConstMatrixMap<T>(g.value(ik).data().data(), k, f).transpose();
          detail::col2im_add<T>(dcol, n, h, w, c, dx);
        }
      });
}

/// Non-overlapping 2x2 max pooling, stride 2, floor mode (a trailing odd
/// row/column is dropped). Gradient goes to the window's argmax; ties go to
/// the lowest flat index.
template <typename T>
Var<T> maxpool2d(Var<T> input) {
  detail::require_rank("maxpool2d", input.shape(), 4);
  const Shape& is = input.shape();
  const std::size_t n = is[0], h = is[1], w = is[2], c = is[3];
  if (h < kPoolSide || w < kPoolSide) {
    throw ShapeError("maxpool2d: spatial extent must be at least 2, got " + to_string(is));
  }
  const std::size_t ho = h / kPoolSide, wo = w / kPoolSide;
  auto in = input.value().data();
  std::vector<T> out(n * ho * wo * c);
  std::vector<std::uint32_t> argmax(out.size());
  std::size_t o = 0;
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t oy = 0; oy < ho; ++oy) {
      for (std::size_t ox = 0; ox < wo; ++ox) {
        const std::size_t base = ((b * h + oy * 2) * w + ox * 2) * c;
        const std::size_t offsets[4] = {0, c, w * c, w * c + c};
        for (std::size_t ch = 0; ch < c; ++ch, ++o) {
          std::size_t best = base + ch;
          for (std::size_t q = 1; q < 4; ++q) {
            const std::size_t idx = base + offsets[q] + ch;
            if (in[idx] > in[best]) best = idx;
          }
          out[o] = in[best];
          argmax[o] = static_cast<std::uint32_t>(best);
        }
      }
    }
  }
  return input.graph().record(
      "maxpool2d", Tensor<T>::unchecked({n, ho, wo, c}, std::move(out)), {input},
      [ii = input.id(), argmax = std::move(argmax)](Graph<T>& g, std::size_t, std::span<const T> grad) {
        auto dx = g.accumulator(ii);
        for (std::size_t i = 0; i < argmax.size(); ++i) dx[argmax[i]] += grad[i];
      });
}

}  // namespace mmdnet
