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
#include <cmath>
#include <cstddef>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "mmdnet/autodiff.hpp"
#include "mmdnet/errors.hpp"
#include "mmdnet/tensor.hpp"

namespace mmdnet {

using Rng = std::mt19937_64;

/// Floor applied inside log so that log(0) stays finite.
inline constexpr double kLogEpsilon = 1e-12;

enum class Mode { train, eval };

namespace detail {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

inline void require_same_shape(const char* op, const Shape& a, const Shape& b) {
  if (a != b) throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a) + " vs " + to_string(b));
}

inline void require_rank(const char* op, const Shape& s, std::size_t rank) {
  if (s.size() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " + to_string(s));
  }
}

}  // namespace detail

enum class Elementwise { add, sub, mul, relu, exp, log, scale };

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  detail::require_same_shape("add", a.shape(), b.shape());
  auto av = a.value().data();
  auto bv = b.value().data();
  std::vector<T> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return a.graph().record("add", Tensor<T>::unchecked(a.shape(), std::move(out)), {a, b},
                          [ia = a.id(), ib = b.id()](Graph<T>& g, std::size_t, std::span<const T> grad) {
                            for (std::size_t id : {ia, ib}) {
                              auto acc = g.accumulator(id);
                              for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += grad[i];
                            }
                          });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  detail::require_same_shape("sub", a.shape(), b.shape());
  auto av = a.value().data();
  auto bv = b.value().data();
  std::vector<T> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  return a.graph().record("sub", Tensor<T>::unchecked(a.shape(), std::move(out)), {a, b},
                          [ia = a.id(), ib = b.id()](Graph<T>& g, std::size_t, std::span<const T> grad) {
                            auto da = g.accumulator(ia);
                            for (std::size_t i = 0; i < da.size(); ++i) da[i] += grad[i];
                            auto db = g.accumulator(ib);
                            for (std::size_t i = 0; i < db.size(); ++i) db[i] -= grad[i];
                          });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  detail::require_same_shape("mul", a.shape(), b.shape());
  auto av = a.value().data();
  auto bv = b.value().data();
  std::vector<T> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return a.graph().record("mul", Tensor<T>::unchecked(a.shape(), std::move(out)), {a, b},
                          [ia = a.id(), ib = b.id()](Graph<T>& g, std::size_t, std::span<const T> grad) {
                            // a and b may be the same node; both terms then land in one buffer.
                            auto av = g.value(ia).data();
                            auto bv = g.value(ib).data();
                            auto da = g.accumulator(ia);
                            for (std::size_t i = 0; i < da.size(); ++i) da[i] += grad[i] * bv[i];
                            auto db = g.accumulator(ib);
                            for (std::size_t i = 0; i < db.size(); ++i) db[i] += grad[i] * av[i];
                          });
}

/// max(x, 0); the subgradient at exactly 0 is 0.
template <typename T>
Var<T> relu(Var<T> a) {
  auto av = a.value().data();
  std::vector<T> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] > T(0) ? av[i] : T(0);
  return a.graph().record("relu", Tensor<T>::unchecked(a.shape(), std::move(out)), {a},
                          [ia = a.id()](Graph<T>& g, std::size_t, std::span<const T> grad) {
                            auto av = g.value(ia).data();
                            auto da = g.accumulator(ia);
                            for (std::size_t i = 0; i < da.size(); ++i) {
                              if (av[i] > T(0)) da[i] += grad[i];
                            }
                          });
}

template <typename T>
Var<T> exp(Var<T> a) {
  auto av = a.value().data();
  std::vector<T> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(av[i]);
  return a.graph().record("exp", Tensor<T>::unchecked(a.shape(), std::move(out)), {a},
                          [ia = a.id()](Graph<T>& g, std::size_t self, std::span<const T> grad) {
                            auto y = g.value(self).data();
                            auto da = g.accumulator(ia);
                            for (std::size_t i = 0; i < da.size(); ++i) da[i] += grad[i] * y[i];
                          });
}

/// log(max(x, 1e-12)); zero gradient where the floor is active.
template <typename T>
Var<T> log(Var<T> a) {
  auto av = a.value().data();
  const T floor = static_cast<T>(kLogEpsilon);
  std::vector<T> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(std::max(av[i], floor));
  return a.graph().record("log", Tensor<T>::unchecked(a.shape(), std::move(out)), {a},
                          [ia = a.id(), floor](Graph<T>& g, std::size_t, std::span<const T> grad) {
                            auto av = g.value(ia).data();
                            auto da = g.accumulator(ia);
                            for (std::size_t i = 0; i < da.size(); ++i) {
                              if (av[i] > floor) da[i] += grad[i] / av[i];
                            }
                          });
}

template <typename T>
Var<T> scale(Var<T> a, T factor) {
  auto av = a.value().data();
  std::vector<T> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * factor;
  return a.graph().record("scale", Tensor<T>::unchecked(a.shape(), std::move(out)), {a},
                          [ia = a.id(), factor](Graph<T>& g, std::size_t, std::span<const T> grad) {
                            auto da = g.accumulator(ia);
                            for (std::size_t i = 0; i < da.size(); ++i) da[i] += grad[i] * factor;
                          });
}

/// Dispatcher over the elementwise family. Binary ops need `b` with the same
/// shape as `a`; `scale` multiplies by `factor`.
template <typename T>
Var<T> elementwise(Elementwise op, Var<T> a, std::optional<Var<T>> b = std::nullopt, T factor = T(1)) {
  auto need_b = [&]() -> Var<T> {
    if (!b) throw ShapeError("elementwise: binary op needs a second operand");
    return *b;
  };
  switch (op) {
    case Elementwise::add: return add(a, need_b());
    case Elementwise::sub: return sub(a, need_b());
    case Elementwise::mul: return mul(a, need_b());
    case Elementwise::relu: return relu(a);
    case Elementwise::exp: return exp(a);
    case Elementwise::log: return log(a);
    case Elementwise::scale: return scale(a, factor);
  }
  throw Error("elementwise: unknown op");
}

/// Sum of all elements as a [1] tensor.
template <typename T>
Var<T> sum(Var<T> a) {
  T total = T(0);
  for (T v : a.value().data()) total += v;
  return a.graph().record("sum", Tensor<T>::unchecked({1}, {total}), {a},
                          [ia = a.id()](Graph<T>& g, std::size_t, std::span<const T> grad) {
                            auto da = g.accumulator(ia);
                            for (T& d : da) d += grad[0];
                          });
}

template <typename T>
Var<T> mean(Var<T> a) {
  return scale(sum(a), T(1) / static_cast<T>(a.size()));
}

template <typename T>
Var<T> reshape(Var<T> a, Shape shape) {
  Tensor<T> out = a.value().reshaped(std::move(shape));
  return a.graph().record("reshape", std::move(out), {a}, [ia = a.id()](Graph<T>& g, std::size_t, std::span<const T> grad) {
    auto da = g.accumulator(ia);
    for (std::size_t i = 0; i < da.size(); ++i) da[i] += grad[i];
  });
}

/// [m,k] x [k,n] -> [m,n]. Backward: dA = dC B^T, dB = A^T dC.
template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  detail::require_rank("matmul", a.shape(), 2);
  detail::require_rank("matmul", b.shape(), 2);
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) {
    throw ShapeError("matmul: inner extents differ, " + to_string(a.shape()) + " x " + to_string(b.shape()));
  }
  std::vector<T> out(m * n);
  detail::MatrixMap<T>(out.data(), m, n).noalias() =
      detail::ConstMatrixMap<T>(a.value().data().data(), m, k) * detail::ConstMatrixMap<T>(b.value().data().data(), k, n);
  return a.graph().record(
      "matmul", Tensor<T>::unchecked({m, n}, std::move(out)), {a, b},
      [ia = a.id(), ib = b.id(), m, k, n](Graph<T>& g, std::size_t, std::span<const T> grad) {
        detail::ConstMatrixMap<T> dc(grad.data(), m, n);
        if (auto da = g.accumulator(ia); !da.empty()) {
          detail::MatrixMap<T>(da.data(), m, k).noalias() +=
              dc * detail::ConstMatrixMap<T>(g.value(ib).data().data(), k, n).transpose();
        }
        if (auto db = g.accumulator(ib); !db.empty()) {
          detail::MatrixMap<T>(db.data(), k, n).noalias() +=
              detail::ConstMatrixMap<T>(g.value(ia).data().data(), m, k).transpose() * dc;
        }
      });
}

/// Fully connected layer: x [N,D] . w [D,U] + b [U] (bias added to every row).
template <typename T>
Var<T> dense(Var<T> x, Var<T> w, Var<T> b) {
  detail::require_rank("dense", x.shape(), 2);
  detail::require_rank("dense", w.shape(), 2);
  detail::require_rank("dense", b.shape(), 1);
  const std::size_t rows = x.shape()[0], d = x.shape()[1], u = w.shape()[1];
  if (w.shape()[0] != d || b.shape()[0] != u) {
    throw ShapeError("dense: input " + to_string(x.shape()) + ", weight " + to_string(w.shape()) + ", bias " +
                     to_string(b.shape()) + " do not line up");
  }
  std::vector<T> out(rows * u);
  detail::MatrixMap<T> y(out.data(), rows, u);
  y.noalias() = detail::ConstMatrixMap<T>(x.value().data().data(), rows, d) *
                detail::ConstMatrixMap<T>(w.value().data().data(), d, u);
  y.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(b.value().data().data(), u);
  return x.graph().record(
      "dense", Tensor<T>::unchecked({rows, u}, std::move(out)), {x, w, b},
      [ix = x.id(), iw = w.id(), ib = b.id(), rows, d, u](Graph<T>& g, std::size_t, std::span<const T> grad) {
        detail::ConstMatrixMap<T> dy(grad.data(), rows, u);
        if (auto dx = g.accumulator(ix); !dx.empty()) {
          detail::MatrixMap<T>(dx.data(), rows, d).noalias() +=
              dy * detail::ConstMatrixMap<T>(g.value(iw).data().data(), d, u).transpose();
        }
        if (auto dw = g.accumulator(iw); !dw.empty()) {
          detail::MatrixMap<T>(dw.data(), d, u).noalias() +=
              detail::ConstMatrixMap<T>(g.value(ix).data().data(), rows, d).transpose() * dy;
        }
        if (auto db = g.accumulator(ib); !db.empty()) {
          Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(db.data(), u) += dy.colwise().sum();
        }
      });
}

/// Row-wise softmax with max subtraction. K must be at least 2.
template <typename T>
Var<T> softmax(Var<T> logits) {
  detail::require_rank("softmax", logits.shape(), 2);
  const std::size_t rows = logits.shape()[0], k = logits.shape()[1];
  if (k < 2) throw ShapeError("softmax: need at least 2 classes");
  auto lv = logits.value().data();
  std::vector<T> out(lv.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = lv.data() + r * k;
    T* o = out.data() + r * k;
    const T peak = *std::max_element(in, in + k);
    T total = T(0);
    for (std::size_t j = 0; j < k; ++j) total += (o[j] = std::exp(in[j] - peak));
    for (std::size_t j = 0; j < k; ++j) o[j] /= total;
  }
  return logits.graph().record(
      "softmax", Tensor<T>::unchecked(logits.shape(), std::move(out)), {logits},
      [il = logits.id(), rows, k](Graph<T>& g, std::size_t self, std::span<const T> grad) {
        auto p = g.value(self).data();
        auto dl = g.accumulator(il);
        for (std::size_t r = 0; r < rows; ++r) {
          const std::size_t base = r * k;
          T dot = T(0);
          for (std::size_t j = 0; j < k; ++j) dot += grad[base + j] * p[base + j];
          for (std::size_t j = 0; j < k; ++j) dl[base + j] += p[base + j] * (grad[base + j] - dot);
        }
      });
}

/// Pairwise squared Euclidean distances: x [m,D], y [n,D] -> [m,n].
/// Computed from differences directly so that identical rows give exactly 0.
template <typename T>
Var<T> pairwise_sqdist(Var<T> x, Var<T> y) {
  detail::require_rank("pairwise_sqdist", x.shape(), 2);
  detail::require_rank("pairwise_sqdist", y.shape(), 2);
  const std::size_t m = x.shape()[0], n = y.shape()[0], d = x.shape()[1];
  if (y.shape()[1] != d) {
    throw ShapeError("pairwise_sqdist: feature dims differ, " + to_string(x.shape()) + " vs " + to_string(y.shape()));
  }
  auto xv = x.value().data();
  auto yv = y.value().data();
  std::vector<T> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      T acc = T(0);
      for (std::size_t c = 0; c < d; ++c) {
        const T diff = xv[i * d + c] - yv[j * d + c];
        acc += diff * diff;
      }
      out[i * n + j] = acc;
    }
  }
  return x.graph().record(
      "pairwise_sqdist", Tensor<T>::unchecked({m, n}, std::move(out)), {x, y},
      [ix = x.id(), iy = y.id(), m, n, d](Graph<T>& g, std::size_t, std::span<const T> grad) {
        auto xv = g.value(ix).data();
        auto yv = g.value(iy).data();
        if (auto dx = g.accumulator(ix); !dx.empty()) {
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j)
              for (std::size_t c = 0; c < d; ++c)
                dx[i * d + c] += T(2) * grad[i * n + j] * (xv[i * d + c] - yv[j * d + c]);
        }
        if (auto dy = g.accumulator(iy); !dy.empty()) {
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j)
              for (std::size_t c = 0; c < d; ++c)
                dy[j * d + c] += T(2) * grad[i * n + j] * (yv[j * d + c] - xv[i * d + c]);
        }
      });
}

/// Inverted dropout. Train mode zeroes each element with probability `rate`
/// and scales survivors by 1/(1-rate); eval mode (or rate 0) is the identity
/// and draws nothing from `rng`.
template <typename T>
Var<T> dropout(Var<T> x, double rate, Mode mode, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout: rate must be in [0,1), got " + std::to_string(rate));
  if (mode == Mode::eval || rate == 0.0) return x;
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  std::bernoulli_distribution keep(1.0 - rate);
  std::vector<T> mask(x.size());
  for (T& v : mask) v = keep(rng) ? keep_scale : T(0);
  auto xv = x.value().data();
  std::vector<T> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * mask[i];
  return x.graph().record("dropout", Tensor<T>::unchecked(x.shape(), std::move(out)), {x},
                          [ix = x.id(), mask = std::move(mask)](Graph<T>& g, std::size_t, std::span<const T> grad) {
                            auto dx = g.accumulator(ix);
                            for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += grad[i] * mask[i];
                          });
}

}  // namespace mmdnet
