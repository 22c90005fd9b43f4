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

// Reference implementations for tests and `selftest`. Each one is written
// from the defining formula with plain loops and shares no code with the
// library path it checks.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

namespace mmdnet::testing {

/// Valid 3x3 cross-correlation, NHWC input, [3,3,C,F] kernel.
inline std::vector<double> naive_conv2d(const std::vector<double>& in, std::size_t n, std::size_t h, std::size_t w,
                                        std::size_t c, const std::vector<double>& kernel, std::size_t f,
                                        const std::vector<double>& bias) {
  const std::size_t ho = h - 2, wo = w - 2;
  std::vector<double> out(n * ho * wo * f);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t y = 0; y < ho; ++y)
      for (std::size_t x = 0; x < wo; ++x)
        for (std::size_t o = 0; o < f; ++o) {
          double acc = bias[o];
          for (std::size_t ky = 0; ky < 3; ++ky)
            for (std::size_t kx = 0; kx < 3; ++kx)
              for (std::size_t ci = 0; ci < c; ++ci)
                acc += in[((b * h + y + ky) * w + x + kx) * c + ci] * kernel[((ky * 3 + kx) * c + ci) * f + o];
          out[((b * ho + y) * wo + x) * f + o] = acc;
        }
  return out;
}

using Points = std::vector<std::vector<double>>;

inline double rbf_sum(const std::vector<double>& a, const std::vector<double>& b, const std::vector<double>& sigmas) {
  double d2 = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d2 += (a[i] - b[i]) * (a[i] - b[i]);
  double k = 0.0;
  for (double s : sigmas) k += std::exp(-d2 / (2.0 * s * s));
  return k;
}

/// Squared MMD by explicit double loops over pairs.
inline double brute_force_mmd2(const Points& x, const Points& y, const std::vector<double>& sigmas, bool unbiased) {
  const double m = static_cast<double>(x.size()), n = static_cast<double>(y.size());
  double xx = 0.0, yy = 0.0, xy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = 0; j < x.size(); ++j)
      if (!unbiased || i != j) xx += rbf_sum(x[i], x[j], sigmas);
  for (std::size_t i = 0; i < y.size(); ++i)
    for (std::size_t j = 0; j < y.size(); ++j)
      if (!unbiased || i != j) yy += rbf_sum(y[i], y[j], sigmas);
  for (const auto& a : x)
    for (const auto& b : y) xy += rbf_sum(a, b, sigmas);
  const double xx_pairs = unbiased ? m * (m - 1) : m * m;
  const double yy_pairs = unbiased ? n * (n - 1) : n * n;
  return xx / xx_pairs + yy / yy_pairs - 2.0 * xy / (m * n);
}

/// Textbook scalar Adam.
struct ScalarAdam {
  double lr = 0.0005, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  double m = 0.0, v = 0.0;
  int t = 0;

  double step(double theta, double g) {
    ++t;
    m = beta1 * m + (1 - beta1) * g;
    v = beta2 * v + (1 - beta2) * g * g;
    const double mhat = m / (1 - std::pow(beta1, t));
    const double vhat = v / (1 - std::pow(beta2, t));
    return theta - lr * mhat / (std::sqrt(vhat) + eps);
  }
};

struct LayerCounts {
  std::size_t flatten = 0;
  std::vector<std::size_t> conv_params;
  std::size_t total = 0;
};

/// Walks the conv/pool chain on a square input and tallies weights+biases
/// of conv layers, the feature dense layer and the classifier.
inline LayerCounts count_parameters(std::size_t side, std::size_t channels, const std::vector<std::size_t>& filters,
                                    std::size_t feature_units, std::size_t classes) {
  LayerCounts c;
  std::size_t in_ch = channels;
  for (std::size_t f : filters) {
    const std::size_t conv = (3 * 3 * in_ch + 1) * f;
    c.conv_params.push_back(conv);
    c.total += conv;
    side = (side - 2) / 2;
    in_ch = f;
  }
  c.flatten = side * side * in_ch;
  c.total += (c.flatten + 1) * feature_units + (feature_units + 1) * classes;
  return c;
}

/// One output pixel of a center-aligned bilinear resize, from the formula.
inline double bilinear_pixel(const std::vector<double>& src, std::size_t w, std::size_t h, std::size_t out_w,
                             std::size_t out_h, std::size_t ox, std::size_t oy) {
  double sx = (static_cast<double>(ox) + 0.5) * static_cast<double>(w) / static_cast<double>(out_w) - 0.5;
  double sy = (static_cast<double>(oy) + 0.5) * static_cast<double>(h) / static_cast<double>(out_h) - 0.5;
  sx = std::min(std::max(sx, 0.0), static_cast<double>(w - 1));
  sy = std::min(std::max(sy, 0.0), static_cast<double>(h - 1));
  const std::size_t x0 = static_cast<std::size_t>(sx), y0 = static_cast<std::size_t>(sy);
  const std::size_t x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
  const double ax = sx - static_cast<double>(x0), ay = sy - static_cast<double>(y0);
  return (1 - ax) * (1 - ay) * src[y0 * w + x0] + ax * (1 - ay) * src[y0 * w + x1] + (1 - ax) * ay * src[y1 * w + x0] +
         ax * ay * src[y1 * w + x1];
}

}  // namespace mmdnet::testing
