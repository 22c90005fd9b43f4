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

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "mmdnet/autodiff.hpp"
#include "mmdnet/conv.hpp"
#include "mmdnet/errors.hpp"
#include "mmdnet/ops.hpp"
#include "mmdnet/tensor.hpp"

namespace mmdnet {

enum class LayerKind { conv2d, maxpool2d, flatten, dense, dropout, relu, softmax };

inline const char* to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::maxpool2d: return "maxpool2d";
    case LayerKind::flatten: return "flatten";
    case LayerKind::dense: return "dense";
    case LayerKind::dropout: return "dropout";
    case LayerKind::relu: return "relu";
    case LayerKind::softmax: return "softmax";
  }
  return "?";
}

/// One layer of the stack. Geometry is fixed: conv kernels are 3x3 stride 1
/// unpadded, pooling windows 2x2 stride 2.
struct LayerSpec {
  LayerKind kind;
  std::size_t units = 0;  // conv2d filters or dense units
  double rate = 0.0;      // dropout
  std::optional<double> max_norm;
};

inline LayerSpec layer(LayerKind kind, std::size_t units = 0, double rate = 0.0,
                       std::optional<double> max_norm = std::nullopt) {
  return LayerSpec{kind, units, rate, max_norm};
}

struct ModelConfig {
  std::vector<std::size_t> conv_filters{16, 32};
  std::size_t feature_units = 16;
  double dropout_rate = 0.5;
  std::size_t num_classes = 2;
  /// Column max-norm cap on the dense layers; nullopt disables it.
  std::optional<double> max_norm = 3.0;
  /// Adds a hidden dense(feature_units)+relu to the task head.
  bool deep_head = false;
  std::size_t input_side = 224;
  std::size_t input_channels = 3;
};

/// Spatial side after the conv/pool blocks, or 0 if the chain breaks.
inline std::size_t encoder_output_side(std::size_t side, std::size_t conv_layers) {
  for (std::size_t i = 0; i < conv_layers; ++i) {
    if (side < kKernelSide) return 0;
    side -= kKernelSide - 1;
    if (side < kPoolSide) return 0;
    side /= kPoolSide;
  }
  return side;
}

inline std::size_t flatten_dim(const ModelConfig& cfg) {
  if (cfg.conv_filters.empty()) return 0;
  const std::size_t side = encoder_output_side(cfg.input_side, cfg.conv_filters.size());
  return side * side * cfg.conv_filters.back();
}

inline void validate(const ModelConfig& cfg) {
  if (cfg.conv_filters.empty()) throw ConfigError("conv_filters: must list at least one layer");
  for (std::size_t f : cfg.conv_filters) {
    if (f == 0) throw ConfigError("conv_filters: filter counts must be >= 1");
  }
  if (cfg.feature_units == 0) throw ConfigError("feature_units: must be >= 1");
  if (cfg.num_classes < 2) throw ConfigError("num_classes: must be >= 2");
  if (!(cfg.dropout_rate >= 0.0 && cfg.dropout_rate < 1.0)) throw ConfigError("dropout_rate: must be in [0,1)");
  if (cfg.max_norm && !(*cfg.max_norm > 0.0)) throw ConfigError("max_norm_cap: must be positive");
  if (cfg.input_channels == 0) throw ConfigError("input_channels: must be >= 1");
  if (flatten_dim(cfg) == 0) {
    throw ConfigError("conv_filters: " + std::to_string(cfg.conv_filters.size()) + " conv blocks do not fit a " +
                      std::to_string(cfg.input_side) + "x" + std::to_string(cfg.input_side) + " input");
  }
}

template <typename T>
struct Model {
  ModelConfig config;
  std::vector<LayerSpec> encoder;
  std::vector<LayerSpec> head;
  std::vector<Parameter<T>> params;

  // Indices into params.
  std::vector<std::size_t> conv_kernel, conv_bias;
  std::size_t feature_weight = 0, feature_bias = 0;
  std::optional<std::size_t> hidden_weight, hidden_bias;
  std::size_t head_weight = 0, head_bias = 0;

  Parameter<T>& param(const std::string& name) {
    for (auto& p : params) {
      if (p.name == name) return p;
    }
    throw Error("no parameter named " + name);
  }

  std::size_t parameter_count() const {
    std::size_t total = 0;
    for (const auto& p : params) total += p.value.size();
    return total;
  }

  /// Dense weights subject to the max-norm constraint.
  std::vector<std::size_t> constrained() const {
    std::vector<std::size_t> out{feature_weight};
    if (hidden_weight) out.push_back(*hidden_weight);
    out.push_back(head_weight);
    return out;
  }
};

namespace detail {

template <typename T>
Tensor<T> he_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<T> values(shape_size(shape));
  for (T& v : values) v = static_cast<T>(dist(rng));
  return Tensor<T>::unchecked(std::move(shape), std::move(values));
}

template <typename T>
std::size_t add_param(Model<T>& m, std::string name, Tensor<T> value) {
  m.params.push_back(Parameter<T>{std::move(name), std::move(value), {}});
  return m.params.size() - 1;
}

}  // namespace detail

/// Encoder: [conv(f) -> relu -> maxpool] per filter count -> flatten ->
/// dense(feature_units) -> relu -> dropout. Head: [dense -> relu] if deep ->
/// dense(num_classes) -> softmax. He-uniform kernels, zero biases.
template <typename T>
Model<T> build_model(const ModelConfig& cfg, std::uint64_t seed) {
  validate(cfg);
  Model<T> m;
  m.config = cfg;
  Rng rng(seed);

  std::size_t channels = cfg.input_channels;
  for (std::size_t i = 0; i < cfg.conv_filters.size(); ++i) {
    const std::size_t f = cfg.conv_filters[i];
    m.encoder.push_back(layer(LayerKind::conv2d, f));
    m.encoder.push_back(layer(LayerKind::relu));
    m.encoder.push_back(layer(LayerKind::maxpool2d));
    const std::string prefix = "conv" + std::to_string(i + 1);
    m.conv_kernel.push_back(detail::add_param(
        m, prefix + ".kernel", detail::he_uniform<T>({kKernelSide, kKernelSide, channels, f}, 9 * channels, rng)));
    m.conv_bias.push_back(detail::add_param(m, prefix + ".bias", Tensor<T>::zeros({f})));
    channels = f;
  }
  const std::size_t flat = flatten_dim(cfg);
  m.encoder.push_back(layer(LayerKind::flatten));
  m.encoder.push_back(layer(LayerKind::dense, cfg.feature_units, 0.0, cfg.max_norm));
  m.encoder.push_back(layer(LayerKind::relu));
  m.encoder.push_back(layer(LayerKind::dropout, 0, cfg.dropout_rate));
  m.feature_weight = detail::add_param(m, "feature.weight", detail::he_uniform<T>({flat, cfg.feature_units}, flat, rng));
  m.feature_bias = detail::add_param(m, "feature.bias", Tensor<T>::zeros({cfg.feature_units}));

  if (cfg.deep_head) {
    m.head.push_back(layer(LayerKind::dense, cfg.feature_units, 0.0, cfg.max_norm));
    m.head.push_back(layer(LayerKind::relu));
    m.hidden_weight = detail::add_param(
        m, "hidden.weight", detail::he_uniform<T>({cfg.feature_units, cfg.feature_units}, cfg.feature_units, rng));
    m.hidden_bias = detail::add_param(m, "hidden.bias", Tensor<T>::zeros({cfg.feature_units}));
  }
  m.head.push_back(layer(LayerKind::dense, cfg.num_classes, 0.0, cfg.max_norm));
  m.head.push_back(layer(LayerKind::softmax));
  m.head_weight = detail::add_param(
      m, "head.weight", detail::he_uniform<T>({cfg.feature_units, cfg.num_classes}, cfg.feature_units, rng));
  m.head_bias = detail::add_param(m, "head.bias", Tensor<T>::zeros({cfg.num_classes}));
  return m;
}

template <typename T>
struct ForwardResult {
  Var<T> features;  // encoder output [N, feature_units]
  Var<T> logits;
  Var<T> probs;     // [N, num_classes]
};

/// Runs encoder and head on `images` [N,side,side,C]. Eval mode binds the
/// parameters as non-trainable, so nothing is kept for backward.
template <typename T>
ForwardResult<T> forward(Graph<T>& g, Model<T>& model, Var<T> images, Mode mode, Rng& rng) {
  const ModelConfig& cfg = model.config;
  const Shape& s = images.shape();
  if (s.size() != 4 || s[1] != cfg.input_side || s[2] != cfg.input_side || s[3] != cfg.input_channels) {
    throw ShapeError("forward: expected images [N," + std::to_string(cfg.input_side) + "," +
                     std::to_string(cfg.input_side) + "," + std::to_string(cfg.input_channels) + "], got " +
                     to_string(s));
  }
  const bool trainable = mode == Mode::train;
  auto bind = [&](std::size_t idx) { return g.parameter(model.params[idx], trainable); };

  Var<T> x = images;
  for (std::size_t i = 0; i < cfg.conv_filters.size(); ++i) {
    x = maxpool2d(relu(conv2d(x, bind(model.conv_kernel[i]), bind(model.conv_bias[i]))));
  }
  x = reshape(x, {s[0], flatten_dim(cfg)});
  x = relu(dense(x, bind(model.feature_weight), bind(model.feature_bias)));
  Var<T> features = dropout(x, cfg.dropout_rate, mode, rng);

  Var<T> h = features;
  if (model.hidden_weight) h = relu(dense(h, bind(*model.hidden_weight), bind(*model.hidden_bias)));
  Var<T> logits = dense(h, bind(model.head_weight), bind(model.head_bias));
  return {features, logits, softmax(logits)};
}

template <typename T>
ForwardResult<T> forward(Graph<T>& g, Model<T>& model, const Tensor<T>& images, Mode mode, Rng& rng) {
  return forward(g, model, g.constant(images), mode, rng);
}

/// Rescales every column of `weight` [D,U] whose Euclidean norm exceeds `cap`
/// down to norm `cap`; other columns are untouched.
template <typename T>
Tensor<T> apply_max_norm(Tensor<T> weight, double cap) {
  if (!(cap > 0.0)) throw ConfigError("max-norm cap must be positive");
  if (weight.rank() != 2) throw ShapeError("apply_max_norm: expected a [D,U] weight, got " + to_string(weight.shape()));
  const std::size_t d = weight.dim(0), u = weight.dim(1);
  auto w = weight.data();
  auto column_norm = [&](std::size_t col) {
    double sq = 0.0;
    for (std::size_t r = 0; r < d; ++r) sq += static_cast<double>(w[r * u + col]) * static_cast<double>(w[r * u + col]);
    return std::sqrt(sq);
  };
  std::vector<double> original(d);
  for (std::size_t col = 0; col < u; ++col) {
    const double norm = column_norm(col);
    if (norm <= cap) continue;
    for (std::size_t r = 0; r < d; ++r) original[r] = static_cast<double>(w[r * u + col]);
    // Rounding to T can land a hair above the cap; shrink until it does not,
    // which also makes the projection idempotent.
    double factor = cap / norm;
    do {
      for (std::size_t r = 0; r < d; ++r) w[r * u + col] = static_cast<T>(original[r] * factor);
      factor *= 1.0 - 2.0 * std::numeric_limits<T>::epsilon();
    } while (column_norm(col) > cap);
  }
  return weight;
}

template <typename T>
void apply_max_norm(Model<T>& model) {
  if (!model.config.max_norm) return;
  for (std::size_t idx : model.constrained()) {
    model.params[idx].value = apply_max_norm(std::move(model.params[idx].value), *model.config.max_norm);
  }
}

}  // namespace mmdnet
