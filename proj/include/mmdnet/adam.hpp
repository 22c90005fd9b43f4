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
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mmdnet/autodiff.hpp"
#include "mmdnet/errors.hpp"

namespace mmdnet {

struct AdamConfig {
  double learning_rate = 0.0005;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename T>
struct AdamState {
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;
  std::uint64_t t = 0;
};

/// One bias-corrected Adam update over every parameter, using
/// Parameter::grad. Moments are allocated (zeroed) on first use.
template <typename T>
void adam_step(std::span<Parameter<T>> params, AdamState<T>& state, const AdamConfig& cfg) {
  for (const auto& p : params) {
    if (p.grad.size() != p.value.size()) throw Error("adam_step: missing gradient for " + p.name);
    if (!all_finite<T>(p.grad)) throw NumericError("adam_step: non-finite gradient for " + p.name);
  }
  if (state.m.size() != params.size()) {
    state.m.clear();
    state.v.clear();
    for (const auto& p : params) {
      state.m.emplace_back(p.value.size(), T(0));
      state.v.emplace_back(p.value.size(), T(0));
    }
  }
  state.t += 1;
  const double t = static_cast<double>(state.t);
  const double m_correction = 1.0 - std::pow(cfg.beta1, t);
  const double v_correction = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto theta = params[k].value.data();
    const auto& grad = params[k].grad;
    auto& m = state.m[k];
    auto& v = state.v[k];
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double g = static_cast<double>(grad[i]);
      const double mi = cfg.beta1 * static_cast<double>(m[i]) + (1.0 - cfg.beta1) * g;
      const double vi = cfg.beta2 * static_cast<double>(v[i]) + (1.0 - cfg.beta2) * g * g;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double m_hat = mi / m_correction;
      const double v_hat = vi / v_correction;
      theta[i] = static_cast<T>(static_cast<double>(theta[i]) - cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon));
    }
  }
}

}  // namespace mmdnet
