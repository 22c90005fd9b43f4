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
#include <functional>
#include <span>
#include <vector>

#include "mmdnet/autodiff.hpp"
#include "mmdnet/errors.hpp"
#include "mmdnet/tensor.hpp"

namespace mmdnet {

/// Max over coordinates of |analytic - numeric| / max(1, |analytic|, |numeric|).
inline double max_relative_error(std::span<const double> analytic, std::span<const double> numeric) {
  if (analytic.size() != numeric.size()) throw ShapeError("max_relative_error: length mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double denom = std::max({1.0, std::abs(analytic[i]), std::abs(numeric[i])});
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / denom);
  }
  return worst;
}

using MultiInputFn = std::function<Var<double>(Graph<double>&, std::span<const Var<double>>)>;
using SingleInputFn = std::function<Var<double>(Graph<double>&, Var<double>)>;
using LossFn = std::function<Var<double>(Graph<double>&)>;

namespace detail {

inline double scalar_of(Var<double> v) {
  if (v.size() != 1) throw ShapeError("grad_check: function must return a scalar");
  return v.value()[0];
}

}  // namespace detail

/// Compares reverse-mode gradients of a scalar function against central
/// differences with step `eps`, over every coordinate of every input.
/// `f` must be deterministic (reseed any rng it uses).
inline double grad_check(const MultiInputFn& f, const std::vector<Tensor<double>>& inputs, double eps = 1e-5) {
  if (!(eps > 0.0)) throw Error("grad_check: eps must be positive");
  std::vector<double> analytic, numeric;
  {
    Graph<double> g;
    std::vector<Var<double>> vars;
    for (const auto& t : inputs) vars.push_back(g.variable(t));
    Var<double> out = f(g, vars);
    detail::scalar_of(out);
    g.backward(out);
    for (const auto& v : vars) {
      auto grad = v.grad();
      if (grad.empty()) {
        analytic.insert(analytic.end(), v.size(), 0.0);
      } else {
        analytic.insert(analytic.end(), grad.begin(), grad.end());
      }
    }
  }
  auto evaluate = [&](const std::vector<Tensor<double>>& xs) {
    Graph<double> g;
    std::vector<Var<double>> vars;
    for (const auto& t : xs) vars.push_back(g.constant(t));
    return detail::scalar_of(f(g, vars));
  };
  std::vector<Tensor<double>> probe = inputs;
  for (std::size_t k = 0; k < probe.size(); ++k) {
    for (std::size_t i = 0; i < probe[k].size(); ++i) {
      const double saved = probe[k][i];
      probe[k][i] = saved + eps;
      const double up = evaluate(probe);
      probe[k][i] = saved - eps;
      const double down = evaluate(probe);
      probe[k][i] = saved;
      numeric.push_back((up - down) / (2.0 * eps));
    }
  }
  return max_relative_error(analytic, numeric);
}

inline double grad_check(const SingleInputFn& f, const Tensor<double>& x, double eps = 1e-5) {
  return grad_check([&](Graph<double>& g, std::span<const Var<double>> v) { return f(g, v[0]); },
                    std::vector<Tensor<double>>{x}, eps);
}

/// Same comparison for a loss that binds Parameters into its own graph
/// (e.g. a whole model forward). Parameter values are perturbed in place and
/// restored.
inline double grad_check_parameters(const LossFn& loss, std::span<Parameter<double>* const> params,
                                    double eps = 1e-5) {
  std::vector<double> analytic, numeric;
  {
    Graph<double> g;
    Var<double> out = loss(g);
    detail::scalar_of(out);
    g.backward(out);
    for (const Parameter<double>* p : params) {
      if (p->grad.size() != p->value.size()) {
        analytic.insert(analytic.end(), p->value.size(), 0.0);
      } else {
        analytic.insert(analytic.end(), p->grad.begin(), p->grad.end());
      }
    }
  }
  auto evaluate = [&] {
    Graph<double> g;
    return detail::scalar_of(loss(g));
  };
  for (Parameter<double>* p : params) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double saved = p->value[i];
      p->value[i] = saved + eps;
      const double up = evaluate();
      p->value[i] = saved - eps;
      const double down = evaluate();
      p->value[i] = saved;
      numeric.push_back((up - down) / (2.0 * eps));
    }
  }
  return max_relative_error(analytic, numeric);
}

}  // namespace mmdnet
