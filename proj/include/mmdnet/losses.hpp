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
#include <string>
#include <type_traits>
#include <vector>

#include "mmdnet/autodiff.hpp"
#include "mmdnet/errors.hpp"
#include "mmdnet/model.hpp"
#include "mmdnet/ops.hpp"
#include "mmdnet/tensor.hpp"

namespace mmdnet {

/// -(1/N) sum_n sum_k y_nk log(max(p_nk, 1e-12)).
template <typename T>
Var<T> categorical_cross_entropy(Var<T> probs, const Tensor<T>& one_hot) {
  detail::require_rank("categorical_cross_entropy", probs.shape(), 2);
  if (one_hot.shape() != probs.shape()) {
    throw ShapeError("categorical_cross_entropy: labels " + to_string(one_hot.shape()) + " vs probs " +
                     to_string(probs.shape()));
  }
  const std::size_t n = probs.shape()[0], k = probs.shape()[1];
  for (std::size_t r = 0; r < n; ++r) {
    std::size_t ones = 0;
    for (std::size_t j = 0; j < k; ++j) {
      const T y = one_hot[r * k + j];
      if (y == T(1)) {
        ++ones;
      } else if (y != T(0)) {
        ones = 2;
      }
    }
    if (ones != 1) throw ShapeError("categorical_cross_entropy: row " + std::to_string(r) + " is not one-hot");
  }
  Graph<T>& g = probs.graph();
  return scale(sum(mul(g.constant(one_hot), log(probs))), T(-1) / static_cast<T>(n));
}

inline std::vector<double> default_bandwidth_multipliers() { return {0.25, 0.5, 1.0, 2.0, 4.0}; }

/// RBF mixture. Either explicit bandwidths, or the median heuristic: the
/// base squared bandwidth is the median pairwise squared distance of the
/// pooled sample and each component uses sigma^2 = multiplier * base.
struct KernelSpec {
  std::vector<double> sigmas;
  bool median_heuristic = true;
  std::vector<double> multipliers = default_bandwidth_multipliers();

  static KernelSpec fixed(std::vector<double> sigmas) { return {std::move(sigmas), false, {}}; }
  static KernelSpec median(std::vector<double> multipliers = default_bandwidth_multipliers()) {
    return {{}, true, std::move(multipliers)};
  }
};

enum class Estimator { biased, unbiased };

inline const char* to_string(Estimator e) { return e == Estimator::biased ? "biased" : "unbiased"; }

/// Median over distinct pooled pairs (i < j) of squared distances; 1.0 when
/// the median is 0 or there is only one point. Order-invariant.
template <typename T>
double median_pairwise_sqdist(const Tensor<T>& x, const Tensor<T>& y) {
  const std::size_t d = x.dim(1);
  if (y.dim(1) != d) throw ShapeError("median_pairwise_sqdist: feature dims differ");
  std::vector<const T*> rows;
  for (std::size_t i = 0; i < x.dim(0); ++i) rows.push_back(x.data().data() + i * d);
  for (std::size_t i = 0; i < y.dim(0); ++i) rows.push_back(y.data().data() + i * d);
  std::vector<double> dists;
  dists.reserve(rows.size() * (rows.size() - 1) / 2);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = i + 1; j < rows.size(); ++j) {
      double acc = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        const double diff = static_cast<double>(rows[i][c]) - static_cast<double>(rows[j][c]);
        acc += diff * diff;
      }
      dists.push_back(acc);
    }
  }
  if (dists.empty()) return 1.0;
  std::sort(dists.begin(), dists.end());
  const std::size_t mid = dists.size() / 2;
  const double median = dists.size() % 2 ? dists[mid] : 0.5 * (dists[mid - 1] + dists[mid]);
  return median > 0.0 ? median : 1.0;
}

/// Concrete sigmas for `spec` given the two samples (values only; the
/// bandwidth is a constant for differentiation).
template <typename T>
std::vector<double> resolve_bandwidths(const KernelSpec& spec, const Tensor<T>& x, const Tensor<T>& y) {
  std::vector<double> sigmas;
  if (spec.median_heuristic) {
    if (spec.multipliers.empty()) throw ConfigError("kernel_multipliers: need at least one multiplier");
    const double base = median_pairwise_sqdist(x, y);
    for (double mult : spec.multipliers) {
      if (!(mult > 0.0)) throw ConfigError("kernel_multipliers: must be positive");
      sigmas.push_back(std::sqrt(mult * base));
    }
  } else {
    sigmas = spec.sigmas;
  }
  if (sigmas.empty()) throw ConfigError("kernel: need at least one bandwidth");
  for (double s : sigmas) {
    if (!(s > 0.0) || !std::isfinite(s)) throw ConfigError("kernel: bandwidths must be positive");
  }
  return sigmas;
}

/// K[i,j] = sum_sigma exp(-||x_i - y_j||^2 / (2 sigma^2)).
template <typename T>
Var<T> rbf_kernel_matrix(Var<T> x, Var<T> y, const std::vector<double>& sigmas) {
  detail::require_rank("rbf_kernel_matrix", x.shape(), 2);
  detail::require_rank("rbf_kernel_matrix", y.shape(), 2);
  if (sigmas.empty()) throw ConfigError("rbf_kernel_matrix: need at least one bandwidth");
  for (double sigma : sigmas) {
    if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ConfigError("rbf_kernel_matrix: bandwidths must be positive");
  }
  Var<T> dist = pairwise_sqdist(x, y);
  std::optional<Var<T>> k;
  for (double sigma : sigmas) {
    Var<T> term = exp(scale(dist, static_cast<T>(-1.0 / (2.0 * sigma * sigma))));
    k = k ? add(*k, term) : term;
  }
  return *k;
}

template <typename T>
Var<T> rbf_kernel_matrix(Var<T> x, Var<T> y, const KernelSpec& spec) {
  return rbf_kernel_matrix(x, y, resolve_bandwidths(spec, x.value(), y.value()));
}

namespace detail {

template <typename T>
bool lexicographically_after(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) return a.shape() > b.shape();
  return std::lexicographical_compare(b.data().begin(), b.data().end(), a.data().begin(), a.data().end());
}

}  // namespace detail

/// Squared MMD between samples x [m,D] and y [n,D].
/// biased: mean K_xx + mean K_yy - 2 mean K_xy (needs m, n >= 1).
/// unbiased: within-sample means skip the diagonal (needs m, n >= 2).
template <typename T>
Var<T> mmd2(Var<T> x, Var<T> y, const KernelSpec& spec, Estimator estimator = Estimator::biased) {
  detail::require_rank("mmd2", x.shape(), 2);
  detail::require_rank("mmd2", y.shape(), 2);
  const std::size_t min_rows = estimator == Estimator::biased ? 1 : 2;
  if (x.shape()[0] < min_rows || y.shape()[0] < min_rows) {
    throw ShapeError(std::string("mmd2 (") + to_string(estimator) + "): each sample needs at least " +
                     std::to_string(min_rows) + " rows, got " + std::to_string(x.shape()[0]) + " and " +
                     std::to_string(y.shape()[0]));
  }
  // Fixed operand order makes mmd2(x, y) and mmd2(y, x) bit-identical.
  if (detail::lexicographically_after(x.value(), y.value())) std::swap(x, y);

  const std::vector<double> sigmas = resolve_bandwidths(spec, x.value(), y.value());
  Graph<T>& g = x.graph();
  const T m = static_cast<T>(x.shape()[0]);
  const T n = static_cast<T>(y.shape()[0]);
  const T components = static_cast<T>(sigmas.size());

  Var<T> kxx = sum(rbf_kernel_matrix(x, x, sigmas));
  Var<T> kyy = sum(rbf_kernel_matrix(y, y, sigmas));
  Var<T> kxy = sum(rbf_kernel_matrix(x, y, sigmas));
  Var<T> within_x, within_y;
  if (estimator == Estimator::biased) {
    within_x = scale(kxx, T(1) / (m * m));
    within_y = scale(kyy, T(1) / (n * n));
  } else {
    // Each diagonal entry is exactly `components` (zero distance).
    within_x = scale(sub(kxx, g.constant(Tensor<T>::unchecked({1}, {components * m}))), T(1) / (m * (m - 1)));
    within_y = scale(sub(kyy, g.constant(Tensor<T>::unchecked({1}, {components * n}))), T(1) / (n * (n - 1)));
  }
  return sub(add(within_x, within_y), scale(kxy, T(2) / (m * n)));
}

/// Regularization-weight warm-up: lambda = lambda_max * (2 / (1 + exp(-gamma p)) - 1)
/// with progress p in [0,1].
struct LambdaSchedule {
  double lambda_max = 1.0;
  double gamma = 10.0;
  double progress = 0.0;
};

inline double lambda_at(const LambdaSchedule& s, double progress) {
  return s.lambda_max * (2.0 / (1.0 + std::exp(-s.gamma * progress)) - 1.0);
}

/// Sets progress p = epoch / max(total_epochs - 1, 1) and returns lambda(p).
inline double update_lambda(LambdaSchedule& schedule, std::size_t epoch, std::size_t total_epochs) {
  if (total_epochs == 0) throw ConfigError("update_lambda: total_epochs must be >= 1");
  if (epoch >= total_epochs) {
    throw ConfigError("update_lambda: epoch " + std::to_string(epoch) + " out of range for " +
                      std::to_string(total_epochs) + " epochs");
  }
  schedule.progress = static_cast<double>(epoch) / static_cast<double>(std::max<std::size_t>(total_epochs - 1, 1));
  return lambda_at(schedule, schedule.progress);
}

enum class AdaptOn { features, predictions, off };

inline const char* to_string(AdaptOn a) {
  switch (a) {
    case AdaptOn::features: return "features";
    case AdaptOn::predictions: return "predictions";
    case AdaptOn::off: return "off";
  }
  return "?";
}

struct AdaptationConfig {
  AdaptOn adapt_on = AdaptOn::features;
  KernelSpec kernel = KernelSpec::median();
  Estimator estimator = Estimator::biased;
};

struct LossReport {
  double ce_loss = 0.0;
  double mmd_value = 0.0;
  double lambda = 0.0;
  double total = 0.0;  // ce_loss + lambda * mmd_value
};

template <typename T>
struct CombinedLoss {
  Var<T> total;
  LossReport report;
};

/// CE on the labeled source batch plus lambda * MMD^2 between the source and
/// target representations (encoder features or softmax outputs). With
/// adaptation off, or lambda == 0, the graph total is the CE node itself.
template <typename T>
CombinedLoss<T> combined_loss(const ForwardResult<T>& source, const Tensor<T>& source_labels,
                              const std::type_identity_t<ForwardResult<T>>* target, const AdaptationConfig& cfg, double lambda) {
  if (source.probs.shape()[0] == 0) throw ShapeError("combined_loss: empty source batch");
  Var<T> ce = categorical_cross_entropy(source.probs, source_labels);
  CombinedLoss<T> out{ce, {}};
  out.report.ce_loss = static_cast<double>(ce.value()[0]);
  out.report.lambda = lambda;
  if (cfg.adapt_on != AdaptOn::off) {
    if (target == nullptr) throw ShapeError("combined_loss: adaptation needs a target batch");
    const bool on_features = cfg.adapt_on == AdaptOn::features;
    Var<T> rep_s = on_features ? source.features : source.probs;
    Var<T> rep_t = on_features ? target->features : target->probs;
    Var<T> mmd = mmd2(rep_s, rep_t, cfg.kernel, cfg.estimator);
    out.report.mmd_value = static_cast<double>(mmd.value()[0]);
    if (lambda != 0.0) out.total = add(ce, scale(mmd, static_cast<T>(lambda)));
  }
  out.report.total = out.report.ce_loss + out.report.lambda * out.report.mmd_value;
  return out;
}

}  // namespace mmdnet
