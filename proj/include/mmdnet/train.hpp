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

#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "mmdnet/adam.hpp"
#include "mmdnet/autodiff.hpp"
#include "mmdnet/dataset.hpp"
#include "mmdnet/errors.hpp"
#include "mmdnet/losses.hpp"
#include "mmdnet/model.hpp"

namespace mmdnet {

struct TrainConfig {
  AdamConfig adam;
  std::size_t batch_size = 16;
  std::size_t epochs = 30;
  std::uint64_t seed = 0;
  AdaptationConfig adaptation;
  double lambda_max = 1.0;
  double gamma = 10.0;
  /// When false, wall_seconds is reported as 0 so outputs are reproducible
  /// byte for byte.
  bool record_timing = true;
};

inline void validate(const TrainConfig& c) {
  if (!(c.adam.learning_rate > 0.0)) throw ConfigError("learning_rate: must be > 0");
  if (!(c.adam.beta1 >= 0.0 && c.adam.beta1 < 1.0)) throw ConfigError("beta1: must be in [0,1)");
  if (!(c.adam.beta2 >= 0.0 && c.adam.beta2 < 1.0)) throw ConfigError("beta2: must be in [0,1)");
  if (!(c.adam.epsilon > 0.0)) throw ConfigError("epsilon: must be > 0");
  if (c.batch_size == 0) throw ConfigError("batch_size: must be >= 1");
  if (c.epochs == 0) throw ConfigError("epochs: must be >= 1");
  if (!(c.lambda_max >= 0.0)) throw ConfigError("lambda_max: must be >= 0");
  if (!(c.gamma > 0.0)) throw ConfigError("gamma: must be > 0");
}

struct MetricsRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double test_loss = 0.0;
  double test_accuracy = 0.0;
  double lambda = 0.0;
  double mmd_value = 0.0;
  double wall_seconds = 0.0;
};

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
};

/// Mutable per-run state: optimizer moments, schedule, and the dropout
/// streams. Source and target forwards draw from separate streams so the
/// source path does not depend on whether a target batch was run.
template <typename T>
struct TrainState {
  AdamState<T> adam;
  LambdaSchedule schedule;
  Rng source_dropout;
  Rng target_dropout;

  explicit TrainState(const TrainConfig& cfg)
      : schedule{cfg.lambda_max, cfg.gamma, 0.0},
        source_dropout(detail::keyed_rng(cfg.seed, 0, 0xd1)),
        target_dropout(detail::keyed_rng(cfg.seed, 0, 0xd2)) {}
};

/// One optimizer step on a source batch (and a target batch unless
/// adaptation is off): forward, combined loss, backward, Adam, max-norm.
template <typename T>
LossReport train_step(Model<T>& model, const Batch<T>& source, const std::type_identity_t<Batch<T>>* target, const TrainConfig& cfg,
                      double lambda, TrainState<T>& state) {
  if (!source.labels) throw Error("train_step: source batch has no labels");
  Graph<T> g;
  ForwardResult<T> src = forward(g, model, source.images, Mode::train, state.source_dropout);
  std::optional<ForwardResult<T>> tgt;
  if (cfg.adaptation.adapt_on != AdaptOn::off) {
    if (target == nullptr) throw Error("train_step: adaptation needs a target batch");
    tgt = forward(g, model, target->images, Mode::train, state.target_dropout);
  }
  CombinedLoss<T> loss = combined_loss(src, *source.labels, tgt ? &*tgt : nullptr, cfg.adaptation, lambda);
  if (!std::isfinite(loss.report.total)) throw NumericError("non-finite training loss");
  g.backward(loss.total);
  adam_step(std::span<Parameter<T>>(model.params), state.adam, cfg.adam);
  apply_max_norm(model);
  return loss.report;
}

/// Pairs every source batch with the next target batch (the target stream
/// restarts when exhausted). Returns batch-size-weighted means.
template <typename T>
LossReport train_epoch(Model<T>& model, BatchStream<T>& source, std::type_identity_t<BatchStream<T>>* target, const TrainConfig& cfg,
                       double lambda, TrainState<T>& state, std::size_t epoch = 0) {
  if (source.empty()) throw Error("train_epoch: empty source stream");
  const bool adapt = cfg.adaptation.adapt_on != AdaptOn::off;
  if (adapt && (target == nullptr || target->empty())) throw Error("train_epoch: adaptation needs a target stream");
  LossReport mean{0.0, 0.0, lambda, 0.0};
  std::size_t seen = 0, batch_index = 0;
  while (auto sb = source.next()) {
    std::optional<Batch<T>> tb;
    if (adapt) {
      tb = target->next();
      if (!tb) {
        target->reset();
        tb = target->next();
      }
    }
    LossReport r;
    try {
      r = train_step(model, *sb, tb ? &*tb : nullptr, cfg, lambda, state);
    } catch (const NumericError& e) {
      throw NumericError("epoch " + std::to_string(epoch) + " batch " + std::to_string(batch_index) + ": " + e.what());
    }
    const double w = static_cast<double>(sb->size());
    mean.ce_loss += w * r.ce_loss;
    mean.mmd_value += w * r.mmd_value;
    mean.total += w * r.total;
    seen += sb->size();
    ++batch_index;
  }
  mean.ce_loss /= static_cast<double>(seen);
  mean.mmd_value /= static_cast<double>(seen);
  mean.total /= static_cast<double>(seen);
  return mean;
}

/// Index of the largest probability; ties go to the lower class.
template <typename T>
std::size_t argmax_row(std::span<const T> row) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < row.size(); ++j) {
    if (row[j] > row[best]) best = j;
  }
  return best;
}

/// Mean cross-entropy and accuracy of already-computed probabilities.
template <typename T>
EvalResult score(const Tensor<T>& probs, const Tensor<T>& one_hot) {
  const std::size_t n = probs.dim(0), k = probs.dim(1);
  EvalResult r;
  for (std::size_t i = 0; i < n; ++i) {
    std::span<const T> p = probs.data().subspan(i * k, k);
    std::span<const T> y = one_hot.data().subspan(i * k, k);
    const std::size_t truth = argmax_row(y);
    r.loss -= std::log(std::max(static_cast<double>(p[truth]), kLogEpsilon));
    if (argmax_row(p) == truth) r.accuracy += 1.0;
  }
  r.loss /= static_cast<double>(n);
  r.accuracy /= static_cast<double>(n);
  return r;
}

/// Eval-mode pass over a labeled stream: mean CE and argmax accuracy.
template <typename T>
EvalResult evaluate(Model<T>& model, BatchStream<T>& stream) {
  if (stream.empty()) throw Error("evaluate: empty stream");
  Rng unused(0);
  double loss = 0.0, correct = 0.0;
  std::size_t seen = 0;
  while (auto b = stream.next()) {
    if (!b->labels) throw Error("evaluate: stream has no labels");
    Graph<T> g;
    ForwardResult<T> out = forward(g, model, b->images, Mode::eval, unused);
    EvalResult r = score(out.probs.value(), *b->labels);
    const double w = static_cast<double>(b->size());
    loss += w * r.loss;
    correct += w * r.accuracy;
    seen += b->size();
  }
  return {loss / static_cast<double>(seen), correct / static_cast<double>(seen)};
}

/// Everything fit() reads. Training metrics come from source_train, testing
/// metrics from target_test; target_train is consumed without labels.
template <typename T>
struct TrainData {
  DatasetManifest source_train;
  DatasetManifest target_train;
  DatasetManifest target_test;
  ImageLoader<T>* loader = nullptr;
};

struct FitHooks {
  std::function<void(std::size_t epoch, double lambda)> on_epoch_begin;
  std::function<void(const MetricsRecord&)> on_epoch_end;
};

/// Per epoch: update lambda, train, evaluate on source-train and target-test.
template <typename T>
std::vector<MetricsRecord> fit(Model<T>& model, const TrainData<T>& data, const TrainConfig& cfg,
                               const FitHooks& hooks = {}) {
  validate(cfg);
  if (data.loader == nullptr) throw Error("fit: no image loader");
  ImageLoader<T>& loader = *data.loader;
  TrainState<T> state(cfg);
  const bool adapt = cfg.adaptation.adapt_on != AdaptOn::off;
  const std::uint64_t source_seed = cfg.seed * 2 + 1, target_seed = cfg.seed * 2 + 2;
  std::vector<MetricsRecord> records;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    const double lambda = update_lambda(state.schedule, epoch, cfg.epochs);
    if (hooks.on_epoch_begin) hooks.on_epoch_begin(epoch, lambda);

    BatchStream<T> source(data.source_train, cfg.batch_size, source_seed, epoch, true, loader);
    std::optional<BatchStream<T>> target;
    if (adapt) target.emplace(data.target_train, cfg.batch_size, target_seed, epoch, false, loader);
    LossReport train = train_epoch(model, source, target ? &*target : nullptr, cfg, lambda, state, epoch);

    BatchStream<T> train_eval(data.source_train, cfg.batch_size, 0, 0, true, loader, false);
    BatchStream<T> test_eval(data.target_test, cfg.batch_size, 0, 0, true, loader, false);
    const EvalResult tr = evaluate(model, train_eval);
    const EvalResult te = evaluate(model, test_eval);

    MetricsRecord rec{epoch, tr.loss, tr.accuracy, te.loss, te.accuracy, lambda, train.mmd_value, 0.0};
    if (cfg.record_timing) {
      rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
    if (!std::isfinite(rec.train_loss) || !std::isfinite(rec.test_loss)) {
      throw NumericError("epoch " + std::to_string(epoch) + ": non-finite evaluation loss");
    }
    records.push_back(rec);
    if (hooks.on_epoch_end) hooks.on_epoch_end(rec);
  }
  return records;
}

}  // namespace mmdnet
