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

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mmdnet/errors.hpp"
#include "mmdnet/tensor.hpp"

namespace mmdnet {

/// Named trainable tensor. `grad` is written by Graph::backward.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  std::vector<T> grad;
};

template <typename T>
class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(Graph<T>* graph, std::size_t id) : graph_(graph), id_(id) {}

  Graph<T>& graph() const { return *graph_; }
  std::size_t id() const { return id_; }
  const Tensor<T>& value() const { return graph_->value(id_); }
  const Shape& shape() const { return value().shape(); }
  std::size_t size() const { return value().size(); }
  bool requires_grad() const { return graph_->requires_grad(id_); }
  /// Gradient after backward; empty if the node was not reached.
  std::span<const T> grad() const { return graph_->grad(id_); }

 private:
  Graph<T>* graph_ = nullptr;
  std::size_t id_ = 0;
};

/// Tape of recorded operations. Nodes are appended in creation order, every
/// node's inputs precede it, and backward walks the tape in reverse.
template <typename T>
class Graph {
 public:
  /// Called with the node's own id and output gradient; accumulates into the
  /// node's inputs via Graph::accumulator.
  using BackwardFn = std::function<void(Graph&, std::size_t, std::span<const T>)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var<T> constant(Tensor<T> value) { return push("constant", std::move(value), nullptr, false, {}); }
  Var<T> variable(Tensor<T> value) { return push("variable", std::move(value), nullptr, true, {}); }
  Var<T> parameter(Parameter<T>& p, bool trainable = true) {
    Node& node = push_node("parameter", Tensor<T>{}, trainable);
    node.param = &p;
    return Var<T>(this, nodes_.size() - 1);
  }

  /// Appends an op result. The node requires grad iff any input does, in
  /// which case `backward` is kept. Non-finite outputs raise NumericError.
  Var<T> record(const char* op, Tensor<T> value, std::initializer_list<Var<T>> inputs, BackwardFn backward) {
    bool needs_grad = false;
    for (const Var<T>& in : inputs) {
      if (&in.graph() != this) throw Error(std::string(op) + ": inputs belong to different graphs");
      needs_grad = needs_grad || requires_grad(in.id());
    }
    if (!all_finite<T>(value.data())) throw NumericError(std::string("non-finite value produced by ") + op);
    return push(op, std::move(value), needs_grad ? std::move(backward) : nullptr, needs_grad, inputs);
  }

  const Tensor<T>& value(std::size_t id) const {
    const Node& node = nodes_.at(id);
    return node.param ? node.param->value : node.value;
  }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  std::span<const T> grad(std::size_t id) const { return nodes_.at(id).grad; }
  const std::string& op(std::size_t id) const { return nodes_.at(id).op; }
  std::span<const std::size_t> inputs(std::size_t id) const { return nodes_.at(id).inputs; }
  std::size_t size() const { return nodes_.size(); }

  /// Zero-initialized gradient buffer of `id`, or an empty span when the node
  /// does not require grad.
  std::span<T> accumulator(std::size_t id) {
    Node& node = nodes_.at(id);
    if (!node.requires_grad) return {};
    if (node.grad.empty()) node.grad.assign(value(id).size(), T(0));
    return node.grad;
  }

  /// Seeds d(loss)/d(loss) = 1 and propagates in reverse creation order.
  /// Parameter::grad of every bound parameter is reset, then receives the
  /// sum over its leaf nodes.
  void backward(Var<T> loss) {
    if (nodes_.empty()) throw Error("backward on an empty graph");
    if (&loss.graph() != this) throw Error("backward: loss belongs to a different graph");
    const Tensor<T>& lv = value(loss.id());
    if (lv.size() != 1 || lv.rank() > 1) {
      throw ShapeError("backward needs a scalar loss, got shape " + to_string(lv.shape()));
    }
    for (Node& node : nodes_) {
      node.grad.clear();
      if (node.param) node.param->grad.assign(node.param->value.size(), T(0));
    }
    if (!requires_grad(loss.id())) return;
    accumulator(loss.id())[0] = T(1);
    for (std::size_t id = loss.id() + 1; id-- > 0;) {
      Node& node = nodes_[id];
      if (node.grad.empty()) continue;
      if (node.backward) {
        node.backward(*this, id, std::span<const T>(node.grad));
        for (std::size_t in : node.inputs) {
          if (!all_finite<T>(nodes_[in].grad)) throw NumericError("non-finite gradient from " + node.op + " backward");
        }
      }
      if (node.param) {
        // A parameter bound by several forwards sums their contributions.
        auto& dst = node.param->grad;
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += node.grad[i];
      }
    }
  }

 private:
  struct Node {
    std::string op;
    Tensor<T> value;
    Parameter<T>* param = nullptr;
    bool requires_grad = false;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    std::vector<T> grad;
  };

  Node& push_node(const char* op, Tensor<T> value, bool requires_grad) {
    Node node;
    node.op = op;
    node.value = std::move(value);
    node.requires_grad = requires_grad;
    nodes_.push_back(std::move(node));
    return nodes_.back();
  }

  Var<T> push(const char* op, Tensor<T> value, BackwardFn backward, bool requires_grad,
              std::initializer_list<Var<T>> inputs) {
    Node& node = push_node(op, std::move(value), requires_grad);
    node.backward = std::move(backward);
    for (const Var<T>& in : inputs) node.inputs.push_back(in.id());
    return Var<T>(this, nodes_.size() - 1);
  }

  std::deque<Node> nodes_;  // deque: references to nodes survive push_back
};

}  // namespace mmdnet
