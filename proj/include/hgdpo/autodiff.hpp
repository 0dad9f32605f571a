// Copyright 2026 The hgdpo Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <deque>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "hgdpo/tensor.hpp"

// Define-by-run reverse-mode differentiation over Tensor values.
//
// A Graph is built fresh for every forward pass. Nodes live in a deque so
// references to earlier values stay valid while later ops are appended.
// backward() walks the tape in reverse creation order, which is a valid
// reverse topological order and fixes the accumulation order.
namespace hgdpo::ad {

/// A named trainable tensor together with its accumulated gradient.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(value.shape(), 0.0) {}
  void zero_grad() { grad = Tensor(value.shape(), 0.0); }
};

class Graph;

/// Handle to a node in a Graph. Cheap to copy; valid for the graph's lifetime.
class Var {
 public:
  Var() = default;
  Var(Graph* g, std::size_t id) : graph_(g), id_(id) {}

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t size() const { return value().size(); }
  bool requires_grad() const;
  Graph& graph() const { return *graph_; }
  std::size_t id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }

 private:
  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

enum class GradMode { kRecord, kInference };

class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, const Tensor& out_grad)>;

  explicit Graph(GradMode mode = GradMode::kRecord) : mode_(mode) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool recording() const { return mode_ == GradMode::kRecord; }

  /// Owned constant (no gradient).
  Var constant(Tensor value);
  /// Borrowed constant; `value` must outlive the graph.
  Var external(const Tensor& value);
  /// Borrowed leaf whose gradient is added into `param.grad` by backward().
  /// In inference mode this is the same as external(param.value).
  Var parameter(Parameter& param);
  /// Owned leaf with a gradient readable through grad() after backward().
  Var variable(Tensor value);

  /// Appends an op result. `inputs` decide requires_grad; `fn` runs in backward.
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn);
  Var record(Tensor value, const std::vector<Var>& inputs, BackwardFn fn);

  /// Seeds d(root)/d(root) = 1 and propagates. Root must hold one element.
  void backward(Var root);

  const Tensor& value(std::size_t id) const;
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  /// Gradient of a node after backward(); zeros if nothing flowed into it.
  Tensor grad(Var v) const;
  /// Adds `g` into the gradient buffer of node `id` (used by backward rules).
  void accumulate(std::size_t id, const Tensor& g);
  void accumulate(std::size_t id, std::span<const double> g);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor owned;
    const Tensor* borrowed = nullptr;
    Tensor grad;
    bool requires_grad = false;
    Parameter* param = nullptr;
    BackwardFn backward;
    const Tensor& value() const { return borrowed ? *borrowed : owned; }
  };

  GradMode mode_;
  std::deque<Node> nodes_;
};

// Elementwise ops accept equal shapes, or one operand with a single element
// (scalar broadcast). Anything else raises ShapeError naming the op and both
// shapes.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var square(Var a);
Var relu(Var a);
Var silu(Var a);
Var sigmoid(Var a);
Var log_sigmoid(Var a);
Var neg(Var a);

/// [m x k] * [k x n]
Var matmul(Var a, Var b);
/// x[m x k] * w[k x n] (+ bias[n] broadcast over rows, when given).
Var linear(Var x, Var w);
Var linear(Var x, Var w, Var bias);

Var sum(Var a);
Var mean(Var a);
/// Mean over everything except axis 0: [B, ...] -> [B].
Var row_mean(Var a);
/// Multiplies row r of a [B, ...] tensor by coeffs[r].
Var row_scale(Var a, std::vector<double> coeffs);
/// Mean over every axis except the channel axis. [C,H,W] -> [C]; a rank-4
/// [B,C,H,W] input keeps the batch axis: -> [B,C].
Var channel_mean(Var a);
/// Concatenates rank-2 tensors with equal row counts along axis 1.
Var concat(const std::vector<Var>& parts);
Var reshape(Var a, Shape shape);
/// Rows [begin, end) along axis 0.
Var slice_rows(Var a, std::size_t begin, std::size_t end);

}  // namespace hgdpo::ad
