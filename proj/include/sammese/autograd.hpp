// SPDX-License-Identifier: Apache-2.0
//
// Minimal reverse-mode automatic differentiation over dense double tensors.
// A Var is a handle to a graph node; ops record a backward closure only when at
// least one input requires a gradient, so frozen paths cost nothing extra.
#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "sammese/tensor.hpp"

namespace sammese::ag {

struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  /// Gradient buffer, zero-allocated on first use.
  Tensor& grad_buffer();
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> n) : node_(std::move(n)) {}

  static Var constant(Tensor t);
  static Var leaf(Tensor t, bool requires_grad);

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Tensor& grad() const { return node_->grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  void zero_grad() { node_->grad = Tensor(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  const Shape& shape() const { return node_->value.shape(); }
  int64_t dim(int64_t i) const { return node_->value.dim(i); }
  const std::shared_ptr<Node>& node() const { return node_; }

  /// Same value, cut from the graph.
  Var detach() const { return constant(node_->value); }

 private:
  std::shared_ptr<Node> node_;
};

/// Seeds d(root)/d(root) = 1 (root must hold one element) and propagates.
void backward(const Var& root);

// Elementwise
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var sigmoid(const Var& a);
Var relu(const Var& a);
Var gelu(const Var& a);

// Reductions to a scalar [1]
Var sum(const Var& a);
Var mean(const Var& a);
Var sum_squares(const Var& a);
/// sum(a * w) for a constant weight tensor of the same shape.
Var weighted_sum(const Var& a, const Tensor& w);

// Linear algebra
/// x: [..., in], w: [in, out], b: [out] (may be undefined). Returns [..., out].
Var linear(const Var& x, const Var& w, const Var& b);
/// a: [batch, m, k], b: [batch, k, n] (or [batch, n, k] when trans_b) -> [batch, m, n].
Var bmm(const Var& a, const Var& b, bool trans_b);
/// Softmax over the last axis.
Var softmax(const Var& a);
/// Normalises the last axis; gamma/beta: [channels].
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-6);

// Spatial
/// x: [b, ci, h, w], w: [co, ci, k, k], bias: [co] or undefined.
Var conv2d(const Var& x, const Var& w, const Var& bias, int64_t stride, int64_t pad);
/// x: [b, ci, h, w], w: [ci, co, k, k]; output spatial = (h - 1) * stride + k.
Var conv_transpose2d(const Var& x, const Var& w, const Var& bias, int64_t stride);
/// x: [b, c, h, w] -> [b, c, out_h, out_w].
Var resize_bilinear(const Var& x, int64_t out_h, int64_t out_w);

// Layout
Var reshape(const Var& x, Shape s);
/// [b, m, n] -> [b, n, m]
Var transpose12(const Var& x);
/// [b, c, h, w] -> [b, h*w, c]
Var grid_to_tokens(const Var& x);
/// [b, h*w, c] -> [b, c, h, w]
Var tokens_to_grid(const Var& x, int64_t h, int64_t w);
/// Concatenate two tensors of equal rank along axis 1.
Var concat1(const Var& a, const Var& b);
/// Elements [start, start+len) along axis 1.
Var slice1(const Var& x, int64_t start, int64_t len);
/// [n, c] -> [batch, n, c]
Var broadcast_batch(const Var& x, int64_t batch);
/// [c] -> [b, c, h, w]
Var broadcast_channels(const Var& v, int64_t batch, int64_t h, int64_t w);
/// [b, t, heads*d] -> [b*heads, t, d]
Var split_heads(const Var& x, int64_t heads);
/// [b*heads, t, d] -> [b, t, heads*d]
Var merge_heads(const Var& x, int64_t heads);

// Losses. g is a constant target with the same element count as m.
/// Mean over pixels of -[g log m + (1-g) log(1-m)], m clamped to [eps, 1-eps].
Var bce_loss(const Var& m, const Tensor& g, double eps);
/// 1 - (2 sum(m g) + s) / (sum m + sum g + s).
Var dice_loss(const Var& m, const Tensor& g, double smooth);

}  // namespace sammese::ag
