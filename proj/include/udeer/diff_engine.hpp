// Copyright 2026 The Udeer Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace udeer {

using Shape = std::vector<Eigen::Index>;

Eigen::Index numel(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  Eigen::VectorXd data;
  Eigen::VectorXd grad;  // empty until a gradient is accumulated
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into parents' grads.
  std::function<void(Node&)> backward;

  void ensure_grad() {
    if (grad.size() == 0) grad = Eigen::VectorXd::Zero(data.size());
  }
};

}  // namespace detail

/// Dense row-major float64 tensor participating in reverse-mode
/// differentiation. Copies share the underlying node (handle semantics);
/// use clone() for an independent leaf.
class DiffTensor {
 public:
  DiffTensor() = default;
  DiffTensor(Shape shape, Eigen::VectorXd data, bool requires_grad = false);

  static DiffTensor zeros(Shape shape, bool requires_grad = false);
  static DiffTensor constant(Shape shape, double value, bool requires_grad = false);
  static DiffTensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  Eigen::Index dim(std::size_t i) const { return node_->shape.at(i); }
  Eigen::Index size() const { return node_->data.size(); }

  const Eigen::VectorXd& data() const { return node_->data; }
  Eigen::VectorXd& mutable_data() { return node_->data; }
  double item() const;

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return node_->grad.size() != 0; }
  const Eigen::VectorXd& grad() const { return node_->grad; }
  Eigen::VectorXd& mutable_grad() { return node_->grad; }
  void zero_grad();
  void clear_grad() { node_->grad.resize(0); }

  /// Independent leaf with copied data (and gradient, if present).
  DiffTensor clone(bool requires_grad) const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  explicit DiffTensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  friend DiffTensor make_result(Shape, Eigen::VectorXd, std::initializer_list<DiffTensor>,
                                std::function<void(detail::Node&)>);

  std::shared_ptr<detail::Node> node_;
};

/// Builds an op output. The backward closure is only kept (and the tape
/// only grows) when some input requires a gradient.
DiffTensor make_result(Shape shape, Eigen::VectorXd data, std::initializer_list<DiffTensor> inputs,
                       std::function<void(detail::Node&)> backward);

/// Ordered record of the graph reachable from a root, in topological order
/// (inputs before outputs). backward() walks it in reverse.
class Tape {
 public:
  explicit Tape(const DiffTensor& root);

  std::size_t size() const { return order_.size(); }
  const std::vector<detail::Node*>& order() const { return order_; }

  /// Seeds d(root)/d(root) = 1 and propagates; gradients accumulate
  /// additively into every node that requires them.
  void backward();

 private:
  std::shared_ptr<detail::Node> root_;
  std::vector<detail::Node*> order_;
};

/// Convenience: Tape(root).backward(). Root must hold exactly one element.
void backward(const DiffTensor& root);

// ---------------------------------------------------------------------------
// Ops. Tensors are [N, C, H, W] where a layout is implied.

/// Cross-correlation with zero padding. input [N,C,H,W], kernel [F,C,k,k],
/// bias [F] -> [N,F,(H+2p-k)/s+1,(W+2p-k)/s+1].
DiffTensor conv2d(const DiffTensor& input, const DiffTensor& kernel, const DiffTensor& bias,
                  int stride, int pad);

DiffTensor relu(const DiffTensor& x);
DiffTensor sigmoid(const DiffTensor& x);

/// Bilinear resize by an integer factor, align_corners = false (half-pixel
/// centers, edge clamped).
DiffTensor bilinear_upsample(const DiffTensor& x, int factor);

/// Concatenates [N,C_i,H,W] tensors along the channel axis.
DiffTensor concat_channels(const std::vector<DiffTensor>& xs);

DiffTensor add(const DiffTensor& x, const DiffTensor& y);
DiffTensor mul(const DiffTensor& x, const DiffTensor& y);
DiffTensor scale(const DiffTensor& x, double s);
/// Sum of all elements -> shape [1].
DiffTensor sum(const DiffTensor& x);

inline constexpr double kBceEpsilon = 1e-7;

/// sum_i w_i * BCE(p_i, t_i) / max(sum_i w_i, 1) with p clipped to
/// [eps, 1 - eps]. target and weight are flat row-major arrays with
/// prob.size() entries. Pixels with w_i = 0 receive exactly zero gradient.
DiffTensor bce_masked(const DiffTensor& prob, const Eigen::Ref<const Eigen::ArrayXd>& target,
                      const Eigen::Ref<const Eigen::ArrayXd>& weight);

// ---------------------------------------------------------------------------
// Optimization.

struct Parameter {
  std::string name;
  DiffTensor value;
  Eigen::VectorXd velocity;  // momentum buffer, same size as value
};

Parameter make_parameter(std::string name, DiffTensor value);

/// v <- momentum * v + g; theta <- theta - lr * v; then zero the gradient.
void sgd_step(std::span<Parameter> params, double lr, double momentum);

}  // namespace udeer
