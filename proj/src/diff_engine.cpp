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

#include "udeer/diff_engine.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "udeer/error.hpp"

namespace udeer {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void require_same_shape(const DiffTensor& x, const DiffTensor& y, const char* op) {
  if (x.shape() != y.shape()) {
    throw Error(ErrorCode::ShapeMismatch, std::string(op) + ": " + shape_string(x.shape()) +
                                              " vs " + shape_string(y.shape()));
  }
}

void require_rank4(const DiffTensor& x, const char* op) {
  if (x.shape().size() != 4) {
    throw Error(ErrorCode::ShapeMismatch,
                std::string(op) + " expects [N,C,H,W], got " + shape_string(x.shape()));
  }
}

// Bilinear source taps for one axis (align_corners = false).
struct Taps {
  std::vector<Eigen::Index> lo, hi;
  std::vector<double> frac;
};

Taps bilinear_taps(Eigen::Index in, Eigen::Index out, int factor) {
  Taps t;
  t.lo.resize(out);
  t.hi.resize(out);
  t.frac.resize(out);
  for (Eigen::Index o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) / factor - 0.5;
    if (src < 0.0) src = 0.0;
    auto i0 = static_cast<Eigen::Index>(std::floor(src));
    if (i0 > in - 1) i0 = in - 1;
    t.lo[o] = i0;
    t.hi[o] = std::min(i0 + 1, in - 1);
    t.frac[o] = src - static_cast<double>(i0);
  }
  return t;
}

}  // namespace

Eigen::Index numel(const Shape& shape) {
  Eigen::Index n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

DiffTensor::DiffTensor(Shape shape, Eigen::VectorXd data, bool requires_grad) {
  for (auto d : shape) {
    if (d <= 0) throw Error(ErrorCode::ShapeMismatch, "dimensions must be positive");
  }
  if (numel(shape) != data.size()) {
    throw Error(ErrorCode::ShapeMismatch, "data length " + std::to_string(data.size()) +
                                              " does not match " + shape_string(shape));
  }
  node_ = std::make_shared<detail::Node>();
  node_->shape = std::move(shape);
  node_->data = std::move(data);
  node_->requires_grad = requires_grad;
}

DiffTensor DiffTensor::zeros(Shape shape, bool requires_grad) {
  const auto n = numel(shape);
  return DiffTensor(std::move(shape), Eigen::VectorXd::Zero(n), requires_grad);
}

DiffTensor DiffTensor::constant(Shape shape, double value, bool requires_grad) {
  const auto n = numel(shape);
  return DiffTensor(std::move(shape), Eigen::VectorXd::Constant(n, value), requires_grad);
}

DiffTensor DiffTensor::scalar(double value, bool requires_grad) {
  return DiffTensor({1}, Eigen::VectorXd::Constant(1, value), requires_grad);
}

double DiffTensor::item() const {
  if (size() != 1) throw Error(ErrorCode::ShapeMismatch, "item() on " + shape_string(shape()));
  return node_->data(0);
}

void DiffTensor::zero_grad() { node_->grad = Eigen::VectorXd::Zero(node_->data.size()); }

DiffTensor DiffTensor::clone(bool requires_grad) const {
  DiffTensor out(node_->shape, node_->data, requires_grad);
  out.node_->grad = node_->grad;
  return out;
}

DiffTensor make_result(Shape shape, Eigen::VectorXd data, std::initializer_list<DiffTensor> inputs,
                       std::function<void(detail::Node&)> backward) {
  DiffTensor out(std::move(shape), std::move(data), false);
  for (const auto& in : inputs) {
    if (in.requires_grad()) out.node_->parents.push_back(in.node_);
  }
  if (!out.node_->parents.empty()) {
    out.node_->requires_grad = true;
    out.node_->backward = std::move(backward);
  }
  return out;
}

Tape::Tape(const DiffTensor& root) : root_(root.node()) {
  if (!root_ || !root_->requires_grad) return;
  // Iterative post-order DFS; parents are emitted before children.
  std::unordered_set<const detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(root_.get(), 0);
  seen.insert(root_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* parent = node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order_.push_back(node);
      stack.pop_back();
    }
  }
}

void Tape::backward() {
  if (order_.empty()) return;
  if (root_->data.size() != 1) {
    throw Error(ErrorCode::ShapeMismatch, "backward needs a scalar root");
  }
  root_->ensure_grad();
  root_->grad(0) += 1.0;
  for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
    detail::Node* node = *it;
    if (node->backward && node->grad.size() != 0) node->backward(*node);
  }
}

void backward(const DiffTensor& root) { Tape(root).backward(); }

DiffTensor conv2d(const DiffTensor& input, const DiffTensor& kernel, const DiffTensor& bias,
                  int stride, int pad) {
  require_rank4(input, "conv2d input");
  require_rank4(kernel, "conv2d kernel");
  const Eigen::Index n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const Eigen::Index f = kernel.dim(0), k = kernel.dim(2);
  if (kernel.dim(1) != c || kernel.dim(3) != k) {
    throw Error(ErrorCode::ShapeMismatch, "conv2d kernel " + shape_string(kernel.shape()) +
                                              " vs input " + shape_string(input.shape()));
  }
  if (bias.shape() != Shape{f}) {
    throw Error(ErrorCode::ShapeMismatch, "conv2d bias " + shape_string(bias.shape()));
  }
  if (stride < 1 || pad < 0) throw Error(ErrorCode::InvalidArgument, "conv2d stride/pad");
  if (k > h + 2 * pad || k > w + 2 * pad) {
    throw Error(ErrorCode::ShapeMismatch, "conv2d kernel larger than padded input");
  }
  const Eigen::Index ho = (h + 2 * pad - k) / stride + 1;
  const Eigen::Index wo = (w + 2 * pad - k) / stride + 1;
  const Eigen::Index kk = c * k * k;
  const Eigen::Index positions = ho * wo;
  const bool pointwise = k == 1 && stride == 1 && pad == 0;

  auto im2col = [=](const double* src) {
    RowMat cols(kk, positions);
    for (Eigen::Index ch = 0; ch < c; ++ch) {
      for (Eigen::Index ki = 0; ki < k; ++ki) {
        for (Eigen::Index kj = 0; kj < k; ++kj) {
          double* row = cols.data() + ((ch * k + ki) * k + kj) * positions;
          for (Eigen::Index oy = 0; oy < ho; ++oy) {
            const Eigen::Index iy = oy * stride - pad + ki;
            for (Eigen::Index ox = 0; ox < wo; ++ox) {
              const Eigen::Index ix = ox * stride - pad + kj;
              row[oy * wo + ox] = (iy >= 0 && iy < h && ix >= 0 && ix < w)
                                      ? src[(ch * h + iy) * w + ix]
                                      : 0.0;
            }
          }
        }
      }
    }
    return cols;
  };

  const Eigen::Map<const RowMat> weights(kernel.data().data(), f, kk);
  Eigen::VectorXd out(n * f * positions);
  const bool record = input.requires_grad() || kernel.requires_grad() || bias.requires_grad();
  auto saved = std::make_shared<std::vector<RowMat>>();
  for (Eigen::Index b = 0; b < n; ++b) {
    const double* src = input.data().data() + b * c * h * w;
    Eigen::Map<RowMat> dst(out.data() + b * f * positions, f, positions);
    if (pointwise) {
      dst.noalias() = weights * Eigen::Map<const RowMat>(src, c, positions);
    } else {
      RowMat cols = im2col(src);
      dst.noalias() = weights * cols;
      if (record && kernel.requires_grad()) saved->push_back(std::move(cols));
    }
    dst.colwise() += bias.data();
  }

  Shape shape{n, f, ho, wo};
  auto in_node = input.node();
  auto k_node = kernel.node();
  auto b_node = bias.node();
  return make_result(std::move(shape), std::move(out), {input, kernel, bias},
                     [=](detail::Node& self) {
    const Eigen::Map<const RowMat> wts(k_node->data.data(), f, kk);
    for (Eigen::Index b = 0; b < n; ++b) {
      const Eigen::Map<const RowMat> g(self.grad.data() + b * f * positions, f, positions);
      if (k_node->requires_grad) {
        k_node->ensure_grad();
        Eigen::Map<RowMat> dw(k_node->grad.data(), f, kk);
        if (pointwise) {
          dw.noalias() += g * Eigen::Map<const RowMat>(in_node->data.data() + b * c * h * w, c,
                                                       positions).transpose();
        } else {
          dw.noalias() += g * (*saved)[b].transpose();
        }
      }
      if (b_node->requires_grad) {
        b_node->ensure_grad();
        b_node->grad += g.rowwise().sum();
      }
      if (in_node->requires_grad) {
        in_node->ensure_grad();
        double* dst = in_node->grad.data() + b * c * h * w;
        if (pointwise) {
          Eigen::Map<RowMat>(dst, c, positions).noalias() += wts.transpose() * g;
        } else {
          const RowMat dcols = wts.transpose() * g;
          for (Eigen::Index ch = 0; ch < c; ++ch) {
            for (Eigen::Index ki = 0; ki < k; ++ki) {
              for (Eigen::Index kj = 0; kj < k; ++kj) {
                const double* row = dcols.data() + ((ch * k + ki) * k + kj) * positions;
                for (Eigen::Index oy = 0; oy < ho; ++oy) {
                  const Eigen::Index iy = oy * stride - pad + ki;
                  if (iy < 0 || iy >= h) continue;
                  for (Eigen::Index ox = 0; ox < wo; ++ox) {
                    const Eigen::Index ix = ox * stride - pad + kj;
                    if (ix < 0 || ix >= w) continue;
                    dst[(ch * h + iy) * w + ix] += row[oy * wo + ox];
                  }
                }
              }
            }
          }
        }
      }
    }
  });
}

DiffTensor relu(const DiffTensor& x) {
  Eigen::VectorXd out = x.data().cwiseMax(0.0);
  auto xn = x.node();
  return make_result(x.shape(), std::move(out), {x}, [xn](detail::Node& self) {
    xn->ensure_grad();
    xn->grad.array() += (xn->data.array() > 0.0).select(self.grad.array(), 0.0);
  });
}

DiffTensor sigmoid(const DiffTensor& x) {
  Eigen::VectorXd out = x.data().unaryExpr([](double v) {
    if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
  });
  auto xn = x.node();
  return make_result(x.shape(), std::move(out), {x}, [xn](detail::Node& self) {
    xn->ensure_grad();
    xn->grad.array() += self.grad.array() * self.data.array() * (1.0 - self.data.array());
  });
}

DiffTensor bilinear_upsample(const DiffTensor& x, int factor) {
  require_rank4(x, "bilinear_upsample");
  if (factor < 1) throw Error(ErrorCode::InvalidArgument, "upsample factor must be >= 1");
  const Eigen::Index planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  const Eigen::Index ho = h * factor, wo = w * factor;
  const auto ty = std::make_shared<Taps>(bilinear_taps(h, ho, factor));
  const auto tx = std::make_shared<Taps>(bilinear_taps(w, wo, factor));
  Eigen::VectorXd out(planes * ho * wo);
  for (Eigen::Index p = 0; p < planes; ++p) {
    const double* src = x.data().data() + p * h * w;
    double* dst = out.data() + p * ho * wo;
    for (Eigen::Index oy = 0; oy < ho; ++oy) {
      const double* r0 = src + ty->lo[oy] * w;
      const double* r1 = src + ty->hi[oy] * w;
      const double fy = ty->frac[oy];
      for (Eigen::Index ox = 0; ox < wo; ++ox) {
        const double fx = tx->frac[ox];
        const Eigen::Index x0 = tx->lo[ox], x1 = tx->hi[ox];
        const double top = (1.0 - fx) * r0[x0] + fx * r0[x1];
        const double bottom = (1.0 - fx) * r1[x0] + fx * r1[x1];
        dst[oy * wo + ox] = (1.0 - fy) * top + fy * bottom;
      }
    }
  }
  auto xn = x.node();
  Shape shape{x.dim(0), x.dim(1), ho, wo};
  return make_result(std::move(shape), std::move(out), {x}, [=](detail::Node& self) {
    xn->ensure_grad();
    for (Eigen::Index p = 0; p < planes; ++p) {
      const double* g = self.grad.data() + p * ho * wo;
      double* dst = xn->grad.data() + p * h * w;
      for (Eigen::Index oy = 0; oy < ho; ++oy) {
        double* r0 = dst + ty->lo[oy] * w;
        double* r1 = dst + ty->hi[oy] * w;
        const double fy = ty->frac[oy];
        for (Eigen::Index ox = 0; ox < wo; ++ox) {
          const double v = g[oy * wo + ox];
          const double fx = tx->frac[ox];
          const Eigen::Index x0 = tx->lo[ox], x1 = tx->hi[ox];
          r0[x0] += (1.0 - fy) * (1.0 - fx) * v;
          r0[x1] += (1.0 - fy) * fx * v;
          r1[x0] += fy * (1.0 - fx) * v;
          r1[x1] += fy * fx * v;
        }
      }
    }
  });
}

DiffTensor concat_channels(const std::vector<DiffTensor>& xs) {
  if (xs.empty()) throw Error(ErrorCode::ShapeMismatch, "concat of nothing");
  for (const auto& x : xs) require_rank4(x, "concat_channels");
  const Eigen::Index n = xs[0].dim(0), h = xs[0].dim(2), w = xs[0].dim(3);
  Eigen::Index channels = 0;
  for (const auto& x : xs) {
    if (x.dim(0) != n || x.dim(2) != h || x.dim(3) != w) {
      throw Error(ErrorCode::ShapeMismatch, "concat_channels " + shape_string(x.shape()) +
                                                " vs " + shape_string(xs[0].shape()));
    }
    channels += x.dim(1);
  }
  const Eigen::Index plane = h * w;
  Eigen::VectorXd out(n * channels * plane);
  for (Eigen::Index b = 0; b < n; ++b) {
    Eigen::Index offset = b * channels * plane;
    for (const auto& x : xs) {
      const Eigen::Index len = x.dim(1) * plane;
      out.segment(offset, len) = x.data().segment(b * len, len);
      offset += len;
    }
  }
  std::vector<std::shared_ptr<detail::Node>> nodes;
  DiffTensor result(Shape{n, channels, h, w}, std::move(out), false);
  for (const auto& x : xs) nodes.push_back(x.node());
  bool any = false;
  for (const auto& x : xs) any = any || x.requires_grad();
  if (!any) return result;
  // Variadic inputs: wire the node by hand.
  auto& node = *result.node();
  for (const auto& nd : nodes) {
    if (nd->requires_grad) node.parents.push_back(nd);
  }
  node.requires_grad = true;
  node.backward = [nodes, n, channels, plane](detail::Node& self) {
    for (Eigen::Index b = 0; b < n; ++b) {
      Eigen::Index offset = b * channels * plane;
      for (const auto& nd : nodes) {
        const Eigen::Index len = nd->shape[1] * plane;
        if (nd->requires_grad) {
          nd->ensure_grad();
          nd->grad.segment(b * len, len) += self.grad.segment(offset, len);
        }
        offset += len;
      }
    }
  };
  return result;
}

DiffTensor add(const DiffTensor& x, const DiffTensor& y) {
  require_same_shape(x, y, "add");
  auto xn = x.node();
  auto yn = y.node();
  return make_result(x.shape(), x.data() + y.data(), {x, y}, [xn, yn](detail::Node& self) {
    if (xn->requires_grad) {
      xn->ensure_grad();
      xn->grad += self.grad;
    }
    if (yn->requires_grad) {
      yn->ensure_grad();
      yn->grad += self.grad;
    }
  });
}

DiffTensor mul(const DiffTensor& x, const DiffTensor& y) {
  require_same_shape(x, y, "mul");
  auto xn = x.node();
  auto yn = y.node();
  Eigen::VectorXd out = x.data().cwiseProduct(y.data());
  return make_result(x.shape(), std::move(out), {x, y}, [xn, yn](detail::Node& self) {
    if (xn->requires_grad) {
      xn->ensure_grad();
      xn->grad += self.grad.cwiseProduct(yn->data);
    }
    if (yn->requires_grad) {
      yn->ensure_grad();
      yn->grad += self.grad.cwiseProduct(xn->data);
    }
  });
}

DiffTensor scale(const DiffTensor& x, double s) {
  auto xn = x.node();
  return make_result(x.shape(), x.data() * s, {x}, [xn, s](detail::Node& self) {
    xn->ensure_grad();
    xn->grad += s * self.grad;
  });
}

DiffTensor sum(const DiffTensor& x) {
  auto xn = x.node();
  return make_result({1}, Eigen::VectorXd::Constant(1, x.data().sum()), {x},
                     [xn](detail::Node& self) {
                       xn->ensure_grad();
                       xn->grad.array() += self.grad(0);
                     });
}

DiffTensor bce_masked(const DiffTensor& prob, const Eigen::Ref<const Eigen::ArrayXd>& target,
                      const Eigen::Ref<const Eigen::ArrayXd>& weight) {
  if (target.size() != prob.size() || weight.size() != prob.size()) {
    throw Error(ErrorCode::ShapeMismatch,
                "bce_masked: prob " + shape_string(prob.shape()) + ", target " +
                    std::to_string(target.size()) + ", weight " + std::to_string(weight.size()));
  }
  if ((weight < 0.0).any()) throw Error(ErrorCode::NegativeWeight, "bce_masked weight");

  const double weight_sum = weight.sum();
  const double denom = std::max(weight_sum, 1.0);
  double total = 0.0;
  const auto& p = prob.data();
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (weight(i) == 0.0) continue;
    const double pc = std::clamp(p(i), kBceEpsilon, 1.0 - kBceEpsilon);
    total += weight(i) * (-target(i) * std::log(pc) - (1.0 - target(i)) * std::log(1.0 - pc));
  }

  auto pn = prob.node();
  Eigen::ArrayXd t = target;
  Eigen::ArrayXd wt = weight;
  return make_result({1}, Eigen::VectorXd::Constant(1, total / denom), {prob},
                     [pn, t = std::move(t), wt = std::move(wt), denom](detail::Node& self) {
    pn->ensure_grad();
    const double g = self.grad(0) / denom;
    for (Eigen::Index i = 0; i < pn->data.size(); ++i) {
      if (wt(i) == 0.0) continue;
      const double pi = pn->data(i);
      if (!(pi > kBceEpsilon && pi < 1.0 - kBceEpsilon)) continue;
      pn->grad(i) += g * wt(i) * (-t(i) / pi + (1.0 - t(i)) / (1.0 - pi));
    }
  });
}

Parameter make_parameter(std::string name, DiffTensor value) {
  Parameter p;
  p.name = std::move(name);
  p.velocity = Eigen::VectorXd::Zero(value.size());
  p.value = std::move(value);
  return p;
}

void sgd_step(std::span<Parameter> params, double lr, double momentum) {
  if (!(lr > 0.0) || !(momentum >= 0.0 && momentum < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "sgd_step needs lr > 0 and momentum in [0, 1)");
  }
  for (const auto& p : params) {
    if (!p.value.has_grad()) throw Error(ErrorCode::MissingGradient, p.name);
  }
  for (auto& p : params) {
    if (p.velocity.size() != p.value.size()) p.velocity = Eigen::VectorXd::Zero(p.value.size());
    p.velocity = momentum * p.velocity + p.value.grad();
    p.value.mutable_data() -= lr * p.velocity;
    p.value.zero_grad();
  }
}

}  // namespace udeer
