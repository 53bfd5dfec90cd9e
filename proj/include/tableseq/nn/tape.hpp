// SPDX-License-Identifier: Apache-2.0
//
// Reverse-mode autodiff over dense 2-D values. A Tape records nodes in
// evaluation order; backward() walks them in reverse and calls each node's
// pullback. Parameters live outside the tape and receive their gradients in
// place, so one set of weights can be shared by many tapes.
#pragma once

#include <deque>
#include <functional>
#include <string>
#include <utility>

#include "tableseq/error.hpp"
#include "tableseq/field.hpp"

namespace tableseq::nn {

template <typename S>
struct Parameter {
  std::string name;
  Field<S> value;
  Field<S> grad;

  Parameter() = default;
  Parameter(std::string n, Field<S> v) : name(std::move(n)), value(std::move(v)), grad(Field<S>::Zero(value.rows(), value.cols())) {}
  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

struct Var {
  int id = -1;
};

template <typename S>
class Tape {
 public:
  using Mat = Field<S>;
  using Pullback = std::function<void(Tape&, const Mat& grad)>;

  /// Value that never receives a gradient.
  Var constant(Mat value) { return push_node(std::move(value), false, nullptr); }

  /// Free input that collects a gradient on the tape (used by checks).
  Var input(Mat value) { return push_node(std::move(value), true, nullptr); }

  /// Reference to an external parameter; gradients accumulate into p.grad.
  Var param(Parameter<S>& p) {
    Node n;
    n.ref = &p.value;
    n.ext_grad = &p.grad;
    n.needs_grad = true;
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  /// Result of an op. `needs_grad` should be true if any input needs one.
  Var push(Mat value, bool needs_grad, Pullback pullback) {
    return push_node(std::move(value), needs_grad, std::move(pullback));
  }

  const Mat& value(Var v) const { return node(v).ref ? *node(v).ref : node(v).value; }
  bool needs_grad(Var v) const { return node(v).needs_grad; }
  template <typename... Vars>
  bool any_needs(Vars... vs) const {
    return (needs_grad(vs) || ...);
  }

  /// Adds `g` into the gradient of `v` (no-op for constants).
  template <typename Expr>
  void accumulate(Var v, const Expr& g) {
    Node& n = node(v);
    if (!n.needs_grad) return;
    grad_buffer(n) += g;
  }

  /// Mutable gradient buffer, allocated on first use.
  Mat& grad(Var v) { return grad_buffer(node(v)); }

  /// Gradient of an input node after backward(); zero if none reached it.
  Mat gradient(Var v) const {
    const Node& n = node(v);
    if (n.ext_grad) return *n.ext_grad;
    if (n.grad.size() == 0) return Mat::Zero(value(v).rows(), value(v).cols());
    return n.grad;
  }

  /// Seeds d(root)/d(root) = 1 for a 1x1 root and runs every pullback.
  void backward(Var root) {
    const Mat& r = value(root);
    if (r.rows() != 1 || r.cols() != 1) throw Error(ErrorCode::kShapeMismatch, "backward root must be a scalar");
    grad(root).setOnes();
    for (int i = root.id; i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (!n.pullback || !n.needs_grad || n.grad.size() == 0) continue;
      n.pullback(*this, n.grad);
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    const Mat* ref = nullptr;
    Mat* ext_grad = nullptr;
    Mat grad;
    bool needs_grad = false;
    Pullback pullback;
  };

  Var push_node(Mat value, bool needs_grad, Pullback pullback) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = needs_grad;
    n.pullback = std::move(pullback);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  Node& node(Var v) { return nodes_.at(static_cast<std::size_t>(v.id)); }
  const Node& node(Var v) const { return nodes_.at(static_cast<std::size_t>(v.id)); }

  Mat& grad_buffer(Node& n) {
    if (n.ext_grad) return *n.ext_grad;
    if (n.grad.size() == 0) {
      const Mat& v = n.ref ? *n.ref : n.value;
      n.grad = Mat::Zero(v.rows(), v.cols());
    }
    return n.grad;
  }

  std::deque<Node> nodes_;
};

}  // namespace tableseq::nn
