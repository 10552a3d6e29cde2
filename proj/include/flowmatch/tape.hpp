// Copyright (c) the flowmatch authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "flowmatch/tensor.hpp"

namespace flowmatch {

// Reverse-mode autodiff over a per-invocation tape. The tape is append-only
// during the forward pass; backward() walks it once in reverse topological
// order (node ids are already topologically sorted).
//
// Elementwise binary ops broadcast only a rank-1 right operand over the
// leading batch dimension of a rank-2 left operand: [B,n] (op) [n].
//
// A tape is single-threaded. Parameter tensors are plain values, so batch
// shards can run on independent tapes in parallel and reduce gradients by
// summation.

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

class Gradients {
 public:
  explicit Gradients(std::size_t n) : grads_(n) {}
  bool has(Var v) const { return !grads_[v.id].empty(); }
  const Tensor& get(Var v) const;
  Tensor& slot(int id) { return grads_[id]; }
  std::size_t size() const { return grads_.size(); }

 private:
  std::vector<Tensor> grads_;
};

class Tape {
 public:
  enum class Op {
    leaf,
    matmul,
    add,
    sub,
    mul,
    smul,
    tanh_op,
    silu_op,
    concat_cols,
    sum_all,
    mean_all,
    squared_l2,
  };

  Var leaf(Tensor value, bool requires_grad = false);
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var smul(Var a, double s);
  Var tanh(Var a);
  Var silu(Var a);
  Var concat_cols(Var a, Var b);
  Var sum(Var a);
  Var mean(Var a);
  Var squared_l2(Var a);

  const Tensor& value(Var v) const { return nodes_[v.id].value; }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  // root must be scalar; returns one gradient tensor per node (empty where no
  // gradient is tracked). Gradient shapes equal value shapes.
  Gradients backward(Var root) const;

 private:
  struct Node {
    Op op;
    int a = -1;
    int b = -1;
    double scalar = 0.0;
    bool requires_grad = false;
    Tensor value;
  };

  Var push(Node n);
  const Node& node(Var v) const { return nodes_[v.id]; }

  std::vector<Node> nodes_;
};

}  // namespace flowmatch
