// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <vector>

#include "affect/matrix.hpp"

namespace affect {

using NodeId = int;

// Reverse-mode differentiation record over dense matrix operations. Each op
// appends a node holding the cached forward value and a closure that pushes
// the node's adjoint back into its parents. Node ids are topologically
// ordered by construction; backward() is a single reverse sweep.
//
// A tape is single-owner: built and differentiated by one thread. Values are
// immutable once recorded.
class Tape {
 public:
  static constexpr double kLogFloor = 1e-12;

  NodeId leaf(Matrix value);      // differentiable input (parameter/feature)
  NodeId constant(Matrix value);  // no gradient tracked
  NodeId constant_scalar(double v) { return constant(Matrix::scalar(v)); }

  const Matrix& value(NodeId id) const { return nodes_[id].value; }
  const Matrix& grad(NodeId id) const { return nodes_[id].grad; }
  // Adjoint of `id`, or a zero matrix if the node never received one.
  Matrix grad_or_zero(NodeId id) const {
    const Node& n = nodes_[id];
    return n.grad.empty() ? Matrix(n.value.rows(), n.value.cols()) : n.grad;
  }
  std::size_t size() const { return nodes_.size(); }
  // zero-row l2_normalize inputs seen so far
  int zero_row_warnings() const { return zero_row_warnings_; }

  // Elementwise; shapes must match.
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId div(NodeId a, NodeId b);
  // Broadcast: s is 1×1.
  NodeId add_scalar(NodeId a, NodeId s);
  NodeId sub_scalar(NodeId a, NodeId s);
  NodeId mul_scalar(NodeId a, NodeId s);
  NodeId div_scalar(NodeId a, NodeId s);
  // Broadcast row vector b (1×m) over every row of a (n×m).
  NodeId add_rowvec(NodeId a, NodeId b);

  NodeId matmul(NodeId a, NodeId b);
  NodeId transpose(NodeId a);
  NodeId scale(NodeId a, double c);

  NodeId tanh_op(NodeId a);
  NodeId sigmoid(NodeId a);
  NodeId relu(NodeId a);  // subgradient at 0 is 0
  NodeId exp_op(NodeId a);
  NodeId log_op(NodeId a);  // clamped below at kLogFloor

  NodeId softmax_rows(NodeId a);
  NodeId logsumexp_rows(NodeId a);     // n×m -> n×1
  NodeId l2_normalize_rows(NodeId a);  // zero rows pass through, flagged
  NodeId concat_cols(NodeId a, NodeId b);
  NodeId slice_cols(NodeId a, std::size_t c0, std::size_t c1);  // [c0, c1)
  NodeId row_sum(NodeId a);   // n×m -> n×1
  NodeId col_mean(NodeId a);  // n×m -> 1×m
  NodeId sum_all(NodeId a);   // -> 1×1
  NodeId mean_all(NodeId a);  // -> 1×1

  // For each row i, replaces cos θ at column targets[i] by cos(θ + margin),
  // θ = acos(clamp(cos, -1, 1)). Other entries pass through.
  NodeId arc_margin(NodeId cosines, const std::vector<int>& targets,
                    double margin);

  // Reverse sweep from a scalar (1×1) loss node. May be called repeatedly;
  // gradients are recomputed from scratch each time.
  void backward(NodeId loss);

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    std::function<void(Tape&)> pull;  // adds this node's adjoint to parents
  };

  NodeId push(Matrix value, bool requires_grad, std::function<void(Tape&)> pull);
  Matrix& grad_ref(NodeId id);
  void accumulate(NodeId id, const Matrix& g);
  bool wants_grad(NodeId id) const { return nodes_[id].requires_grad; }

  // deque: callers hold references to node values across pushes
  std::deque<Node> nodes_;
  int zero_row_warnings_ = 0;
};

}  // namespace affect
