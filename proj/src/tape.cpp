// SPDX-License-Identifier: Apache-2.0
#include "affect/tape.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "affect/kernels.hpp"

namespace affect {

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (!a.same_shape(b))
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                a.shape_str() + " vs " + b.shape_str());
}

void require_scalar(const Matrix& s, const char* op) {
  if (s.rows() != 1 || s.cols() != 1)
    throw std::invalid_argument(std::string(op) + ": expected 1x1, got " +
                                s.shape_str());
}

}  // namespace

NodeId Tape::push(Matrix value, bool requires_grad,
                  std::function<void(Tape&)> pull) {
  nodes_.push_back(Node{std::move(value), Matrix{}, requires_grad,
                        std::move(pull)});
  return static_cast<NodeId>(nodes_.size() - 1);
}

Matrix& Tape::grad_ref(NodeId id) { return nodes_[id].grad; }

void Tape::accumulate(NodeId id, const Matrix& g) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return;
  if (n.grad.empty()) n.grad = Matrix(n.value.rows(), n.value.cols());
  kernels::active().add(n.grad.data(), n.grad.data(), g.data(), g.size());
}

NodeId Tape::leaf(Matrix value) {
  check_finite(value, "leaf");
  return push(std::move(value), true, nullptr);
}

NodeId Tape::constant(Matrix value) {
  check_finite(value, "constant");
  return push(std::move(value), false, nullptr);
}

NodeId Tape::add(NodeId a, NodeId b) {
  const Matrix &va = value(a), &vb = value(b);
  require_same_shape(va, vb, "add");
  Matrix out(va.rows(), va.cols());
  kernels::active().add(out.data(), va.data(), vb.data(), out.size());
  bool rg = wants_grad(a) || wants_grad(b);
  return push(std::move(out), rg, [a, b, out_id = size()](Tape& t) {
    const Matrix& g = t.grad(out_id);
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

NodeId Tape::sub(NodeId a, NodeId b) {
  const Matrix &va = value(a), &vb = value(b);
  require_same_shape(va, vb, "sub");
  Matrix out(va.rows(), va.cols());
  kernels::active().sub(out.data(), va.data(), vb.data(), out.size());
  bool rg = wants_grad(a) || wants_grad(b);
  return push(std::move(out), rg, [a, b, out_id = size()](Tape& t) {
    const Matrix& g = t.grad(out_id);
    t.accumulate(a, g);
    Matrix neg(g.rows(), g.cols());
    kernels::active().scale(neg.data(), g.data(), -1.0, g.size());
    t.accumulate(b, neg);
  });
}

NodeId Tape::mul(NodeId a, NodeId b) {
  const Matrix &va = value(a), &vb = value(b);
  require_same_shape(va, vb, "mul");
  Matrix out(va.rows(), va.cols());
  kernels::active().mul(out.data(), va.data(), vb.data(), out.size());
  bool rg = wants_grad(a) || wants_grad(b);
  return push(std::move(out), rg, [a, b, out_id = size()](Tape& t) {
    const Matrix& g = t.grad(out_id);
    Matrix tmp(g.rows(), g.cols());
    kernels::active().mul(tmp.data(), g.data(), t.value(b).data(), g.size());
    t.accumulate(a, tmp);
    kernels::active().mul(tmp.data(), g.data(), t.value(a).data(), g.size());
    t.accumulate(b, tmp);
  });
}

NodeId Tape::div(NodeId a, NodeId b) {
  const Matrix &va = value(a), &vb = value(b);
  require_same_shape(va, vb, "div");
  Matrix out(va.rows(), va.cols());
  kernels::active().div(out.data(), va.data(), vb.data(), out.size());
  check_finite(out, "div");
  bool rg = wants_grad(a) || wants_grad(b);
  return push(std::move(out), rg, [a, b, out_id = size()](Tape& t) {
    const Matrix& g = t.grad(out_id);
    const Matrix &va = t.value(a), &vb = t.value(b);
    Matrix ga(g.rows(), g.cols()), gb(g.rows(), g.cols());
    for (std::size_t i = 0; i < g.size(); ++i) {
      ga.data()[i] = g.data()[i] / vb.data()[i];
      gb.data()[i] =
          -g.data()[i] * va.data()[i] / (vb.data()[i] * vb.data()[i]);
    }
    t.accumulate(a, ga);
    t.accumulate(b, gb);
  });
}

NodeId Tape::add_scalar(NodeId a, NodeId s) {
  const Matrix &va = value(a), &vs = value(s);
  require_scalar(vs, "add_scalar");
  Matrix out = va;
  const double c = vs.at(0, 0);
  for (auto& v : out.vec()) v += c;
  bool rg = wants_grad(a) || wants_grad(s);
  return push(std::move(out), rg, [a, s, out_id = size()](Tape& t) {
    const Matrix& g = t.grad(out_id);
    t.accumulate(a, g);
    t.accumulate(s, Matrix::scalar(kernels::active().sum(g.data(), g.size())));
  });
}

NodeId Tape::sub_scalar(NodeId a, NodeId s) {
  return add_scalar(a, scale(s, -1.0));
}

NodeId Tape::mul_scalar(NodeId a, NodeId s) {
  const Matrix &va = value(a), &vs = value(s);
  require_scalar(vs, "mul_scalar");
  Matrix out(va.rows(), va.cols());
  kernels::active().scale(out.data(), va.data(), vs.at(0, 0), out.size());
  bool rg = wants_grad(a) || wants_grad(s);
  return push(std::move(out), rg, [a, s, out_id = size()](Tape& t) {
    const Matrix& g = t.grad(out_id);
    Matrix ga(g.rows(), g.cols());
    kernels::active().scale(ga.data(), g.data(), t.value(s).at(0, 0), g.size());
    t.accumulate(a, ga);
    t.accumulate(s, Matrix::scalar(kernels::active().dot(
                        g.data(), t.value(a).data(), g.size())));
  });
}

NodeId Tape::div_scalar(NodeId a, NodeId s) {
  const Matrix &va = value(a), &vs = value(s);
  require_scalar(vs, "div_scalar");
  Matrix out(va.rows(), va.cols());
  kernels::active().scale(out.data(), va.data(), 1.0 / vs.at(0, 0), out.size());
  check_finite(out, "div_scalar");
  bool rg = wants_grad(a) || wants_grad(s);
  return push(std::move(out), rg, [a, s, out_id = size()](Tape& t) {
    const Matrix& g = t.grad(out_id);
    const double sv = t.value(s).at(0, 0);
    Matrix ga(g.rows(), g.cols());
    kernels::active().scale(ga.data(), g.data(), 1.0 / sv, g.size());
    t.accumulate(a, ga);
    double ds = -kernels::active().dot(g.data(), t.value(a).data(), g.size()) /
                (sv * sv);
    t.accumulate(s, Matrix::scalar(ds));
  });
}

NodeId Tape::add_rowvec(NodeId a, NodeId b) {
  const Matrix &va = value(a), &vb = value(b);
  if (vb.rows() != 1 || vb.cols() != va.cols())
    throw std::invalid_argument("add_rowvec: shape mismatch " + va.shape_str() +
                                " vs " + vb.shape_str());
  Matrix out(va.rows(), va.cols());
  for (std::size_t r = 0; r < va.rows(); ++r)
    kernels::active().add(out.row_ptr(r), va.row_ptr(r), vb.data(), va.cols());
  bool rg = wants_grad(a) || wants_grad(b);
  return push(std::move(out), rg, [a, b, out_id = size()](Tape& t) {
    const Matrix& g = t.grad(out_id);
    t.accumulate(a, g);
    Matrix gb(1, g.cols());
    for (std::size_t r = 0; r < g.rows(); ++r)
      kernels::active().add(gb.data(), gb.data(), g.row_ptr(r), g.cols());
    t.accumulate(b, gb);
  });
}

NodeId Tape::matmul(NodeId a, NodeId b) {
  Matrix out = affect::matmul(value(a), value(b));
  check_finite(out, "matmul");
  bool rg = wants_grad(a) || wants_grad(b);
  return push(std::move(out), rg, [a, b, out_id = size()](Tape& t) {
    const Matrix& g = t.grad(out_id);
    t.accumulate(a, affect::matmul(g, affect::transpose(t.value(b))));
    t.accumulate(b, affect::matmul(affect::transpose(t.value(a)), g));
  });
}

NodeId Tape::transpose(NodeId a) {
  return push(affect::transpose(value(a)), wants_grad(a),
              [a, out_id = size()](Tape& t) {
                t.accumulate(a, affect::transpose(t.grad(out_id)));
              });
}

NodeId Tape::scale(NodeId a, double c) {
  const Matrix& va = value(a);
  Matrix out(va.rows(), va.cols());
  kernels::active().scale(out.data(), va.data(), c, out.size());
  return push(std::move(out), wants_grad(a), [a, c, out_id = size()](Tape& t) {
    const Matrix& g = t.grad(out_id);
    Matrix ga(g.rows(), g.cols());
    kernels::active().scale(ga.data(), g.data(), c, g.size());
    t.accumulate(a, ga);
  });
}

NodeId Tape::tanh_op(NodeId a) {
  Matrix out = value(a);
  for (auto& v : out.vec()) v = std::tanh(v);
  return push(std::move(out), wants_grad(a), [a, out_id = size()](Tape& t) {
    const Matrix &g = t.grad(out_id), &y = t.value(out_id);
    Matrix ga(g.rows(), g.cols());
    for (std::size_t i = 0; i < g.size(); ++i)
      ga.data()[i] = g.data()[i] * (1.0 - y.data()[i] * y.data()[i]);
    t.accumulate(a, ga);
  });
}

NodeId Tape::sigmoid(NodeId a) {
  Matrix out = value(a);
  for (auto& v : out.vec()) v = 1.0 / (1.0 + std::exp(-v));
  return push(std::move(out), wants_grad(a), [a, out_id = size()](Tape& t) {
    const Matrix &g = t.grad(out_id), &y = t.value(out_id);
    Matrix ga(g.rows(), g.cols());
    for (std::size_t i = 0; i < g.size(); ++i)
      ga.data()[i] = g.data()[i] * y.data()[i] * (1.0 - y.data()[i]);
    t.accumulate(a, ga);
  });
}

NodeId Tape::relu(NodeId a) {
  const Matrix& va = value(a);
  Matrix out(va.rows(), va.cols());
  kernels::active().relu(out.data(), va.data(), out.size());
  return push(std::move(out), wants_grad(a), [a, out_id = size()](Tape& t) {
    const Matrix &g = t.grad(out_id), &va = t.value(a);
    Matrix ga(g.rows(), g.cols());
    for (std::size_t i = 0; i < g.size(); ++i)
      ga.data()[i] = va.data()[i] > 0.0 ? g.data()[i] : 0.0;
    t.accumulate(a, ga);
  });
}

NodeId Tape::exp_op(NodeId a) {
  Matrix out = value(a);
  for (auto& v : out.vec()) v = std::exp(v);
  check_finite(out, "exp");
  return push(std::move(out), wants_grad(a), [a, out_id = size()](Tape& t) {
    const Matrix &g = t.grad(out_id), &y = t.value(out_id);
    Matrix ga(g.rows(), g.cols());
    kernels::active().mul(ga.data(), g.data(), y.data(), g.size());
    t.accumulate(a, ga);
  });
}

NodeId Tape::log_op(NodeId a) {
  Matrix out = value(a);
  for (auto& v : out.vec()) v = std::log(v < kLogFloor ? kLogFloor : v);
  return push(std::move(out), wants_grad(a), [a, out_id = size()](Tape& t) {
    const Matrix &g = t.grad(out_id), &va = t.value(a);
    Matrix ga(g.rows(), g.cols());
    for (std::size_t i = 0; i < g.size(); ++i)
      ga.data()[i] =
          va.data()[i] >= kLogFloor ? g.data()[i] / va.data()[i] : 0.0;
    t.accumulate(a, ga);
  });
}

NodeId Tape::softmax_rows(NodeId a) {
  const Matrix& va = value(a);
  Matrix out(va.rows(), va.cols());
  for (std::size_t r = 0; r < va.rows(); ++r) {
    double lo, hi;
    kernels::active().minmax(va.row_ptr(r), va.cols(), &lo, &hi);
    double z = 0.0;
    for (std::size_t c = 0; c < va.cols(); ++c) {
      out.at(r, c) = std::exp(va.at(r, c) - hi);
      z += out.at(r, c);
    }
    kernels::active().scale(out.row_ptr(r), out.row_ptr(r), 1.0 / z, va.cols());
  }
  return push(std::move(out), wants_grad(a), [a, out_id = size()](Tape& t) {
    const Matrix &g = t.grad(out_id), &y = t.value(out_id);
    Matrix ga(g.rows(), g.cols());
    for (std::size_t r = 0; r < g.rows(); ++r) {
      double gy = kernels::active().dot(g.row_ptr(r), y.row_ptr(r), g.cols());
      for (std::size_t c = 0; c < g.cols(); ++c)
        ga.at(r, c) = y.at(r, c) * (g.at(r, c) - gy);
    }
    t.accumulate(a, ga);
  });
}

NodeId Tape::logsumexp_rows(NodeId a) {
  const Matrix& va = value(a);
  Matrix out(va.rows(), 1);
  for (std::size_t r = 0; r < va.rows(); ++r) {
    double lo, hi;
    kernels::active().minmax(va.row_ptr(r), va.cols(), &lo, &hi);
    double z = 0.0;
    for (std::size_t c = 0; c < va.cols(); ++c) z += std::exp(va.at(r, c) - hi);
    out.at(r, 0) = hi + std::log(z);
  }
  return push(std::move(out), wants_grad(a), [a, out_id = size()](Tape& t) {
    const Matrix &g = t.grad(out_id), &va = t.value(a);
    const Matrix& lse = t.value(out_id);
    Matrix ga(va.rows(), va.cols());
    for (std::size_t r = 0; r < va.rows(); ++r)
      for (std::size_t c = 0; c < va.cols(); ++c)
        ga.at(r, c) = g.at(r, 0) * std::exp(va.at(r, c) - lse.at(r, 0));
    t.accumulate(a, ga);
  });
}

NodeId Tape::l2_normalize_rows(NodeId a) {
  const Matrix& va = value(a);
  Matrix out(va.rows(), va.cols());
  std::vector<double> norms(va.rows());
  for (std::size_t r = 0; r < va.rows(); ++r) {
    double n2 = kernels::active().dot(va.row_ptr(r), va.row_ptr(r), va.cols());
    double n = std::sqrt(n2);
    norms[r] = n;
    if (n == 0.0) {
      ++zero_row_warnings_;  // zero row maps to zero row
      continue;
    }
    kernels::active().scale(out.row_ptr(r), va.row_ptr(r), 1.0 / n, va.cols());
  }
  return push(std::move(out), wants_grad(a),
              [a, norms = std::move(norms), out_id = size()](Tape& t) {
                const Matrix &g = t.grad(out_id), &y = t.value(out_id);
                Matrix ga(g.rows(), g.cols());
                for (std::size_t r = 0; r < g.rows(); ++r) {
                  if (norms[r] == 0.0) continue;
                  double yg = kernels::active().dot(y.row_ptr(r), g.row_ptr(r),
                                                    g.cols());
                  for (std::size_t c = 0; c < g.cols(); ++c)
                    ga.at(r, c) =
                        (g.at(r, c) - y.at(r, c) * yg) / norms[r];
                }
                t.accumulate(a, ga);
              });
}

NodeId Tape::concat_cols(NodeId a, NodeId b) {
  const Matrix &va = value(a), &vb = value(b);
  if (va.rows() != vb.rows())
    throw std::invalid_argument("concat_cols: row mismatch " + va.shape_str() +
                                " vs " + vb.shape_str());
  Matrix out(va.rows(), va.cols() + vb.cols());
  for (std::size_t r = 0; r < va.rows(); ++r) {
    for (std::size_t c = 0; c < va.cols(); ++c) out.at(r, c) = va.at(r, c);
    for (std::size_t c = 0; c < vb.cols(); ++c)
      out.at(r, va.cols() + c) = vb.at(r, c);
  }
  bool rg = wants_grad(a) || wants_grad(b);
  std::size_t ac = va.cols();
  return push(std::move(out), rg, [a, b, ac, out_id = size()](Tape& t) {
    const Matrix& g = t.grad(out_id);
    Matrix ga(g.rows(), ac), gb(g.rows(), g.cols() - ac);
    for (std::size_t r = 0; r < g.rows(); ++r) {
      for (std::size_t c = 0; c < ac; ++c) ga.at(r, c) = g.at(r, c);
      for (std::size_t c = ac; c < g.cols(); ++c)
        gb.at(r, c - ac) = g.at(r, c);
    }
    t.accumulate(a, ga);
    t.accumulate(b, gb);
  });
}

NodeId Tape::slice_cols(NodeId a, std::size_t c0, std::size_t c1) {
  const Matrix& va = value(a);
  if (c1 > va.cols() || c0 >= c1)
    throw std::invalid_argument("slice_cols: range [" + std::to_string(c0) +
                                "," + std::to_string(c1) + ") out of " +
                                va.shape_str());
  Matrix out(va.rows(), c1 - c0);
  for (std::size_t r = 0; r < va.rows(); ++r)
    for (std::size_t c = c0; c < c1; ++c) out.at(r, c - c0) = va.at(r, c);
  std::size_t cols = va.cols();
  return push(std::move(out), wants_grad(a),
              [a, c0, cols, out_id = size()](Tape& t) {
                const Matrix& g = t.grad(out_id);
                Matrix ga(g.rows(), cols);
                for (std::size_t r = 0; r < g.rows(); ++r)
                  for (std::size_t c = 0; c < g.cols(); ++c)
                    ga.at(r, c0 + c) = g.at(r, c);
                t.accumulate(a, ga);
              });
}

NodeId Tape::row_sum(NodeId a) {
  const Matrix& va = value(a);
  Matrix out(va.rows(), 1);
  for (std::size_t r = 0; r < va.rows(); ++r)
    out.at(r, 0) = kernels::active().sum(va.row_ptr(r), va.cols());
  std::size_t cols = va.cols();
  return push(std::move(out), wants_grad(a),
              [a, cols, out_id = size()](Tape& t) {
                const Matrix& g = t.grad(out_id);
                Matrix ga(g.rows(), cols);
                for (std::size_t r = 0; r < g.rows(); ++r)
                  for (std::size_t c = 0; c < cols; ++c)
                    ga.at(r, c) = g.at(r, 0);
                t.accumulate(a, ga);
              });
}

NodeId Tape::col_mean(NodeId a) {
  const Matrix& va = value(a);
  Matrix out(1, va.cols());
  for (std::size_t r = 0; r < va.rows(); ++r)
    kernels::active().add(out.data(), out.data(), va.row_ptr(r), va.cols());
  kernels::active().scale(out.data(), out.data(), 1.0 / double(va.rows()),
                          va.cols());
  std::size_t rows = va.rows();
  return push(std::move(out), wants_grad(a),
              [a, rows, out_id = size()](Tape& t) {
                const Matrix& g = t.grad(out_id);
                Matrix ga(rows, g.cols());
                for (std::size_t r = 0; r < rows; ++r)
                  kernels::active().scale(ga.row_ptr(r), g.data(),
                                          1.0 / double(rows), g.cols());
                t.accumulate(a, ga);
              });
}

NodeId Tape::sum_all(NodeId a) {
  const Matrix& va = value(a);
  Matrix out = Matrix::scalar(kernels::active().sum(va.data(), va.size()));
  std::size_t rows = va.rows(), cols = va.cols();
  return push(std::move(out), wants_grad(a),
              [a, rows, cols, out_id = size()](Tape& t) {
                double g = t.grad(out_id).at(0, 0);
                Matrix ga(rows, cols);
                for (auto& v : ga.vec()) v = g;
                t.accumulate(a, ga);
              });
}

NodeId Tape::mean_all(NodeId a) {
  std::size_t n = value(a).size();
  return scale(sum_all(a), 1.0 / double(n));
}

NodeId Tape::arc_margin(NodeId cosines, const std::vector<int>& targets,
                        double margin) {
  const Matrix& vc = value(cosines);
  if (targets.size() != vc.rows())
    throw std::invalid_argument("arc_margin: " + std::to_string(targets.size()) +
                                " targets for " + vc.shape_str());
  for (std::size_t r = 0; r < targets.size(); ++r)
    if (targets[r] < 0 || std::size_t(targets[r]) >= vc.cols())
      throw std::invalid_argument("arc_margin: target index " +
                                  std::to_string(targets[r]) + " out of range");
  Matrix out = vc;
  for (std::size_t r = 0; r < vc.rows(); ++r) {
    double c = vc.at(r, std::size_t(targets[r]));
    if (c > 1.0) c = 1.0;
    if (c < -1.0) c = -1.0;
    out.at(r, std::size_t(targets[r])) = std::cos(std::acos(c) + margin);
  }
  return push(std::move(out), wants_grad(cosines),
              [cosines, targets, margin, out_id = size()](Tape& t) {
                const Matrix &g = t.grad(out_id), &vc = t.value(cosines);
                Matrix ga = g;
                // d/dc cos(acos(c)+m) = sin(acos(c)+m)/sqrt(1-c^2)
                constexpr double kEps = 1e-7;
                for (std::size_t r = 0; r < vc.rows(); ++r) {
                  std::size_t j = std::size_t(targets[r]);
                  double c = vc.at(r, j);
                  if (c > 1.0 - kEps) c = 1.0 - kEps;
                  if (c < -1.0 + kEps) c = -1.0 + kEps;
                  double theta = std::acos(c);
                  ga.at(r, j) = g.at(r, j) * std::sin(theta + margin) /
                                std::sqrt(1.0 - c * c);
                }
                t.accumulate(cosines, ga);
              });
}

void Tape::backward(NodeId loss) {
  const Matrix& lv = value(loss);
  if (lv.rows() != 1 || lv.cols() != 1)
    throw std::invalid_argument("backward: loss node must be 1x1, got " +
                                lv.shape_str());
  for (auto& n : nodes_) n.grad = Matrix{};
  nodes_[loss].grad = Matrix::scalar(1.0);
  for (NodeId id = loss; id >= 0; --id) {
    Node& n = nodes_[id];
    if (n.grad.empty() || !n.pull) continue;
    n.pull(*this);
  }
}

}  // namespace affect
