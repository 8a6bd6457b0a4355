// SPDX-License-Identifier: Apache-2.0
#include "affect/losses.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace affect::losses {

NodeId cce_loss(Tape& tape, NodeId logits, const std::vector<int>& targets) {
  const Matrix& v = tape.value(logits);
  if (targets.size() != v.rows())
    throw std::invalid_argument("cce_loss: " + std::to_string(targets.size()) +
                                " targets for " + v.shape_str());
  Matrix onehot(v.rows(), v.cols());
  for (std::size_t r = 0; r < v.rows(); ++r) {
    if (targets[r] < 0 || std::size_t(targets[r]) >= v.cols())
      throw std::invalid_argument("cce_loss: class index " +
                                  std::to_string(targets[r]) + " out of 0.." +
                                  std::to_string(v.cols() - 1));
    onehot.at(r, std::size_t(targets[r])) = 1.0;
  }
  NodeId lse = tape.logsumexp_rows(logits);
  NodeId tl = tape.row_sum(tape.mul(logits, tape.constant(std::move(onehot))));
  return tape.mean_all(tape.sub(lse, tl));
}

NodeId bce_loss(Tape& tape, NodeId probs, const Matrix& targets) {
  const Matrix& p = tape.value(probs);
  if (!p.same_shape(targets))
    throw std::invalid_argument("bce_loss: shape mismatch " + p.shape_str() +
                                " vs " + targets.shape_str());
  for (double t : targets.vec())
    if (t != 0.0 && t != 1.0)
      throw std::invalid_argument("bce_loss: target " + std::to_string(t) +
                                  " not in {0,1}");
  NodeId t = tape.constant(targets);
  Matrix comp(targets.rows(), targets.cols());
  for (std::size_t i = 0; i < targets.size(); ++i)
    comp.data()[i] = 1.0 - targets.vec()[i];
  NodeId tc = tape.constant(std::move(comp));
  NodeId ones = tape.constant(Matrix::ones(p.rows(), p.cols()));
  NodeId term = tape.add(tape.mul(t, tape.log_op(probs)),
                         tape.mul(tc, tape.log_op(tape.sub(ones, probs))));
  return tape.scale(tape.sum_all(term), -1.0 / double(p.rows()));
}

double ccc(std::span<const double> x, std::span<const double> y,
           bool* degenerate) {
  if (x.size() != y.size() || x.size() < 2)
    throw std::invalid_argument("ccc: need two equal-length sequences (>= 2)");
  const double n = double(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sx = 0.0, sy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += (x[i] - mx) * (x[i] - mx);
    sy += (y[i] - my) * (y[i] - my);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  sx /= n;
  sy /= n;
  sxy /= n;
  const double denom = sx + sy + (mx - my) * (mx - my);
  if (degenerate) *degenerate = false;
  if (denom < 1e-12) {
    if (degenerate) *degenerate = true;
    return 0.0;
  }
  return 2.0 * sxy / denom;
}

NodeId ccc_node(Tape& tape, NodeId pred, NodeId labels, bool* degenerate) {
  const Matrix &p = tape.value(pred), &l = tape.value(labels);
  if (p.cols() != 1 || l.cols() != 1 || !p.same_shape(l))
    throw std::invalid_argument("ccc: expected equal n×1 sequences, got " +
                                p.shape_str() + " vs " + l.shape_str());
  if (p.rows() < 2) throw std::invalid_argument("ccc: need length >= 2");
  NodeId mx = tape.mean_all(pred);
  NodeId my = tape.mean_all(labels);
  NodeId dx = tape.sub_scalar(pred, mx);
  NodeId dy = tape.sub_scalar(labels, my);
  NodeId sxy = tape.mean_all(tape.mul(dx, dy));
  NodeId sx2 = tape.mean_all(tape.mul(dx, dx));
  NodeId sy2 = tape.mean_all(tape.mul(dy, dy));
  NodeId dm = tape.sub(mx, my);
  NodeId denom = tape.add(tape.add(sx2, sy2), tape.mul(dm, dm));
  if (degenerate) *degenerate = false;
  if (tape.value(denom).at(0, 0) < 1e-12) {
    if (degenerate) *degenerate = true;
    return tape.constant_scalar(0.0);
  }
  return tape.div(tape.scale(sxy, 2.0), denom);
}

NodeId ccc_loss(Tape& tape, NodeId pred_v, NodeId pred_a, const Matrix& label_v,
                const Matrix& label_a, bool* degenerate) {
  bool dv = false, da = false;
  NodeId rho_v = ccc_node(tape, pred_v, tape.constant(label_v), &dv);
  NodeId rho_a = ccc_node(tape, pred_a, tape.constant(label_a), &da);
  if (degenerate) *degenerate = dv || da;
  return tape.sub(tape.constant_scalar(1.0),
                  tape.scale(tape.add(rho_a, rho_v), 0.5));
}

NodeId mse_loss(Tape& tape, NodeId pred, const Matrix& labels) {
  const Matrix& p = tape.value(pred);
  if (!p.same_shape(labels))
    throw std::invalid_argument("mse_loss: shape mismatch " + p.shape_str() +
                                " vs " + labels.shape_str());
  NodeId diff = tape.sub(pred, tape.constant(labels));
  return tape.mean_all(tape.mul(diff, diff));
}

NodeId multitask_loss(Tape& tape, const MultiTaskOutputs& outputs,
                      const MultiTaskTargets& targets, VaMode va_mode,
                      const TaskWeights& weights) {
  if (!targets.va && !targets.aus && !targets.expr)
    throw std::invalid_argument("multitask_loss: no task present in batch");
  NodeId total = -1;
  auto accumulate = [&](NodeId term, double w) {
    if (w != 1.0) term = tape.scale(term, w);
    total = total < 0 ? term : tape.add(total, term);
  };
  if (targets.expr) {
    if (outputs.expr_logits < 0)
      throw std::invalid_argument("multitask_loss: expr targets without head");
    accumulate(cce_loss(tape, outputs.expr_logits, *targets.expr),
               weights.expr);
  }
  if (targets.aus) {
    if (outputs.au_logits < 0)
      throw std::invalid_argument("multitask_loss: AU targets without head");
    accumulate(bce_loss(tape, tape.sigmoid(outputs.au_logits), *targets.aus),
               weights.au);
  }
  if (targets.va) {
    if (outputs.va < 0)
      throw std::invalid_argument("multitask_loss: VA targets without head");
    if (targets.va->cols() != 2)
      throw std::invalid_argument("multitask_loss: VA labels must be n×2");
    if (va_mode == VaMode::Mse) {
      accumulate(mse_loss(tape, outputs.va, *targets.va), weights.va);
    } else {
      Matrix lv(targets.va->rows(), 1), la(targets.va->rows(), 1);
      for (std::size_t r = 0; r < targets.va->rows(); ++r) {
        lv.at(r, 0) = targets.va->at(r, 0);
        la.at(r, 0) = targets.va->at(r, 1);
      }
      NodeId pv = tape.slice_cols(outputs.va, 0, 1);
      NodeId pa = tape.slice_cols(outputs.va, 1, 2);
      accumulate(ccc_loss(tape, pv, pa, lv, la), weights.va);
    }
  }
  return total;
}

NodeId arcface_logits(Tape& tape, NodeId embeddings, NodeId weights,
                      double scale, double margin,
                      const std::vector<int>* targets) {
  const Matrix& e = tape.value(embeddings);
  const Matrix& w = tape.value(weights);
  if (e.cols() != w.rows())
    throw std::invalid_argument("arcface_logits: embedding dim " +
                                e.shape_str() + " vs weights " + w.shape_str());
  if (e.cols() < 2) throw std::invalid_argument("arcface_logits: d must be >= 2");
  if (scale <= 0.0) throw std::invalid_argument("arcface_logits: s must be > 0");
  if (margin < 0.0) throw std::invalid_argument("arcface_logits: m must be >= 0");
  for (std::size_t r = 0; r < e.rows(); ++r) {
    double n2 = 0.0;
    for (std::size_t c = 0; c < e.cols(); ++c) n2 += e.at(r, c) * e.at(r, c);
    if (n2 == 0.0)
      throw std::invalid_argument("arcface_logits: zero embedding row " +
                                  std::to_string(r));
  }
  NodeId en = tape.l2_normalize_rows(embeddings);
  NodeId wn = tape.l2_normalize_rows(tape.transpose(weights));
  NodeId cos = tape.matmul(en, tape.transpose(wn));
  if (targets) cos = tape.arc_margin(cos, *targets, margin);
  return tape.scale(cos, scale);
}

NodeId arcface_loss(Tape& tape, NodeId embeddings, NodeId weights, double scale,
                    double margin, const std::vector<int>& targets) {
  NodeId logits =
      arcface_logits(tape, embeddings, weights, scale, margin, &targets);
  return cce_loss(tape, logits, targets);
}

}  // namespace affect::losses
