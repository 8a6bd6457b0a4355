// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <span>
#include <vector>

#include "affect/tape.hpp"

namespace affect::losses {

// l2-normalized class-weight matrix plus the margin/scale hyperparameters.
// Columns of `weights` are the class directions; they are re-normalized on
// every forward pass.
struct ArcFaceHead {
  Matrix weights;  // d×num_classes
  double scale = 64.0;
  double margin = 0.5;
};

// Per-batch targets; absent optionals mean the task carries no labels in
// this batch and contributes nothing to the multi-task sum.
struct MultiTaskTargets {
  std::optional<Matrix> va;              // n×2 in [-1,1]
  std::optional<Matrix> aus;             // n×K in {0,1}
  std::optional<std::vector<int>> expr;  // class index 0..6
};

enum class VaMode { Ccc, Mse };

struct TaskWeights {
  double va = 1.0;
  double au = 1.0;
  double expr = 1.0;
};

struct MultiTaskOutputs {
  NodeId va = -1;          // n×2
  NodeId au_logits = -1;   // n×K, pre-sigmoid
  NodeId expr_logits = -1; // n×7
};

// Mean over the batch of (-logit_target + logsumexp(logits)).
NodeId cce_loss(Tape& tape, NodeId logits, const std::vector<int>& targets);

// Mean over the batch of -sum_k [t log p + (1-t) log(1-p)], logs clamped.
// `probs` are post-sigmoid probabilities.
NodeId bce_loss(Tape& tape, NodeId probs, const Matrix& targets);

// Concordance correlation, population (1/n) moments:
//   2 s_xy / (s_x^2 + s_y^2 + (mean_x - mean_y)^2).
// Degenerate denominator (< 1e-12) returns 0 and sets *degenerate.
double ccc(std::span<const double> x, std::span<const double> y,
           bool* degenerate = nullptr);

// Same computation on the tape; pred and labels are n×1 nodes.
NodeId ccc_node(Tape& tape, NodeId pred, NodeId labels,
                bool* degenerate = nullptr);

// 1 - 0.5 (rho_a + rho_v)
NodeId ccc_loss(Tape& tape, NodeId pred_v, NodeId pred_a, const Matrix& label_v,
                const Matrix& label_a, bool* degenerate = nullptr);

NodeId mse_loss(Tape& tape, NodeId pred, const Matrix& labels);

// Sum of the per-task losses over tasks present in `targets`. AU logits are
// passed through sigmoid before the binary cross entropy.
NodeId multitask_loss(Tape& tape, const MultiTaskOutputs& outputs,
                      const MultiTaskTargets& targets, VaMode va_mode,
                      const TaskWeights& weights = {});

// s-scaled cosine logits between l2-normalized embeddings and l2-normalized
// weight columns. With targets (training) the target-class angle is shifted
// by +margin before the cosine; without targets no margin is applied.
NodeId arcface_logits(Tape& tape, NodeId embeddings, NodeId weights,
                      double scale, double margin,
                      const std::vector<int>* targets);

NodeId arcface_loss(Tape& tape, NodeId embeddings, NodeId weights, double scale,
                    double margin, const std::vector<int>& targets);

}  // namespace affect::losses
