// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "affect/losses.hpp"
#include "affect/rng.hpp"
#include "affect/serialize.hpp"
#include "affect/tape.hpp"

namespace affect::nets {

enum class Activation { Linear, Relu, Tanh, Sigmoid };

// A parameter matrix staged onto a tape for one training step.
struct ParamBinding {
  Matrix* host = nullptr;
  NodeId node = -1;
};
using Bindings = std::vector<ParamBinding>;

struct DenseLayer {
  Matrix weight;  // in×out
  Matrix bias;    // 1×out
  Activation activation = Activation::Linear;

  // fan-based scaled uniform init, bound sqrt(6/(fan_in+fan_out))
  static DenseLayer init(std::size_t in, std::size_t out, Activation act,
                         Rng& rng);

  struct Nodes {
    NodeId weight = -1;
    NodeId bias = -1;
  };
  Nodes stage(Tape& tape, Bindings& bindings);
  NodeId forward(Tape& tape, const Nodes& nodes, NodeId input) const;
};

// Standard GRU cell, reset-before-candidate:
//   z = sigmoid(x Wz + h Uz + bz), r = sigmoid(x Wr + h Ur + br),
//   c = tanh(x Wc + (r.h) Uc + bc), h' = (1-z).h + z.c
struct GruCell {
  Matrix wz, uz, bz, wr, ur, br, wc, uc, bc;

  static GruCell init(std::size_t in, std::size_t hidden, Rng& rng);

  struct Nodes {
    NodeId wz, uz, bz, wr, ur, br, wc, uc, bc;
  };
  Nodes stage(Tape& tape, Bindings& bindings);
  NodeId step(Tape& tape, const Nodes& nodes, NodeId input,
              NodeId state) const;
  std::size_t hidden_size() const { return uz.rows(); }
};

struct GruStack {
  std::vector<GruCell> cells;

  static GruStack init(std::size_t in, std::size_t hidden, std::size_t layers,
                       Rng& rng);

  struct Nodes {
    std::vector<GruCell::Nodes> cells;
  };
  Nodes stage(Tape& tape, Bindings& bindings);
  // Top-layer hidden state per timestep. Initial states are zero.
  std::vector<NodeId> forward(Tape& tape, const Nodes& nodes,
                              const std::vector<NodeId>& sequence) const;
};

// VA regression (2), AU logits (K) and expression logits (7), all read from
// the same feature vector.
struct MultiTaskHead {
  DenseLayer va, au, expr;

  static MultiTaskHead init(std::size_t feature_dim, std::size_t au_count,
                            Rng& rng);

  struct Nodes {
    DenseLayer::Nodes va, au, expr;
  };
  Nodes stage(Tape& tape, Bindings& bindings);
  losses::MultiTaskOutputs forward(Tape& tape, const Nodes& nodes,
                                   NodeId features) const;
};

// Per-timestep concatenation of the two 128-dim streams into a 256-dim
// vector fed to the fusion GRU. Sequences must have equal length.
std::vector<NodeId> av_fusion_forward(Tape& tape,
                                      const std::vector<NodeId>& visual,
                                      const std::vector<NodeId>& audio,
                                      const GruStack& fusion,
                                      const GruStack::Nodes& fusion_nodes);

// Inverted dropout: mask then scale by 1/(1-rate) in training; identity in
// inference.
NodeId dropout_apply(Tape& tape, NodeId features, double rate, Rng& rng,
                     bool training);

struct SgdMomentum {
  double learning_rate = 1e-4;
  double momentum = 0.9;
  std::vector<Matrix> velocity;
  void step(const Bindings& bindings, const std::vector<Matrix>& grads);
};

struct Adam {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t t = 0;
  std::vector<Matrix> m, v;
  void step(const Bindings& bindings, const std::vector<Matrix>& grads);
};

struct TrainConfig {
  enum class Optimizer { Adam, SgdMomentum };
  Optimizer optimizer = Optimizer::Adam;
  double learning_rate = 1e-4;
  std::size_t batch_size = 256;
  std::size_t seq_len = 90;
  double dropout = 0.4;
  std::uint64_t seed = 0;
  std::size_t steps = 1000;
  losses::VaMode va_mode = losses::VaMode::Ccc;
};

struct TrainTrace {
  std::vector<double> losses;
};

// Builds one step's loss graph, staging every trainable matrix into
// `bindings` in a stable order.
using LossBuilder = std::function<NodeId(Tape& tape, Bindings& bindings,
                                         std::size_t step, Rng& rng)>;

// Deterministic given cfg.seed. Throws std::runtime_error naming the step
// index if the loss goes non-finite.
TrainTrace train(const LossBuilder& build_loss, const TrainConfig& cfg);

// Toy dense backbone + multi-task heads (shared features -> three heads).
struct MultiTaskModel {
  DenseLayer l1, l2;
  MultiTaskHead heads;

  static MultiTaskModel init(std::size_t input_dim, std::size_t hidden,
                             std::size_t au_count, Rng& rng);

  struct Nodes {
    DenseLayer::Nodes l1, l2;
    MultiTaskHead::Nodes heads;
  };
  Nodes stage(Tape& tape, Bindings& bindings);
  losses::MultiTaskOutputs forward(Tape& tape, const Nodes& nodes,
                                   NodeId input) const;

  serialize::NamedMatrices to_arrays() const;
  static MultiTaskModel from_arrays(const serialize::NamedMatrices& arrays);
};

// Toy dense backbone into a d-dim embedding with an ArcFace output head.
struct ArcFaceModel {
  DenseLayer l1, l2;  // l2 emits the embedding
  losses::ArcFaceHead head;

  static ArcFaceModel init(std::size_t input_dim, std::size_t hidden,
                           std::size_t embed_dim, double scale, double margin,
                           Rng& rng);

  struct Nodes {
    DenseLayer::Nodes l1, l2;
    NodeId head_weights = -1;
  };
  Nodes stage(Tape& tape, Bindings& bindings);
  NodeId embed(Tape& tape, const Nodes& nodes, NodeId input) const;

  serialize::NamedMatrices to_arrays() const;
  static ArcFaceModel from_arrays(const serialize::NamedMatrices& arrays);
};

}  // namespace affect::nets
