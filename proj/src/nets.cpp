// SPDX-License-Identifier: Apache-2.0
#include "affect/nets.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "affect/kernels.hpp"

namespace affect::nets {

namespace {

Matrix uniform_init(std::size_t rows, std::size_t cols, Rng& rng) {
  const double bound = std::sqrt(6.0 / double(rows + cols));
  Matrix m(rows, cols);
  for (auto& v : m.vec()) v = rng.uniform(-bound, bound);
  return m;
}

NodeId bind_leaf(Tape& tape, Bindings& bindings, Matrix* host) {
  NodeId id = tape.leaf(*host);
  bindings.push_back({host, id});
  return id;
}

}  // namespace

DenseLayer DenseLayer::init(std::size_t in, std::size_t out, Activation act,
                            Rng& rng) {
  DenseLayer l;
  l.weight = uniform_init(in, out, rng);
  l.bias = Matrix(1, out);
  l.activation = act;
  return l;
}

DenseLayer::Nodes DenseLayer::stage(Tape& tape, Bindings& bindings) {
  return {bind_leaf(tape, bindings, &weight), bind_leaf(tape, bindings, &bias)};
}

NodeId DenseLayer::forward(Tape& tape, const Nodes& nodes,
                           NodeId input) const {
  NodeId pre = tape.add_rowvec(tape.matmul(input, nodes.weight), nodes.bias);
  switch (activation) {
    case Activation::Linear:
      return pre;
    case Activation::Relu:
      return tape.relu(pre);
    case Activation::Tanh:
      return tape.tanh_op(pre);
    case Activation::Sigmoid:
      return tape.sigmoid(pre);
  }
  return pre;
}

GruCell GruCell::init(std::size_t in, std::size_t hidden, Rng& rng) {
  GruCell c;
  c.wz = uniform_init(in, hidden, rng);
  c.uz = uniform_init(hidden, hidden, rng);
  c.bz = Matrix(1, hidden);
  c.wr = uniform_init(in, hidden, rng);
  c.ur = uniform_init(hidden, hidden, rng);
  c.br = Matrix(1, hidden);
  c.wc = uniform_init(in, hidden, rng);
  c.uc = uniform_init(hidden, hidden, rng);
  c.bc = Matrix(1, hidden);
  return c;
}

GruCell::Nodes GruCell::stage(Tape& tape, Bindings& bindings) {
  return {bind_leaf(tape, bindings, &wz), bind_leaf(tape, bindings, &uz),
          bind_leaf(tape, bindings, &bz), bind_leaf(tape, bindings, &wr),
          bind_leaf(tape, bindings, &ur), bind_leaf(tape, bindings, &br),
          bind_leaf(tape, bindings, &wc), bind_leaf(tape, bindings, &uc),
          bind_leaf(tape, bindings, &bc)};
}

NodeId GruCell::step(Tape& tape, const Nodes& n, NodeId input,
                     NodeId state) const {
  NodeId z = tape.sigmoid(
      tape.add_rowvec(tape.add(tape.matmul(input, n.wz),
                               tape.matmul(state, n.uz)),
                      n.bz));
  NodeId r = tape.sigmoid(
      tape.add_rowvec(tape.add(tape.matmul(input, n.wr),
                               tape.matmul(state, n.ur)),
                      n.br));
  NodeId cand = tape.tanh_op(
      tape.add_rowvec(tape.add(tape.matmul(input, n.wc),
                               tape.matmul(tape.mul(r, state), n.uc)),
                      n.bc));
  NodeId keep = tape.sub(tape.constant(Matrix::ones(
                             tape.value(z).rows(), tape.value(z).cols())),
                         z);
  return tape.add(tape.mul(keep, state), tape.mul(z, cand));
}

GruStack GruStack::init(std::size_t in, std::size_t hidden, std::size_t layers,
                        Rng& rng) {
  GruStack s;
  for (std::size_t l = 0; l < layers; ++l)
    s.cells.push_back(GruCell::init(l == 0 ? in : hidden, hidden, rng));
  return s;
}

GruStack::Nodes GruStack::stage(Tape& tape, Bindings& bindings) {
  Nodes n;
  for (auto& c : cells) n.cells.push_back(c.stage(tape, bindings));
  return n;
}

std::vector<NodeId> GruStack::forward(
    Tape& tape, const Nodes& nodes,
    const std::vector<NodeId>& sequence) const {
  if (sequence.empty())
    throw std::invalid_argument("GruStack: empty sequence");
  std::vector<NodeId> current = sequence;
  const std::size_t batch = tape.value(sequence[0]).rows();
  for (std::size_t l = 0; l < cells.size(); ++l) {
    NodeId state =
        tape.constant(Matrix(batch, cells[l].hidden_size()));
    std::vector<NodeId> next;
    next.reserve(current.size());
    for (NodeId x : current) {
      state = cells[l].step(tape, nodes.cells[l], x, state);
      next.push_back(state);
    }
    current = std::move(next);
  }
  return current;
}

MultiTaskHead MultiTaskHead::init(std::size_t feature_dim,
                                  std::size_t au_count, Rng& rng) {
  MultiTaskHead h;
  h.va = DenseLayer::init(feature_dim, 2, Activation::Linear, rng);
  h.au = DenseLayer::init(feature_dim, au_count, Activation::Linear, rng);
  h.expr = DenseLayer::init(feature_dim, 7, Activation::Linear, rng);
  return h;
}

MultiTaskHead::Nodes MultiTaskHead::stage(Tape& tape, Bindings& bindings) {
  return {va.stage(tape, bindings), au.stage(tape, bindings),
          expr.stage(tape, bindings)};
}

losses::MultiTaskOutputs MultiTaskHead::forward(Tape& tape, const Nodes& nodes,
                                                NodeId features) const {
  return {va.forward(tape, nodes.va, features),
          au.forward(tape, nodes.au, features),
          expr.forward(tape, nodes.expr, features)};
}

std::vector<NodeId> av_fusion_forward(Tape& tape,
                                      const std::vector<NodeId>& visual,
                                      const std::vector<NodeId>& audio,
                                      const GruStack& fusion,
                                      const GruStack::Nodes& fusion_nodes) {
  if (visual.size() != audio.size())
    throw std::invalid_argument("av_fusion_forward: sequence lengths " +
                                std::to_string(visual.size()) + " vs " +
                                std::to_string(audio.size()));
  std::vector<NodeId> fused;
  fused.reserve(visual.size());
  for (std::size_t t = 0; t < visual.size(); ++t)
    fused.push_back(tape.concat_cols(visual[t], audio[t]));
  return fusion.forward(tape, fusion_nodes, fused);
}

NodeId dropout_apply(Tape& tape, NodeId features, double rate, Rng& rng,
                     bool training) {
  if (rate < 0.0 || rate >= 1.0)
    throw std::invalid_argument("dropout_apply: rate must be in [0,1)");
  if (!training || rate == 0.0) return features;
  const Matrix& v = tape.value(features);
  Matrix mask(v.rows(), v.cols());
  const double inv_keep = 1.0 / (1.0 - rate);
  for (auto& m : mask.vec()) m = rng.uniform() < rate ? 0.0 : inv_keep;
  return tape.mul(features, tape.constant(std::move(mask)));
}

void SgdMomentum::step(const Bindings& bindings,
                       const std::vector<Matrix>& grads) {
  if (velocity.empty())
    for (const auto& b : bindings)
      velocity.emplace_back(b.host->rows(), b.host->cols());
  for (std::size_t i = 0; i < bindings.size(); ++i) {
    Matrix& vel = velocity[i];
    Matrix& p = *bindings[i].host;
    kernels::active().scale(vel.data(), vel.data(), momentum, vel.size());
    kernels::active().axpy(vel.data(), 1.0, grads[i].data(), vel.size());
    kernels::active().axpy(p.data(), -learning_rate, vel.data(), p.size());
  }
}

void Adam::step(const Bindings& bindings, const std::vector<Matrix>& grads) {
  if (m.empty())
    for (const auto& b : bindings) {
      m.emplace_back(b.host->rows(), b.host->cols());
      v.emplace_back(b.host->rows(), b.host->cols());
    }
  ++t;
  const double bc1 = 1.0 - std::pow(beta1, double(t));
  const double bc2 = 1.0 - std::pow(beta2, double(t));
  for (std::size_t i = 0; i < bindings.size(); ++i) {
    Matrix& p = *bindings[i].host;
    const Matrix& g = grads[i];
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[i].data()[k] = beta1 * m[i].data()[k] + (1.0 - beta1) * g.data()[k];
      v[i].data()[k] =
          beta2 * v[i].data()[k] + (1.0 - beta2) * g.data()[k] * g.data()[k];
      const double mhat = m[i].data()[k] / bc1;
      const double vhat = v[i].data()[k] / bc2;
      p.data()[k] -= learning_rate * mhat / (std::sqrt(vhat) + epsilon);
    }
  }
}

TrainTrace train(const LossBuilder& build_loss, const TrainConfig& cfg) {
  Rng rng(cfg.seed);
  SgdMomentum sgd;
  sgd.learning_rate = cfg.learning_rate;
  Adam adam;
  adam.learning_rate = cfg.learning_rate;
  TrainTrace trace;
  trace.losses.reserve(cfg.steps);
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    Tape tape;
    Bindings bindings;
    NodeId loss = build_loss(tape, bindings, step, rng);
    const double loss_value = tape.value(loss).at(0, 0);
    if (!std::isfinite(loss_value))
      throw std::runtime_error("train: loss diverged at step " +
                               std::to_string(step));
    tape.backward(loss);
    std::vector<Matrix> grads;
    grads.reserve(bindings.size());
    for (const auto& b : bindings) grads.push_back(tape.grad_or_zero(b.node));
    if (cfg.optimizer == TrainConfig::Optimizer::Adam)
      adam.step(bindings, grads);
    else
      sgd.step(bindings, grads);
    trace.losses.push_back(loss_value);
  }
  return trace;
}

MultiTaskModel MultiTaskModel::init(std::size_t input_dim, std::size_t hidden,
                                    std::size_t au_count, Rng& rng) {
  MultiTaskModel m;
  m.l1 = DenseLayer::init(input_dim, hidden, Activation::Tanh, rng);
  m.l2 = DenseLayer::init(hidden, hidden, Activation::Tanh, rng);
  m.heads = MultiTaskHead::init(hidden, au_count, rng);
  return m;
}

MultiTaskModel::Nodes MultiTaskModel::stage(Tape& tape, Bindings& bindings) {
  return {l1.stage(tape, bindings), l2.stage(tape, bindings),
          heads.stage(tape, bindings)};
}

losses::MultiTaskOutputs MultiTaskModel::forward(Tape& tape,
                                                 const Nodes& nodes,
                                                 NodeId input) const {
  NodeId f = l2.forward(tape, nodes.l2, l1.forward(tape, nodes.l1, input));
  return heads.forward(tape, nodes.heads, f);
}

serialize::NamedMatrices MultiTaskModel::to_arrays() const {
  return {{"mt.l1.weight", l1.weight},   {"mt.l1.bias", l1.bias},
          {"mt.l2.weight", l2.weight},   {"mt.l2.bias", l2.bias},
          {"mt.va.weight", heads.va.weight},
          {"mt.va.bias", heads.va.bias},
          {"mt.au.weight", heads.au.weight},
          {"mt.au.bias", heads.au.bias},
          {"mt.expr.weight", heads.expr.weight},
          {"mt.expr.bias", heads.expr.bias}};
}

MultiTaskModel MultiTaskModel::from_arrays(
    const serialize::NamedMatrices& arrays) {
  auto get = [&](const char* name) -> const Matrix& {
    const Matrix* m = serialize::find(arrays, name);
    if (!m) throw std::runtime_error(std::string("MultiTaskModel: missing ") +
                                     name);
    return *m;
  };
  MultiTaskModel m;
  m.l1 = {get("mt.l1.weight"), get("mt.l1.bias"), Activation::Tanh};
  m.l2 = {get("mt.l2.weight"), get("mt.l2.bias"), Activation::Tanh};
  m.heads.va = {get("mt.va.weight"), get("mt.va.bias"), Activation::Linear};
  m.heads.au = {get("mt.au.weight"), get("mt.au.bias"), Activation::Linear};
  m.heads.expr = {get("mt.expr.weight"), get("mt.expr.bias"),
                  Activation::Linear};
  return m;
}

ArcFaceModel ArcFaceModel::init(std::size_t input_dim, std::size_t hidden,
                                std::size_t embed_dim, double scale,
                                double margin, Rng& rng) {
  ArcFaceModel m;
  m.l1 = DenseLayer::init(input_dim, hidden, Activation::Tanh, rng);
  m.l2 = DenseLayer::init(hidden, embed_dim, Activation::Linear, rng);
  m.head.weights = uniform_init(embed_dim, 7, rng);
  m.head.scale = scale;
  m.head.margin = margin;
  return m;
}

ArcFaceModel::Nodes ArcFaceModel::stage(Tape& tape, Bindings& bindings) {
  Nodes n;
  n.l1 = l1.stage(tape, bindings);
  n.l2 = l2.stage(tape, bindings);
  n.head_weights = bind_leaf(tape, bindings, &head.weights);
  return n;
}

NodeId ArcFaceModel::embed(Tape& tape, const Nodes& nodes,
                           NodeId input) const {
  return l2.forward(tape, nodes.l2, l1.forward(tape, nodes.l1, input));
}

serialize::NamedMatrices ArcFaceModel::to_arrays() const {
  Matrix hp(1, 2);
  hp.at(0, 0) = head.scale;
  hp.at(0, 1) = head.margin;
  return {{"arc.l1.weight", l1.weight}, {"arc.l1.bias", l1.bias},
          {"arc.l2.weight", l2.weight}, {"arc.l2.bias", l2.bias},
          {"arc.head.weights", head.weights},
          {"arc.head.params", hp}};
}

ArcFaceModel ArcFaceModel::from_arrays(const serialize::NamedMatrices& arrays) {
  auto get = [&](const char* name) -> const Matrix& {
    const Matrix* m = serialize::find(arrays, name);
    if (!m) throw std::runtime_error(std::string("ArcFaceModel: missing ") +
                                     name);
    return *m;
  };
  ArcFaceModel m;
  m.l1 = {get("arc.l1.weight"), get("arc.l1.bias"), Activation::Tanh};
  m.l2 = {get("arc.l2.weight"), get("arc.l2.bias"), Activation::Linear};
  m.head.weights = get("arc.head.weights");
  const Matrix& hp = get("arc.head.params");
  m.head.scale = hp.at(0, 0);
  m.head.margin = hp.at(0, 1);
  return m;
}

}  // namespace affect::nets
