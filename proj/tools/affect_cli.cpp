// SPDX-License-Identifier: Apache-2.0
//
// affect: command line surface over the library. Subcommands:
//   grad-check  finite-difference audit of every loss and network block
//   train       toy multi-task training run -> trace.csv + model.afen
//   eval        metrics table from aligned prediction/label files
//   split       subject-independent train/validation/test assignment
//   aggregate   per-frame mean of multiple annotators' VA tracks
//   stats       dataset histograms and AU activation counts
//   spectrogram WAV (PCM16 mono) -> normalized magnitude spectrogram
//
// Exit codes: 0 success, 1 validation error, 2 numerical failure.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "affect/dataset.hpp"
#include "affect/embedspace.hpp"
#include "affect/gradcheck.hpp"
#include "affect/losses.hpp"
#include "affect/metrics.hpp"
#include "affect/nets.hpp"
#include "affect/rng.hpp"
#include "affect/serialize.hpp"
#include "affect/signals.hpp"
#include "affect/tape.hpp"

namespace {

using namespace affect;
using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitNumerical = 2;

// ---------------------------------------------------------------------------
// Run configuration

struct RunConfig {
  nets::TrainConfig train;
  std::size_t input_dim = 16;
  std::size_t hidden = 32;
  std::size_t au_count = 8;
  bool task_va = true;
  bool task_au = true;
  bool task_expr = true;
  std::string dataset;
  std::string output_dir = ".";
  std::size_t arc_d = 32;
  double arc_s = 64.0;
  double arc_m = 0.1;
  signals::SpectrogramConfig spec;
};

void reject_unknown(const json& j, const std::vector<std::string>& keys,
                    const std::string& scope) {
  for (const auto& [key, value] : j.items()) {
    if (std::find(keys.begin(), keys.end(), key) == keys.end())
      throw std::invalid_argument("config: unknown key \"" + scope + key +
                                  "\"");
    (void)value;
  }
}

RunConfig parse_config(const std::string& path) {
  RunConfig cfg;
  if (path.empty()) return cfg;
  std::ifstream is(path);
  if (!is) throw std::invalid_argument("config: cannot open " + path);
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  reject_unknown(j,
                 {"optimizer", "learning_rate", "batch_size", "seq_len",
                  "dropout", "seed", "steps", "va_mode", "input_dim", "hidden",
                  "au_count", "tasks", "dataset", "output_dir", "arcface",
                  "spectrogram"},
                 "");
  try {
    if (j.contains("optimizer")) {
      const std::string o = j["optimizer"].get<std::string>();
      if (o == "adam")
        cfg.train.optimizer = nets::TrainConfig::Optimizer::Adam;
      else if (o == "sgd")
        cfg.train.optimizer = nets::TrainConfig::Optimizer::SgdMomentum;
      else
        throw std::invalid_argument("config: optimizer must be adam or sgd");
    }
    if (j.contains("learning_rate"))
      cfg.train.learning_rate = j["learning_rate"].get<double>();
    if (j.contains("batch_size"))
      cfg.train.batch_size = j["batch_size"].get<std::size_t>();
    if (j.contains("seq_len"))
      cfg.train.seq_len = j["seq_len"].get<std::size_t>();
    if (j.contains("dropout")) cfg.train.dropout = j["dropout"].get<double>();
    if (j.contains("seed")) cfg.train.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("steps")) cfg.train.steps = j["steps"].get<std::size_t>();
    if (j.contains("va_mode")) {
      const std::string m = j["va_mode"].get<std::string>();
      if (m == "ccc")
        cfg.train.va_mode = losses::VaMode::Ccc;
      else if (m == "mse")
        cfg.train.va_mode = losses::VaMode::Mse;
      else
        throw std::invalid_argument("config: va_mode must be ccc or mse");
    }
    if (j.contains("input_dim"))
      cfg.input_dim = j["input_dim"].get<std::size_t>();
    if (j.contains("hidden")) cfg.hidden = j["hidden"].get<std::size_t>();
    if (j.contains("au_count"))
      cfg.au_count = j["au_count"].get<std::size_t>();
    if (j.contains("tasks")) {
      reject_unknown(j["tasks"], {"va", "au", "expr"}, "tasks.");
      cfg.task_va = j["tasks"].value("va", true);
      cfg.task_au = j["tasks"].value("au", true);
      cfg.task_expr = j["tasks"].value("expr", true);
    }
    if (j.contains("dataset")) cfg.dataset = j["dataset"].get<std::string>();
    if (j.contains("output_dir"))
      cfg.output_dir = j["output_dir"].get<std::string>();
    if (j.contains("arcface")) {
      reject_unknown(j["arcface"], {"d", "s", "m"}, "arcface.");
      cfg.arc_d = j["arcface"].value("d", cfg.arc_d);
      cfg.arc_s = j["arcface"].value("s", cfg.arc_s);
      cfg.arc_m = j["arcface"].value("m", cfg.arc_m);
    }
    if (j.contains("spectrogram")) {
      reject_unknown(j["spectrogram"],
                     {"sample_rate", "window_ms", "overlap_ms",
                      "log_magnitude"},
                     "spectrogram.");
      cfg.spec.sample_rate =
          j["spectrogram"].value("sample_rate", cfg.spec.sample_rate);
      cfg.spec.window_ms =
          j["spectrogram"].value("window_ms", cfg.spec.window_ms);
      cfg.spec.overlap_ms =
          j["spectrogram"].value("overlap_ms", cfg.spec.overlap_ms);
      cfg.spec.log_magnitude =
          j["spectrogram"].value("log_magnitude", cfg.spec.log_magnitude);
    }
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  return cfg;
}

// ---------------------------------------------------------------------------
// WAV ingestion: RIFF/WAVE, PCM 16-bit little-endian mono.

struct WavData {
  std::vector<double> samples;  // int16 / 32768
  std::uint32_t sample_rate = 0;
};

std::uint32_t read_u32(const std::vector<unsigned char>& b, std::size_t off) {
  return std::uint32_t(b[off]) | std::uint32_t(b[off + 1]) << 8 |
         std::uint32_t(b[off + 2]) << 16 | std::uint32_t(b[off + 3]) << 24;
}

std::uint16_t read_u16(const std::vector<unsigned char>& b, std::size_t off) {
  return std::uint16_t(b[off] | b[off + 1] << 8);
}

WavData read_wav(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::invalid_argument("WAV: cannot open " + path);
  std::vector<unsigned char> b((std::istreambuf_iterator<char>(is)),
                               std::istreambuf_iterator<char>());
  auto need = [&](std::size_t off, std::size_t len, const char* field) {
    if (b.size() < off + len)
      throw std::invalid_argument("WAV: truncated before " +
                                  std::string(field) + " at offset " +
                                  std::to_string(off));
  };
  auto expect_tag = [&](std::size_t off, const char* tag) {
    need(off, 4, tag);
    if (std::memcmp(b.data() + off, tag, 4) != 0)
      throw std::invalid_argument("WAV: expected '" + std::string(tag) +
                                  "' at offset " + std::to_string(off));
  };
  expect_tag(0, "RIFF");
  need(4, 4, "RIFF size");
  expect_tag(8, "WAVE");

  WavData out;
  bool have_fmt = false, have_data = false;
  std::size_t off = 12;
  while (off + 8 <= b.size()) {
    const std::string id(b.begin() + long(off), b.begin() + long(off) + 4);
    const std::uint32_t size = read_u32(b, off + 4);
    const std::size_t body = off + 8;
    need(body, size, id.c_str());
    if (id == "fmt ") {
      if (size < 16)
        throw std::invalid_argument("WAV: fmt chunk at offset " +
                                    std::to_string(off) + " too short");
      const std::uint16_t format = read_u16(b, body);
      if (format != 1)
        throw std::invalid_argument(
            "WAV: audio format at offset " + std::to_string(body) +
            ": expected PCM (1), got " + std::to_string(format));
      const std::uint16_t channels = read_u16(b, body + 2);
      if (channels != 1)
        throw std::invalid_argument(
            "WAV: channels at offset " + std::to_string(body + 2) +
            ": expected mono (1), got " + std::to_string(channels));
      out.sample_rate = read_u32(b, body + 4);
      const std::uint16_t bits = read_u16(b, body + 14);
      if (bits != 16)
        throw std::invalid_argument(
            "WAV: bits per sample at offset " + std::to_string(body + 14) +
            ": expected 16, got " + std::to_string(bits));
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt)
        throw std::invalid_argument("WAV: data chunk at offset " +
                                    std::to_string(off) + " precedes fmt");
      out.samples.reserve(size / 2);
      for (std::size_t i = 0; i + 1 < size; i += 2) {
        const std::int16_t v =
            std::int16_t(std::uint16_t(b[body + i] | b[body + i + 1] << 8));
        out.samples.push_back(double(v) / 32768.0);
      }
      have_data = true;
    }
    off = body + size + (size % 2);  // chunks are word-aligned
  }
  if (!have_fmt) throw std::invalid_argument("WAV: no fmt chunk");
  if (!have_data) throw std::invalid_argument("WAV: no data chunk");
  return out;
}

// ---------------------------------------------------------------------------
// grad-check suite

struct SuiteItem {
  std::string name;
  double max_err = 0.0;
};

Matrix randn(std::size_t r, std::size_t c, Rng& rng, double s = 1.0) {
  Matrix m(r, c);
  for (auto& v : m.vec()) v = rng.normal() * s;
  return m;
}

std::vector<int> random_classes(std::size_t n, std::size_t k, Rng& rng) {
  std::vector<int> out(n);
  for (auto& v : out) v = int(rng.index(k));
  return out;
}

// One item = max grad_check error over `trials` fresh random points.
template <typename TrialFn>
SuiteItem run_item(const std::string& name, std::uint64_t seed, int trials,
                   TrialFn&& trial) {
  SuiteItem item{name, 0.0};
  for (int t = 0; t < trials; ++t) {
    Rng rng(hash64(seed ^ std::uint64_t(t * 2654435761ULL)));
    item.max_err = std::max(item.max_err, trial(rng));
  }
  return item;
}

std::vector<SuiteItem> grad_check_suite(std::uint64_t seed, bool inject_fault) {
  const int kTrials = 10;
  std::vector<SuiteItem> items;

  items.push_back(run_item("cce_loss (Eq. 1)", seed ^ 1, kTrials, [](Rng& rng) {
    Matrix logits = randn(4, 7, rng);
    auto targets = random_classes(4, 7, rng);
    Tape tape;
    NodeId x = tape.leaf(logits);
    tape.backward(losses::cce_loss(tape, x, targets));
    return grad_check(
        [&](const std::vector<Matrix>& p) {
          Tape t;
          return t.value(losses::cce_loss(t, t.leaf(p[0]), targets)).at(0, 0);
        },
        {logits}, {tape.grad_or_zero(x)});
  }));

  items.push_back(run_item("bce_loss (Eq. 2)", seed ^ 2, kTrials, [](Rng& rng) {
    Matrix logits = randn(3, 4, rng);
    Matrix targets(3, 4);
    for (auto& v : targets.vec()) v = rng.uniform() < 0.5 ? 1.0 : 0.0;
    Tape tape;
    NodeId x = tape.leaf(logits);
    tape.backward(losses::bce_loss(tape, tape.sigmoid(x), targets));
    return grad_check(
        [&](const std::vector<Matrix>& p) {
          Tape t;
          NodeId xx = t.leaf(p[0]);
          return t.value(losses::bce_loss(t, t.sigmoid(xx), targets)).at(0, 0);
        },
        {logits}, {tape.grad_or_zero(x)});
  }));

  items.push_back(
      run_item("ccc_loss (Eq. 3)", seed ^ 3, kTrials, [](Rng& rng) {
        Matrix pv = randn(12, 1, rng, 0.5), pa = randn(12, 1, rng, 0.5);
        Matrix lv = randn(12, 1, rng, 0.5), la = randn(12, 1, rng, 0.5);
        Tape tape;
        NodeId nv = tape.leaf(pv), na = tape.leaf(pa);
        tape.backward(losses::ccc_loss(tape, nv, na, lv, la));
        return grad_check(
            [&](const std::vector<Matrix>& p) {
              Tape t;
              return t
                  .value(losses::ccc_loss(t, t.leaf(p[0]), t.leaf(p[1]), lv,
                                          la))
                  .at(0, 0);
            },
            {pv, pa}, {tape.grad_or_zero(nv), tape.grad_or_zero(na)});
      }));

  items.push_back(
      run_item("arcface_loss (Eq. 4)", seed ^ 4, kTrials, [](Rng& rng) {
        Matrix emb = randn(5, 4, rng);
        Matrix w = randn(4, 7, rng);
        auto targets = random_classes(5, 7, rng);
        Tape tape;
        NodeId e = tape.leaf(emb), wn = tape.leaf(w);
        tape.backward(losses::arcface_loss(tape, e, wn, 16.0, 0.3, targets));
        return grad_check(
            [&](const std::vector<Matrix>& p) {
              Tape t;
              return t
                  .value(losses::arcface_loss(t, t.leaf(p[0]), t.leaf(p[1]),
                                              16.0, 0.3, targets))
                  .at(0, 0);
            },
            {emb, w}, {tape.grad_or_zero(e), tape.grad_or_zero(wn)});
      }));

  items.push_back(run_item("mse_loss", seed ^ 5, kTrials, [](Rng& rng) {
    Matrix pred = randn(6, 2, rng);
    Matrix labels = randn(6, 2, rng);
    Tape tape;
    NodeId p = tape.leaf(pred);
    tape.backward(losses::mse_loss(tape, p, labels));
    return grad_check(
        [&](const std::vector<Matrix>& pt) {
          Tape t;
          return t.value(losses::mse_loss(t, t.leaf(pt[0]), labels)).at(0, 0);
        },
        {pred}, {tape.grad_or_zero(p)});
  }));

  items.push_back(
      run_item("multitask_sum", seed ^ 6, kTrials, [](Rng& rng) {
        Matrix va = randn(6, 2, rng, 0.5), au = randn(6, 3, rng),
               ex = randn(6, 7, rng);
        losses::MultiTaskTargets targets;
        targets.va = randn(6, 2, rng, 0.4);
        Matrix aus(6, 3);
        for (auto& v : aus.vec()) v = rng.uniform() < 0.5 ? 1.0 : 0.0;
        targets.aus = aus;
        targets.expr = random_classes(6, 7, rng);
        auto build = [&](Tape& t, NodeId a, NodeId b, NodeId c) {
          losses::MultiTaskOutputs out{a, b, c};
          return losses::multitask_loss(t, out, targets, losses::VaMode::Ccc);
        };
        Tape tape;
        NodeId a = tape.leaf(va), b = tape.leaf(au), c = tape.leaf(ex);
        tape.backward(build(tape, a, b, c));
        return grad_check(
            [&](const std::vector<Matrix>& p) {
              Tape t;
              return t
                  .value(build(t, t.leaf(p[0]), t.leaf(p[1]), t.leaf(p[2])))
                  .at(0, 0);
            },
            {va, au, ex},
            {tape.grad_or_zero(a), tape.grad_or_zero(b),
             tape.grad_or_zero(c)});
      }));

  items.push_back(run_item("dense_block", seed ^ 7, kTrials, [](Rng& rng) {
    nets::DenseLayer l =
        nets::DenseLayer::init(3, 4, nets::Activation::Tanh, rng);
    for (auto& v : l.bias.vec()) v = rng.normal() * 0.1;
    Matrix x = randn(5, 3, rng);
    Tape tape;
    nets::Bindings b;
    auto n = l.stage(tape, b);
    NodeId xn = tape.leaf(x);
    tape.backward(tape.mean_all(l.forward(tape, n, xn)));
    return grad_check(
        [&](const std::vector<Matrix>& p) {
          nets::DenseLayer layer{p[0], p[1], nets::Activation::Tanh};
          Tape t;
          nets::Bindings bb;
          auto nn = layer.stage(t, bb);
          return t.value(
                      t.mean_all(layer.forward(t, nn, t.constant(p[2]))))
              .at(0, 0);
        },
        {l.weight, l.bias, x},
        {tape.grad_or_zero(n.weight), tape.grad_or_zero(n.bias),
         tape.grad_or_zero(xn)});
  }));

  items.push_back(
      run_item("gru_2layer_len5", seed ^ 8, kTrials, [](Rng& rng) {
        nets::GruStack s = nets::GruStack::init(2, 3, 2, rng);
        std::vector<Matrix> inputs;
        for (int t = 0; t < 5; ++t) inputs.push_back(randn(2, 2, rng));
        auto loss_of = [&](nets::GruStack& stack, Tape& t,
                           nets::Bindings& b) {
          auto n = stack.stage(t, b);
          std::vector<NodeId> seq;
          for (const auto& x : inputs) seq.push_back(t.constant(x));
          return t.mean_all(stack.forward(t, n, seq).back());
        };
        Tape tape;
        nets::Bindings b;
        tape.backward(loss_of(s, tape, b));
        std::vector<Matrix> point, analytic;
        for (const auto& binding : b) {
          point.push_back(*binding.host);
          analytic.push_back(tape.grad_or_zero(binding.node));
        }
        return grad_check(
            [&](const std::vector<Matrix>& p) {
              nets::GruStack stack = s;
              std::size_t i = 0;
              for (auto& c : stack.cells) {
                c.wz = p[i++]; c.uz = p[i++]; c.bz = p[i++];
                c.wr = p[i++]; c.ur = p[i++]; c.br = p[i++];
                c.wc = p[i++]; c.uc = p[i++]; c.bc = p[i++];
              }
              Tape t;
              nets::Bindings bb;
              return t.value(loss_of(stack, t, bb)).at(0, 0);
            },
            point, analytic);
      }));

  items.push_back(
      run_item("multitask_heads", seed ^ 9, kTrials, [](Rng& rng) {
        nets::MultiTaskHead h = nets::MultiTaskHead::init(4, 3, rng);
        Matrix x = randn(5, 4, rng);
        losses::MultiTaskTargets targets;
        targets.va = randn(5, 2, rng, 0.4);
        Matrix aus(5, 3);
        for (auto& v : aus.vec()) v = rng.uniform() < 0.5 ? 1.0 : 0.0;
        targets.aus = aus;
        targets.expr = random_classes(5, 7, rng);
        auto loss_of = [&](nets::MultiTaskHead& head, Tape& t,
                           nets::Bindings& b, const Matrix& input) {
          auto n = head.stage(t, b);
          auto out = head.forward(t, n, t.constant(input));
          return losses::multitask_loss(t, out, targets, losses::VaMode::Ccc);
        };
        Tape tape;
        nets::Bindings b;
        tape.backward(loss_of(h, tape, b, x));
        std::vector<Matrix> point, analytic;
        for (const auto& binding : b) {
          point.push_back(*binding.host);
          analytic.push_back(tape.grad_or_zero(binding.node));
        }
        return grad_check(
            [&](const std::vector<Matrix>& p) {
              nets::MultiTaskHead head = h;
              head.va = {p[0], p[1], nets::Activation::Linear};
              head.au = {p[2], p[3], nets::Activation::Linear};
              head.expr = {p[4], p[5], nets::Activation::Linear};
              Tape t;
              nets::Bindings bb;
              return t.value(loss_of(head, t, bb, x)).at(0, 0);
            },
            point, analytic);
      }));

  items.push_back(
      run_item("arcface_head_block", seed ^ 10, kTrials, [](Rng& rng) {
        nets::ArcFaceModel m =
            nets::ArcFaceModel::init(3, 4, 4, 16.0, 0.3, rng);
        Matrix x = randn(6, 3, rng);
        auto targets = random_classes(6, 7, rng);
        auto loss_of = [&](nets::ArcFaceModel& model, Tape& t,
                           nets::Bindings& b) {
          auto n = model.stage(t, b);
          NodeId emb = model.embed(t, n, t.constant(x));
          return losses::arcface_loss(t, emb, n.head_weights,
                                      model.head.scale, model.head.margin,
                                      targets);
        };
        Tape tape;
        nets::Bindings b;
        tape.backward(loss_of(m, tape, b));
        std::vector<Matrix> point, analytic;
        for (const auto& binding : b) {
          point.push_back(*binding.host);
          analytic.push_back(tape.grad_or_zero(binding.node));
        }
        return grad_check(
            [&](const std::vector<Matrix>& p) {
              nets::ArcFaceModel model = m;
              model.l1 = {p[0], p[1], nets::Activation::Tanh};
              model.l2 = {p[2], p[3], nets::Activation::Linear};
              model.head.weights = p[4];
              Tape t;
              nets::Bindings bb;
              return t.value(loss_of(model, t, bb)).at(0, 0);
            },
            point, analytic);
      }));

  items.push_back(
      run_item("av_fusion_graph", seed ^ 11, kTrials, [](Rng& rng) {
        nets::GruStack fusion = nets::GruStack::init(4, 3, 1, rng);
        std::vector<Matrix> vis{randn(2, 2, rng), randn(2, 2, rng),
                                randn(2, 2, rng)};
        std::vector<Matrix> aud{randn(2, 2, rng), randn(2, 2, rng),
                                randn(2, 2, rng)};
        auto loss_of = [&](nets::GruStack& stack, Tape& t,
                           nets::Bindings& b, const std::vector<Matrix>& v,
                           const std::vector<Matrix>& a) {
          auto n = stack.stage(t, b);
          std::vector<NodeId> vn, an;
          for (const auto& m : v) vn.push_back(t.leaf(m));
          for (const auto& m : a) an.push_back(t.leaf(m));
          auto out = nets::av_fusion_forward(t, vn, an, stack, n);
          return t.mean_all(out.back());
        };
        Tape tape;
        nets::Bindings b;
        tape.backward(loss_of(fusion, tape, b, vis, aud));
        std::vector<Matrix> point, analytic;
        for (const auto& binding : b) {
          point.push_back(*binding.host);
          analytic.push_back(tape.grad_or_zero(binding.node));
        }
        return grad_check(
            [&](const std::vector<Matrix>& p) {
              nets::GruStack stack = fusion;
              std::size_t i = 0;
              for (auto& c : stack.cells) {
                c.wz = p[i++]; c.uz = p[i++]; c.bz = p[i++];
                c.wr = p[i++]; c.ur = p[i++]; c.br = p[i++];
                c.wc = p[i++]; c.uc = p[i++]; c.bc = p[i++];
              }
              Tape t;
              nets::Bindings bb;
              return t.value(loss_of(stack, t, bb, vis, aud)).at(0, 0);
            },
            point, analytic);
      }));

  if (inject_fault && !items.empty()) items.back().max_err += 1.0;
  return items;
}

int cmd_grad_check(std::uint64_t seed, bool inject_fault) {
  const double kThreshold = 1e-5;
  auto items = grad_check_suite(seed, inject_fault);
  bool all_pass = true;
  for (const auto& item : items) {
    const bool pass = item.max_err < kThreshold;
    all_pass = all_pass && pass;
    std::printf("%-22s max_rel_err %.3e  %s\n", item.name.c_str(),
                item.max_err, pass ? "pass" : "FAIL");
  }
  std::printf("%zu items, threshold %.0e: %s\n", items.size(), kThreshold,
              all_pass ? "all pass" : "FAILURES");
  return all_pass ? kExitOk : kExitNumerical;
}

// ---------------------------------------------------------------------------
// train

// Deterministic synthetic multi-task batch: every target is a fixed function
// of the input through frozen random projections.
struct SyntheticTask {
  Matrix inputs;  // n×input_dim
  losses::MultiTaskTargets targets;
};

SyntheticTask make_synthetic(std::size_t n, std::size_t input_dim,
                             std::size_t au_count, std::uint64_t seed,
                             bool va, bool au, bool expr) {
  Rng rng(hash64(seed ^ 0x5eedf00dULL));
  Matrix wv = randn(input_dim, 2, rng);
  Matrix wa = randn(input_dim, au_count, rng);
  Matrix we = randn(input_dim, 7, rng);
  SyntheticTask out;
  out.inputs = Matrix(n, input_dim);
  for (auto& v : out.inputs.vec()) v = rng.uniform(-1, 1);
  Matrix pv = matmul(out.inputs, wv);
  Matrix pa = matmul(out.inputs, wa);
  Matrix pe = matmul(out.inputs, we);
  if (va) {
    Matrix t(n, 2);
    for (std::size_t i = 0; i < t.size(); ++i)
      t.data()[i] = std::tanh(pv.data()[i]);
    out.targets.va = std::move(t);
  }
  if (au) {
    Matrix t(n, au_count);
    for (std::size_t i = 0; i < t.size(); ++i)
      t.data()[i] = pa.data()[i] > 0.0 ? 1.0 : 0.0;
    out.targets.aus = std::move(t);
  }
  if (expr) {
    std::vector<int> cls(n);
    for (std::size_t r = 0; r < n; ++r) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < 7; ++c)
        if (pe.at(r, c) > pe.at(r, best)) best = c;
      cls[r] = int(best);
    }
    out.targets.expr = std::move(cls);
  }
  return out;
}

int cmd_train(const RunConfig& cfg) {
  SyntheticTask data;
  if (cfg.dataset.empty()) {
    data = make_synthetic(cfg.train.batch_size, cfg.input_dim, cfg.au_count,
                          cfg.train.seed, cfg.task_va, cfg.task_au,
                          cfg.task_expr);
  } else {
    throw std::invalid_argument(
        "train: external datasets carry no feature vectors; omit \"dataset\" "
        "to train on the synthetic set");
  }
  Rng init_rng(hash64(cfg.train.seed ^ 0x1417ULL));
  nets::MultiTaskModel model =
      nets::MultiTaskModel::init(cfg.input_dim, cfg.hidden, cfg.au_count,
                                 init_rng);
  nets::TrainTrace trace;
  try {
    trace = nets::train(
        [&](Tape& tape, nets::Bindings& b, std::size_t, Rng& rng) {
          auto n = model.stage(tape, b);
          NodeId x = tape.constant(data.inputs);
          NodeId f = tape.tanh_op(tape.add_rowvec(
              tape.matmul(x, n.l1.weight), n.l1.bias));
          f = nets::dropout_apply(tape, f, cfg.train.dropout, rng, true);
          f = tape.tanh_op(
              tape.add_rowvec(tape.matmul(f, n.l2.weight), n.l2.bias));
          auto out = model.heads.forward(tape, n.heads, f);
          return losses::multitask_loss(tape, out, data.targets,
                                        cfg.train.va_mode);
        },
        cfg.train);
  } catch (const std::runtime_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitNumerical;
  }

  std::filesystem::create_directories(cfg.output_dir);
  const std::string trace_path = cfg.output_dir + "/trace.csv";
  const std::string model_path = cfg.output_dir + "/model.afen";
  std::ofstream os(trace_path);
  if (!os) throw std::invalid_argument("train: cannot write " + trace_path);
  os << "step,loss\n";
  char buf[64];
  for (std::size_t i = 0; i < trace.losses.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g\n", i, trace.losses[i]);
    os << buf;
  }
  os.close();
  serialize::save_afen(model_path, model.to_arrays());
  std::printf("trained %zu steps, final loss %.6g\n", trace.losses.size(),
              trace.losses.empty() ? 0.0 : trace.losses.back());
  std::printf("wrote %s\n", trace_path.c_str());
  std::printf("wrote %s\n", model_path.c_str());
  return kExitOk;
}

// ---------------------------------------------------------------------------
// eval

int cmd_eval(const std::string& pred_path, const std::string& label_path,
             const std::string& out_path) {
  auto preds = dataset::parse_jsonl(pred_path);
  auto labels = dataset::parse_jsonl(label_path);
  if (preds.size() != labels.size())
    throw std::invalid_argument(
        "eval: " + std::to_string(preds.size()) + " predictions vs " +
        std::to_string(labels.size()) + " labels");
  std::vector<double> pv, pa, lv, la;
  std::vector<int> pe, le;
  std::vector<std::vector<double>> pau_rows, lau_rows;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto &p = preds[i], &l = labels[i];
    if (p.video_id != l.video_id || p.frame != l.frame)
      throw std::invalid_argument(
          "eval: row " + std::to_string(i) + " misaligned (" + p.video_id +
          "/" + std::to_string(p.frame) + " vs " + l.video_id + "/" +
          std::to_string(l.frame) + ")");
    if (l.valence) {
      if (!p.valence)
        throw std::invalid_argument("eval: row " + std::to_string(i) +
                                    " missing VA prediction");
      pv.push_back(*p.valence);
      pa.push_back(*p.arousal);
      lv.push_back(*l.valence);
      la.push_back(*l.arousal);
    }
    if (l.au) {
      if (!p.au || p.au->size() != l.au->size())
        throw std::invalid_argument("eval: row " + std::to_string(i) +
                                    " missing or misshaped AU prediction");
      pau_rows.emplace_back(p.au->begin(), p.au->end());
      lau_rows.emplace_back(l.au->begin(), l.au->end());
    }
    if (l.expr) {
      if (!p.expr)
        throw std::invalid_argument("eval: row " + std::to_string(i) +
                                    " missing expression prediction");
      pe.push_back(*p.expr);
      le.push_back(*l.expr);
    }
  }

  std::vector<std::pair<std::string, double>> rows;
  if (!pv.empty()) {
    rows.emplace_back("ccc_v", metrics::ccc_metric(pv, lv));
    rows.emplace_back("ccc_a", metrics::ccc_metric(pa, la));
  }
  if (!pau_rows.empty()) {
    rows.emplace_back("macro_f1",
                      metrics::macro_f1(Matrix::from_rows(pau_rows),
                                        Matrix::from_rows(lau_rows))
                          .value);
  }
  if (!pe.empty()) {
    rows.emplace_back("accuracy", metrics::accuracy(pe, le));
    auto cm = metrics::ConfusionMatrix::from(le, pe);
    rows.emplace_back("mean_diagonal", metrics::mean_diagonal(cm));
  }
  if (rows.empty())
    throw std::invalid_argument("eval: label file carries no labels");

  for (const auto& [name, value] : rows)
    std::printf("%-14s %.6f\n", name.c_str(), value);
  if (!pv.empty())
    std::printf("(CCC_V-CCC_A)  %.3f-%.3f\n", rows[0].second, rows[1].second);

  if (!out_path.empty()) {
    std::ofstream os(out_path);
    if (!os) throw std::invalid_argument("eval: cannot write " + out_path);
    os << "metric,value\n";
    char buf[64];
    for (const auto& [name, value] : rows) {
      std::snprintf(buf, sizeof buf, "%.17g", value);
      os << name << "," << buf << "\n";
    }
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// split / aggregate / stats / spectrogram

const char* partition_name(dataset::Partition p) {
  switch (p) {
    case dataset::Partition::Train: return "train";
    case dataset::Partition::Validation: return "validation";
    case dataset::Partition::Test: return "test";
  }
  return "?";
}

int cmd_split(const std::string& in_path, const std::string& out_path,
              const std::array<double, 3>& ratios, std::uint64_t seed) {
  auto frames = dataset::parse_jsonl(in_path);
  auto split = dataset::subject_independent_split(frames, ratios, seed);
  std::ofstream os(out_path);
  if (!os) throw std::invalid_argument("split: cannot write " + out_path);
  os << "video_id,subject_id,partition\n";
  for (const auto& [sid, vids] : split.subject_videos)
    for (const auto& vid : vids)
      os << vid << "," << sid << ","
         << partition_name(split.video_partition.at(vid)) << "\n";
  const double total = double(frames.size());
  std::printf("frames: train %zu (%.1f%%), validation %zu (%.1f%%), "
              "test %zu (%.1f%%)\n",
              split.frame_counts[0], 100.0 * double(split.frame_counts[0]) / total,
              split.frame_counts[1], 100.0 * double(split.frame_counts[1]) / total,
              split.frame_counts[2], 100.0 * double(split.frame_counts[2]) / total);
  if (split.ratios_unreachable)
    std::printf("note: a single subject exceeds the largest target share; "
                "ratios are best-effort\n");
  std::printf("wrote %s\n", out_path.c_str());
  return kExitOk;
}

int cmd_aggregate(const std::string& in_path, const std::string& out_path) {
  auto frames = dataset::parse_jsonl(in_path);
  // video -> annotator -> track
  std::map<std::string, std::map<std::string, dataset::VaTrack>> videos;
  std::map<std::string, std::string> video_subject;
  for (const auto& f : frames) {
    if (!f.annotator_id || !f.valence)
      throw std::invalid_argument(
          "aggregate: frame " + f.video_id + "/" + std::to_string(f.frame) +
          " lacks annotator_id or VA labels");
    auto& track = videos[f.video_id][*f.annotator_id];
    track.annotator_id = *f.annotator_id;
    track.frames.push_back(f.frame);
    track.valence.push_back(*f.valence);
    track.arousal.push_back(*f.arousal);
    video_subject.emplace(f.video_id, f.subject_id);
  }
  std::vector<dataset::LabeledFrame> out;
  for (auto& [vid, annotators] : videos) {
    std::vector<dataset::VaTrack> tracks;
    for (auto& [aid, track] : annotators) tracks.push_back(std::move(track));
    auto agg = dataset::aggregate_va(tracks);
    for (std::size_t i = 0; i < agg.frames.size(); ++i) {
      dataset::LabeledFrame f;
      f.video_id = vid;
      f.frame = agg.frames[i];
      f.subject_id = video_subject[vid];
      f.valence = agg.valence[i];
      f.arousal = agg.arousal[i];
      out.push_back(std::move(f));
    }
  }
  dataset::write_jsonl(out_path, out);
  std::printf("aggregated %zu videos, %zu frames -> %s\n", videos.size(),
              out.size(), out_path.c_str());
  return kExitOk;
}

int cmd_stats(const std::string& in_path, const std::string& out_path) {
  auto frames = dataset::parse_jsonl(in_path);
  auto s = dataset::dataset_stats(frames);
  std::ofstream os(out_path);
  if (!os) throw std::invalid_argument("stats: cannot write " + out_path);
  char buf[64];
  os << "metric,index,value\n";
  for (std::size_t c = 0; c < 7; ++c)
    os << "expr_count," << c << "," << s.expr_histogram[c] << "\n";
  for (std::size_t k = 0; k < s.au_counts.size(); ++k) {
    os << "au_count," << k << "," << s.au_counts[k] << "\n";
    std::snprintf(buf, sizeof buf, "%.17g", s.au_pct_of_frames(k));
    os << "au_pct_frames," << k << "," << buf << "\n";
    std::snprintf(buf, sizeof buf, "%.17g", s.au_pct_of_activations(k));
    os << "au_pct_activations," << k << "," << buf << "\n";
  }
  os << "va_total,," << s.va_total << "\n";
  for (std::size_t i = 0; i < dataset::DatasetStats::kVaBins; ++i)
    for (std::size_t j = 0; j < dataset::DatasetStats::kVaBins; ++j)
      if (s.va_histogram[i][j] != 0)
        os << "va_hist," << i << ":" << j << "," << s.va_histogram[i][j]
           << "\n";
  std::printf("%zu frames (%zu VA, %zu expr, %zu AU) -> %s\n", frames.size(),
              s.va_total, s.expr_total, s.au_total_frames, out_path.c_str());
  return kExitOk;
}

int cmd_spectrogram(const std::string& in_path, const std::string& out_path,
                    const RunConfig& cfg) {
  WavData wav = read_wav(in_path);
  if (double(wav.sample_rate) != cfg.spec.sample_rate)
    throw std::invalid_argument(
        "spectrogram: WAV sample rate " + std::to_string(wav.sample_rate) +
        " does not match configured " +
        std::to_string(std::size_t(cfg.spec.sample_rate)) +
        "; resampling is not supported");
  bool degenerate = false;
  Matrix spec = signals::spectrogram(wav.samples, cfg.spec, &degenerate);
  serialize::save_afen(out_path, {{"spectrogram", spec}});
  std::printf("%zu frames x %zu bins%s -> %s\n", spec.rows(), spec.cols(),
              degenerate ? " (degenerate: constant signal)" : "",
              out_path.c_str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-task affect toolkit"};
  app.require_subcommand(1);

  std::string config_path, in_path, out_path, labels_path;
  std::uint64_t seed = 0;
  bool seed_set = false, inject_fault = false, log_mag = false;
  std::array<double, 3> ratios{0.6, 0.2, 0.2};

  auto add_seed = [&](CLI::App* cmd) {
    cmd->add_option("--seed", seed, "seed (overrides config)")
        ->each([&](const std::string&) { seed_set = true; });
  };

  CLI::App* gc = app.add_subcommand(
      "grad-check", "finite-difference audit of losses and blocks");
  add_seed(gc);
  gc->add_flag("--inject-fault", inject_fault,
               "corrupt one gradient to verify failure detection");

  CLI::App* tr = app.add_subcommand("train", "toy multi-task training run");
  tr->add_option("--config", config_path, "RunConfig JSON");
  tr->add_option("--out", out_path, "output directory (overrides config)");
  add_seed(tr);

  CLI::App* ev = app.add_subcommand("eval", "metrics from aligned files");
  ev->add_option("--predictions", in_path, "predictions JSON-Lines")
      ->required();
  ev->add_option("--labels", labels_path, "labels JSON-Lines")->required();
  ev->add_option("--out", out_path, "metrics CSV path");

  CLI::App* sp = app.add_subcommand("split", "subject-independent split");
  sp->add_option("--input", in_path, "frames JSON-Lines")->required();
  sp->add_option("--output", out_path, "assignment CSV")->required();
  sp->add_option("--ratios", ratios, "train validation test fractions");
  add_seed(sp);

  CLI::App* ag = app.add_subcommand("aggregate", "mean multi-annotator VA");
  ag->add_option("--input", in_path, "annotator frames JSON-Lines")
      ->required();
  ag->add_option("--output", out_path, "aggregated JSON-Lines")->required();

  CLI::App* st = app.add_subcommand("stats", "dataset histograms");
  st->add_option("--input", in_path, "frames JSON-Lines")->required();
  st->add_option("--output", out_path, "stats CSV")->required();

  CLI::App* sg = app.add_subcommand("spectrogram", "WAV -> spectrogram");
  sg->add_option("--input", in_path, "PCM16 mono WAV")->required();
  sg->add_option("--output", out_path, "AFEN output path")->required();
  sg->add_option("--config", config_path, "RunConfig JSON");
  sg->add_flag("--log", log_mag, "log-magnitude before normalization");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gc->parsed()) return cmd_grad_check(seed_set ? seed : 1, inject_fault);
    if (tr->parsed()) {
      RunConfig cfg = parse_config(config_path);
      if (seed_set) cfg.train.seed = seed;
      if (!out_path.empty()) cfg.output_dir = out_path;
      return cmd_train(cfg);
    }
    if (ev->parsed()) return cmd_eval(in_path, labels_path, out_path);
    if (sp->parsed()) return cmd_split(in_path, out_path, ratios,
                                       seed_set ? seed : 0);
    if (ag->parsed()) return cmd_aggregate(in_path, out_path);
    if (st->parsed()) return cmd_stats(in_path, out_path);
    if (sg->parsed()) {
      RunConfig cfg = parse_config(config_path);
      cfg.spec.log_magnitude = cfg.spec.log_magnitude || log_mag;
      return cmd_spectrogram(in_path, out_path, cfg);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitValidation;
  }
  return kExitOk;
}
