// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace affect::dataset {

// Per-frame annotation; optional fields absent when the frame carries no
// label for that task.
struct LabeledFrame {
  std::string video_id;
  int frame = 0;
  std::string subject_id;
  std::optional<std::string> annotator_id;
  std::optional<double> valence;  // [-1,1]
  std::optional<double> arousal;  // [-1,1]
  std::optional<std::vector<int>> au;  // {0,1}^K
  std::optional<int> expr;             // 0..6
};

void validate(const LabeledFrame& f);

// One annotator's raw VA labels for one video; frame indices strictly
// increasing.
struct VaTrack {
  std::string annotator_id;
  std::vector<int> frames;
  std::vector<double> valence;
  std::vector<double> arousal;
};

// Categorical labels (AU vectors or single-element expression classes).
struct CatTrack {
  std::string annotator_id;
  std::vector<int> frames;
  std::vector<std::vector<int>> labels;
};

struct AggregatedVa {
  std::vector<int> frames;
  std::vector<double> valence;
  std::vector<double> arousal;
};

// Arithmetic mean per frame per dimension, clamped to [-1,1]. Tracks must
// be aligned on frame indices.
AggregatedVa aggregate_va(const std::vector<VaTrack>& tracks);

struct InterAnnotatorCorrelation {
  double valence = 0.0;
  double arousal = 0.0;
  std::size_t skipped_pairs = 0;  // a constant track makes Pearson undefined
};

// Mean pairwise Pearson correlation per dimension.
InterAnnotatorCorrelation inter_annotator_correlation(
    const std::vector<VaTrack>& tracks);

struct AgreementReport {
  std::vector<std::size_t> kept_indices;  // positions into track frames
  std::size_t kept = 0;
  std::size_t dropped = 0;
};

// Keeps the frames on which every annotator emitted identical labels.
AgreementReport agreement_filter(const std::vector<CatTrack>& tracks);

enum class Partition { Train = 0, Validation = 1, Test = 2 };

struct SplitAssignment {
  std::map<std::string, Partition> video_partition;
  std::map<std::string, std::vector<std::string>> subject_videos;
  std::array<std::size_t, 3> frame_counts{};
  bool ratios_unreachable = false;  // one subject dominates the frame count
};

// Greedy seeded assignment of whole subject groups, largest first, each to
// the partition with the largest remaining frame deficit. Subject
// disjointness holds unconditionally.
SplitAssignment subject_independent_split(
    const std::vector<LabeledFrame>& frames,
    const std::array<double, 3>& ratios, std::uint64_t seed);

struct DatasetStats {
  static constexpr std::size_t kVaBins = 20;
  // [valence bin][arousal bin] over [-1,1]^2
  std::vector<std::vector<std::size_t>> va_histogram;
  std::size_t va_total = 0;
  std::array<std::size_t, 7> expr_histogram{};
  std::size_t expr_total = 0;
  std::vector<std::size_t> au_counts;  // activations per AU
  std::size_t au_total_frames = 0;
  std::size_t au_total_activations = 0;

  double au_pct_of_frames(std::size_t i) const;
  double au_pct_of_activations(std::size_t i) const;
};

DatasetStats dataset_stats(const std::vector<LabeledFrame>& frames);

// JSON-Lines: one object per frame with keys video_id, frame, subject_id
// and optional annotator_id, valence, arousal, au, expr.
std::vector<LabeledFrame> parse_jsonl(const std::string& path);
void write_jsonl(const std::string& path,
                 const std::vector<LabeledFrame>& frames);
LabeledFrame frame_from_json_line(const std::string& line, std::size_t lineno);
std::string frame_to_json_line(const LabeledFrame& f);

}  // namespace affect::dataset
