// SPDX-License-Identifier: Apache-2.0
#include "affect/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "affect/rng.hpp"

namespace affect::dataset {

using nlohmann::json;

void validate(const LabeledFrame& f) {
  if (!f.valence && !f.arousal && !f.au && !f.expr)
    throw std::invalid_argument("LabeledFrame: no label field present (video " +
                                f.video_id + " frame " +
                                std::to_string(f.frame) + ")");
  if (f.valence.has_value() != f.arousal.has_value())
    throw std::invalid_argument("LabeledFrame: valence/arousal must be paired");
  auto in_range = [](double v) { return v >= -1.0 && v <= 1.0; };
  if (f.valence && (!in_range(*f.valence) || !in_range(*f.arousal)))
    throw std::invalid_argument("LabeledFrame: VA outside [-1,1]");
  if (f.au)
    for (int v : *f.au)
      if (v != 0 && v != 1)
        throw std::invalid_argument("LabeledFrame: AU entry not in {0,1}");
  if (f.expr && (*f.expr < 0 || *f.expr > 6))
    throw std::invalid_argument("LabeledFrame: expr class out of 0..6");
}

namespace {

template <typename Track>
void require_aligned(const std::vector<Track>& tracks, const char* op) {
  if (tracks.size() < 2)
    throw std::invalid_argument(std::string(op) + ": need >= 2 tracks");
  for (std::size_t t = 1; t < tracks.size(); ++t) {
    if (tracks[t].frames.size() != tracks[0].frames.size())
      throw std::invalid_argument(
          std::string(op) + ": track " + tracks[t].annotator_id + " has " +
          std::to_string(tracks[t].frames.size()) + " frames, expected " +
          std::to_string(tracks[0].frames.size()));
    for (std::size_t i = 0; i < tracks[0].frames.size(); ++i)
      if (tracks[t].frames[i] != tracks[0].frames[i])
        throw std::invalid_argument(
            std::string(op) + ": frame mismatch at position " +
            std::to_string(i) + " (track " + tracks[t].annotator_id + ": " +
            std::to_string(tracks[t].frames[i]) + " vs " +
            std::to_string(tracks[0].frames[i]) + ")");
  }
}

double pearson(const std::vector<double>& x, const std::vector<double>& y,
               bool* constant) {
  const double n = double(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sx = 0, sy = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += (x[i] - mx) * (x[i] - mx);
    sy += (y[i] - my) * (y[i] - my);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sx < 1e-24 || sy < 1e-24) {
    *constant = true;
    return 0.0;
  }
  *constant = false;
  return sxy / std::sqrt(sx * sy);
}

}  // namespace

AggregatedVa aggregate_va(const std::vector<VaTrack>& tracks) {
  require_aligned(tracks, "aggregate_va");
  AggregatedVa out;
  out.frames = tracks[0].frames;
  const std::size_t n = out.frames.size();
  out.valence.resize(n);
  out.arousal.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double v = 0, a = 0;
    for (const auto& t : tracks) {
      v += t.valence[i];
      a += t.arousal[i];
    }
    v /= double(tracks.size());
    a /= double(tracks.size());
    out.valence[i] = std::clamp(v, -1.0, 1.0);
    out.arousal[i] = std::clamp(a, -1.0, 1.0);
  }
  return out;
}

InterAnnotatorCorrelation inter_annotator_correlation(
    const std::vector<VaTrack>& tracks) {
  require_aligned(tracks, "inter_annotator_correlation");
  InterAnnotatorCorrelation out;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < tracks.size(); ++i)
    for (std::size_t j = i + 1; j < tracks.size(); ++j) {
      bool cv = false, ca = false;
      const double rv = pearson(tracks[i].valence, tracks[j].valence, &cv);
      const double ra = pearson(tracks[i].arousal, tracks[j].arousal, &ca);
      if (cv || ca) {
        ++out.skipped_pairs;
        continue;
      }
      out.valence += rv;
      out.arousal += ra;
      ++pairs;
    }
  if (pairs == 0)
    throw std::invalid_argument(
        "inter_annotator_correlation: all pairs degenerate");
  out.valence /= double(pairs);
  out.arousal /= double(pairs);
  return out;
}

AgreementReport agreement_filter(const std::vector<CatTrack>& tracks) {
  require_aligned(tracks, "agreement_filter");
  AgreementReport report;
  for (std::size_t i = 0; i < tracks[0].frames.size(); ++i) {
    bool agree = true;
    for (std::size_t t = 1; t < tracks.size() && agree; ++t)
      agree = tracks[t].labels[i] == tracks[0].labels[i];
    if (agree) {
      report.kept_indices.push_back(i);
      ++report.kept;
    } else {
      ++report.dropped;
    }
  }
  return report;
}

SplitAssignment subject_independent_split(
    const std::vector<LabeledFrame>& frames,
    const std::array<double, 3>& ratios, std::uint64_t seed) {
  const double ratio_sum = ratios[0] + ratios[1] + ratios[2];
  if (std::fabs(ratio_sum - 1.0) > 1e-9)
    throw std::invalid_argument("subject_independent_split: ratios sum to " +
                                std::to_string(ratio_sum));
  SplitAssignment out;
  std::map<std::string, std::size_t> subject_frames;
  std::map<std::string, std::string> video_subject;
  for (const auto& f : frames) {
    if (f.subject_id.empty())
      throw std::invalid_argument(
          "subject_independent_split: missing subject id for video " +
          f.video_id);
    auto [it, inserted] = video_subject.emplace(f.video_id, f.subject_id);
    if (!inserted && it->second != f.subject_id)
      throw std::invalid_argument(
          "subject_independent_split: video " + f.video_id +
          " appears under two subjects");
    ++subject_frames[f.subject_id];
  }
  for (const auto& [vid, sid] : video_subject)
    out.subject_videos[sid].push_back(vid);

  struct SubjectGroup {
    std::string id;
    std::size_t frames;
    std::uint64_t tie_key;
  };
  std::vector<SubjectGroup> groups;
  groups.reserve(subject_frames.size());
  for (const auto& [sid, count] : subject_frames) {
    std::uint64_t h = 1469598103934665603ULL;
    for (char ch : sid) h = (h ^ std::uint64_t(ch)) * 1099511628211ULL;
    groups.push_back({sid, count, hash64(h ^ seed)});
  }
  // largest first; seeded hash breaks size ties deterministically
  std::sort(groups.begin(), groups.end(), [](const auto& a, const auto& b) {
    if (a.frames != b.frames) return a.frames > b.frames;
    return a.tie_key < b.tie_key;
  });

  const double total = double(frames.size());
  for (const auto& g : groups) {
    if (double(g.frames) / total >
        std::max({ratios[0], ratios[1], ratios[2]}))
      out.ratios_unreachable = true;
    int best = 0;
    double best_deficit = -1e300;
    for (int p = 0; p < 3; ++p) {
      const double deficit = ratios[std::size_t(p)] * total -
                             double(out.frame_counts[std::size_t(p)]);
      if (deficit > best_deficit) {
        best_deficit = deficit;
        best = p;
      }
    }
    out.frame_counts[std::size_t(best)] += g.frames;
    for (const auto& vid : out.subject_videos[g.id])
      out.video_partition[vid] = Partition(best);
  }
  return out;
}

double DatasetStats::au_pct_of_frames(std::size_t i) const {
  return au_total_frames == 0
             ? 0.0
             : 100.0 * double(au_counts[i]) / double(au_total_frames);
}

double DatasetStats::au_pct_of_activations(std::size_t i) const {
  return au_total_activations == 0
             ? 0.0
             : 100.0 * double(au_counts[i]) / double(au_total_activations);
}

DatasetStats dataset_stats(const std::vector<LabeledFrame>& frames) {
  if (frames.empty()) throw std::invalid_argument("dataset_stats: empty input");
  DatasetStats s;
  s.va_histogram.assign(DatasetStats::kVaBins,
                        std::vector<std::size_t>(DatasetStats::kVaBins, 0));
  auto bin = [](double v) {
    auto b = std::size_t((v + 1.0) / 2.0 * double(DatasetStats::kVaBins));
    return std::min(b, DatasetStats::kVaBins - 1);
  };
  for (const auto& f : frames) {
    if (f.valence && f.arousal) {
      ++s.va_histogram[bin(*f.valence)][bin(*f.arousal)];
      ++s.va_total;
    }
    if (f.expr) {
      ++s.expr_histogram[std::size_t(*f.expr)];
      ++s.expr_total;
    }
    if (f.au) {
      if (s.au_counts.size() < f.au->size()) s.au_counts.resize(f.au->size());
      ++s.au_total_frames;
      for (std::size_t i = 0; i < f.au->size(); ++i)
        if ((*f.au)[i] == 1) {
          ++s.au_counts[i];
          ++s.au_total_activations;
        }
    }
  }
  return s;
}

LabeledFrame frame_from_json_line(const std::string& line, std::size_t lineno) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    throw std::runtime_error("line " + std::to_string(lineno) + ": " +
                             e.what());
  }
  LabeledFrame f;
  try {
    f.video_id = j.at("video_id").get<std::string>();
    f.frame = j.at("frame").get<int>();
    f.subject_id = j.value("subject_id", std::string{});
    if (j.contains("annotator_id"))
      f.annotator_id = j["annotator_id"].get<std::string>();
    if (j.contains("valence")) f.valence = j["valence"].get<double>();
    if (j.contains("arousal")) f.arousal = j["arousal"].get<double>();
    if (j.contains("au")) f.au = j["au"].get<std::vector<int>>();
    if (j.contains("expr")) f.expr = j["expr"].get<int>();
  } catch (const json::exception& e) {
    throw std::runtime_error("line " + std::to_string(lineno) + ": " +
                             e.what());
  }
  validate(f);
  return f;
}

std::string frame_to_json_line(const LabeledFrame& f) {
  json j;
  j["video_id"] = f.video_id;
  j["frame"] = f.frame;
  if (!f.subject_id.empty()) j["subject_id"] = f.subject_id;
  if (f.annotator_id) j["annotator_id"] = *f.annotator_id;
  if (f.valence) j["valence"] = *f.valence;
  if (f.arousal) j["arousal"] = *f.arousal;
  if (f.au) j["au"] = *f.au;
  if (f.expr) j["expr"] = *f.expr;
  return j.dump();
}

std::vector<LabeledFrame> parse_jsonl(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path);
  std::vector<LabeledFrame> frames;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    frames.push_back(frame_from_json_line(line, lineno));
  }
  return frames;
}

void write_jsonl(const std::string& path,
                 const std::vector<LabeledFrame>& frames) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path + " for write");
  for (const auto& f : frames) os << frame_to_json_line(f) << "\n";
}

}  // namespace affect::dataset
