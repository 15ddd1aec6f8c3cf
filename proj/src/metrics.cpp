// Copyright 2026 The sedlab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "sedlab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

namespace sedlab {

namespace {

void require(bool cond, const char* what) {
  if (!cond) throw std::invalid_argument(what);
}

std::string format_value(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

BinaryGrid binarize(const Tensor<double>& scores, double theta, int median_win) {
  require(scores.rank() == 2, "binarize expects a [classes x frames] matrix");
  require(theta > 0.0 && theta < 1.0, "threshold must lie strictly inside (0,1)");
  require(median_win >= 1 && median_win % 2 == 1, "median window must be odd and positive");
  const Index k = scores.dim(0);
  const Index n = scores.dim(1);
  auto m = scores.mat();
  BinaryGrid raw(static_cast<std::size_t>(k), std::vector<std::uint8_t>(static_cast<std::size_t>(n)));
  for (Index c = 0; c < k; ++c) {
    for (Index t = 0; t < n; ++t) {
      raw[static_cast<std::size_t>(c)][static_cast<std::size_t>(t)] = m(c, t) > theta ? 1 : 0;
    }
  }
  if (median_win == 1 || n == 0) return raw;
  const Index half = median_win / 2;
  BinaryGrid out = raw;
  for (Index c = 0; c < k; ++c) {
    const auto& row = raw[static_cast<std::size_t>(c)];
    for (Index t = 0; t < n; ++t) {
      // Median of a binary window is its majority vote; edges replicate
      // the boundary value.
      int ones = 0;
      for (Index d = -half; d <= half; ++d) {
        const Index idx = std::clamp<Index>(t + d, 0, n - 1);
        ones += row[static_cast<std::size_t>(idx)];
      }
      out[static_cast<std::size_t>(c)][static_cast<std::size_t>(t)] =
          ones > half ? 1 : 0;
    }
  }
  return out;
}

std::vector<Event> decode_events(const BinaryGrid& grid) {
  std::vector<Event> events;
  for (std::size_t c = 0; c < grid.size(); ++c) {
    const auto& row = grid[c];
    Index t = 0;
    const Index n = static_cast<Index>(row.size());
    while (t < n) {
      if (!row[static_cast<std::size_t>(t)]) {
        ++t;
        continue;
      }
      Index end = t;
      while (end < n && row[static_cast<std::size_t>(end)]) ++end;
      events.push_back(Event{static_cast<int>(c), t, end});
      t = end;
    }
  }
  return events;
}

F1Counts segment_counts(const BinaryGrid& pred, const std::vector<Event>& refs, Index frames,
                        Index segment_len) {
  require(segment_len >= 1, "segment length must be at least 1 frame");
  const Index k = static_cast<Index>(pred.size());
  for (const auto& row : pred) {
    require(static_cast<Index>(row.size()) == frames, "prediction rows must span all frames");
  }
  // Reference activity per class and frame.
  BinaryGrid ref(static_cast<std::size_t>(k), std::vector<std::uint8_t>(static_cast<std::size_t>(frames), 0));
  for (const Event& e : refs) {
    require(e.cls >= 0 && e.cls < k, "reference class out of range");
    require(e.onset >= 0 && e.offset <= frames && e.onset < e.offset,
            "reference event outside the frame grid");
    for (Index t = e.onset; t < e.offset; ++t) {
      ref[static_cast<std::size_t>(e.cls)][static_cast<std::size_t>(t)] = 1;
    }
  }
  F1Counts counts;
  for (Index start = 0; start < frames; start += segment_len) {
    const Index stop = std::min(frames, start + segment_len);
    for (Index c = 0; c < k; ++c) {
      bool ref_pos = false;
      bool pred_pos = false;
      for (Index t = start; t < stop; ++t) {
        ref_pos = ref_pos || ref[static_cast<std::size_t>(c)][static_cast<std::size_t>(t)];
        pred_pos = pred_pos || pred[static_cast<std::size_t>(c)][static_cast<std::size_t>(t)];
      }
      if (ref_pos && pred_pos) ++counts.tp;
      else if (pred_pos) ++counts.fp;
      else if (ref_pos) ++counts.fn;
    }
  }
  return counts;
}

F1Counts event_counts(const std::vector<Event>& pred_events, const std::vector<Event>& refs,
                      Index collar, double offset_dur_frac, std::vector<F1Counts>* per_class) {
  require(collar >= 0, "collar must be non-negative");
  require(offset_dur_frac >= 0.0, "offset tolerance fraction must be non-negative");
  std::vector<Event> preds = pred_events;
  std::vector<Event> sorted_refs = refs;
  std::stable_sort(preds.begin(), preds.end(),
                   [](const Event& a, const Event& b) { return a.onset < b.onset; });
  std::stable_sort(sorted_refs.begin(), sorted_refs.end(),
                   [](const Event& a, const Event& b) { return a.onset < b.onset; });
  std::vector<bool> matched(sorted_refs.size(), false);
  F1Counts counts;
  auto bump = [&](int cls, std::int64_t tp, std::int64_t fp, std::int64_t fn) {
    counts.tp += tp;
    counts.fp += fp;
    counts.fn += fn;
    if (per_class && cls >= 0 && cls < static_cast<int>(per_class->size())) {
      (*per_class)[static_cast<std::size_t>(cls)].tp += tp;
      (*per_class)[static_cast<std::size_t>(cls)].fp += fp;
      (*per_class)[static_cast<std::size_t>(cls)].fn += fn;
    }
  };
  for (const Event& p : preds) {
    bool found = false;
    for (std::size_t i = 0; i < sorted_refs.size(); ++i) {
      if (matched[i]) continue;
      const Event& r = sorted_refs[i];
      if (r.cls != p.cls) continue;
      const double offset_tol =
          std::max(static_cast<double>(collar), offset_dur_frac * static_cast<double>(r.duration()));
      if (std::llabs(p.onset - r.onset) <= collar &&
          static_cast<double>(std::llabs(p.offset - r.offset)) <= offset_tol) {
        matched[i] = true;
        found = true;
        break;
      }
    }
    if (found) bump(p.cls, 1, 0, 0);
    else bump(p.cls, 0, 1, 0);
  }
  for (std::size_t i = 0; i < sorted_refs.size(); ++i) {
    if (!matched[i]) bump(sorted_refs[i].cls, 0, 0, 1);
  }
  return counts;
}

std::optional<double> average_precision(const std::vector<double>& scores,
                                        const std::vector<std::uint8_t>& labels) {
  require(scores.size() == labels.size(), "scores and labels must have equal length");
  const std::size_t n = scores.size();
  std::int64_t positives = 0;
  for (std::uint8_t l : labels) positives += l ? 1 : 0;
  if (positives == 0) return std::nullopt;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double ap = 0.0;
  std::int64_t seen_pos = 0;
  for (std::size_t rank = 0; rank < n; ++rank) {
    if (labels[order[rank]]) {
      ++seen_pos;
      ap += static_cast<double>(seen_pos) / static_cast<double>(rank + 1);
    }
  }
  return ap / static_cast<double>(positives);
}

ApAccumulator::ApAccumulator(Index classes)
    : scores_(static_cast<std::size_t>(classes)), labels_(static_cast<std::size_t>(classes)) {
  require(classes >= 1, "accumulator needs at least one class");
}

void ApAccumulator::add(Index cls, double score, bool positive) {
  require(cls >= 0 && cls < static_cast<Index>(scores_.size()), "class id out of range");
  scores_[static_cast<std::size_t>(cls)].push_back(score);
  labels_[static_cast<std::size_t>(cls)].push_back(positive ? 1 : 0);
}

std::optional<double> ApAccumulator::macro_map(Index* excluded_out) const {
  double acc = 0.0;
  Index included = 0;
  Index excluded = 0;
  for (std::size_t c = 0; c < scores_.size(); ++c) {
    const auto ap = average_precision(scores_[c], labels_[c]);
    if (ap.has_value()) {
      acc += *ap;
      ++included;
    } else {
      ++excluded;
    }
  }
  if (excluded_out) *excluded_out = excluded;
  if (included == 0) return std::nullopt;
  return acc / static_cast<double>(included);
}

EvalAccumulator::EvalAccumulator(Index classes, const MetricsConfig& cfg)
    : classes_(classes),
      cfg_(cfg),
      event_per_class_(static_cast<std::size_t>(classes)),
      at_ap_(classes),
      sed_ap_(classes) {
  require(classes >= 1, "evaluation needs at least one class");
}

void EvalAccumulator::add_clip(const Tensor<double>& frame_scores,
                               const std::vector<double>& clip_scores,
                               const std::vector<int>& weak, const std::vector<Event>& refs) {
  require(frame_scores.rank() == 2 && frame_scores.dim(0) == classes_,
          "frame scores must be [classes x frames]");
  require(static_cast<Index>(clip_scores.size()) == classes_,
          "clip scores must have one value per class");
  const Index frames = frame_scores.dim(1);
  std::vector<std::uint8_t> weak_mask(static_cast<std::size_t>(classes_), 0);
  for (int cls : weak) {
    require(cls >= 0 && cls < classes_, "weak label out of class range");
    weak_mask[static_cast<std::size_t>(cls)] = 1;
  }

  for (Index c = 0; c < classes_; ++c) {
    const bool pos = weak_mask[static_cast<std::size_t>(c)] != 0;
    const bool pred = clip_scores[static_cast<std::size_t>(c)] > cfg_.theta;
    if (pred && pos) ++at_.tp;
    else if (pred) ++at_.fp;
    else if (pos) ++at_.fn;
    at_ap_.add(c, clip_scores[static_cast<std::size_t>(c)], pos);
  }

  BinaryGrid ref_grid(static_cast<std::size_t>(classes_),
                      std::vector<std::uint8_t>(static_cast<std::size_t>(frames), 0));
  for (const Event& e : refs) {
    require(e.cls >= 0 && e.cls < classes_, "reference class out of range");
    for (Index t = e.onset; t < std::min(e.offset, frames); ++t) {
      ref_grid[static_cast<std::size_t>(e.cls)][static_cast<std::size_t>(t)] = 1;
    }
  }
  auto m = frame_scores.mat();
  for (Index c = 0; c < classes_; ++c) {
    for (Index t = 0; t < frames; ++t) {
      sed_ap_.add(c, m(c, t), ref_grid[static_cast<std::size_t>(c)][static_cast<std::size_t>(t)] != 0);
    }
  }

  const BinaryGrid pred = binarize(frame_scores, cfg_.theta, cfg_.median_win);
  seg_.add(segment_counts(pred, refs, frames, cfg_.segment_len));
  event_.add(event_counts(decode_events(pred), refs, cfg_.collar, cfg_.offset_dur_frac,
                          &event_per_class_));
}

EvalResult EvalAccumulator::result() const {
  EvalResult r;
  r.at_f1 = at_.f1();
  r.seg_f1 = seg_.f1();
  r.event_f1 = event_.f1();
  r.per_class_event_f1.reserve(event_per_class_.size());
  for (const F1Counts& c : event_per_class_) r.per_class_event_f1.push_back(c.f1());
  Index at_excluded = 0;
  Index sed_excluded = 0;
  r.at_map = at_ap_.macro_map(&at_excluded);
  r.sed_map = sed_ap_.macro_map(&sed_excluded);
  r.ap_excluded_classes = std::max(at_excluded, sed_excluded);
  return r;
}

std::string metrics_csv_header() { return "variant,seed,split,metric,value"; }

void append_metric_rows(std::ostream& out, const std::string& variant, std::uint64_t seed,
                        const std::string& split, const EvalResult& result) {
  auto row = [&](const std::string& metric, double value) {
    out << variant << ',' << seed << ',' << split << ',' << metric << ',' << format_value(value)
        << '\n';
  };
  if (result.at_f1) row("at_f1", *result.at_f1);
  if (result.at_map) row("at_map", *result.at_map);
  if (result.sed_map) row("sed_map", *result.sed_map);
  if (result.seg_f1) row("seg_f1", *result.seg_f1);
  if (result.event_f1) row("event_f1", *result.event_f1);
  for (std::size_t c = 0; c < result.per_class_event_f1.size(); ++c) {
    row("event_f1_class_" + std::to_string(c), result.per_class_event_f1[c]);
  }
  row("ap_excluded_classes", static_cast<double>(result.ap_excluded_classes));
}

}  // namespace sedlab
