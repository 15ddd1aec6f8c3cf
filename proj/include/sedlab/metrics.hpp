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

#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "sedlab/events.hpp"
#include "sedlab/tensor.hpp"

namespace sedlab {

// Evaluation surface. Thresholding is strict everywhere: a score counts
// as positive only when it exceeds theta. F1 metrics micro-average
// counts over all (clip, class) units; mAP macro-averages per-class
// average precision, excluding classes without any positive reference.

struct MetricsConfig {
  double theta = 0.5;
  int median_win = 5;
  Index segment_len = 25;
  Index collar = 5;
  // Offset tolerance for event matching: max(collar, this fraction of
  // the reference duration).
  double offset_dur_frac = 0.2;
};

// Binary activity per class and frame, [classes][frames].
using BinaryGrid = std::vector<std::vector<std::uint8_t>>;

// Threshold at theta then median-filter each row with an odd window,
// replicating edge values.
BinaryGrid binarize(const Tensor<double>& scores, double theta, int median_win);

// Maximal runs of ones per row, ordered by (class, onset).
std::vector<Event> decode_events(const BinaryGrid& grid);

struct F1Counts {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;

  void add(const F1Counts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
  }
  // 1.0 when there is nothing to predict and nothing predicted.
  double f1() const {
    if (tp == 0 && fp == 0 && fn == 0) return 1.0;
    const double denom = static_cast<double>(2 * tp + fp + fn);
    return denom == 0.0 ? 0.0 : 2.0 * static_cast<double>(tp) / denom;
  }
};

// Fixed segment tiling: a (segment, class) is reference-positive when
// any reference frame of the class falls inside it, prediction-positive
// when any predicted frame does.
F1Counts segment_counts(const BinaryGrid& pred, const std::vector<Event>& refs, Index frames,
                        Index segment_len);

// Greedy event matching in onset order: a predicted event takes the
// first unmatched reference of its class with onset within the collar
// and offset within max(collar, offset_dur_frac * reference duration).
// Per-class counts are accumulated into per_class when provided (sized
// to the class count by the caller).
F1Counts event_counts(const std::vector<Event>& pred_events, const std::vector<Event>& refs,
                      Index collar, double offset_dur_frac,
                      std::vector<F1Counts>* per_class = nullptr);

// Average precision with step interpolation: positives scored in
// descending order with stable tie order, AP = mean over positives of
// precision at their rank. Absent when there are no positives.
std::optional<double> average_precision(const std::vector<double>& scores,
                                        const std::vector<std::uint8_t>& labels);

// Per-class score/label accumulator for macro mAP.
class ApAccumulator {
 public:
  explicit ApAccumulator(Index classes);
  void add(Index cls, double score, bool positive);
  // Macro mean of per-class AP over classes with at least one positive;
  // reports how many classes were excluded.
  std::optional<double> macro_map(Index* excluded_out = nullptr) const;

 private:
  std::vector<std::vector<double>> scores_;
  std::vector<std::vector<std::uint8_t>> labels_;
};

struct EvalResult {
  std::optional<double> at_f1;
  std::optional<double> at_map;
  std::optional<double> sed_map;
  std::optional<double> seg_f1;
  std::optional<double> event_f1;
  // Per-class event F1, sized to the class count when event_f1 is set.
  std::vector<double> per_class_event_f1;
  // Classes excluded from either mAP for lack of positives.
  Index ap_excluded_classes = 0;
};

// Accumulates the full evaluation surface clip by clip. Frame scores
// are post-sigmoid [classes x frames]; clip scores one value per class.
class EvalAccumulator {
 public:
  EvalAccumulator(Index classes, const MetricsConfig& cfg);
  void add_clip(const Tensor<double>& frame_scores, const std::vector<double>& clip_scores,
                const std::vector<int>& weak, const std::vector<Event>& refs);
  EvalResult result() const;

 private:
  Index classes_;
  MetricsConfig cfg_;
  F1Counts at_;
  F1Counts seg_;
  F1Counts event_;
  std::vector<F1Counts> event_per_class_;
  ApAccumulator at_ap_;
  ApAccumulator sed_ap_;
};

// CSV rows "variant,seed,split,metric,value" with %.17g values so equal
// results serialize to equal bytes.
std::string metrics_csv_header();
void append_metric_rows(std::ostream& out, const std::string& variant, std::uint64_t seed,
                        const std::string& split, const EvalResult& result);

}  // namespace sedlab
