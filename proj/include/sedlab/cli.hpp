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

#ifndef SEDLAB_CLI_HPP_
#define SEDLAB_CLI_HPP_

#include <optional>
#include <string>
#include <vector>

#include "sedlab/config.hpp"
#include "sedlab/synth.hpp"
#include "sedlab/tensor.hpp"
#include "sedlab/trainer.hpp"

namespace sedlab {

// Entry point shared by the binary and the tests. Exit codes: 0 on
// success, 1 on usage errors, 2 on runtime failures.
int cli_main(int argc, const char* const* argv);

// Dataset generation settings resolved from a config file; flag
// overrides are applied on top by the command itself.
struct GenDataSettings {
  GeneratorConfig gen;
  Index n_train = 2000;
  Index n_eval_confounded = 300;
  Index n_eval_decorrelated = 300;
};

// Reads [generator] and [dataset] sections; absent keys keep the
// benchmark defaults above.
GenDataSettings resolve_gen_data(const Config& cfg);

// One aggregated comparison row for a (split, metric) pair. Fields are
// NaN when the corresponding variant has no runs.
struct CompareRow {
  std::string split;
  std::string metric;
  double baseline_mean;
  double baseline_std;
  double ci_mean;
  double ci_std;
  // ci_mean - baseline_mean.
  double delta;
};

// Aggregates runs/<id>/metrics.csv files under out_dir into mean and
// sample standard deviation per (variant, split, metric), sorted by
// (split, metric).
std::vector<CompareRow> aggregate_runs(const std::string& out_dir);

std::string compare_csv(const std::vector<CompareRow>& rows);

// Per-clip agreement between the k-pass intervention oracle and the
// single-pass path, on precomputed backbone features.
struct OracleReport {
  std::vector<std::string> clip_ids;
  std::vector<double> max_abs_deviation;
  std::vector<double> mean_abs_deviation;
  double exact_seconds = 0.0;
  double approx_seconds = 0.0;
  double overall_max_abs = 0.0;
  double overall_mean_abs = 0.0;
  double median_max_abs = 0.0;
  double runtime_ratio = 0.0;
};

// Runs both intervention paths over the clips with a frozen model and
// pool. Timings cover enhancement and classification only; backbone
// features are computed once up front and shared.
OracleReport oracle_report(Model<float>& model, const ContextPool<float>& pool,
                           const std::vector<EvalClipData>& clips);

}  // namespace sedlab

#endif  // SEDLAB_CLI_HPP_
