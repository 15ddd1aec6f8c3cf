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

#include <fstream>
#include <string>
#include <vector>

#include "sedlab/events.hpp"

namespace sedlab {

// Dataset manifests are JSON lines. Every record carries an id, a split
// name, a tensor file path relative to the manifest directory, and the
// clip-level label set. Records in evaluation splits additionally carry
// per-event onset and offset annotations.
//
// Training code consumes TrainExample, which has no field for event
// annotations, so frame-level supervision cannot leak into the training
// path through the type system. Only the evaluation loader surfaces
// events.

inline constexpr const char* kSplitTrain = "train";
inline constexpr const char* kSplitEvalConfounded = "eval_confounded";
inline constexpr const char* kSplitEvalDecorrelated = "eval_decorrelated";

struct TrainExample {
  std::string id;
  std::string file;
  std::vector<int> weak;
};

struct EvalExample {
  std::string id;
  std::string file;
  std::vector<int> weak;
  std::vector<Event> events;
};

// Loads records of one split, keeping manifest order. Unknown fields in
// a record are ignored; the training loader in particular never reads
// event annotations even when the record carries them.
std::vector<TrainExample> load_train_examples(const std::string& manifest_path,
                                              const std::string& split = "train");

std::vector<EvalExample> load_eval_examples(const std::string& manifest_path,
                                            const std::string& split);

// Streams records out as JSON lines with alphabetically ordered keys so
// emission is byte-deterministic.
class ManifestWriter {
 public:
  explicit ManifestWriter(const std::string& path);

  // Writes a record without any event field.
  void add_weak(const std::string& id, const std::string& split, const std::string& file,
                const std::vector<int>& weak);

  // Writes a record with full event annotations.
  void add_strong(const std::string& id, const std::string& split, const std::string& file,
                  const std::vector<int>& weak, const std::vector<Event>& events);

  void close();

 private:
  std::string path_;
  std::ofstream out_;
};

}  // namespace sedlab
