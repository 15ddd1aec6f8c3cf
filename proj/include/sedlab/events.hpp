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

#include "sedlab/tensor.hpp"

namespace sedlab {

// A labeled activity span on the frame grid. The interval is half open:
// the event covers frames [onset, offset).
struct Event {
  int cls = 0;
  Index onset = 0;
  Index offset = 0;

  Index duration() const { return offset - onset; }

  friend bool operator==(const Event& a, const Event& b) {
    return a.cls == b.cls && a.onset == b.onset && a.offset == b.offset;
  }
};

}  // namespace sedlab
