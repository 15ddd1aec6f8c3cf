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

#include "sedlab/manifest.hpp"

#include <stdexcept>

#include "json.hpp"

namespace sedlab {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, std::size_t line_no, const std::string& what) {
  throw std::runtime_error("manifest error in '" + path + "' line " + std::to_string(line_no) +
                           ": " + what);
}

json parse_line(const std::string& path, std::size_t line_no, const std::string& line) {
  json rec = json::parse(line, nullptr, false);
  if (rec.is_discarded() || !rec.is_object()) fail(path, line_no, "not a JSON object");
  return rec;
}

std::string field_str(const json& rec, const char* key, const std::string& path,
                      std::size_t line_no) {
  if (!rec.contains(key) || !rec[key].is_string()) {
    fail(path, line_no, std::string("missing string field '") + key + "'");
  }
  return rec[key].get<std::string>();
}

std::vector<int> field_weak(const json& rec, const std::string& path, std::size_t line_no) {
  if (!rec.contains("weak") || !rec["weak"].is_array()) {
    fail(path, line_no, "missing array field 'weak'");
  }
  std::vector<int> weak;
  for (const auto& v : rec["weak"]) {
    if (!v.is_number_integer()) fail(path, line_no, "non-integer class id in 'weak'");
    const int cls = v.get<int>();
    if (cls < 0) fail(path, line_no, "negative class id in 'weak'");
    weak.push_back(cls);
  }
  return weak;
}

template <typename Fn>
void for_each_record(const std::string& manifest_path, Fn&& fn) {
  std::ifstream in(manifest_path);
  if (!in) throw std::runtime_error("cannot open manifest '" + manifest_path + "'");
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    fn(parse_line(manifest_path, line_no, line), line_no);
  }
}

}  // namespace

std::vector<TrainExample> load_train_examples(const std::string& manifest_path,
                                              const std::string& split) {
  std::vector<TrainExample> out;
  for_each_record(manifest_path, [&](const json& rec, std::size_t line_no) {
    if (field_str(rec, "split", manifest_path, line_no) != split) return;
    TrainExample ex;
    ex.id = field_str(rec, "id", manifest_path, line_no);
    ex.file = field_str(rec, "file", manifest_path, line_no);
    ex.weak = field_weak(rec, manifest_path, line_no);
    out.push_back(std::move(ex));
  });
  return out;
}

std::vector<EvalExample> load_eval_examples(const std::string& manifest_path,
                                            const std::string& split) {
  std::vector<EvalExample> out;
  for_each_record(manifest_path, [&](const json& rec, std::size_t line_no) {
    if (field_str(rec, "split", manifest_path, line_no) != split) return;
    EvalExample ex;
    ex.id = field_str(rec, "id", manifest_path, line_no);
    ex.file = field_str(rec, "file", manifest_path, line_no);
    ex.weak = field_weak(rec, manifest_path, line_no);
    if (rec.contains("events")) {
      if (!rec["events"].is_array()) fail(manifest_path, line_no, "'events' is not an array");
      for (const auto& e : rec["events"]) {
        if (!e.is_object() || !e.contains("class") || !e.contains("onset") ||
            !e.contains("offset")) {
          fail(manifest_path, line_no, "event record missing class/onset/offset");
        }
        Event ev;
        ev.cls = e["class"].get<int>();
        ev.onset = e["onset"].get<Index>();
        ev.offset = e["offset"].get<Index>();
        if (ev.cls < 0 || ev.onset < 0 || ev.offset <= ev.onset) {
          fail(manifest_path, line_no, "event with empty or negative span");
        }
        ex.events.push_back(ev);
      }
    }
    out.push_back(std::move(ex));
  });
  return out;
}

ManifestWriter::ManifestWriter(const std::string& path) : path_(path), out_(path) {
  if (!out_) throw std::runtime_error("cannot open manifest '" + path + "' for writing");
}

void ManifestWriter::add_weak(const std::string& id, const std::string& split,
                              const std::string& file, const std::vector<int>& weak) {
  json rec;
  rec["id"] = id;
  rec["split"] = split;
  rec["file"] = file;
  rec["weak"] = weak;
  out_ << rec.dump() << '\n';
}

void ManifestWriter::add_strong(const std::string& id, const std::string& split,
                                const std::string& file, const std::vector<int>& weak,
                                const std::vector<Event>& events) {
  json rec;
  rec["id"] = id;
  rec["split"] = split;
  rec["file"] = file;
  rec["weak"] = weak;
  json evs = json::array();
  for (const Event& e : events) {
    json ev;
    ev["class"] = e.cls;
    ev["onset"] = e.onset;
    ev["offset"] = e.offset;
    evs.push_back(ev);
  }
  rec["events"] = evs;
  out_ << rec.dump() << '\n';
}

void ManifestWriter::close() {
  out_.flush();
  if (!out_) throw std::runtime_error("write failed for manifest '" + path_ + "'");
  out_.close();
}

}  // namespace sedlab
