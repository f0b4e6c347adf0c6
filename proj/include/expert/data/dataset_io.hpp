// Copyright 2026 The EXPERT Authors.
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

// Dataset files are UTF-8 JSON Lines, one example per line:
//
//   {"scene_id": 17,
//    "tokens": ["cut", "the", "peach"],
//    "regions": [{"bbox": [x1, y1, x2, y2], "feature": [...],
//                 "label": "peach"}, ...]}
//
// "label" is optional synthetic ground truth and is never fed to the model.
// The first region of every example is the whole scene.

#pragma once

#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "expert/data/example.hpp"
#include "expert/data/vocabulary.hpp"
#include "json.hpp"

namespace expert {

// Example with its narration still spelled out as words.
struct RawExample {
  std::uint64_t scene_id = 0;
  std::vector<std::string> tokens;
  std::vector<Region> regions;

  bool contains(const std::string& w) const {
    for (const auto& t : tokens)
      if (t == w) return true;
    return false;
  }
  friend bool operator==(const RawExample&, const RawExample&) = default;
};

using RawDataset = std::vector<RawExample>;

inline Example to_example(const RawExample& raw, const Vocabulary& vocab) {
  Example ex;
  ex.scene_id = raw.scene_id;
  ex.regions = raw.regions;
  for (const auto& t : raw.tokens) ex.tokens.push_back(vocab.id(t));
  ex.validate();
  return ex;
}

inline Dataset to_dataset(const RawDataset& raw, const Vocabulary& vocab) {
  Dataset out;
  out.reserve(raw.size());
  for (const auto& r : raw) out.push_back(to_example(r, vocab));
  return out;
}

inline RawExample to_raw(const Example& ex, const Vocabulary& vocab) {
  RawExample raw;
  raw.scene_id = ex.scene_id;
  raw.regions = ex.regions;
  for (WordId t : ex.tokens) raw.tokens.push_back(vocab.word(t));
  return raw;
}

inline nlohmann::json raw_example_to_json(const RawExample& ex) {
  nlohmann::json regions = nlohmann::json::array();
  for (const auto& r : ex.regions) {
    nlohmann::json jr = {{"bbox", r.box.as_array()}, {"feature", r.feature}};
    if (r.latent_label) jr["label"] = *r.latent_label;
    regions.push_back(std::move(jr));
  }
  return {{"scene_id", ex.scene_id}, {"tokens", ex.tokens},
          {"regions", std::move(regions)}};
}

inline RawExample raw_example_from_json(const nlohmann::json& j) {
  RawExample ex;
  ex.scene_id = j.at("scene_id").get<std::uint64_t>();
  ex.tokens = j.at("tokens").get<std::vector<std::string>>();
  for (const auto& jr : j.at("regions")) {
    Region r;
    const auto box = jr.at("bbox").get<std::vector<double>>();
    if (box.size() != 4) throw std::invalid_argument("bbox needs 4 values");
    r.box = {box[0], box[1], box[2], box[3]};
    r.feature = jr.at("feature").get<std::vector<double>>();
    if (jr.contains("label")) r.latent_label = jr.at("label").get<std::string>();
    r.validate();
    ex.regions.push_back(std::move(r));
  }
  if (ex.tokens.empty() || ex.regions.empty()) {
    throw std::invalid_argument("dataset record without tokens or regions");
  }
  return ex;
}

inline void write_dataset(std::ostream& os, const RawDataset& data) {
  for (const auto& ex : data) os << raw_example_to_json(ex).dump() << '\n';
}

inline RawDataset read_dataset(std::istream& is) {
  RawDataset out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(raw_example_from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      throw std::runtime_error("dataset line " + std::to_string(line_no) +
                               ": " + e.what());
    }
  }
  return out;
}

inline void write_dataset_file(const std::string& path, const RawDataset& d) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path);
  write_dataset(os, d);
}

inline RawDataset read_dataset_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read " + path);
  return read_dataset(is);
}

}  // namespace expert
