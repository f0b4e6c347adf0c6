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

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "expert/data/vocabulary.hpp"

namespace expert {

// Relative box corners, each in [0, 1].
struct BoundingBox {
  double x1 = 0, y1 = 0, x2 = 1, y2 = 1;

  static constexpr BoundingBox whole_scene() { return {0, 0, 1, 1}; }
  std::array<double, 4> as_array() const { return {x1, y1, x2, y2}; }
  bool valid() const {
    return 0 <= x1 && x1 < x2 && x2 <= 1 && 0 <= y1 && y1 < y2 && y2 <= 1;
  }
  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

struct Region {
  std::vector<double> feature;
  BoundingBox box;
  // Synthetic ground truth (noun or verb the region depicts). Never shown to
  // the model; used only by analysis probes.
  std::optional<std::string> latent_label;

  void validate() const {
    if (!box.valid()) throw std::invalid_argument("region: invalid bbox");
    for (double v : feature)
      if (!std::isfinite(v)) throw std::invalid_argument("region: non-finite");
  }
  friend bool operator==(const Region&, const Region&) = default;
};

// One scene: visual regions (the first is the whole scene) and a narration.
struct Example {
  std::vector<Region> regions;
  std::vector<WordId> tokens;
  std::uint64_t scene_id = 0;

  bool contains(WordId w) const {
    for (WordId t : tokens)
      if (t == w) return true;
    return false;
  }

  void validate() const {
    if (regions.empty()) throw std::invalid_argument("example without regions");
    if (tokens.empty()) throw std::invalid_argument("example without tokens");
    for (WordId t : tokens) {
      if (Vocabulary::is_special(t) || t < 0) {
        throw std::invalid_argument("example tokens contain a special id");
      }
    }
    for (const auto& r : regions) r.validate();
  }
  friend bool operator==(const Example&, const Example&) = default;
};

using Dataset = std::vector<Example>;

}  // namespace expert
