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

#include <cmath>
#include <stdexcept>
#include <string>
#include <string_view>

#include "json.hpp"

namespace expert {

enum class MaskVariant { isolated, full, target_to_reference, via_vision };

inline std::string_view to_string(MaskVariant v) {
  switch (v) {
    case MaskVariant::isolated: return "isolated";
    case MaskVariant::full: return "full";
    case MaskVariant::target_to_reference: return "tgt2ref";
    case MaskVariant::via_vision: return "via-vision";
  }
  return "?";
}

inline MaskVariant parse_mask_variant(std::string_view s) {
  if (s == "isolated") return MaskVariant::isolated;
  if (s == "full") return MaskVariant::full;
  if (s == "tgt2ref") return MaskVariant::target_to_reference;
  if (s == "via-vision") return MaskVariant::via_vision;
  throw std::invalid_argument("unknown mask variant: " + std::string(s));
}

// Text positions chosen for masking become [MASK] / a random word / stay
// unchanged with the given probabilities; selected regions are zeroed with
// probability image_zero_rate.
struct MaskingSchedule {
  double text_mask_rate = 1.0 / 3.0;
  double image_mask_rate = 1.0 / 6.0;
  double text_to_mask_token = 0.8;
  double text_to_random_word = 0.1;
  double text_keep = 0.1;
  double image_zero_rate = 0.9;

  void validate() const {
    for (double r : {text_mask_rate, image_mask_rate, text_to_mask_token,
                     text_to_random_word, text_keep, image_zero_rate}) {
      if (!(r >= 0 && r <= 1)) {
        throw std::invalid_argument("masking rates must lie in [0, 1]");
      }
    }
    const double total = text_to_mask_token + text_to_random_word + text_keep;
    if (std::abs(total - 1) > 1e-9) {
      throw std::invalid_argument("text replacement law must sum to 1");
    }
  }
};

struct Hyperparams {
  int hidden = 32;     // d
  int layers = 4;      // Z
  int heads = 4;
  int region_dim = 32; // d_v
  int max_positions = 16;
  int max_examples = 16;
  int ffn_multiplier = 4;
  int max_references = 2;   // k+
  int max_distractors = 2;  // k-
  double alpha = 1.0;       // word cloze weight
  double beta = 1.0;        // visual cloze weight
  bool input_pointing = false;
  MaskVariant mask_variant = MaskVariant::via_vision;
  MaskingSchedule masking;

  void validate() const {
    if (hidden <= 0 || heads <= 0 || hidden % heads != 0) {
      throw std::invalid_argument("hidden size must be divisible by heads");
    }
    if (layers < 1) throw std::invalid_argument("need at least one layer");
    if (region_dim <= 0 || max_positions <= 0 || max_examples <= 0 ||
        ffn_multiplier <= 0) {
      throw std::invalid_argument("extents must be positive");
    }
    if (max_references < 0 || max_distractors < 0) {
      throw std::invalid_argument("reference/distractor counts must be >= 0");
    }
    if (alpha < 0 || beta < 0) {
      throw std::invalid_argument("loss weights must be >= 0");
    }
    masking.validate();
  }
};

inline void to_json(nlohmann::json& j, const MaskingSchedule& m) {
  j = {{"text_mask_rate", m.text_mask_rate},
       {"image_mask_rate", m.image_mask_rate},
       {"text_to_mask_token", m.text_to_mask_token},
       {"text_to_random_word", m.text_to_random_word},
       {"text_keep", m.text_keep},
       {"image_zero_rate", m.image_zero_rate}};
}

inline void from_json(const nlohmann::json& j, MaskingSchedule& m) {
  m.text_mask_rate = j.at("text_mask_rate");
  m.image_mask_rate = j.at("image_mask_rate");
  m.text_to_mask_token = j.at("text_to_mask_token");
  m.text_to_random_word = j.at("text_to_random_word");
  m.text_keep = j.at("text_keep");
  m.image_zero_rate = j.at("image_zero_rate");
}

inline void to_json(nlohmann::json& j, const Hyperparams& h) {
  j = {{"hidden", h.hidden},
       {"layers", h.layers},
       {"heads", h.heads},
       {"region_dim", h.region_dim},
       {"max_positions", h.max_positions},
       {"max_examples", h.max_examples},
       {"ffn_multiplier", h.ffn_multiplier},
       {"max_references", h.max_references},
       {"max_distractors", h.max_distractors},
       {"alpha", h.alpha},
       {"beta", h.beta},
       {"input_pointing", h.input_pointing},
       {"mask_variant", std::string(to_string(h.mask_variant))},
       {"masking", h.masking}};
}

inline void from_json(const nlohmann::json& j, Hyperparams& h) {
  h.hidden = j.at("hidden");
  h.layers = j.at("layers");
  h.heads = j.at("heads");
  h.region_dim = j.at("region_dim");
  h.max_positions = j.at("max_positions");
  h.max_examples = j.at("max_examples");
  h.ffn_multiplier = j.at("ffn_multiplier");
  h.max_references = j.at("max_references");
  h.max_distractors = j.at("max_distractors");
  h.alpha = j.at("alpha");
  h.beta = j.at("beta");
  h.input_pointing = j.at("input_pointing");
  h.mask_variant = parse_mask_variant(j.at("mask_variant").get<std::string>());
  h.masking = j.at("masking").get<MaskingSchedule>();
}

inline bool operator==(const Hyperparams& a, const Hyperparams& b) {
  return nlohmann::json(a) == nlohmann::json(b);
}

}  // namespace expert
