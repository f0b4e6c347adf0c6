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

#include <algorithm>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "expert/data/example.hpp"

namespace expert {

enum class Role { target, positive_reference, distractor };

// A text position chosen for masking, with the id actually fed to the model.
// The original id stays in the example.
struct TextMask {
  std::size_t example = 0;
  std::size_t position = 0;
  WordId input = Vocabulary::kMask;
  bool pointing = false;  // target token the model must point to
  friend bool operator==(const TextMask&, const TextMask&) = default;
};

struct ImageMask {
  std::size_t example = 0;
  std::size_t region = 0;
  bool zeroed = true;
  friend bool operator==(const ImageMask&, const ImageMask&) = default;
};

// Examples keep their original content; masks describe what the model sees.
struct Episode {
  std::vector<Example> examples;
  std::vector<Role> roles;
  std::vector<TextMask> text_masks;    // sorted by (example, position)
  std::vector<ImageMask> image_masks;  // sorted by (example, region)

  std::size_t target_index() const {
    for (std::size_t i = 0; i < roles.size(); ++i)
      if (roles[i] == Role::target) return i;
    throw std::logic_error("episode has no target example");
  }

  void sort_masks() {
    std::sort(text_masks.begin(), text_masks.end(), [](auto& a, auto& b) {
      return std::tie(a.example, a.position) < std::tie(b.example, b.position);
    });
    std::sort(image_masks.begin(), image_masks.end(), [](auto& a, auto& b) {
      return std::tie(a.example, a.region) < std::tie(b.example, b.region);
    });
  }

  void validate() const {
    if (examples.empty() || roles.size() != examples.size()) {
      throw std::invalid_argument("episode: roles/examples mismatch");
    }
    if (std::count(roles.begin(), roles.end(), Role::target) != 1) {
      throw std::invalid_argument("episode: exactly one target required");
    }
    for (const auto& m : text_masks) {
      if (m.example >= examples.size() ||
          m.position >= examples[m.example].tokens.size()) {
        throw std::invalid_argument("episode: text mask out of range");
      }
    }
    for (const auto& m : image_masks) {
      if (m.example >= examples.size() ||
          m.region >= examples[m.example].regions.size()) {
        throw std::invalid_argument("episode: image mask out of range");
      }
    }
  }

  friend bool operator==(const Episode&, const Episode&) = default;
};

enum class ElementKind { image, text, demarcation };
enum class Modality { image = 0, text = 1 };

// One position of the flattened model input.
struct Element {
  ElementKind kind = ElementKind::demarcation;
  Modality modality = Modality::image;
  std::size_t example = 0;
  std::size_t position = 0;  // region or token index within the example
  WordId token = kNoWord;    // id fed to the model (text, demarcation)
  WordId label = kNoWord;    // original id (text)
  Region region;             // original region (image)
  bool masked = false;
  bool pointing = false;
  bool zeroed = false;

  friend bool operator==(const Element&, const Element&) = default;
};

// Flattened layout:
//   [IMG] v^1 ... [SEP] v^2 ... [SEP] v^k [TXT] w^1 ... [SEP] ... w^k [SEP]
// The token opening an example's image (text) block belongs to that example;
// the final [SEP] belongs to the last example's text block. Demarcation
// tokens are never masked and never pointing candidates.
struct FlatEpisode {
  std::vector<Element> elements;
  std::vector<Role> roles;
  std::vector<std::uint64_t> scene_ids;

  std::size_t size() const { return elements.size(); }
  std::size_t num_examples() const { return roles.size(); }
  std::size_t target_index() const {
    for (std::size_t i = 0; i < roles.size(); ++i)
      if (roles[i] == Role::target) return i;
    throw std::logic_error("flat episode has no target example");
  }
  bool is_target(std::size_t element) const {
    return roles[elements[element].example] == Role::target;
  }
  bool is_region(std::size_t element) const {
    return elements[element].kind == ElementKind::image;
  }
  bool is_word(std::size_t element) const {
    return elements[element].kind == ElementKind::text;
  }

  // Element index of token `position` of example `example`.
  std::size_t text_index(std::size_t example, std::size_t position) const {
    for (std::size_t i = 0; i < elements.size(); ++i) {
      const auto& e = elements[i];
      if (e.kind == ElementKind::text && e.example == example &&
          e.position == position)
        return i;
    }
    throw std::out_of_range("no such text element");
  }
  std::size_t region_index(std::size_t example, std::size_t region) const {
    for (std::size_t i = 0; i < elements.size(); ++i) {
      const auto& e = elements[i];
      if (e.kind == ElementKind::image && e.example == example &&
          e.position == region)
        return i;
    }
    throw std::out_of_range("no such image element");
  }
};

inline FlatEpisode flatten_episode(const Episode& ep) {
  ep.validate();
  FlatEpisode flat;
  flat.roles = ep.roles;
  for (const auto& ex : ep.examples) flat.scene_ids.push_back(ex.scene_id);
  const std::size_t k = ep.examples.size();

  auto demarcation = [](WordId token, Modality m, std::size_t example) {
    Element e;
    e.kind = ElementKind::demarcation;
    e.modality = m;
    e.example = example;
    e.token = token;
    return e;
  };

  std::size_t next_image_mask = 0;
  for (std::size_t x = 0; x < k; ++x) {
    flat.elements.push_back(demarcation(
        x == 0 ? Vocabulary::kImg : Vocabulary::kSep, Modality::image, x));
    const auto& ex = ep.examples[x];
    for (std::size_t r = 0; r < ex.regions.size(); ++r) {
      Element e;
      e.kind = ElementKind::image;
      e.modality = Modality::image;
      e.example = x;
      e.position = r;
      e.region = ex.regions[r];
      while (next_image_mask < ep.image_masks.size() &&
             std::tie(ep.image_masks[next_image_mask].example,
                      ep.image_masks[next_image_mask].region) <
                 std::tie(x, r))
        ++next_image_mask;
      if (next_image_mask < ep.image_masks.size() &&
          ep.image_masks[next_image_mask].example == x &&
          ep.image_masks[next_image_mask].region == r) {
        e.masked = true;
        e.zeroed = ep.image_masks[next_image_mask].zeroed;
      }
      flat.elements.push_back(std::move(e));
    }
  }
  std::size_t next_text_mask = 0;
  for (std::size_t x = 0; x < k; ++x) {
    flat.elements.push_back(demarcation(
        x == 0 ? Vocabulary::kTxt : Vocabulary::kSep, Modality::text, x));
    const auto& ex = ep.examples[x];
    for (std::size_t p = 0; p < ex.tokens.size(); ++p) {
      Element e;
      e.kind = ElementKind::text;
      e.modality = Modality::text;
      e.example = x;
      e.position = p;
      e.label = ex.tokens[p];
      e.token = ex.tokens[p];
      while (next_text_mask < ep.text_masks.size() &&
             std::tie(ep.text_masks[next_text_mask].example,
                      ep.text_masks[next_text_mask].position) <
                 std::tie(x, p))
        ++next_text_mask;
      if (next_text_mask < ep.text_masks.size() &&
          ep.text_masks[next_text_mask].example == x &&
          ep.text_masks[next_text_mask].position == p) {
        const auto& m = ep.text_masks[next_text_mask];
        e.masked = true;
        e.token = m.input;
        e.pointing = m.pointing;
      }
      flat.elements.push_back(std::move(e));
    }
  }
  flat.elements.push_back(
      demarcation(Vocabulary::kSep, Modality::text, k - 1));
  return flat;
}

inline Episode unflatten_episode(const FlatEpisode& flat) {
  Episode ep;
  ep.roles = flat.roles;
  ep.examples.resize(flat.roles.size());
  for (std::size_t x = 0; x < ep.examples.size(); ++x)
    ep.examples[x].scene_id = flat.scene_ids.at(x);
  for (const auto& e : flat.elements) {
    auto& ex = ep.examples.at(e.example);
    if (e.kind == ElementKind::image) {
      if (e.position != ex.regions.size()) {
        throw std::invalid_argument("unflatten: regions out of order");
      }
      ex.regions.push_back(e.region);
      if (e.masked) ep.image_masks.push_back({e.example, e.position, e.zeroed});
    } else if (e.kind == ElementKind::text) {
      if (e.position != ex.tokens.size()) {
        throw std::invalid_argument("unflatten: tokens out of order");
      }
      ex.tokens.push_back(e.label);
      if (e.masked)
        ep.text_masks.push_back({e.example, e.position, e.token, e.pointing});
    }
  }
  ep.sort_masks();
  return ep;
}

// Number of demarcation tokens in a k-example layout.
inline std::size_t demarcation_count(std::size_t k) { return 2 * k + 1; }

}  // namespace expert
