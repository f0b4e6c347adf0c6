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

// Binary attention masks over a flattened episode. M(i, j) = 1 lets
// information flow from element j into element i.
//
//   isolated  : i and j belong to the same example
//   full      : always
//   tgt2ref   : same example, or i belongs to the target example
//   via-vision: same example, or i and j are both regions and i belongs to
//               the target example
//
// Demarcation tokens belong to an example (see FlatEpisode) but are not
// regions, so they never carry information across examples.

#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "expert/data/episode.hpp"
#include "expert/data/hyperparams.hpp"
#include "expert/numeric/autodiff.hpp"

namespace expert::model {

struct AttentionMask {
  MaskVariant variant = MaskVariant::full;
  ad::BinaryMatrix matrix;

  std::size_t size() const { return matrix.rows; }
  bool operator()(std::size_t i, std::size_t j) const { return matrix(i, j); }

  // Diagonal set and no empty row.
  void validate() const {
    if (matrix.rows != matrix.cols) {
      throw std::invalid_argument("attention mask must be square");
    }
    for (std::size_t i = 0; i < matrix.rows; ++i) {
      if (!matrix(i, i)) {
        throw std::invalid_argument("attention mask diagonal must be set");
      }
    }
  }
};

inline bool mask_allows(MaskVariant variant, const FlatEpisode& flat,
                        std::size_t i, std::size_t j) {
  const auto& ei = flat.elements[i];
  const auto& ej = flat.elements[j];
  if (ei.example == ej.example) return true;
  switch (variant) {
    case MaskVariant::isolated:
      return false;
    case MaskVariant::full:
      return true;
    case MaskVariant::target_to_reference:
      return flat.is_target(i);
    case MaskVariant::via_vision:
      return flat.is_target(i) && ei.kind == ElementKind::image &&
             ej.kind == ElementKind::image;
  }
  throw std::invalid_argument("unknown mask variant");
}

inline AttentionMask build_mask(MaskVariant variant, const FlatEpisode& flat) {
  switch (variant) {
    case MaskVariant::isolated:
    case MaskVariant::full:
    case MaskVariant::target_to_reference:
    case MaskVariant::via_vision:
      break;
    default:
      throw std::invalid_argument("unknown mask variant");
  }
  const std::size_t n = flat.size();
  AttentionMask m{variant, ad::BinaryMatrix(n, n)};
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      m.matrix.set(i, j, mask_allows(variant, flat, i, j));
  return m;
}

inline std::size_t count_attended_pairs(const AttentionMask& mask) {
  std::size_t total = 0;
  for (std::uint8_t b : mask.matrix.bits) total += b;
  return total;
}

// Admissible keys per query, built from the layout without materialising
// the dense matrix: O(number of admissible pairs).
inline ad::SparsePattern build_sparse_pattern(MaskVariant variant,
                                              const FlatEpisode& flat) {
  const std::size_t n = flat.size();
  std::vector<std::vector<std::size_t>> by_example(flat.num_examples());
  std::vector<std::size_t> all_regions;
  for (std::size_t j = 0; j < n; ++j) {
    by_example[flat.elements[j].example].push_back(j);
    if (flat.elements[j].kind == ElementKind::image) all_regions.push_back(j);
  }
  ad::SparsePattern p;
  p.keys.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& own = by_example[flat.elements[i].example];
    auto& keys = p.keys[i];
    const bool target = flat.is_target(i);
    const bool everything =
        variant == MaskVariant::full ||
        (variant == MaskVariant::target_to_reference && target);
    if (everything) {
      keys.resize(n);
      for (std::size_t j = 0; j < n; ++j) keys[j] = j;
    } else if (variant == MaskVariant::via_vision && target &&
               flat.elements[i].kind == ElementKind::image) {
      // Own example plus every region, merged in key order.
      std::size_t a = 0, b = 0;
      while (a < own.size() || b < all_regions.size()) {
        std::size_t next;
        if (b == all_regions.size() ||
            (a < own.size() && own[a] <= all_regions[b])) {
          next = own[a++];
          if (b < all_regions.size() && all_regions[b] == next) ++b;
        } else {
          next = all_regions[b++];
        }
        keys.push_back(next);
      }
    } else {
      keys = own;
    }
  }
  return p;
}

inline std::size_t count_attended_pairs(const ad::SparsePattern& p) {
  std::size_t total = 0;
  for (const auto& k : p.keys) total += k.size();
  return total;
}

}  // namespace expert::model
