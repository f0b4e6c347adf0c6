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
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "expert/eval/protocols.hpp"
#include "expert/model/attention_mask.hpp"

namespace expert::eval {

// ---------------------------------------------------------------------------
// Region withholding.

enum class Confidence {
  cloze,     // log-probability of the masked word under the cloze head
  pointing,  // log softmax mass the pointer puts on the answers
};

struct RegionDrop {
  std::size_t example = 0;
  std::size_t region = 0;
  std::optional<std::string> latent_label;
  double drop = 0;  // confidence with the region minus without it
};

// First masked text element whose label is a trained word.
inline std::size_t first_cloze_position(const FlatEpisode& flat,
                                        const Vocabulary& vocab) {
  for (std::size_t i = 0; i < flat.size(); ++i) {
    const auto& e = flat.elements[i];
    if (e.kind == ElementKind::text && e.masked && !vocab.is_oov(e.label)) return i;
  }
  throw std::invalid_argument("episode has no masked in-vocabulary word");
}

inline double cloze_log_prob(const ExpertModel& m, const Vocabulary& vocab,
                             const FlatEpisode& flat, model::ForwardOptions opt) {
  const std::size_t q = first_cloze_position(flat, vocab);
  const Tensor logits = cloze_logits(m, vocab, flat, {q}, opt);
  const auto words = vocab.trained_word_ids();
  double hi = -std::numeric_limits<double>::infinity();
  for (WordId w : words) hi = std::max(hi, logits[static_cast<std::size_t>(w)]);
  double z = 0;
  for (WordId w : words) z += std::exp(logits[static_cast<std::size_t>(w)] - hi);
  return logits[static_cast<std::size_t>(flat.elements[q].label)] - hi - std::log(z);
}

inline double confidence(const ExpertModel& m, const Vocabulary& vocab,
                         const FlatEpisode& flat, Confidence mode,
                         model::ForwardOptions opt) {
  return mode == Confidence::cloze ? cloze_log_prob(m, vocab, flat, opt)
                                   : score_pointing(m, vocab, flat, opt).answer_log_prob;
}

inline FlatEpisode without_element(FlatEpisode flat, std::size_t element) {
  flat.elements.erase(flat.elements.begin() + static_cast<std::ptrdiff_t>(element));
  return flat;
}

// Removes each region in turn (every example unless `only_example` is set)
// and ranks regions by the confidence they were carrying, largest first.
inline std::vector<RegionDrop> region_withholding_probe(
    const ExpertModel& m, const Vocabulary& vocab, const FlatEpisode& flat,
    Confidence mode = Confidence::cloze, model::ForwardOptions opt = {},
    std::optional<std::size_t> only_example = std::nullopt) {
  const double base = confidence(m, vocab, flat, mode, opt);
  std::vector<RegionDrop> out;
  for (std::size_t i = 0; i < flat.size(); ++i) {
    const auto& e = flat.elements[i];
    if (e.kind != ElementKind::image) continue;
    if (only_example && e.example != *only_example) continue;
    RegionDrop d;
    d.example = e.example;
    d.region = e.position;
    d.latent_label = e.region.latent_label;
    d.drop = base - confidence(m, vocab, without_element(flat, i), mode, opt);
    out.push_back(std::move(d));
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const RegionDrop& a, const RegionDrop& b) { return a.drop > b.drop; });
  return out;
}

// ---------------------------------------------------------------------------
// Attention ablation.

// Elements are grouped by the role of their example and their modality, so
// the grid means the same thing across episodes of different sizes.
inline constexpr std::size_t kAblationGroups = 6;

inline std::size_t ablation_group(const FlatEpisode& flat, std::size_t i) {
  const auto& e = flat.elements[i];
  return 2 * static_cast<std::size_t>(flat.roles[e.example]) +
         static_cast<std::size_t>(e.modality);
}

inline std::string ablation_group_name(std::size_t g) {
  static constexpr std::array<const char*, 3> roles = {"target", "positive", "distractor"};
  return std::string(roles.at(g / 2)) + (g % 2 == 0 ? ".image" : ".text");
}

struct AblationCell {
  std::size_t layer = 0;
  std::size_t query_group = 0;
  std::size_t key_group = 0;
  double accuracy_drop = 0;
  double log_prob_drop = 0;
};

struct AblationGrid {
  std::size_t episodes = 0;
  double baseline_accuracy = 0;
  double baseline_log_prob = 0;
  std::vector<AblationCell> cells;  // layer-major, then query, then key

  const AblationCell& at(std::size_t layer, std::size_t q, std::size_t k) const {
    return cells.at((layer * kAblationGroups + q) * kAblationGroups + k);
  }
};

// Copy of `mask` with query group q no longer attending to key group k.
// Diagonal entries are kept so no row can become empty.
inline model::AttentionMask ablate_groups(const model::AttentionMask& mask,
                                          const std::vector<std::size_t>& group,
                                          std::size_t q, std::size_t k,
                                          std::size_t* removed = nullptr) {
  model::AttentionMask out = mask;
  std::size_t n = 0;
  for (std::size_t i = 0; i < group.size(); ++i) {
    if (group[i] != q) continue;
    for (std::size_t j = 0; j < group.size(); ++j) {
      if (group[j] != k || i == j || !out(i, j)) continue;
      out.matrix.set(i, j, false);
      ++n;
    }
  }
  if (removed) *removed = n;
  return out;
}

// Disables attention from one query group to one key group in one layer at
// a time (self-attention entries stay on) and records the drop in pointing
// accuracy and answer log-probability over `episodes`.
inline AblationGrid attention_ablation_probe(const ExpertModel& m,
                                             const Vocabulary& vocab,
                                             const std::vector<FlatEpisode>& episodes,
                                             std::optional<MaskVariant> variant = std::nullopt) {
  if (episodes.empty()) throw std::invalid_argument("ablation needs episodes");
  const std::size_t layers = static_cast<std::size_t>(m.hyperparams().layers);
  const MaskVariant v = variant.value_or(m.hyperparams().mask_variant);
  AblationGrid grid;
  grid.episodes = episodes.size();
  grid.cells.resize(layers * kAblationGroups * kAblationGroups);
  for (std::size_t z = 0; z < layers; ++z)
    for (std::size_t q = 0; q < kAblationGroups; ++q)
      for (std::size_t k = 0; k < kAblationGroups; ++k)
        grid.cells[(z * kAblationGroups + q) * kAblationGroups + k] = {z, q, k, 0, 0};

  const double n = static_cast<double>(episodes.size());
  for (const auto& flat : episodes) {
    const model::AttentionMask base = model::build_mask(v, flat);
    std::vector<model::AttentionMask> masks(layers, base);
    model::ForwardOptions opt{model::AttentionPath::dense, v, masks};
    const PointingOutcome ref = score_pointing(m, vocab, flat, opt);
    grid.baseline_accuracy += ref.correct / n;
    grid.baseline_log_prob += ref.answer_log_prob / n;
    std::vector<std::size_t> group(flat.size());
    for (std::size_t i = 0; i < flat.size(); ++i) group[i] = ablation_group(flat, i);
    for (std::size_t z = 0; z < layers; ++z) {
      for (std::size_t q = 0; q < kAblationGroups; ++q) {
        for (std::size_t k = 0; k < kAblationGroups; ++k) {
          std::size_t removed = 0;
          model::AttentionMask ablated = ablate_groups(base, group, q, k, &removed);
          // Nothing removed: the outcome is the baseline by construction.
          if (removed == 0) continue;
          masks[z] = std::move(ablated);
          const PointingOutcome o = score_pointing(m, vocab, flat, opt);
          masks[z] = base;
          auto& cell = grid.cells[(z * kAblationGroups + q) * kAblationGroups + k];
          cell.accuracy_drop += (static_cast<double>(ref.correct) - o.correct) / n;
          cell.log_prob_drop += (ref.answer_log_prob - o.answer_log_prob) / n;
        }
      }
    }
  }
  return grid;
}

inline void write_ablation_csv(std::ostream& os, const AblationGrid& g) {
  os << "layer,query_group,key_group,accuracy_drop,log_prob_drop\n";
  char buf[64];
  for (const auto& c : g.cells) {
    os << c.layer << ',' << ablation_group_name(c.query_group) << ','
       << ablation_group_name(c.key_group) << ',';
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g", c.accuracy_drop, c.log_prob_drop);
    os << buf << '\n';
  }
}

inline void write_region_csv(std::ostream& os, const std::vector<RegionDrop>& drops,
                             std::size_t probe = 0) {
  char buf[32];
  for (std::size_t rank = 0; rank < drops.size(); ++rank) {
    const auto& d = drops[rank];
    std::snprintf(buf, sizeof(buf), "%.17g", d.drop);
    os << probe << ',' << rank << ',' << d.example << ',' << d.region << ','
       << d.latent_label.value_or("") << ',' << buf << '\n';
  }
}

inline constexpr const char* kRegionCsvHeader = "probe,rank,example,region,latent_label,drop";

}  // namespace expert::eval
