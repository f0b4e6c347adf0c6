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
#include <map>
#include <random>
#include <set>
#include <stdexcept>
#include <vector>

#include "expert/data/episode.hpp"
#include "expert/data/example.hpp"
#include "expert/data/hyperparams.hpp"
#include "expert/data/vocabulary.hpp"

namespace expert {

// word id -> indices of examples whose narration contains it.
class WordIndex {
 public:
  WordIndex() = default;
  explicit WordIndex(const Dataset& data) {
    for (std::size_t i = 0; i < data.size(); ++i) {
      std::set<WordId> seen(data[i].tokens.begin(), data[i].tokens.end());
      for (WordId w : seen) index_[w].push_back(i);
    }
  }
  const std::vector<std::size_t>& examples_with(WordId w) const {
    static const std::vector<std::size_t> kEmpty;
    auto it = index_.find(w);
    return it == index_.end() ? kEmpty : it->second;
  }

 private:
  std::map<WordId, std::vector<std::size_t>> index_;
};

// Input id for a text token selected for masking: [MASK], a uniformly random
// trained word, or the token itself.
template <class Rng>
WordId apply_text_mask(WordId token, Rng& rng, const Vocabulary& vocab,
                       const MaskingSchedule& schedule = {}) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double r = u(rng);
  if (r < schedule.text_to_mask_token) return Vocabulary::kMask;
  if (r < schedule.text_to_mask_token + schedule.text_to_random_word) {
    const auto words = static_cast<WordId>(vocab.trained_size()) -
                       Vocabulary::kNumSpecial;
    if (words <= 0) return Vocabulary::kMask;
    std::uniform_int_distribution<WordId> pick(Vocabulary::kNumSpecial,
                                               Vocabulary::kNumSpecial +
                                                   words - 1);
    return pick(rng);
  }
  return token;
}

struct MaskedRegion {
  Region input;
  bool zeroed = false;
};

// Zeroes the feature with probability image_zero_rate; the box is kept.
template <class Rng>
MaskedRegion apply_image_mask(const Region& region, Rng& rng,
                              const MaskingSchedule& schedule = {}) {
  MaskedRegion out{region, false};
  if (std::bernoulli_distribution(schedule.image_zero_rate)(rng)) {
    std::fill(out.input.feature.begin(), out.input.feature.end(), 0.0);
    out.zeroed = true;
  }
  return out;
}

struct SamplerStats {
  std::size_t dropped_tokens = 0;  // chosen tokens without any reference
};

// Applies the background masking schedule to every text position not yet
// masked and to every region.
template <class Rng>
void apply_background_masks(Episode& ep, const MaskingSchedule& schedule,
                            const Vocabulary& vocab, Rng& rng) {
  std::bernoulli_distribution text_pick(schedule.text_mask_rate);
  std::bernoulli_distribution image_pick(schedule.image_mask_rate);
  std::set<std::pair<std::size_t, std::size_t>> already;
  for (const auto& m : ep.text_masks) already.emplace(m.example, m.position);
  for (std::size_t x = 0; x < ep.examples.size(); ++x) {
    const auto& ex = ep.examples[x];
    for (std::size_t p = 0; p < ex.tokens.size(); ++p) {
      if (already.contains({x, p})) continue;
      if (text_pick(rng)) {
        ep.text_masks.push_back(
            {x, p, apply_text_mask(ex.tokens[p], rng, vocab, schedule), false});
      }
    }
    for (std::size_t r = 0; r < ex.regions.size(); ++r) {
      if (image_pick(rng)) {
        const auto masked = apply_image_mask(ex.regions[r], rng, schedule);
        ep.image_masks.push_back({x, r, masked.zeroed});
      }
    }
  }
  ep.sort_masks();
}

// Samples one training episode:
//  - a uniformly drawn target example;
//  - t ~ U{0..k_pos} of its token positions chosen as pointing targets and
//    replaced by [MASK];
//  - for each chosen token, one other example whose narration contains it
//    (a token without any such example is redrawn, and dropped after ten
//    failed redraws);
//  - u ~ U{0..k_neg} distractor examples containing none of the chosen tokens;
//  - examples shuffled, then background masking over everything else.
template <class Rng>
Episode sample_episode(const Dataset& train, const WordIndex& index,
                       int k_pos, int k_neg, const MaskingSchedule& schedule,
                       const Vocabulary& vocab, Rng& rng,
                       SamplerStats* stats = nullptr) {
  if (train.empty()) throw std::invalid_argument("empty training set");
  std::uniform_int_distribution<std::size_t> pick_example(0, train.size() - 1);
  const std::size_t target = pick_example(rng);
  const Example& tex = train[target];

  const int t = std::uniform_int_distribution<int>(0, k_pos)(rng);
  std::vector<std::size_t> members = {target};
  std::vector<std::size_t> chosen_positions;
  std::set<WordId> chosen_words;
  std::vector<std::size_t> free_positions(tex.tokens.size());
  for (std::size_t i = 0; i < free_positions.size(); ++i) free_positions[i] = i;

  for (int c = 0; c < t && !free_positions.empty(); ++c) {
    bool placed = false;
    for (int failures = 0; failures < 10 && !free_positions.empty();) {
      std::uniform_int_distribution<std::size_t> pp(0, free_positions.size() - 1);
      const std::size_t slot = pp(rng);
      const std::size_t pos = free_positions[slot];
      const WordId w = tex.tokens[pos];
      std::vector<std::size_t> options;
      for (std::size_t e : index.examples_with(w))
        if (std::find(members.begin(), members.end(), e) == members.end())
          options.push_back(e);
      if (options.empty()) {
        ++failures;
        continue;
      }
      std::uniform_int_distribution<std::size_t> po(0, options.size() - 1);
      members.push_back(options[po(rng)]);
      chosen_positions.push_back(pos);
      chosen_words.insert(w);
      free_positions.erase(free_positions.begin() + slot);
      // Other occurrences of the same word cannot become separate targets.
      std::erase_if(free_positions,
                    [&](std::size_t p) { return tex.tokens[p] == w; });
      placed = true;
      break;
    }
    if (!placed && stats) ++stats->dropped_tokens;
  }
  const std::size_t n_refs = members.size() - 1;

  const int u = std::uniform_int_distribution<int>(0, k_neg)(rng);
  for (int c = 0; c < u; ++c) {
    for (int attempt = 0; attempt < 100; ++attempt) {
      const std::size_t e = pick_example(rng);
      if (std::find(members.begin(), members.end(), e) != members.end())
        continue;
      bool clean = true;
      for (WordId w : train[e].tokens)
        if (chosen_words.contains(w)) clean = false;
      if (!clean) continue;
      members.push_back(e);
      break;
    }
  }

  std::vector<Role> roles(members.size(), Role::distractor);
  roles[0] = Role::target;
  for (std::size_t i = 1; i <= n_refs; ++i) roles[i] = Role::positive_reference;
  std::vector<std::size_t> order(members.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);

  Episode ep;
  std::size_t target_slot = 0;
  for (std::size_t slot = 0; slot < order.size(); ++slot) {
    ep.examples.push_back(train[members[order[slot]]]);
    ep.roles.push_back(roles[order[slot]]);
    if (order[slot] == 0) target_slot = slot;
  }
  for (std::size_t pos : chosen_positions)
    ep.text_masks.push_back({target_slot, pos, Vocabulary::kMask, true});
  apply_background_masks(ep, schedule, vocab, rng);
  return ep;
}

}  // namespace expert
