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

#include <cstdint>
#include <cstdio>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "expert/eval/protocols.hpp"
#include "json.hpp"

namespace expert::eval {

struct EvalSettings {
  bool cloze = true;
  bool composition = true;
  bool pointing = true;
  bool multi_new_word = true;
  std::vector<std::size_t> ratios = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  std::size_t pointing_episodes = 500;
  std::size_t multi_episodes = 500;
  std::size_t multi_words = 5;
  std::size_t novel_pool = 10;
  model::AttentionPath path = model::AttentionPath::sparse;

  static EvalSettings only(const std::string& protocol) {
    EvalSettings s;
    if (protocol == "all") return s;
    s.cloze = protocol == "cloze";
    s.composition = protocol == "composition";
    s.pointing = protocol == "pointing";
    s.multi_new_word = protocol == "multi-new-word";
    if (!(s.cloze || s.composition || s.pointing || s.multi_new_word)) {
      throw std::invalid_argument("unknown protocol: " + protocol);
    }
    return s;
  }
};

// Held-out material for one evaluation. `vocab` must already hold every
// held-out word as OOV; the multi-new-word test adds its own nouns to a copy.
struct EvalInputs {
  const WorldSpec* world = nullptr;
  const SplitSpec* split = nullptr;
  const Dataset* new_instance = nullptr;
  const Dataset* new_composition = nullptr;
  const Dataset* new_word = nullptr;
};

struct EvalReport {
  std::string protocol = "all";
  std::uint64_t seed = 0;
  std::optional<ClozeReport> cloze;
  std::optional<CompositionReport> composition;
  std::vector<RatioResult> pointing;
  std::optional<MultiNewWordReport> multi_new_word;

  const RatioResult* at_ratio(std::size_t r) const {
    for (const auto& p : pointing)
      if (p.ratio == r) return &p;
    return nullptr;
  }

  // Accuracies in [0, 1], sample counts > 0, chances in (0, 1].
  void validate() const {
    auto check = [](const Accuracy& a, const char* what) {
      if (a.total == 0) throw std::logic_error(std::string(what) + ": no samples");
      if (a.value() < 0 || a.value() > 1) throw std::logic_error(what);
    };
    auto check_chance = [](double c, const char* what) {
      if (!(c > 0 && c <= 1)) throw std::logic_error(std::string(what) + ": bad chance");
    };
    if (cloze) {
      check(cloze->all, "cloze");
      check_chance(cloze->chance, "cloze");
    }
    if (composition) {
      check(composition->seen, "composition seen");
      check(composition->unseen, "composition new");
      check_chance(composition->chance, "composition");
    }
    for (const auto& p : pointing) {
      check(p.accuracy, "pointing");
      check_chance(p.chance, "pointing");
    }
    if (multi_new_word) {
      check(multi_new_word->accuracy, "multi-new-word");
      check_chance(multi_new_word->chance, "multi-new-word");
    }
  }
};

inline nlohmann::json accuracy_json(const Accuracy& a) {
  return {{"accuracy", a.value()},
          {"hits", a.hits},
          {"samples", a.total},
          {"standard_error", a.standard_error()}};
}

inline void to_json(nlohmann::json& j, const EvalReport& r) {
  j = {{"protocol", r.protocol}, {"seed", r.seed}};
  if (r.cloze) {
    j["cloze"] = {{"top_k", kTopK},
                  {"verb", accuracy_json(r.cloze->verb)},
                  {"noun", accuracy_json(r.cloze->noun)},
                  {"all", accuracy_json(r.cloze->all)},
                  {"chance", r.cloze->chance}};
  }
  if (r.composition) {
    j["composition"] = {{"seen", accuracy_json(r.composition->seen)},
                        {"new", accuracy_json(r.composition->unseen)},
                        {"difference", r.composition->difference()},
                        {"chance", r.composition->chance}};
  }
  if (!r.pointing.empty()) {
    auto& a = j["pointing"] = nlohmann::json::array();
    for (const auto& p : r.pointing)
      a.push_back({{"ratio", p.ratio},
                   {"top1", accuracy_json(p.accuracy)},
                   {"chance", p.chance}});
  }
  if (r.multi_new_word) {
    j["multi_new_word"] = {{"accuracy", accuracy_json(r.multi_new_word->accuracy)},
                           {"accuracy_all_tokens",
                            accuracy_json(r.multi_new_word->accuracy_all_tokens)},
                           {"chance", r.multi_new_word->chance}};
  }
}

inline void write_pointing_csv(std::ostream& os, const EvalReport& r) {
  os << "ratio,top1,samples,standard_error,chance\n";
  char buf[96];
  for (const auto& p : r.pointing) {
    std::snprintf(buf, sizeof(buf), "%zu,%.17g,%zu,%.17g,%.17g\n", p.ratio,
                  p.accuracy.value(), p.accuracy.total, p.accuracy.standard_error(),
                  p.chance);
    os << buf;
  }
}

// Words the pointing protocol asks about: held-out words present in the
// new-word partition.
inline std::vector<WordId> held_out_word_ids(const SplitSpec& split, const Vocabulary& vocab) {
  std::vector<WordId> ids;
  for (const auto* list : {&split.held_out_nouns, &split.held_out_verbs})
    for (const auto& w : *list)
      if (auto id = vocab.find(w)) ids.push_back(*id);
  return ids;
}

// Runs the selected protocols in a fixed order off one RNG stream, so the
// report is a pure function of (model, inputs, settings, seed).
inline EvalReport run_protocols(const ExpertModel& m, const Vocabulary& vocab,
                                const EvalInputs& in, const EvalSettings& s,
                                std::uint64_t seed, const std::string& protocol = "all") {
  EvalReport r;
  r.protocol = protocol;
  r.seed = seed;
  std::mt19937_64 rng(seed);
  const model::ForwardOptions opt{s.path, std::nullopt, {}};
  if (s.cloze) r.cloze = cloze_eval(m, vocab, *in.new_instance, opt);
  if (s.composition) {
    r.composition = composition_eval(m, vocab, *in.new_instance, *in.new_composition, opt);
  }
  if (s.pointing) {
    const auto words = held_out_word_ids(*in.split, vocab);
    const std::size_t max_ratio = *std::max_element(s.ratios.begin(), s.ratios.end());
    // Distractors may come from any test scene lacking the word.
    Dataset pool = *in.new_word;
    pool.insert(pool.end(), in.new_instance->begin(), in.new_instance->end());
    const auto draws = draw_pointing_episodes(pool, words, s.pointing_episodes,
                                              max_ratio, rng);
    r.pointing = pointing_sweep(m, vocab, pool, draws, s.ratios, opt);
  }
  if (s.multi_new_word) {
    std::vector<std::string> verbs, objects;
    for (const auto& v : in.world->verbs)
      if (!in.split->is_held_out_word(v)) verbs.push_back(v);
    for (const auto& n : in.world->nouns)
      if (!in.split->is_held_out_word(n)) objects.push_back(n);
    Vocabulary scratch = vocab;
    r.multi_new_word = multi_new_word_eval(m, scratch, *in.world, verbs, objects,
                                           s.multi_episodes, s.multi_words,
                                           s.novel_pool, rng, opt);
  }
  r.validate();
  return r;
}

}  // namespace expert::eval
