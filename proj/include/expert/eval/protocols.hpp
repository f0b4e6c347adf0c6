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

// Evaluation protocols: cloze, composition, new-word pointing (with the
// distractor-ratio sweep) and the multi-new-word test. Evaluation episodes
// carry no background masking.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "expert/data/dataset_io.hpp"
#include "expert/data/episode.hpp"
#include "expert/data/vocabulary.hpp"
#include "expert/model/expert_model.hpp"
#include "expert/objectives/losses.hpp"
#include "expert/world/synthetic_world.hpp"

namespace expert::eval {

using ad::Var;
using model::ExpertModel;

inline constexpr std::size_t kTopK = 5;

struct Accuracy {
  std::size_t hits = 0;
  std::size_t total = 0;
  double value() const {
    return total == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(total);
  }
  // Binomial standard error.
  double standard_error() const {
    if (total == 0) return 0.0;
    const double p = value();
    return std::sqrt(p * (1 - p) / static_cast<double>(total));
  }
  void add(bool hit) {
    hits += hit;
    ++total;
  }
};

// Single target example, the given positions masked with [MASK].
inline FlatEpisode single_example_episode(const Example& ex,
                                          const std::vector<std::size_t>& masked) {
  Episode ep;
  ep.examples = {ex};
  ep.roles = {Role::target};
  for (std::size_t p : masked) ep.text_masks.push_back({0, p, Vocabulary::kMask, false});
  ep.sort_masks();
  return flatten_episode(ep);
}

// True when `truth` ranks within the top k of the cloze logits restricted
// to trained real words (ties resolved against the truth).
inline bool cloze_top_k(const Tensor& logits_row, WordId truth,
                        const Vocabulary& vocab, std::size_t k = kTopK) {
  const double t = logits_row[static_cast<std::size_t>(truth)];
  std::size_t better = 0;
  for (WordId w : vocab.trained_word_ids())
    if (w != truth && logits_row[static_cast<std::size_t>(w)] >= t) ++better;
  return better < k;
}

// Cloze logits phi_w^T h for each listed element, one row each.
inline Tensor cloze_logits(const ExpertModel& m, const Vocabulary& vocab,
                           const FlatEpisode& flat,
                           const std::vector<std::size_t>& elements,
                           model::ForwardOptions opt = {}) {
  ad::NoGradGuard guard;
  Var h = m.forward(flat, vocab, opt);
  return ad::matmul_nt(ad::gather_rows(h, elements),
                       m.params().encoder.word_table)
      .value();
}

struct ClozeReport {
  Accuracy verb, noun, all;
  double chance = 0;  // k / #trained words
};

// Every token position of every example is masked once, alone.
inline ClozeReport cloze_eval(const ExpertModel& m, const Vocabulary& vocab,
                              const Dataset& test,
                              model::ForwardOptions opt = {}) {
  ClozeReport r;
  const auto words = vocab.trained_word_ids();
  r.chance = std::min(1.0, static_cast<double>(kTopK) /
                               static_cast<double>(words.size()));
  for (const auto& ex : test) {
    for (std::size_t p = 0; p < ex.tokens.size(); ++p) {
      const WordId truth = ex.tokens[p];
      if (vocab.is_oov(truth)) continue;
      const FlatEpisode flat = single_example_episode(ex, {p});
      const Tensor logits =
          cloze_logits(m, vocab, flat, {flat.text_index(0, p)}, opt);
      const bool hit = cloze_top_k(logits, truth, vocab);
      r.all.add(hit);
      const auto pos = vocab.part_of_speech(truth);
      if (pos == PartOfSpeech::verb) r.verb.add(hit);
      if (pos == PartOfSpeech::noun) r.noun.add(hit);
    }
  }
  return r;
}

struct CompositionReport {
  Accuracy seen, unseen;
  double chance = 0;  // per-word chance squared
  double difference() const { return seen.value() - unseen.value(); }
};

// Verb and noun masked jointly; correct when both truths are in their top k.
// `logits(flat, elements)` returns one cloze row per element.
template <class LogitsFn>
Accuracy joint_verb_noun_accuracy_with(const Vocabulary& vocab, const Dataset& test,
                                       LogitsFn&& logits_fn) {
  Accuracy acc;
  for (const auto& ex : test) {
    std::optional<std::size_t> vp, np;
    for (std::size_t p = 0; p < ex.tokens.size(); ++p) {
      const auto pos = vocab.part_of_speech(ex.tokens[p]);
      if (pos == PartOfSpeech::verb && !vp) vp = p;
      if (pos == PartOfSpeech::noun && !np) np = p;
    }
    if (!vp || !np || vocab.is_oov(ex.tokens[*vp]) || vocab.is_oov(ex.tokens[*np]))
      continue;
    const FlatEpisode flat = single_example_episode(ex, {*vp, *np});
    const Tensor logits =
        logits_fn(flat, std::vector<std::size_t>{flat.text_index(0, *vp), flat.text_index(0, *np)});
    Tensor rv(1, logits.cols()), rn(1, logits.cols());
    std::copy(logits.row(0).begin(), logits.row(0).end(), rv.row(0).begin());
    std::copy(logits.row(1).begin(), logits.row(1).end(), rn.row(0).begin());
    acc.add(cloze_top_k(rv, ex.tokens[*vp], vocab) &&
            cloze_top_k(rn, ex.tokens[*np], vocab));
  }
  return acc;
}

inline Accuracy joint_verb_noun_accuracy(const ExpertModel& m,
                                         const Vocabulary& vocab,
                                         const Dataset& test,
                                         model::ForwardOptions opt = {}) {
  return joint_verb_noun_accuracy_with(
      vocab, test, [&](const FlatEpisode& flat, const std::vector<std::size_t>& elements) {
        return cloze_logits(m, vocab, flat, elements, opt);
      });
}

inline CompositionReport composition_eval(const ExpertModel& m,
                                          const Vocabulary& vocab,
                                          const Dataset& seen,
                                          const Dataset& unseen,
                                          model::ForwardOptions opt = {}) {
  CompositionReport r;
  r.seen = joint_verb_noun_accuracy(m, vocab, seen, opt);
  r.unseen = joint_verb_noun_accuracy(m, vocab, unseen, opt);
  const double p = std::min(1.0, static_cast<double>(kTopK) /
                                     static_cast<double>(vocab.trained_word_ids().size()));
  r.chance = p * p;
  return r;
}

// ---------------------------------------------------------------------------
// Pointing.

// One evaluation draw: target, one positive reference and an ordered list of
// distractors; sub-episodes at ratio r use the first r distractors, so the
// sweep over ratios shares its random draws. order_keys fix where each
// example lands after shuffling.
struct PointingDraw {
  WordId word = kNoWord;
  std::size_t target = 0;
  std::size_t positive = 0;
  std::vector<std::size_t> distractors;
  std::vector<double> order_keys;  // target, positive, distractors...
};

inline Episode pointing_episode(const Dataset& pool, const PointingDraw& d,
                                std::size_t ratio) {
  if (ratio > d.distractors.size()) {
    throw std::invalid_argument("ratio exceeds drawn distractors");
  }
  std::vector<std::pair<double, std::pair<std::size_t, Role>>> items;
  items.push_back({d.order_keys[0], {d.target, Role::target}});
  items.push_back({d.order_keys[1], {d.positive, Role::positive_reference}});
  for (std::size_t i = 0; i < ratio; ++i)
    items.push_back({d.order_keys[2 + i], {d.distractors[i], Role::distractor}});
  std::sort(items.begin(), items.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  Episode ep;
  for (const auto& [key, item] : items) {
    ep.examples.push_back(pool[item.first]);
    ep.roles.push_back(item.second);
  }
  const std::size_t t = ep.target_index();
  for (std::size_t p = 0; p < ep.examples[t].tokens.size(); ++p)
    if (ep.examples[t].tokens[p] == d.word)
      ep.text_masks.push_back({t, p, Vocabulary::kMask, true});
  return ep;
}

// Draws `count` episodes over `words`, each needing two examples that contain
// the word and `max_ratio` that do not.
template <class Rng>
std::vector<PointingDraw> draw_pointing_episodes(const Dataset& pool,
                                                 const std::vector<WordId>& words,
                                                 std::size_t count,
                                                 std::size_t max_ratio, Rng& rng) {
  std::vector<WordId> usable;
  std::vector<std::vector<std::size_t>> with, without;
  for (WordId w : words) {
    std::vector<std::size_t> a, b;
    for (std::size_t i = 0; i < pool.size(); ++i)
      (pool[i].contains(w) ? a : b).push_back(i);
    if (a.size() >= 2 && b.size() >= max_ratio) {
      usable.push_back(w);
      with.push_back(std::move(a));
      without.push_back(std::move(b));
    }
  }
  if (usable.empty()) throw std::invalid_argument("no word supports a pointing episode");
  std::vector<PointingDraw> out;
  std::uniform_real_distribution<double> key(0.0, 1.0);
  for (std::size_t e = 0; e < count; ++e) {
    const std::size_t wi = std::uniform_int_distribution<std::size_t>(0, usable.size() - 1)(rng);
    PointingDraw d;
    d.word = usable[wi];
    auto pair = with[wi];
    std::shuffle(pair.begin(), pair.end(), rng);
    d.target = pair[0];
    d.positive = pair[1];
    std::vector<std::size_t> neg;
    std::sample(without[wi].begin(), without[wi].end(), std::back_inserter(neg),
                max_ratio, rng);
    std::shuffle(neg.begin(), neg.end(), rng);
    d.distractors = std::move(neg);
    for (std::size_t i = 0; i < 2 + max_ratio; ++i) d.order_keys.push_back(key(rng));
    out.push_back(std::move(d));
  }
  return out;
}

struct PointingOutcome {
  bool correct = false;
  double chance = 0;           // #answers / #candidates
  double answer_log_prob = 0;  // log softmax mass on the answers
};

// Scores the first pointing query of an episode. `restrict_to`, when set,
// keeps only candidates whose label is in it.
inline PointingOutcome score_pointing(const ExpertModel& m,
                                      const Vocabulary& vocab,
                                      const FlatEpisode& flat,
                                      model::ForwardOptions opt = {},
                                      const std::set<WordId>* restrict_to = nullptr) {
  auto candidates = objectives::pointing_candidates(flat);
  if (restrict_to) {
    std::erase_if(candidates, [&](std::size_t j) {
      return !restrict_to->contains(flat.elements[j].label);
    });
  }
  const auto queries = objectives::pointing_queries(flat, candidates);
  if (queries.empty()) throw std::invalid_argument("episode has no answerable query");
  const auto& q = queries.front();
  ad::NoGradGuard guard;
  Var h = m.forward(flat, vocab, opt);
  const Tensor logits =
      objectives::pointing_logits(h, m.params().pointing, q.position, candidates).value();
  std::size_t best = 0;
  for (std::size_t c = 1; c < candidates.size(); ++c)
    if (logits[c] > logits[best]) best = c;
  PointingOutcome o;
  o.correct = flat.elements[candidates[best]].label == flat.elements[q.position].label;
  o.chance = static_cast<double>(q.answers.size()) / static_cast<double>(candidates.size());
  const auto cols = objectives::answer_columns(candidates, q.answers);
  o.answer_log_prob = -objectives::pointing_loss_from_logits(Var::constant(logits), cols).item();
  return o;
}

struct RatioResult {
  std::size_t ratio = 0;
  Accuracy accuracy;
  double chance = 0;  // mean #answers / #candidates
};

inline std::vector<RatioResult> pointing_sweep(const ExpertModel& m,
                                               const Vocabulary& vocab,
                                               const Dataset& pool,
                                               const std::vector<PointingDraw>& draws,
                                               const std::vector<std::size_t>& ratios,
                                               model::ForwardOptions opt = {}) {
  std::vector<RatioResult> out;
  for (std::size_t r : ratios) {
    RatioResult rr;
    rr.ratio = r;
    double chance = 0;
    for (const auto& d : draws) {
      const FlatEpisode flat = flatten_episode(pointing_episode(pool, d, r));
      const auto o = score_pointing(m, vocab, flat, opt);
      rr.accuracy.add(o.correct);
      chance += o.chance;
    }
    rr.chance = chance / static_cast<double>(draws.size());
    out.push_back(rr);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Multi-new-word test.

// Adds `count` fresh nouns with fresh prototypes (kept 4 sigma apart from
// every existing one) allowed with every listed verb.
template <class Rng>
std::vector<std::string> add_novel_nouns(WorldSpec& world, std::size_t count,
                                         const std::vector<std::string>& verbs,
                                         Rng& rng, double prototype_scale = 0.5) {
  std::vector<std::vector<double>> all = world.noun_prototypes;
  all.insert(all.end(), world.verb_prototypes.begin(), world.verb_prototypes.end());
  std::vector<std::string> names;
  for (std::size_t i = 0; i < count; ++i) {
    std::string name = "novel" + std::to_string(i);
    while (world.noun_index(name) >= 0 || world.verb_index(name) >= 0) name += "x";
    auto proto = draw_prototype(all, world.region_dim, prototype_scale, world.noise, rng);
    all.push_back(proto);
    world.nouns.push_back(name);
    world.noun_prototypes.push_back(std::move(proto));
    for (const auto& v : verbs) world.whitelist.emplace_back(v, name);
    names.push_back(std::move(name));
  }
  return names;
}

struct MultiNewWordReport {
  Accuracy accuracy;            // among the new-word candidates
  Accuracy accuracy_all_tokens; // among every candidate
  double chance = 0;            // 1 / #new words per episode
};

// Each episode: a target narrating novel noun n_1 (masked) and `words`
// reference examples narrating n_1..n_words, one each. Novel nouns are
// registered as OOV in `vocab`; distractor objects come from `object_pool`.
template <class Rng>
MultiNewWordReport multi_new_word_eval(const ExpertModel& m, Vocabulary& vocab,
                                       const WorldSpec& base_world,
                                       const std::vector<std::string>& verbs,
                                       const std::vector<std::string>& object_pool,
                                       std::size_t episodes, std::size_t words,
                                       std::size_t novel_pool, Rng& rng,
                                       model::ForwardOptions opt = {}) {
  if (words < 1 || novel_pool < words) {
    throw std::invalid_argument("novel pool must hold at least `words` nouns");
  }
  WorldSpec world = base_world;
  const auto novel = add_novel_nouns(world, novel_pool, verbs, rng);
  std::vector<WordId> ids;
  for (const auto& n : novel) ids.push_back(vocab.register_oov(n, PartOfSpeech::noun, rng));

  MultiNewWordReport r;
  r.chance = 1.0 / static_cast<double>(words);
  std::uniform_int_distribution<std::size_t> pick_verb(0, verbs.size() - 1);
  auto scene = [&](std::size_t noun) {
    RawExample raw = generate_example(world, verbs[pick_verb(rng)], novel[noun], rng, object_pool);
    return to_example(raw, vocab);
  };
  for (std::size_t e = 0; e < episodes; ++e) {
    std::vector<std::size_t> chosen(novel_pool);
    std::iota(chosen.begin(), chosen.end(), 0);
    std::shuffle(chosen.begin(), chosen.end(), rng);
    chosen.resize(words);
    Episode ep;
    ep.examples.push_back(scene(chosen[0]));
    ep.roles.push_back(Role::target);
    for (std::size_t i = 0; i < words; ++i) {
      ep.examples.push_back(scene(chosen[i]));
      ep.roles.push_back(i == 0 ? Role::positive_reference : Role::distractor);
    }
    std::vector<std::size_t> order(ep.examples.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    Episode shuffled;
    for (std::size_t o : order) {
      shuffled.examples.push_back(ep.examples[o]);
      shuffled.roles.push_back(ep.roles[o]);
    }
    const std::size_t t = shuffled.target_index();
    const WordId target_word = ids[chosen[0]];
    for (std::size_t p = 0; p < shuffled.examples[t].tokens.size(); ++p)
      if (shuffled.examples[t].tokens[p] == target_word)
        shuffled.text_masks.push_back({t, p, Vocabulary::kMask, true});
    const FlatEpisode flat = flatten_episode(shuffled);
    std::set<WordId> novel_ids;
    for (std::size_t c : chosen) novel_ids.insert(ids[c]);
    r.accuracy.add(score_pointing(m, vocab, flat, opt, &novel_ids).correct);
    r.accuracy_all_tokens.add(score_pointing(m, vocab, flat, opt).correct);
  }
  return r;
}

}  // namespace expert::eval
