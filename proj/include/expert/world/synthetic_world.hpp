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

// Procedural kitchen world: every noun has a latent visual prototype and
// every verb a latent motion prototype. A scene shows the narrated object
// (large, central), a few small distractor objects, one action region and
// the whole-scene region; its narration is "verb [function word] noun".
//
// The narration does not say which distractor objects are present and the
// scene does not determine the function word, so neither modality alone
// explains an example.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "expert/data/dataset_io.hpp"
#include "expert/data/example.hpp"
#include "expert/data/vocabulary.hpp"
#include "json.hpp"

namespace expert {

class SplitError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct WorldConfig {
  int nouns = 24;
  int verbs = 10;
  int region_dim = 32;
  double noise = 0.1;
  // Standard deviation of each prototype coordinate.
  double prototype_scale = 0.5;
  // Fraction of verb-noun pairs that may occur.
  double composition_density = 0.6;
  double function_word_rate = 0.5;
  int max_distractor_objects = 3;
};

using Composition = std::pair<std::string, std::string>;  // (verb, noun)

struct WorldSpec {
  std::vector<std::string> nouns;
  std::vector<std::string> verbs;
  std::vector<std::string> function_words;
  std::vector<std::vector<double>> noun_prototypes;
  std::vector<std::vector<double>> verb_prototypes;
  int region_dim = 32;
  double noise = 0.1;
  double function_word_rate = 0.5;
  int min_distractor_objects = 0;
  int max_distractor_objects = 3;
  std::vector<Composition> whitelist;

  int noun_index(const std::string& w) const { return index_of(nouns, w); }
  int verb_index(const std::string& w) const { return index_of(verbs, w); }
  bool allowed(const std::string& verb, const std::string& noun) const {
    return std::find(whitelist.begin(), whitelist.end(),
                     Composition{verb, noun}) != whitelist.end();
  }

  double min_prototype_distance() const {
    std::vector<const std::vector<double>*> all;
    for (const auto& p : noun_prototypes) all.push_back(&p);
    for (const auto& p : verb_prototypes) all.push_back(&p);
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < all.size(); ++i)
      for (std::size_t j = i + 1; j < all.size(); ++j)
        best = std::min(best, distance(*all[i], *all[j]));
    return best;
  }

  void validate() const {
    if (nouns.size() != noun_prototypes.size() ||
        verbs.size() != verb_prototypes.size()) {
      throw std::invalid_argument("world: prototype count mismatch");
    }
    for (const auto* protos : {&noun_prototypes, &verb_prototypes})
      for (const auto& p : *protos)
        if (p.size() != static_cast<std::size_t>(region_dim))
          throw std::invalid_argument("world: prototype width mismatch");
    if (whitelist.empty()) throw std::invalid_argument("world: empty whitelist");
    for (const auto& [v, n] : whitelist) {
      if (verb_index(v) < 0 || noun_index(n) < 0) {
        throw std::invalid_argument("world: whitelist uses unknown word");
      }
    }
    if (min_prototype_distance() <= 4 * noise) {
      throw std::invalid_argument("world: prototypes closer than 4 sigma");
    }
    if (min_distractor_objects < 0 ||
        max_distractor_objects < min_distractor_objects) {
      throw std::invalid_argument("world: bad distractor object range");
    }
  }

  static double distance(const std::vector<double>& a,
                         const std::vector<double>& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
  }

 private:
  static int index_of(const std::vector<std::string>& v, const std::string& w) {
    auto it = std::find(v.begin(), v.end(), w);
    return it == v.end() ? -1 : static_cast<int>(it - v.begin());
  }
};

namespace detail {

inline const std::vector<std::string>& default_nouns() {
  static const std::vector<std::string> kNouns = {
      "peach",  "carrot", "avocado", "onion",  "plate",  "knife",
      "spoon",  "pan",    "pot",     "cup",    "bowl",   "sponge",
      "tomato", "potato", "garlic",  "cheese", "bread",  "lid",
      "bottle", "fork",   "board",   "pepper", "lemon",  "towel"};
  return kNouns;
}

inline const std::vector<std::string>& default_verbs() {
  static const std::vector<std::string> kVerbs = {
      "cut", "wash", "take", "put", "open", "close", "stir", "peel", "wipe",
      "pour"};
  return kVerbs;
}

inline const std::vector<std::string>& default_function_words() {
  static const std::vector<std::string> kWords = {"the", "a", "some", "in",
                                                  "on"};
  return kWords;
}

inline std::vector<std::string> word_list(const std::vector<std::string>& base,
                                          int n, const std::string& stem) {
  std::vector<std::string> out;
  for (int i = 0; i < n; ++i) {
    out.push_back(i < static_cast<int>(base.size())
                      ? base[i]
                      : stem + std::to_string(i));
  }
  return out;
}

template <class Rng>
std::vector<double> gaussian_vector(int n, double scale, Rng& rng) {
  std::normal_distribution<double> g(0.0, scale);
  std::vector<double> v(n);
  for (double& x : v) x = g(rng);
  return v;
}

}  // namespace detail

// Draws a fresh prototype that keeps every pairwise distance above 4 sigma
// against `existing`.
template <class Rng>
std::vector<double> draw_prototype(
    const std::vector<std::vector<double>>& existing, int dim, double scale,
    double noise, Rng& rng) {
  for (int attempt = 0; attempt < 1000; ++attempt) {
    auto p = detail::gaussian_vector(dim, scale, rng);
    bool ok = true;
    for (const auto& q : existing)
      if (WorldSpec::distance(p, q) <= 4 * noise) ok = false;
    if (ok) return p;
  }
  throw std::runtime_error("could not place a distinct prototype");
}

template <class Rng>
WorldSpec generate_world(const WorldConfig& cfg, Rng& rng) {
  if (cfg.nouns < 2 || cfg.verbs < 1) {
    throw std::invalid_argument("world needs at least 2 nouns and 1 verb");
  }
  WorldSpec w;
  w.nouns = detail::word_list(detail::default_nouns(), cfg.nouns, "noun");
  w.verbs = detail::word_list(detail::default_verbs(), cfg.verbs, "verb");
  w.function_words = detail::default_function_words();
  w.region_dim = cfg.region_dim;
  w.noise = cfg.noise;
  w.function_word_rate = cfg.function_word_rate;
  w.max_distractor_objects = cfg.max_distractor_objects;
  std::vector<std::vector<double>> all;
  for (int i = 0; i < cfg.nouns; ++i) {
    all.push_back(draw_prototype(all, cfg.region_dim, cfg.prototype_scale,
                                 cfg.noise, rng));
    w.noun_prototypes.push_back(all.back());
  }
  for (int i = 0; i < cfg.verbs; ++i) {
    all.push_back(draw_prototype(all, cfg.region_dim, cfg.prototype_scale,
                                 cfg.noise, rng));
    w.verb_prototypes.push_back(all.back());
  }
  // Every noun keeps at least two verbs and every verb at least two nouns so
  // that compositions can be withheld without losing a word.
  std::bernoulli_distribution keep(cfg.composition_density);
  std::vector<std::vector<bool>> on(cfg.verbs, std::vector<bool>(cfg.nouns));
  for (int v = 0; v < cfg.verbs; ++v)
    for (int n = 0; n < cfg.nouns; ++n) on[v][n] = keep(rng);
  for (int n = 0; n < cfg.nouns; ++n) {
    int count = 0;
    for (int v = 0; v < cfg.verbs; ++v) count += on[v][n];
    for (int v = 0; count < std::min(2, cfg.verbs); v = (v + 1) % cfg.verbs) {
      if (!on[v][n] && std::bernoulli_distribution(0.5)(rng)) {
        on[v][n] = true;
        ++count;
      }
    }
  }
  for (int v = 0; v < cfg.verbs; ++v) {
    int count = 0;
    for (int n = 0; n < cfg.nouns; ++n) count += on[v][n];
    for (int n = 0; count < 2; n = (n + 1) % cfg.nouns) {
      if (!on[v][n] && std::bernoulli_distribution(0.5)(rng)) {
        on[v][n] = true;
        ++count;
      }
    }
  }
  for (int v = 0; v < cfg.verbs; ++v)
    for (int n = 0; n < cfg.nouns; ++n)
      if (on[v][n]) w.whitelist.emplace_back(w.verbs[v], w.nouns[n]);
  w.validate();
  return w;
}

namespace detail {

template <class Rng>
BoundingBox random_box(double min_side, double max_side, Rng& rng) {
  std::uniform_real_distribution<double> side(min_side, max_side);
  const double w = side(rng), h = side(rng);
  std::uniform_real_distribution<double> px(0.0, 1.0 - w), py(0.0, 1.0 - h);
  const double x = px(rng), y = py(rng);
  return {x, y, x + w, y + h};
}

inline std::vector<double> noisy(const std::vector<double>& proto,
                                 double sigma, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> out = proto;
  for (double& v : out) v += sigma * g(rng);
  return out;
}

}  // namespace detail

// Generates one scene for the composition (verb, noun). Distractor objects
// are drawn from `distractor_pool` (all nouns when empty), never repeating
// the narrated noun.
inline RawExample generate_example(const WorldSpec& world,
                                   const std::string& verb,
                                   const std::string& noun,
                                   std::mt19937_64& rng,
                                   const std::vector<std::string>&
                                       distractor_pool = {}) {
  const int vi = world.verb_index(verb);
  const int ni = world.noun_index(noun);
  if (vi < 0) throw UnknownWordError("unknown verb: " + verb);
  if (ni < 0) throw UnknownWordError("unknown noun: " + noun);

  RawExample ex;
  std::vector<std::string> pool;
  for (const auto& n : distractor_pool.empty() ? world.nouns : distractor_pool)
    if (n != noun) pool.push_back(n);
  std::uniform_int_distribution<int> count_dist(world.min_distractor_objects,
                                                world.max_distractor_objects);
  const int n_distractors =
      std::min<int>(count_dist(rng), static_cast<int>(pool.size()));
  std::shuffle(pool.begin(), pool.end(), rng);

  std::vector<Region> objects;
  Region target;
  target.feature = detail::noisy(world.noun_prototypes[ni], world.noise, rng);
  target.box = detail::random_box(0.35, 0.6, rng);
  target.latent_label = noun;
  objects.push_back(target);
  for (int i = 0; i < n_distractors; ++i) {
    Region r;
    const int di = world.noun_index(pool[i]);
    r.feature = detail::noisy(world.noun_prototypes[di], world.noise, rng);
    r.box = detail::random_box(0.1, 0.25, rng);
    r.latent_label = pool[i];
    objects.push_back(std::move(r));
  }
  Region action;
  action.feature = detail::noisy(world.verb_prototypes[vi], world.noise, rng);
  action.box = {std::max(0.0, target.box.x1 - 0.05),
                std::max(0.0, target.box.y1 - 0.05),
                std::min(1.0, target.box.x2 + 0.05),
                std::min(1.0, target.box.y2 + 0.05)};
  action.latent_label = verb;
  objects.push_back(std::move(action));
  std::shuffle(objects.begin(), objects.end(), rng);

  Region scene;
  scene.box = BoundingBox::whole_scene();
  std::vector<double> mean(world.region_dim, 0.0);
  for (const auto& o : objects) {
    const auto& proto =
        o.latent_label == verb
            ? world.verb_prototypes[vi]
            : world.noun_prototypes[world.noun_index(*o.latent_label)];
    for (int c = 0; c < world.region_dim; ++c) mean[c] += proto[c];
  }
  for (double& v : mean) v /= static_cast<double>(objects.size());
  scene.feature = detail::noisy(mean, world.noise, rng);

  ex.regions.push_back(std::move(scene));
  for (auto& o : objects) ex.regions.push_back(std::move(o));

  ex.tokens.push_back(verb);
  if (!world.function_words.empty() &&
      std::bernoulli_distribution(world.function_word_rate)(rng)) {
    std::uniform_int_distribution<std::size_t> pick(
        0, world.function_words.size() - 1);
    ex.tokens.push_back(world.function_words[pick(rng)]);
  }
  ex.tokens.push_back(noun);
  return ex;
}

// Per-scene random stream derived from (seed, scene id).
inline std::mt19937_64 scene_stream(std::uint64_t seed, std::uint64_t scene) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(scene),
                    static_cast<std::uint32_t>(scene >> 32)};
  return std::mt19937_64(seq);
}

struct SplitSpec {
  std::vector<std::string> held_out_nouns;
  std::vector<std::string> held_out_verbs;
  std::vector<Composition> held_out_compositions;
  double train_fraction = 0.81;

  bool is_held_out_word(const std::string& w) const {
    return std::find(held_out_nouns.begin(), held_out_nouns.end(), w) !=
               held_out_nouns.end() ||
           std::find(held_out_verbs.begin(), held_out_verbs.end(), w) !=
               held_out_verbs.end();
  }
  bool is_held_out_composition(const std::string& v,
                               const std::string& n) const {
    return std::find(held_out_compositions.begin(),
                     held_out_compositions.end(),
                     Composition{v, n}) != held_out_compositions.end();
  }
  std::vector<std::string> held_out_words() const {
    auto out = held_out_verbs;
    out.insert(out.end(), held_out_nouns.begin(), held_out_nouns.end());
    return out;
  }
};

// Compositions that training examples may use.
inline std::vector<Composition> training_compositions(const WorldSpec& world,
                                                      const SplitSpec& split) {
  std::vector<Composition> out;
  for (const auto& [v, n] : world.whitelist)
    if (!split.is_held_out_word(v) && !split.is_held_out_word(n) &&
        !split.is_held_out_composition(v, n))
      out.emplace_back(v, n);
  return out;
}

inline void validate_split(const WorldSpec& world, const SplitSpec& split) {
  for (const auto& n : split.held_out_nouns)
    if (world.noun_index(n) < 0) throw SplitError("held-out noun unknown: " + n);
  for (const auto& v : split.held_out_verbs)
    if (world.verb_index(v) < 0) throw SplitError("held-out verb unknown: " + v);
  for (const auto& [v, n] : split.held_out_compositions) {
    if (split.is_held_out_word(v) || split.is_held_out_word(n)) {
      throw SplitError("held-out composition (" + v + ", " + n +
                       ") uses a held-out word");
    }
    if (!world.allowed(v, n)) {
      throw SplitError("held-out composition (" + v + ", " + n +
                       ") is not a valid composition");
    }
  }
  if (!(split.train_fraction > 0 && split.train_fraction < 1)) {
    throw SplitError("train fraction must lie in (0, 1)");
  }
  const auto train = training_compositions(world, split);
  if (train.empty()) throw SplitError("no training compositions remain");
  std::set<std::string> seen;
  for (const auto& [v, n] : train) {
    seen.insert(v);
    seen.insert(n);
  }
  for (const auto& [v, n] : split.held_out_compositions) {
    if (!seen.contains(v) || !seen.contains(n)) {
      throw SplitError("held-out composition (" + v + ", " + n +
                       ") has a word never seen in training");
    }
  }
}

// Withholds nouns and verbs uniformly at random, then a fraction of the
// remaining compositions whose words stay covered by training.
template <class Rng>
SplitSpec choose_split(const WorldSpec& world, int held_nouns, int held_verbs,
                       double composition_fraction, double train_fraction,
                       Rng& rng) {
  SplitSpec s;
  s.train_fraction = train_fraction;
  auto nouns = world.nouns;
  auto verbs = world.verbs;
  std::shuffle(nouns.begin(), nouns.end(), rng);
  std::shuffle(verbs.begin(), verbs.end(), rng);
  s.held_out_nouns.assign(nouns.begin(), nouns.begin() + held_nouns);
  s.held_out_verbs.assign(verbs.begin(), verbs.begin() + held_verbs);
  std::sort(s.held_out_nouns.begin(), s.held_out_nouns.end());
  std::sort(s.held_out_verbs.begin(), s.held_out_verbs.end());

  auto candidates = training_compositions(world, s);
  const auto target = static_cast<std::size_t>(
      std::lround(composition_fraction * candidates.size()));
  std::shuffle(candidates.begin(), candidates.end(), rng);
  for (const auto& c : candidates) {
    if (s.held_out_compositions.size() >= target) break;
    s.held_out_compositions.push_back(c);
    // Each word must keep at least one training composition.
    const auto remaining = training_compositions(world, s);
    bool verb_ok = false, noun_ok = false;
    for (const auto& [v, n] : remaining) {
      verb_ok |= v == c.first;
      noun_ok |= n == c.second;
    }
    if (!verb_ok || !noun_ok) s.held_out_compositions.pop_back();
  }
  std::sort(s.held_out_compositions.begin(), s.held_out_compositions.end());
  validate_split(world, s);
  return s;
}

struct SplitData {
  RawDataset train;
  RawDataset test_new_instance;     // seen words, seen compositions
  RawDataset test_new_composition;  // seen words, unseen pairing
  RawDataset test_new_word;         // at least one unseen word

  std::size_t total() const {
    return train.size() + test_new_instance.size() +
           test_new_composition.size() + test_new_word.size();
  }
  double train_fraction() const {
    return static_cast<double>(train.size()) / static_cast<double>(total());
  }
};

// Generates n_examples scenes: round(train_fraction * n) training scenes
// over training compositions and the rest split evenly across the three
// test partitions (an empty partition hands its share to the others).
template <class Rng>
SplitData make_split(const WorldSpec& world, const SplitSpec& split,
                     std::size_t n_examples, Rng& rng) {
  world.validate();
  validate_split(world, split);
  const std::uint64_t base_seed = rng();

  std::vector<std::string> pool;
  for (const auto& n : world.nouns)
    if (!split.is_held_out_word(n)) pool.push_back(n);

  const auto train_pairs = training_compositions(world, split);
  std::vector<Composition> new_word_pairs;
  for (const auto& [v, n] : world.whitelist)
    if (split.is_held_out_word(v) || split.is_held_out_word(n))
      new_word_pairs.emplace_back(v, n);
  const auto& new_comp_pairs = split.held_out_compositions;

  const std::size_t n_train = static_cast<std::size_t>(
      std::llround(split.train_fraction * static_cast<double>(n_examples)));
  const std::size_t n_test = n_examples - n_train;
  std::vector<const std::vector<Composition>*> partitions = {&train_pairs};
  if (!new_comp_pairs.empty()) partitions.push_back(&new_comp_pairs);
  if (!new_word_pairs.empty()) partitions.push_back(&new_word_pairs);
  // Test partitions: new-instance, then whichever of the others exist.
  const std::size_t n_parts = partitions.size();
  std::vector<std::size_t> counts(n_parts, n_test / n_parts);
  for (std::size_t i = 0; i < n_test % n_parts; ++i) ++counts[i];

  SplitData out;
  std::uint64_t scene = 0;
  auto emit = [&](const std::vector<Composition>& pairs, std::size_t count,
                  RawDataset& dest) {
    for (std::size_t i = 0; i < count; ++i, ++scene) {
      auto stream = scene_stream(base_seed, scene);
      std::uniform_int_distribution<std::size_t> pick(0, pairs.size() - 1);
      const auto& [v, n] = pairs[pick(stream)];
      auto ex = generate_example(world, v, n, stream, pool);
      ex.scene_id = scene;
      dest.push_back(std::move(ex));
    }
  };
  emit(train_pairs, n_train, out.train);
  emit(train_pairs, counts[0], out.test_new_instance);
  std::size_t next = 1;
  if (!new_comp_pairs.empty())
    emit(new_comp_pairs, counts[next++], out.test_new_composition);
  if (!new_word_pairs.empty())
    emit(new_word_pairs, counts[next++], out.test_new_word);
  return out;
}

struct LeakageReport {
  std::size_t narrations_with_held_out_word = 0;
  std::size_t narrations_with_held_out_composition = 0;
  std::size_t composition_words_missing_from_train = 0;
  bool clean() const {
    return narrations_with_held_out_word == 0 &&
           narrations_with_held_out_composition == 0 &&
           composition_words_missing_from_train == 0;
  }
};

// Pure scan of training narrations against the held-out lists.
inline LeakageReport check_leakage(const RawDataset& train,
                                   const SplitSpec& split) {
  LeakageReport r;
  std::set<std::string> seen;
  for (const auto& ex : train) {
    bool word = false, comp = false;
    for (const auto& t : ex.tokens) {
      seen.insert(t);
      word |= split.is_held_out_word(t);
    }
    for (const auto& [v, n] : split.held_out_compositions)
      comp |= ex.contains(v) && ex.contains(n);
    r.narrations_with_held_out_word += word;
    r.narrations_with_held_out_composition += comp;
  }
  for (const auto& [v, n] : split.held_out_compositions) {
    r.composition_words_missing_from_train += !seen.contains(v);
    r.composition_words_missing_from_train += !seen.contains(n);
  }
  return r;
}

// Training vocabulary: function words, then verbs, then nouns, skipping
// held-out words (those are registered as OOV at evaluation time).
inline Vocabulary build_training_vocabulary(const WorldSpec& world,
                                            const SplitSpec& split,
                                            std::size_t embedding_dim) {
  Vocabulary v(embedding_dim);
  for (const auto& w : world.function_words) v.add_word(w, PartOfSpeech::other);
  for (const auto& w : world.verbs)
    if (!split.is_held_out_word(w)) v.add_word(w, PartOfSpeech::verb);
  for (const auto& w : world.nouns)
    if (!split.is_held_out_word(w)) v.add_word(w, PartOfSpeech::noun);
  return v;
}

inline PartOfSpeech world_part_of_speech(const WorldSpec& world,
                                         const std::string& w) {
  if (world.verb_index(w) >= 0) return PartOfSpeech::verb;
  if (world.noun_index(w) >= 0) return PartOfSpeech::noun;
  return PartOfSpeech::other;
}

inline void to_json(nlohmann::json& j, const WorldSpec& w) {
  nlohmann::json wl = nlohmann::json::array();
  for (const auto& [v, n] : w.whitelist) wl.push_back({v, n});
  j = {{"nouns", w.nouns},
       {"verbs", w.verbs},
       {"function_words", w.function_words},
       {"noun_prototypes", w.noun_prototypes},
       {"verb_prototypes", w.verb_prototypes},
       {"region_dim", w.region_dim},
       {"noise", w.noise},
       {"function_word_rate", w.function_word_rate},
       {"min_distractor_objects", w.min_distractor_objects},
       {"max_distractor_objects", w.max_distractor_objects},
       {"whitelist", wl}};
}

inline void from_json(const nlohmann::json& j, WorldSpec& w) {
  w.nouns = j.at("nouns").get<std::vector<std::string>>();
  w.verbs = j.at("verbs").get<std::vector<std::string>>();
  w.function_words = j.at("function_words").get<std::vector<std::string>>();
  w.noun_prototypes =
      j.at("noun_prototypes").get<std::vector<std::vector<double>>>();
  w.verb_prototypes =
      j.at("verb_prototypes").get<std::vector<std::vector<double>>>();
  w.region_dim = j.at("region_dim");
  w.noise = j.at("noise");
  w.function_word_rate = j.at("function_word_rate");
  w.min_distractor_objects = j.at("min_distractor_objects");
  w.max_distractor_objects = j.at("max_distractor_objects");
  w.whitelist.clear();
  for (const auto& p : j.at("whitelist"))
    w.whitelist.emplace_back(p.at(0).get<std::string>(),
                             p.at(1).get<std::string>());
  w.validate();
}

inline void to_json(nlohmann::json& j, const SplitSpec& s) {
  nlohmann::json comps = nlohmann::json::array();
  for (const auto& [v, n] : s.held_out_compositions) comps.push_back({v, n});
  j = {{"held_out_nouns", s.held_out_nouns},
       {"held_out_verbs", s.held_out_verbs},
       {"held_out_compositions", comps},
       {"train_fraction", s.train_fraction}};
}

inline void from_json(const nlohmann::json& j, SplitSpec& s) {
  s.held_out_nouns = j.at("held_out_nouns").get<std::vector<std::string>>();
  s.held_out_verbs = j.at("held_out_verbs").get<std::vector<std::string>>();
  s.held_out_compositions.clear();
  for (const auto& p : j.at("held_out_compositions"))
    s.held_out_compositions.emplace_back(p.at(0).get<std::string>(),
                                         p.at(1).get<std::string>());
  s.train_fraction = j.at("train_fraction");
}

}  // namespace expert
