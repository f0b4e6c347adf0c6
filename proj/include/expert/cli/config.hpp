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

// Run configuration for the command-line tool: one JSON document with
// defaults for every key, merged strictly with a user file and dotted
// key=value overrides.

#pragma once

#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "expert/data/hyperparams.hpp"
#include "expert/eval/report.hpp"
#include "expert/train/trainer.hpp"
#include "expert/world/synthetic_world.hpp"
#include "json.hpp"

namespace expert::cli {

inline constexpr const char* kVersion = "0.1.0";

// Bad configuration input; maps to the usage exit code.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline nlohmann::json default_config() {
  const WorldConfig w;
  const train::TrainConfig t;
  const eval::EvalSettings e;
  return {
      {"seed", 1},
      {"world",
       {{"nouns", w.nouns},
        {"verbs", w.verbs},
        {"region_dim", w.region_dim},
        {"noise", w.noise},
        {"prototype_scale", w.prototype_scale},
        {"composition_density", w.composition_density},
        {"function_word_rate", w.function_word_rate},
        {"max_distractor_objects", w.max_distractor_objects}}},
      // Counts pick held-out material at random; the explicit lists, when
      // set, are used verbatim instead.
      {"split",
       {{"examples", 2000},
        {"held_out_nouns", 2},
        {"held_out_verbs", 1},
        {"composition_fraction", 0.1},
        {"train_fraction", 0.81},
        {"explicit", nullptr}}},
      {"model", t.hyperparams},
      {"train",
       {{"steps", 20000},
        {"batch_size", t.batch_size},
        {"learning_rate", t.adam.learning_rate},
        {"beta1", t.adam.beta1},
        {"beta2", t.adam.beta2},
        {"epsilon", t.adam.epsilon},
        {"path", "sparse"},
        {"eval_every", 1000},
        {"checkpoint_every", 1000},
        {"eval_examples", t.eval_examples}}},
      {"eval",
       {{"ratios", e.ratios},
        {"pointing_episodes", e.pointing_episodes},
        {"multi_episodes", e.multi_episodes},
        {"multi_words", e.multi_words},
        {"novel_pool", e.novel_pool},
        {"path", "sparse"}}},
      {"probe", {{"episodes", 50}, {"confidence", "cloze"}}}};
}

namespace detail {

inline bool same_kind(const nlohmann::json& a, const nlohmann::json& b) {
  if (a.is_number() && b.is_number()) return true;
  return a.type() == b.type();
}

}  // namespace detail

// Copies `overlay` onto `base`. Every key must already exist in `base` with
// a compatible type; a null default accepts anything.
inline void merge_strict(nlohmann::json& base, const nlohmann::json& overlay,
                         const std::string& where = "") {
  if (!overlay.is_object()) throw ConfigError("config" + where + " must be an object");
  for (const auto& [key, value] : overlay.items()) {
    const std::string path = where.empty() ? key : where + "." + key;
    if (!base.contains(key)) throw ConfigError("unknown config key: " + path);
    auto& slot = base[key];
    if (slot.is_null()) {
      slot = value;
    } else if (slot.is_object()) {
      merge_strict(slot, value, path);
    } else if (!detail::same_kind(slot, value)) {
      throw ConfigError("wrong type for config key: " + path);
    } else {
      slot = value;
    }
  }
}

// "a.b.c=value" as a nested object. The value is parsed as JSON when it
// parses, otherwise taken as a string.
inline nlohmann::json override_object(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override must be key=value: " + text);
  }
  const std::string key = text.substr(0, eq), raw = text.substr(eq + 1);
  nlohmann::json value = nlohmann::json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  std::vector<std::string> parts;
  std::size_t start = 0;
  for (;;) {
    const auto dot = key.find('.', start);
    parts.push_back(key.substr(start, dot - start));
    if (parts.back().empty()) throw ConfigError("empty key segment in " + key);
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  nlohmann::json out = std::move(value);
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) out = {{*it, std::move(out)}};
  return out;
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config " + path);
  nlohmann::json j = nlohmann::json::parse(is, nullptr, false);
  if (j.is_discarded()) throw ConfigError("config is not valid JSON: " + path);
  return j;
}

// What the user asked for and the effective result.
struct LoadedConfig {
  nlohmann::json user = nlohmann::json::object();
  nlohmann::json effective;
};

inline LoadedConfig load_config(const std::string& file, const std::vector<std::string>& sets) {
  LoadedConfig c;
  c.effective = default_config();
  auto apply = [&](const nlohmann::json& layer) {
    merge_strict(c.effective, layer);
    c.user.merge_patch(layer);
  };
  if (!file.empty()) apply(read_json_file(file));
  for (const auto& s : sets) apply(override_object(s));
  return c;
}

// Seed precedence: explicit flag, then EXPERT_SEED, then the config.
inline std::uint64_t resolve_seed(std::optional<std::uint64_t> flag, const nlohmann::json& cfg) {
  if (flag) return *flag;
  if (const char* env = std::getenv("EXPERT_SEED"); env && *env) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (*end != '\0') throw ConfigError(std::string("EXPERT_SEED is not an integer: ") + env);
    return v;
  }
  return cfg.at("seed").get<std::uint64_t>();
}

inline model::AttentionPath parse_path(const std::string& s) {
  if (s == "sparse") return model::AttentionPath::sparse;
  if (s == "dense") return model::AttentionPath::dense;
  throw ConfigError("unknown attention path: " + s);
}

inline WorldConfig world_config(const nlohmann::json& cfg) {
  const auto& j = cfg.at("world");
  WorldConfig w;
  w.nouns = j.at("nouns");
  w.verbs = j.at("verbs");
  w.region_dim = j.at("region_dim");
  w.noise = j.at("noise");
  w.prototype_scale = j.at("prototype_scale");
  w.composition_density = j.at("composition_density");
  w.function_word_rate = j.at("function_word_rate");
  w.max_distractor_objects = j.at("max_distractor_objects");
  return w;
}

inline Hyperparams hyperparams(const nlohmann::json& cfg) {
  Hyperparams h;
  try {
    h = cfg.at("model").get<Hyperparams>();
    h.validate();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad model config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("bad model config: ") + e.what());
  }
  if (h.region_dim != cfg.at("world").at("region_dim").get<int>()) {
    throw ConfigError("model.region_dim must equal world.region_dim");
  }
  return h;
}

inline train::TrainConfig train_config(const nlohmann::json& cfg, std::uint64_t seed) {
  const auto& j = cfg.at("train");
  train::TrainConfig t;
  t.hyperparams = hyperparams(cfg);
  t.steps = j.at("steps");
  t.batch_size = j.at("batch_size");
  t.seed = seed;
  t.adam.learning_rate = j.at("learning_rate");
  t.adam.beta1 = j.at("beta1");
  t.adam.beta2 = j.at("beta2");
  t.adam.epsilon = j.at("epsilon");
  t.path = parse_path(j.at("path"));
  t.eval_every = j.at("eval_every");
  t.checkpoint_every = j.at("checkpoint_every");
  t.eval_examples = j.at("eval_examples");
  try {
    t.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("bad train config: ") + e.what());
  }
  return t;
}

inline eval::EvalSettings eval_settings(const nlohmann::json& cfg, const std::string& protocol) {
  eval::EvalSettings s;
  try {
    s = eval::EvalSettings::only(protocol);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  const auto& j = cfg.at("eval");
  s.ratios = j.at("ratios").get<std::vector<std::size_t>>();
  s.pointing_episodes = j.at("pointing_episodes");
  s.multi_episodes = j.at("multi_episodes");
  s.multi_words = j.at("multi_words");
  s.novel_pool = j.at("novel_pool");
  s.path = parse_path(j.at("path"));
  if (s.ratios.empty()) throw ConfigError("eval.ratios is empty");
  if (s.pointing_episodes == 0 || s.multi_episodes == 0) {
    throw ConfigError("episode counts must be positive");
  }
  if (s.multi_words == 0 || s.multi_words > s.novel_pool) {
    throw ConfigError("eval.multi_words must be in [1, eval.novel_pool]");
  }
  return s;
}

// Held-out lists from the split section: explicit lists when given, else
// drawn at random from the world.
template <class Rng>
SplitSpec split_spec(const nlohmann::json& cfg, const WorldSpec& world, Rng& rng) {
  const auto& j = cfg.at("split");
  if (!j.at("explicit").is_null()) {
    SplitSpec s;
    nlohmann::json e = j.at("explicit");
    if (!e.contains("train_fraction")) e["train_fraction"] = j.at("train_fraction");
    for (const auto& [key, _] : e.items())
      if (key != "held_out_nouns" && key != "held_out_verbs" &&
          key != "held_out_compositions" && key != "train_fraction") {
        throw ConfigError("unknown config key: split.explicit." + key);
      }
    for (const char* key : {"held_out_nouns", "held_out_verbs", "held_out_compositions"})
      if (!e.contains(key)) e[key] = nlohmann::json::array();
    try {
      s = e.get<SplitSpec>();
    } catch (const nlohmann::json::exception& ex) {
      throw ConfigError(std::string("bad split.explicit: ") + ex.what());
    }
    validate_split(world, s);
    return s;
  }
  const int nouns = j.at("held_out_nouns"), verbs = j.at("held_out_verbs");
  if (nouns < 0 || verbs < 0 || nouns >= static_cast<int>(world.nouns.size()) ||
      verbs >= static_cast<int>(world.verbs.size())) {
    throw SplitError("held-out word counts leave no training nouns or verbs");
  }
  return choose_split(world, nouns, verbs, j.at("composition_fraction").get<double>(),
                      j.at("train_fraction").get<double>(), rng);
}

}  // namespace expert::cli
