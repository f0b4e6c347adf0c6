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
#include <map>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "expert/numeric/tensor.hpp"

namespace expert {

using WordId = std::int32_t;
inline constexpr WordId kNoWord = -1;

enum class PartOfSpeech { verb, noun, other };

inline std::string_view to_string(PartOfSpeech p) {
  switch (p) {
    case PartOfSpeech::verb: return "verb";
    case PartOfSpeech::noun: return "noun";
    case PartOfSpeech::other: return "other";
  }
  return "other";
}

inline PartOfSpeech parse_part_of_speech(std::string_view s) {
  if (s == "verb") return PartOfSpeech::verb;
  if (s == "noun") return PartOfSpeech::noun;
  if (s == "other") return PartOfSpeech::other;
  throw std::invalid_argument("unknown part of speech: " + std::string(s));
}

// Half-width of the uniform law used for every embedding table, including
// rows registered for out-of-vocabulary words.
inline constexpr double kEmbeddingInitRange = 0.05;

class AlreadyRegisteredError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class UnknownWordError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

// Word <-> id mapping. Ids are dense: the four special tokens come first,
// then trained words, then out-of-vocabulary words registered after
// training. Trained ids index the learned embedding table; OOV ids own a
// frozen random row stored here.
class Vocabulary {
 public:
  static constexpr WordId kImg = 0;
  static constexpr WordId kTxt = 1;
  static constexpr WordId kSep = 2;
  static constexpr WordId kMask = 3;
  static constexpr WordId kNumSpecial = 4;

  explicit Vocabulary(std::size_t embedding_dim = 0)
      : embedding_dim_(embedding_dim) {
    for (const char* s : {"[IMG]", "[TXT]", "[SEP]", "[MASK]"}) {
      append(s, PartOfSpeech::other, true);
    }
  }

  // Adds a trained word. Must happen before any OOV registration.
  WordId add_word(const std::string& word, PartOfSpeech pos) {
    if (oov_count() > 0) {
      throw std::logic_error("trained words must precede OOV registrations");
    }
    if (ids_.contains(word)) {
      throw AlreadyRegisteredError("word already in vocabulary: " + word);
    }
    return append(word, pos, true);
  }

  // Appends an out-of-vocabulary word whose embedding row is drawn from the
  // same law as the trained tables and is never updated.
  template <class Rng>
  WordId register_oov(const std::string& word, PartOfSpeech pos, Rng& rng) {
    if (ids_.contains(word)) {
      throw AlreadyRegisteredError("word already registered: " + word);
    }
    if (embedding_dim_ == 0) {
      throw std::logic_error("vocabulary has no embedding width for OOV rows");
    }
    std::uniform_real_distribution<double> u(-kEmbeddingInitRange,
                                             kEmbeddingInitRange);
    std::vector<double> row(embedding_dim_);
    for (double& v : row) v = u(rng);
    const WordId id = append(word, pos, false);
    oov_values_.insert(oov_values_.end(), row.begin(), row.end());
    return id;
  }

  std::optional<WordId> find(std::string_view word) const {
    auto it = ids_.find(std::string(word));
    if (it == ids_.end()) return std::nullopt;
    return it->second;
  }
  WordId id(std::string_view word) const {
    if (auto f = find(word)) return *f;
    throw UnknownWordError("unknown word: " + std::string(word));
  }
  bool contains(std::string_view word) const { return find(word).has_value(); }
  const std::string& word(WordId id) const { return words_.at(check(id)); }
  PartOfSpeech part_of_speech(WordId id) const { return pos_.at(check(id)); }

  std::size_t size() const { return words_.size(); }
  // Rows of the learned embedding table: specials plus trained words.
  std::size_t trained_size() const { return trained_count_; }
  std::size_t oov_count() const { return words_.size() - trained_count_; }
  std::size_t embedding_dim() const { return embedding_dim_; }

  static bool is_special(WordId id) { return id >= 0 && id < kNumSpecial; }
  bool is_oov(WordId id) const {
    return id >= static_cast<WordId>(trained_count_) &&
           id < static_cast<WordId>(words_.size());
  }
  bool is_real_word(WordId id) const {
    return id >= kNumSpecial && id < static_cast<WordId>(words_.size());
  }

  // Trained non-special ids, ascending.
  std::vector<WordId> trained_word_ids() const {
    std::vector<WordId> out;
    for (WordId i = kNumSpecial; i < static_cast<WordId>(trained_count_); ++i)
      out.push_back(i);
    return out;
  }

  // Frozen OOV embedding rows, one per OOV id in registration order.
  Tensor oov_rows() const {
    return Tensor(oov_count(), embedding_dim_, oov_values_);
  }
  std::span<const double> oov_row(WordId id) const {
    if (!is_oov(id)) throw UnknownWordError("not an OOV id");
    const std::size_t k = static_cast<std::size_t>(id) - trained_count_;
    return {oov_values_.data() + k * embedding_dim_, embedding_dim_};
  }

 private:
  WordId append(const std::string& word, PartOfSpeech pos, bool trained) {
    const WordId id = static_cast<WordId>(words_.size());
    ids_.emplace(word, id);
    words_.push_back(word);
    pos_.push_back(pos);
    if (trained) ++trained_count_;
    return id;
  }

  std::size_t check(WordId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= words_.size()) {
      throw UnknownWordError("word id out of range: " + std::to_string(id));
    }
    return static_cast<std::size_t>(id);
  }

  std::size_t embedding_dim_;
  std::map<std::string, WordId> ids_;
  std::vector<std::string> words_;
  std::vector<PartOfSpeech> pos_;
  std::size_t trained_count_ = 0;
  std::vector<double> oov_values_;
};

template <class Rng>
WordId register_oov(Vocabulary& vocab, const std::string& word, Rng& rng,
                    PartOfSpeech pos = PartOfSpeech::other) {
  return vocab.register_oov(word, pos, rng);
}

}  // namespace expert
