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

// Input encodings.
//   word w at position p in example x:  phi_w[w] + phi_pos[p] + phi_mod[TXT] + phi_id[x]
//   region r in example x:              phi_v(r.feature) + phi_bbox(r.box)
//                                       + phi_mod[IMG] + phi_id[x]
//   demarcation token t of example x:   phi_w[t] + phi_mod[block] + phi_id[x]
// Word positions restart at zero in every example.

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "expert/data/episode.hpp"
#include "expert/data/hyperparams.hpp"
#include "expert/data/vocabulary.hpp"
#include "expert/model/layers.hpp"

namespace expert::model {

class IndexOverflowError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

struct EncoderParams {
  Var word_table;      // trained words (incl. specials) x d; tied to cloze head
  Linear region_proj;  // d_v -> d, no bias
  Linear bbox_proj;    // 4 -> d, no bias
  Var position_table;  // max_positions x d
  Var modality_table;  // 2 x d
  Var example_table;   // max_examples x d

  std::size_t hidden() const { return word_table.cols(); }

  void collect(std::vector<NamedParameter>& out) const {
    out.push_back({"encoder.word_table", word_table});
    region_proj.collect("encoder.region_proj", out);
    bbox_proj.collect("encoder.bbox_proj", out);
    out.push_back({"encoder.position_table", position_table});
    out.push_back({"encoder.modality_table", modality_table});
    out.push_back({"encoder.example_table", example_table});
  }
};

template <class Rng>
EncoderParams make_encoder(const Hyperparams& hp, std::size_t trained_words,
                           Rng& rng) {
  const auto d = static_cast<std::size_t>(hp.hidden);
  EncoderParams p;
  p.word_table = Var::parameter(
      uniform_tensor(trained_words, d, kEmbeddingInitRange, rng));
  p.region_proj = make_linear(static_cast<std::size_t>(hp.region_dim), d,
                              false, rng);
  p.bbox_proj = make_linear(4, d, false, rng);
  p.position_table = Var::parameter(uniform_tensor(
      static_cast<std::size_t>(hp.max_positions), d, kEmbeddingInitRange, rng));
  p.modality_table =
      Var::parameter(uniform_tensor(2, d, kEmbeddingInitRange, rng));
  p.example_table = Var::parameter(uniform_tensor(
      static_cast<std::size_t>(hp.max_examples), d, kEmbeddingInitRange, rng));
  return p;
}

namespace detail {

inline void check_index(std::size_t index, std::size_t limit,
                        const char* what) {
  if (index >= limit) {
    throw IndexOverflowError(std::string(what) + " index " +
                             std::to_string(index) + " exceeds table size " +
                             std::to_string(limit));
  }
}

// Word table extended with the frozen rows of registered out-of-vocabulary
// words when any of `ids` needs them.
inline Var lookup_table(const EncoderParams& p, const Vocabulary& vocab,
                        const std::vector<WordId>& ids) {
  if (vocab.trained_size() != p.word_table.rows()) {
    throw DimensionError("vocabulary does not match word table");
  }
  bool needs_oov = false;
  for (WordId w : ids) {
    if (w < 0 || static_cast<std::size_t>(w) >= vocab.size()) {
      throw UnknownWordError("word id " + std::to_string(w));
    }
    if (vocab.is_oov(w)) needs_oov = true;
  }
  if (!needs_oov) return p.word_table;
  return ad::concat_rows({p.word_table, Var::constant(vocab.oov_rows())});
}

}  // namespace detail

// phi_w rows for `ids`; out-of-vocabulary ids read their frozen rows.
inline Var word_embeddings(const EncoderParams& p, const Vocabulary& vocab,
                           const std::vector<WordId>& ids) {
  Var table = detail::lookup_table(p, vocab, ids);
  std::vector<std::size_t> rows(ids.begin(), ids.end());
  return ad::gather_rows(table, std::move(rows));
}

// phi_v over a stack of features (n x d_v).
inline Var region_feature_encoding(const EncoderParams& p,
                                   const Tensor& features) {
  return p.region_proj(Var::constant(features));
}

// Encodes every element of a flattened episode: L x d.
inline Var encode_episode(const EncoderParams& p, const Vocabulary& vocab,
                          const FlatEpisode& flat) {
  const std::size_t n = flat.size();
  const std::size_t d = p.hidden();
  const std::size_t dv = p.region_proj.in_features();

  std::vector<WordId> word_ids;
  std::vector<std::size_t> word_dest, pos_ids, pos_dest, region_dest;
  std::vector<std::size_t> mod_ids(n), ex_ids(n);
  std::vector<const Element*> regions;
  for (std::size_t i = 0; i < n; ++i) {
    const Element& e = flat.elements[i];
    mod_ids[i] = static_cast<std::size_t>(e.modality);
    detail::check_index(e.example, p.example_table.rows(), "example");
    ex_ids[i] = e.example;
    if (e.kind == ElementKind::image) {
      regions.push_back(&e);
      region_dest.push_back(i);
    } else {
      word_ids.push_back(e.token);
      word_dest.push_back(i);
      if (e.kind == ElementKind::text) {
        detail::check_index(e.position, p.position_table.rows(), "position");
        pos_ids.push_back(e.position);
        pos_dest.push_back(i);
      }
    }
  }

  std::vector<ad::RowPlacement> parts;
  if (!word_ids.empty()) {
    parts.push_back({word_embeddings(p, vocab, word_ids), word_dest});
  }
  if (!pos_ids.empty()) {
    parts.push_back({ad::gather_rows(p.position_table, pos_ids), pos_dest});
  }
  if (!regions.empty()) {
    Tensor feats(regions.size(), dv);
    Tensor boxes(regions.size(), 4);
    for (std::size_t r = 0; r < regions.size(); ++r) {
      const Element& e = *regions[r];
      if (e.region.feature.size() != dv) {
        throw DimensionError("region feature has width " +
                             std::to_string(e.region.feature.size()) +
                             ", expected " + std::to_string(dv));
      }
      if (!e.zeroed)
        for (std::size_t c = 0; c < dv; ++c) feats(r, c) = e.region.feature[c];
      const auto b = e.region.box.as_array();
      for (std::size_t c = 0; c < 4; ++c) boxes(r, c) = b[c];
    }
    Var enc = ad::add(p.region_proj(Var::constant(std::move(feats))),
                      p.bbox_proj(Var::constant(std::move(boxes))));
    parts.push_back({enc, region_dest});
  }
  parts.push_back({ad::gather_rows(p.modality_table, mod_ids), {}});
  parts.back().destination.resize(n);
  for (std::size_t i = 0; i < n; ++i) parts.back().destination[i] = i;
  parts.push_back({ad::gather_rows(p.example_table, ex_ids),
                   parts.back().destination});
  return ad::scatter_rows(n, d, std::move(parts));
}

// Single-element forms.
inline Tensor encode_word(const EncoderParams& p, const Vocabulary& vocab,
                          WordId w, std::size_t position,
                          std::size_t example_index) {
  detail::check_index(position, p.position_table.rows(), "position");
  detail::check_index(example_index, p.example_table.rows(), "example");
  ad::NoGradGuard guard;
  Var x = word_embeddings(p, vocab, {w});
  x = ad::add(x, ad::gather_rows(p.position_table, {position}));
  x = ad::add(x, ad::gather_rows(p.modality_table,
                                 {static_cast<std::size_t>(Modality::text)}));
  x = ad::add(x, ad::gather_rows(p.example_table, {example_index}));
  return x.value();
}

inline Tensor encode_region(const EncoderParams& p, const Region& r,
                            std::size_t example_index) {
  r.validate();
  detail::check_index(example_index, p.example_table.rows(), "example");
  ad::NoGradGuard guard;
  const auto b = r.box.as_array();
  Var x = ad::add(
      region_feature_encoding(p, Tensor::row_vector(r.feature)),
      p.bbox_proj(Var::constant(
          Tensor::row_vector(std::vector<Scalar>(b.begin(), b.end())))));
  x = ad::add(x, ad::gather_rows(p.modality_table,
                                 {static_cast<std::size_t>(Modality::image)}));
  x = ad::add(x, ad::gather_rows(p.example_table, {example_index}));
  return x.value();
}

}  // namespace expert::model
