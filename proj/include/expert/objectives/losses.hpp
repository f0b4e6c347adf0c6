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

// Training objectives.
//
//   pointing:   log A_ij = f(h_i)^T f(h_j) over candidates j,
//               loss = -log(sum_{answers} A_ij / sum_{candidates} A_ik)
//   input ptr:  same with f(h_j) replaced by phi_w(w_j)
//   word cloze: cross-entropy of phi_w^T h_i (tied table)
//   visual:     mean_neg max(0, 1 - cos(g(h_i), pos) + cos(g(h_i), neg))
//   total:      point + alpha cloze + beta vision (+ input pointing)

#pragma once

#include <algorithm>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "expert/data/episode.hpp"
#include "expert/data/vocabulary.hpp"
#include "expert/model/encoder.hpp"
#include "expert/model/expert_model.hpp"
#include "expert/model/layers.hpp"

namespace expert::objectives {

using ad::Var;
using model::Linear;

class EmptyAnswerSetError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct LossWeights {
  double alpha = 1.0;
  double beta = 1.0;
  bool input_pointing = false;

  void validate() const {
    if (!(alpha >= 0) || !(beta >= 0)) {
      throw std::invalid_argument("loss weights must be >= 0");
    }
  }
};

// -log softmax mass of `answer_cols` within a 1 x c logit row.
inline Var pointing_loss_from_logits(const Var& logits,
                                     const std::vector<std::size_t>& answer_cols) {
  if (answer_cols.empty()) throw EmptyAnswerSetError("empty answer set");
  for (std::size_t a : answer_cols) {
    if (a >= logits.cols()) throw std::out_of_range("answer outside candidates");
  }
  return ad::sub(ad::logsumexp(logits),
                 ad::logsumexp(ad::take_cols(logits, answer_cols)));
}

// Answer element positions mapped to their column in `candidates`.
inline std::vector<std::size_t> answer_columns(
    const std::vector<std::size_t>& candidates,
    const std::vector<std::size_t>& answers) {
  std::vector<std::size_t> cols;
  for (std::size_t a : answers) {
    auto it = std::find(candidates.begin(), candidates.end(), a);
    if (it == candidates.end()) {
      throw std::invalid_argument("answer " + std::to_string(a) +
                                  " is not a candidate");
    }
    cols.push_back(static_cast<std::size_t>(it - candidates.begin()));
  }
  return cols;
}

// 1 x c similarity logits f(h_i)^T f(h_j).
inline Var pointing_logits(const Var& hidden, const Linear& head, std::size_t i,
                           const std::vector<std::size_t>& candidates) {
  if (candidates.empty()) throw EmptyAnswerSetError("no candidates");
  Var q = head(ad::gather_rows(hidden, {i}));
  Var c = head(ad::gather_rows(hidden, candidates));
  return ad::matmul_nt(q, c);
}

inline Var pointing_loss(const Var& hidden, const Linear& head, std::size_t i,
                         const std::vector<std::size_t>& candidates,
                         const std::vector<std::size_t>& answers) {
  if (answers.empty()) throw EmptyAnswerSetError("empty answer set");
  return pointing_loss_from_logits(pointing_logits(hidden, head, i, candidates),
                                   answer_columns(candidates, answers));
}

// candidate_embeddings: phi_w rows of the candidate words, c x d.
inline Var input_pointing_logits(const Var& hidden, const Linear& head,
                                 std::size_t i,
                                 const Var& candidate_embeddings) {
  return ad::matmul_nt(head(ad::gather_rows(hidden, {i})),
                       candidate_embeddings);
}

inline Var input_pointing_loss(const Var& hidden, const Linear& head,
                               std::size_t i, const Var& candidate_embeddings,
                               const std::vector<std::size_t>& answer_cols) {
  return pointing_loss_from_logits(
      input_pointing_logits(hidden, head, i, candidate_embeddings),
      answer_cols);
}

// Mean cross-entropy of rows h (m x d) against the tied table.
inline Var word_cloze_loss(const Var& h, const Var& word_table,
                           const std::vector<WordId>& truth) {
  if (h.rows() != truth.size() || truth.empty()) {
    throw DimensionError("word_cloze_loss: one true id per row required");
  }
  Tensor target(truth.size(), word_table.rows());
  for (std::size_t r = 0; r < truth.size(); ++r) {
    if (truth[r] < 0 || static_cast<std::size_t>(truth[r]) >= word_table.rows()) {
      throw UnknownWordError("cloze target outside the trained table");
    }
    target(r, static_cast<std::size_t>(truth[r])) = 1;
  }
  Var logits = ad::matmul_nt(h, word_table);
  return ad::scale(ad::cross_entropy(logits, target),
                   1.0 / static_cast<double>(truth.size()));
}

// projected: g(h_i), 1 x d. positive: 1 x d. negatives: n x d (n >= 1).
inline Var visual_cloze_loss(const Var& projected, const Var& positive,
                             const Var& negatives) {
  if (negatives.rows() == 0) throw std::invalid_argument("no negatives");
  Var cp = ad::cosine_similarity(projected, positive);   // 1 x 1
  Var cn = ad::cosine_similarity(projected, negatives);  // 1 x n
  Var cp_row = ad::matmul(cp, Var::constant(Tensor(1, negatives.rows(), 1.0)));
  return ad::mean(ad::relu(ad::add_scalar(ad::sub(cn, cp_row), 1.0)));
}

struct LossTerms {
  std::optional<Var> point;
  std::optional<Var> input_point;
  std::optional<Var> cloze;
  std::optional<Var> vision;

  bool any() const { return point || input_point || cloze || vision; }
};

inline Var total_loss(const LossTerms& t, const LossWeights& w) {
  w.validate();
  if (!t.any()) throw std::invalid_argument("no active loss term");
  std::vector<Var> parts;
  if (t.point) parts.push_back(*t.point);
  if (t.input_point && w.input_pointing) parts.push_back(*t.input_point);
  if (t.cloze) parts.push_back(ad::scale(*t.cloze, w.alpha));
  if (t.vision) parts.push_back(ad::scale(*t.vision, w.beta));
  if (parts.empty()) throw std::invalid_argument("no active loss term");
  return ad::add_all(parts);
}

// Unmasked real-word positions of non-target examples.
inline std::vector<std::size_t> pointing_candidates(const FlatEpisode& flat) {
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < flat.size(); ++j) {
    const auto& e = flat.elements[j];
    if (e.kind == ElementKind::text && !e.masked && !flat.is_target(j))
      out.push_back(j);
  }
  return out;
}

struct PointingQuery {
  std::size_t position = 0;
  std::vector<std::size_t> answers;  // every candidate carrying the word
};

// One query per pointing position of the target; queries without any
// answer are counted in `skipped`.
inline std::vector<PointingQuery> pointing_queries(
    const FlatEpisode& flat, const std::vector<std::size_t>& candidates,
    std::size_t* skipped = nullptr) {
  std::vector<PointingQuery> out;
  for (std::size_t i = 0; i < flat.size(); ++i) {
    const auto& e = flat.elements[i];
    if (e.kind != ElementKind::text || !e.pointing || !flat.is_target(i))
      continue;
    PointingQuery q{i, {}};
    for (std::size_t j : candidates)
      if (flat.elements[j].label == e.label) q.answers.push_back(j);
    if (q.answers.empty()) {
      if (skipped) ++*skipped;
      continue;
    }
    out.push_back(std::move(q));
  }
  return out;
}

struct EpisodeLosses {
  LossTerms terms;
  std::optional<Var> total;  // absent when no term applies
  std::size_t pointing_count = 0;
  std::size_t pointing_skipped = 0;
  std::size_t cloze_count = 0;
  std::size_t cloze_oov_excluded = 0;
  std::size_t vision_count = 0;
};

inline EpisodeLosses episode_losses(const model::ExpertModel& m,
                                    const FlatEpisode& flat,
                                    const Vocabulary& vocab,
                                    const LossWeights& w,
                                    const model::ForwardOptions& opt = {}) {
  const auto& P = m.params();
  EpisodeLosses out;
  Var h = m.forward(flat, vocab, opt);

  const auto candidates = pointing_candidates(flat);
  const auto queries = pointing_queries(flat, candidates, &out.pointing_skipped);
  if (!queries.empty()) {
    Var fc = P.pointing(ad::gather_rows(h, candidates));
    std::vector<std::size_t> qpos;
    for (const auto& q : queries) qpos.push_back(q.position);
    Var fq = P.pointing(ad::gather_rows(h, qpos));
    Var logits = ad::matmul_nt(fq, fc);  // queries x candidates
    std::optional<Var> input_logits;
    if (w.input_pointing) {
      std::vector<WordId> ids;
      for (std::size_t j : candidates) ids.push_back(flat.elements[j].label);
      input_logits = ad::matmul_nt(
          fq, model::word_embeddings(P.encoder, vocab, ids));
    }
    std::vector<Var> point, input_point;
    for (std::size_t r = 0; r < queries.size(); ++r) {
      const auto cols = answer_columns(candidates, queries[r].answers);
      point.push_back(
          pointing_loss_from_logits(ad::gather_rows(logits, {r}), cols));
      if (input_logits) {
        input_point.push_back(pointing_loss_from_logits(
            ad::gather_rows(*input_logits, {r}), cols));
      }
    }
    const double inv = 1.0 / static_cast<double>(queries.size());
    out.terms.point = ad::scale(ad::add_all(point), inv);
    if (!input_point.empty())
      out.terms.input_point = ad::scale(ad::add_all(input_point), inv);
    out.pointing_count = queries.size();
  }

  std::vector<std::size_t> cloze_rows;
  std::vector<WordId> cloze_ids;
  for (std::size_t i = 0; i < flat.size(); ++i) {
    const auto& e = flat.elements[i];
    if (e.kind != ElementKind::text || !e.masked) continue;
    if (vocab.is_oov(e.label)) {
      ++out.cloze_oov_excluded;
      continue;
    }
    cloze_rows.push_back(i);
    cloze_ids.push_back(e.label);
  }
  if (!cloze_rows.empty()) {
    out.terms.cloze = word_cloze_loss(ad::gather_rows(h, cloze_rows),
                                      P.encoder.word_table, cloze_ids);
    out.cloze_count = cloze_rows.size();
  }

  std::vector<std::size_t> region_rows, masked_regions;
  for (std::size_t i = 0; i < flat.size(); ++i) {
    if (flat.elements[i].kind != ElementKind::image) continue;
    if (flat.elements[i].masked) masked_regions.push_back(region_rows.size());
    region_rows.push_back(i);
  }
  if (!masked_regions.empty() && region_rows.size() > 1) {
    Tensor feats(region_rows.size(), P.encoder.region_proj.in_features());
    for (std::size_t r = 0; r < region_rows.size(); ++r) {
      const auto& f = flat.elements[region_rows[r]].region.feature;
      std::copy(f.begin(), f.end(), feats.row(r).begin());
    }
    Var enc = model::region_feature_encoding(P.encoder, feats);
    std::vector<std::size_t> masked_elements;
    for (std::size_t r : masked_regions) masked_elements.push_back(region_rows[r]);
    Var g = P.visual(ad::gather_rows(h, masked_elements));
    std::vector<Var> vision;
    for (std::size_t t = 0; t < masked_regions.size(); ++t) {
      const std::size_t r = masked_regions[t];
      std::vector<std::size_t> neg;
      for (std::size_t o = 0; o < region_rows.size(); ++o)
        if (o != r) neg.push_back(o);
      vision.push_back(visual_cloze_loss(ad::gather_rows(g, {t}),
                                         ad::gather_rows(enc, {r}),
                                         ad::gather_rows(enc, neg)));
    }
    out.terms.vision = ad::scale(ad::add_all(vision),
                                 1.0 / static_cast<double>(vision.size()));
    out.vision_count = vision.size();
  }

  if (out.terms.any()) out.total = total_loss(out.terms, w);
  return out;
}

}  // namespace expert::objectives
