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

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "expert/data/episode.hpp"
#include "expert/data/hyperparams.hpp"
#include "expert/data/vocabulary.hpp"
#include "expert/model/attention_mask.hpp"
#include "expert/model/encoder.hpp"
#include "expert/model/transformer.hpp"

namespace expert::model {

struct ModelParams {
  EncoderParams encoder;
  TransformerParams transformer;
  Linear pointing;  // f, d -> d
  Linear visual;    // g, d -> d

  // Fixed order; checkpoints rely on it.
  std::vector<NamedParameter> named() const {
    std::vector<NamedParameter> out;
    encoder.collect(out);
    transformer.collect(out);
    pointing.collect("pointing", out);
    visual.collect("visual", out);
    return out;
  }
  std::vector<Var> vars() const {
    std::vector<Var> out;
    for (auto& p : named()) out.push_back(p.var);
    return out;
  }
  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (auto& p : named()) n += p.var.value().size();
    return n;
  }
};

struct ForwardOptions {
  AttentionPath path = AttentionPath::sparse;
  std::optional<MaskVariant> variant;        // defaults to the hyperparams
  std::span<const AttentionMask> layer_masks;  // explicit override (dense)
};

class ExpertModel {
 public:
  ExpertModel(Hyperparams hp, std::size_t trained_words, std::uint64_t seed)
      : hp_(std::move(hp)) {
    hp_.validate();
    std::mt19937_64 rng(seed);
    params_.encoder = make_encoder(hp_, trained_words, rng);
    params_.transformer = make_transformer(hp_, rng);
    const auto d = static_cast<std::size_t>(hp_.hidden);
    params_.pointing = make_linear(d, d, true, rng);
    params_.visual = make_linear(d, d, true, rng);
  }

  const Hyperparams& hyperparams() const { return hp_; }
  const ModelParams& params() const { return params_; }
  ModelParams& params() { return params_; }

  Var encode(const FlatEpisode& flat, const Vocabulary& vocab) const {
    return encode_episode(params_.encoder, vocab, flat);
  }

  // Final hidden states, L x d.
  Var forward(const FlatEpisode& flat, const Vocabulary& vocab,
              const ForwardOptions& opt = {}) const {
    Var x = encode(flat, vocab);
    if (!opt.layer_masks.empty()) {
      return run_transformer(x, params_.transformer, opt.layer_masks,
                             AttentionPath::dense);
    }
    const MaskVariant variant = opt.variant.value_or(hp_.mask_variant);
    if (opt.path == AttentionPath::sparse) {
      const ad::SparsePattern pattern = build_sparse_pattern(variant, flat);
      return run_transformer(x, params_.transformer, {}, opt.path,
                             std::span<const ad::SparsePattern>(&pattern, 1));
    }
    const AttentionMask mask = build_mask(variant, flat);
    return run_transformer(x, params_.transformer,
                           std::span<const AttentionMask>(&mask, 1), opt.path);
  }

 private:
  Hyperparams hp_;
  ModelParams params_;
};

}  // namespace expert::model
