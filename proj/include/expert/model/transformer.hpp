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

// Pre-norm transformer block:
//   A = MHA(LN1(H), mask);  H' = H + W_o A + b_o
//   H'' = H' + FF2(gelu(FF1(LN2(H'))))
// The stack ends with a final layer norm.

#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "expert/data/hyperparams.hpp"
#include "expert/model/attention_mask.hpp"
#include "expert/model/layers.hpp"

namespace expert::model {

enum class AttentionPath { dense, sparse };

struct LayerParams {
  std::size_t heads = 1;
  LayerNorm ln1;
  Linear wq, wk, wv;  // d -> d, no bias; head h owns a column slice
  Linear wo;          // d -> d
  LayerNorm ln2;
  Linear ff1;  // d -> m*d
  Linear ff2;  // m*d -> d

  void collect(const std::string& prefix,
               std::vector<NamedParameter>& out) const {
    ln1.collect(prefix + ".ln1", out);
    wq.collect(prefix + ".wq", out);
    wk.collect(prefix + ".wk", out);
    wv.collect(prefix + ".wv", out);
    wo.collect(prefix + ".wo", out);
    ln2.collect(prefix + ".ln2", out);
    ff1.collect(prefix + ".ff1", out);
    ff2.collect(prefix + ".ff2", out);
  }
};

template <class Rng>
LayerParams make_layer(const Hyperparams& hp, Rng& rng) {
  const auto d = static_cast<std::size_t>(hp.hidden);
  const auto m = static_cast<std::size_t>(hp.ffn_multiplier) * d;
  if (hp.heads <= 0 || d % static_cast<std::size_t>(hp.heads) != 0) {
    throw std::invalid_argument("head count must divide hidden size");
  }
  LayerParams l;
  l.heads = static_cast<std::size_t>(hp.heads);
  l.ln1 = make_layer_norm(d);
  l.wq = make_linear(d, d, false, rng);
  l.wk = make_linear(d, d, false, rng);
  l.wv = make_linear(d, d, false, rng);
  l.wo = make_linear(d, d, true, rng);
  l.ln2 = make_layer_norm(d);
  l.ff1 = make_linear(d, m, true, rng);
  l.ff2 = make_linear(m, d, true, rng);
  return l;
}

// Multi-head attention of x over itself restricted by the mask. The dense
// path materialises the masked L x L score matrix per head; the sparse path
// only touches admissible pairs.
inline Var multi_head_attention(const Var& x, const LayerParams& layer,
                                const AttentionMask& mask,
                                AttentionPath path,
                                const ad::SparsePattern* pattern = nullptr) {
  const std::size_t n = x.rows(), d = x.cols();
  const std::size_t dh = d / layer.heads;
  const double scale = std::sqrt(static_cast<double>(dh));
  if (path == AttentionPath::sparse && pattern) {
    return ad::sparse_attention(layer.wq(x), layer.wk(x), layer.wv(x),
                                layer.heads, *pattern, scale);
  }
  if (mask.size() != n) {
    throw DimensionError("mask size " + std::to_string(mask.size()) +
                         " does not match " + std::to_string(n) + " elements");
  }
  Var q = layer.wq(x), k = layer.wk(x), v = layer.wv(x);
  if (path == AttentionPath::sparse) {
    ad::SparsePattern p;
    p.keys.resize(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (mask(i, j)) p.keys[i].push_back(j);
    return ad::sparse_attention(q, k, v, layer.heads, p, scale);
  }
  std::vector<Var> outs;
  outs.reserve(layer.heads);
  for (std::size_t h = 0; h < layer.heads; ++h) {
    Var qh = ad::slice_cols(q, h * dh, (h + 1) * dh);
    Var kh = ad::slice_cols(k, h * dh, (h + 1) * dh);
    Var vh = ad::slice_cols(v, h * dh, (h + 1) * dh);
    Var s = ad::masked_softmax_rows(ad::matmul_nt(qh, kh), mask.matrix, scale);
    outs.push_back(ad::matmul(s, vh));
  }
  return layer.heads == 1 ? outs.front() : ad::concat_cols(outs);
}

// One transformer layer.
inline Var attend(const Var& h, const AttentionMask& mask,
                  const LayerParams& layer,
                  AttentionPath path = AttentionPath::dense,
                  const ad::SparsePattern* pattern = nullptr) {
  Var a = multi_head_attention(layer.ln1(h), layer, mask, path, pattern);
  Var h1 = ad::add(h, layer.wo(a));
  Var f = layer.ff2(ad::gelu(layer.ff1(layer.ln2(h1))));
  return ad::add(h1, f);
}

struct TransformerParams {
  std::vector<LayerParams> layers;
  LayerNorm final_norm;

  void collect(std::vector<NamedParameter>& out) const {
    for (std::size_t z = 0; z < layers.size(); ++z)
      layers[z].collect("layer" + std::to_string(z), out);
    final_norm.collect("final_norm", out);
  }
};

template <class Rng>
TransformerParams make_transformer(const Hyperparams& hp, Rng& rng) {
  TransformerParams t;
  for (int z = 0; z < hp.layers; ++z) t.layers.push_back(make_layer(hp, rng));
  t.final_norm = make_layer_norm(static_cast<std::size_t>(hp.hidden));
  return t;
}

// Runs the stack. `masks` holds either one mask for every layer or one per
// layer. On the sparse path, `patterns` (same count rule) may replace the
// dense masks entirely.
inline Var run_transformer(const Var& x, const TransformerParams& t,
                           std::span<const AttentionMask> masks,
                           AttentionPath path = AttentionPath::dense,
                           std::span<const ad::SparsePattern> patterns = {}) {
  const bool use_patterns = path == AttentionPath::sparse && !patterns.empty();
  const std::size_t count = use_patterns ? patterns.size() : masks.size();
  if (count != 1 && count != t.layers.size()) {
    throw std::invalid_argument("need one mask or one mask per layer");
  }
  static const AttentionMask kUnused;
  Var h = x;
  for (std::size_t z = 0; z < t.layers.size(); ++z) {
    const std::size_t m = count == 1 ? 0 : z;
    h = attend(h, use_patterns ? kUnused : masks[m], t.layers[z], path,
               use_patterns ? &patterns[m] : nullptr);
  }
  return t.final_norm(h);
}

}  // namespace expert::model
