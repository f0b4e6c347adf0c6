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

#include <cmath>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "expert/objectives/losses.hpp"
#include "model_fixture.hpp"
#include "test_support.hpp"

namespace expert {
namespace {

using ad::Var;
using model::Linear;
using testing::gradient_check;
using testing::random_tensor;

constexpr double kGradTol = 1e-3;
constexpr int kTrials = 20;

double cosine(std::span<const double> a, std::span<const double> b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return ab / std::sqrt(aa * bb);
}

TEST(PointingLossTest, MatchesHandComputedValue) {
  Var logits = Var::constant(Tensor::from_rows({{1, 2, 3}}));
  const double e1 = std::exp(1.0), e2 = std::exp(2.0), e3 = std::exp(3.0);
  EXPECT_NEAR(objectives::pointing_loss_from_logits(logits, {0, 2}).item(),
              -std::log((e1 + e3) / (e1 + e2 + e3)), 1e-12);
}

TEST(PointingLossTest, ZeroWhenEveryCandidateIsAnAnswer) {
  std::mt19937_64 rng(1);
  Var logits = Var::constant(random_tensor(1, 6, rng, -5, 5));
  EXPECT_NEAR(objectives::pointing_loss_from_logits(logits, {0, 1, 2, 3, 4, 5}).item(),
              0.0, 1e-12);
}

TEST(PointingLossTest, NonNegativeAndBoundedByUniformWhenLogitsEqual) {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 100; ++t) {
    Var logits = Var::constant(random_tensor(1, 7, rng, -3, 3));
    EXPECT_GE(objectives::pointing_loss_from_logits(logits, {static_cast<std::size_t>(t % 7)}).item(), 0.0);
  }
  Var flat = Var::constant(Tensor(1, 4, 0.5));
  EXPECT_NEAR(objectives::pointing_loss_from_logits(flat, {1}).item(), std::log(4.0), 1e-12);
}

TEST(PointingLossTest, EmptyAnswerSetRejected) {
  Var logits = Var::constant(Tensor(1, 3, 0.0));
  EXPECT_THROW(objectives::pointing_loss_from_logits(logits, {}),
               objectives::EmptyAnswerSetError);
  EXPECT_THROW(objectives::pointing_loss_from_logits(logits, {3}), std::out_of_range);
}

TEST(PointingLossTest, LogitsAreProjectedDotProducts) {
  std::mt19937_64 rng(3);
  Var h = Var::constant(random_tensor(5, 4, rng));
  Linear f{Var::constant(random_tensor(4, 4, rng)), Var::constant(random_tensor(1, 4, rng))};
  const Tensor logits = objectives::pointing_logits(h, f, 0, {2, 4}).value();
  auto project = [&](std::size_t r) {
    std::vector<double> y(4);
    for (std::size_t o = 0; o < 4; ++o) {
      y[o] = f.bias.value()(0, o);
      for (std::size_t i = 0; i < 4; ++i) y[o] += f.weight.value()(o, i) * h.value()(r, i);
    }
    return y;
  };
  const auto q = project(0);
  for (std::size_t c = 0; c < 2; ++c) {
    const auto k = project(c == 0 ? 2 : 4);
    double dot = 0;
    for (std::size_t i = 0; i < 4; ++i) dot += q[i] * k[i];
    EXPECT_NEAR(logits[c], dot, 1e-12);
  }
}

TEST(PointingLossTest, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(4);
  for (int t = 0; t < kTrials; ++t) {
    auto f = [](const std::vector<Var>& v) {
      return objectives::pointing_loss(v[0], Linear{v[1], v[2]}, 0, {1, 3, 4, 5}, {3, 5});
    };
    const double err = gradient_check(
        f, {random_tensor(6, 5, rng), random_tensor(5, 5, rng), random_tensor(1, 5, rng)}, rng);
    EXPECT_LT(err, kGradTol) << "trial " << t;
  }
}

TEST(InputPointingLossTest, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < kTrials; ++t) {
    auto f = [](const std::vector<Var>& v) {
      return objectives::input_pointing_loss(v[0], Linear{v[1], v[2]}, 2, v[3], {0, 2});
    };
    const double err = gradient_check(
        f,
        {random_tensor(4, 5, rng), random_tensor(5, 5, rng), random_tensor(1, 5, rng),
         random_tensor(3, 5, rng)},
        rng);
    EXPECT_LT(err, kGradTol) << "trial " << t;
  }
}

TEST(WordClozeLossTest, MatchesSoftmaxOracle) {
  std::mt19937_64 rng(6);
  const Tensor h = random_tensor(2, 3, rng);
  const Tensor table = random_tensor(5, 3, rng);
  const std::vector<WordId> truth = {4, 1};
  double expected = 0;
  for (std::size_t r = 0; r < 2; ++r) {
    std::vector<double> logit(5);
    double z = 0;
    for (std::size_t w = 0; w < 5; ++w) {
      for (std::size_t c = 0; c < 3; ++c) logit[w] += h(r, c) * table(w, c);
      z += std::exp(logit[w]);
    }
    expected += -(logit[static_cast<std::size_t>(truth[r])] - std::log(z)) / 2;
  }
  EXPECT_NEAR(objectives::word_cloze_loss(Var::constant(h), Var::constant(table), truth).item(),
              expected, 1e-12);
}

TEST(WordClozeLossTest, RejectsIdsOutsideTable) {
  Var h = Var::constant(Tensor(1, 3, 0.1));
  Var table = Var::constant(Tensor(4, 3, 0.1));
  EXPECT_THROW(objectives::word_cloze_loss(h, table, {4}), UnknownWordError);
  EXPECT_THROW(objectives::word_cloze_loss(h, table, {1, 2}), DimensionError);
}

TEST(WordClozeLossTest, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(7);
  for (int t = 0; t < kTrials; ++t) {
    auto f = [](const std::vector<Var>& v) {
      return objectives::word_cloze_loss(v[0], v[1], {2, 0, 5});
    };
    EXPECT_LT(gradient_check(f, {random_tensor(3, 4, rng), random_tensor(6, 4, rng)}, rng),
              kGradTol)
        << "trial " << t;
  }
}

TEST(VisualClozeLossTest, MatchesCosineHingeOracle) {
  std::mt19937_64 rng(8);
  const Tensor p = random_tensor(1, 4, rng), pos = random_tensor(1, 4, rng);
  const Tensor neg = random_tensor(3, 4, rng);
  const double cp = cosine(p.row(0), pos.row(0));
  double expected = 0;
  for (std::size_t n = 0; n < 3; ++n)
    expected += std::max(0.0, 1 - cp + cosine(p.row(0), neg.row(n))) / 3;
  EXPECT_NEAR(objectives::visual_cloze_loss(Var::constant(p), Var::constant(pos),
                                            Var::constant(neg))
                  .item(),
              expected, 1e-12);
}

TEST(VisualClozeLossTest, ZeroWhenMarginSatisfied) {
  Var p = Var::constant(Tensor::from_rows({{1, 0, 0}}));
  Var neg = Var::constant(Tensor::from_rows({{0, 1, 0}, {0, 0, 1}}));
  // The cosine norm guard leaves a residue of order 1e-12.
  EXPECT_NEAR(objectives::visual_cloze_loss(p, p, neg).item(), 0.0, 1e-9);
}

TEST(VisualClozeLossTest, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(9);
  for (int t = 0; t < kTrials; ++t) {
    auto f = [](const std::vector<Var>& v) {
      return objectives::visual_cloze_loss(v[0], v[1], v[2]);
    };
    EXPECT_LT(gradient_check(
                  f, {random_tensor(1, 5, rng), random_tensor(1, 5, rng), random_tensor(4, 5, rng)},
                  rng),
              kGradTol)
        << "trial " << t;
  }
}

TEST(TotalLossTest, WeightsCombineTerms) {
  objectives::LossTerms t;
  t.point = Var::constant(Tensor(1, 1, 2.0));
  t.cloze = Var::constant(Tensor(1, 1, 3.0));
  t.vision = Var::constant(Tensor(1, 1, 5.0));
  t.input_point = Var::constant(Tensor(1, 1, 7.0));
  EXPECT_DOUBLE_EQ(objectives::total_loss(t, {0.5, 0.2, false}).item(), 2 + 1.5 + 1.0);
  EXPECT_DOUBLE_EQ(objectives::total_loss(t, {0.5, 0.2, true}).item(), 2 + 1.5 + 1.0 + 7);
  EXPECT_THROW(objectives::total_loss({}, {}), std::invalid_argument);
  EXPECT_THROW(objectives::total_loss(t, {-1, 1, false}), std::invalid_argument);
}

TEST(EpisodeLossTest, CandidatesAndAnswersFollowTheRules) {
  const auto& w = testing::tiny_world();
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 200; ++trial) {
    const FlatEpisode flat = flatten_episode(w.pointing_episode(rng));
    const auto cand = objectives::pointing_candidates(flat);
    for (std::size_t j : cand) {
      EXPECT_TRUE(flat.is_word(j));
      EXPECT_FALSE(flat.is_target(j));
      EXPECT_FALSE(flat.elements[j].masked);
    }
    std::size_t expected = 0;
    for (std::size_t j = 0; j < flat.size(); ++j)
      expected += flat.is_word(j) && !flat.is_target(j) && !flat.elements[j].masked;
    EXPECT_EQ(cand.size(), expected);
    std::size_t skipped = 0;
    for (const auto& q : objectives::pointing_queries(flat, cand, &skipped)) {
      EXPECT_TRUE(flat.elements[q.position].pointing);
      const std::set<std::size_t> answers(q.answers.begin(), q.answers.end());
      for (std::size_t j : cand)
        EXPECT_EQ(answers.contains(j), flat.elements[j].label == flat.elements[q.position].label);
    }
  }
}

TEST(EpisodeLossTest, TotalIsWeightedSumOfTerms) {
  const auto& w = testing::tiny_world();
  model::ExpertModel m(testing::tiny_hyperparams(), w.vocab.trained_size(), 1);
  std::mt19937_64 rng(11);
  for (int t = 0; t < 20; ++t) {
    const FlatEpisode flat = flatten_episode(w.pointing_episode(rng));
    const objectives::LossWeights weights{0.7, 1.3, true};
    const auto el = objectives::episode_losses(m, flat, w.vocab, weights);
    ASSERT_TRUE(el.total.has_value());
    double expected = 0;
    if (el.terms.point) expected += el.terms.point->item();
    if (el.terms.input_point) expected += el.terms.input_point->item();
    if (el.terms.cloze) expected += 0.7 * el.terms.cloze->item();
    if (el.terms.vision) expected += 1.3 * el.terms.vision->item();
    EXPECT_NEAR(el.total->item(), expected, 1e-12);
    // Background masking can hide the only answer; such queries are skipped.
    EXPECT_GT(el.pointing_count + el.pointing_skipped, 0u);
  }
}

TEST(EpisodeLossTest, OovLabelsExcludedFromClozeAndCounted) {
  const auto& w = testing::tiny_world();
  model::ExpertModel m(testing::tiny_hyperparams(), w.vocab.trained_size(), 1);
  Episode ep;
  ep.examples = {w.new_word.at(0)};
  ep.roles = {Role::target};
  for (std::size_t p = 0; p < ep.examples[0].tokens.size(); ++p)
    ep.text_masks.push_back({0, p, Vocabulary::kMask, false});
  const auto el = objectives::episode_losses(m, flatten_episode(ep), w.vocab, {});
  std::size_t oov = 0;
  for (WordId t : ep.examples[0].tokens) oov += w.vocab.is_oov(t);
  EXPECT_GT(oov, 0u);
  EXPECT_EQ(el.cloze_oov_excluded, oov);
  EXPECT_EQ(el.cloze_count, ep.examples[0].tokens.size() - oov);
}

TEST(EpisodeLossTest, VisualTermNeedsAnotherRegion) {
  const auto& w = testing::tiny_world();
  model::ExpertModel m(testing::tiny_hyperparams(), w.vocab.trained_size(), 1);
  Episode ep;
  ep.examples = {w.train[0]};
  ep.examples[0].regions.resize(1);
  ep.roles = {Role::target};
  ep.image_masks = {{0, 0, true}};
  ep.text_masks = {{0, 0, Vocabulary::kMask, false}};
  const auto el = objectives::episode_losses(m, flatten_episode(ep), w.vocab, {});
  EXPECT_FALSE(el.terms.vision.has_value());
  EXPECT_EQ(el.vision_count, 0u);
  EXPECT_TRUE(el.terms.cloze.has_value());
}

TEST(EpisodeLossTest, NothingMaskedMeansNoLoss) {
  const auto& w = testing::tiny_world();
  model::ExpertModel m(testing::tiny_hyperparams(), w.vocab.trained_size(), 1);
  Episode ep;
  ep.examples = {w.train[0]};
  ep.roles = {Role::target};
  const auto el = objectives::episode_losses(m, flatten_episode(ep), w.vocab, {});
  EXPECT_FALSE(el.total.has_value());
}

TEST(EpisodeLossTest, FullModelTotalLossGradient) {
  const auto& w = testing::tiny_world();
  model::ExpertModel m(testing::tiny_hyperparams(), w.vocab.trained_size(), 12);
  std::mt19937_64 rng(13);
  const FlatEpisode flat = flatten_episode(w.pointing_episode(rng));
  auto loss = [&] {
    return *objectives::episode_losses(m, flat, w.vocab, {1.0, 1.0, true}).total;
  };
  EXPECT_LT(testing::parameter_gradient_check(loss, m.params().vars()), kGradTol);
}

}  // namespace
}  // namespace expert
