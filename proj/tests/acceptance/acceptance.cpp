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

// Acceptance gate. Prints one PASS/FAIL line per criterion and exits
// non-zero if any fails. Pass criterion numbers as arguments to run a subset.
//
// The learning criteria train real models on the default world and take
// most of the runtime (about 40 minutes on one core).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "expert/data/dataset_io.hpp"
#include "expert/eval/probes.hpp"
#include "expert/eval/report.hpp"
#include "expert/model/attention_mask.hpp"
#include "expert/objectives/losses.hpp"
#include "expert/sampler/episode_sampler.hpp"
#include "expert/train/trainer.hpp"
#include "expert/world/synthetic_world.hpp"
#include "model_fixture.hpp"
#include "test_support.hpp"

namespace expert {
namespace {

using ad::Var;
using model::AttentionPath;
using model::ExpertModel;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) pass = false;
    if (!detail.empty()) detail += "; ";
    detail += (ok ? "" : "FAILED ") + what;
  }
};

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), f, a);
  return buf;
}

std::string fmt(const char* f, double a, double b) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), f, a, b);
  return buf;
}

std::string fmt(const char* f, double a, double b, double c) {
  char buf[192];
  std::snprintf(buf, sizeof(buf), f, a, b, c);
  return buf;
}

void info(const std::string& line) {
  std::printf("  info: %s\n", line.c_str());
  std::fflush(stdout);
}

constexpr MaskVariant kVariants[] = {MaskVariant::isolated, MaskVariant::full,
                                     MaskVariant::target_to_reference, MaskVariant::via_vision};

// ---------------------------------------------------------------------------
// 1. Gradient integrity.

Outcome gradient_integrity() {
  Outcome o;
  const auto t0 = Clock::now();
  using testing::gradient_check;
  using testing::random_tensor;
  constexpr int kTrials = 20;
  constexpr double kTol = 1e-3;
  std::mt19937_64 rng(101);
  auto sweep = [&](const std::string& name, const std::function<double()>& trial) {
    double worst = 0;
    for (int t = 0; t < kTrials; ++t) worst = std::max(worst, trial());
    o.require(worst < kTol, name + fmt(" worst rel err %.2e", worst));
  };
  sweep("pointing", [&] {
    return gradient_check(
        [](const std::vector<Var>& v) {
          return objectives::pointing_loss(v[0], model::Linear{v[1], v[2]}, 0, {1, 3, 4, 5},
                                           {3, 5});
        },
        {random_tensor(6, 5, rng), random_tensor(5, 5, rng), random_tensor(1, 5, rng)}, rng);
  });
  sweep("input pointing", [&] {
    return gradient_check(
        [](const std::vector<Var>& v) {
          return objectives::input_pointing_loss(v[0], model::Linear{v[1], v[2]}, 2, v[3],
                                                 {0, 2});
        },
        {random_tensor(4, 5, rng), random_tensor(5, 5, rng), random_tensor(1, 5, rng),
         random_tensor(3, 5, rng)},
        rng);
  });
  sweep("word cloze", [&] {
    return gradient_check(
        [](const std::vector<Var>& v) { return objectives::word_cloze_loss(v[0], v[1], {2, 0, 5}); },
        {random_tensor(3, 4, rng), random_tensor(6, 4, rng)}, rng);
  });
  sweep("visual cloze", [&] {
    return gradient_check(
        [](const std::vector<Var>& v) { return objectives::visual_cloze_loss(v[0], v[1], v[2]); },
        {random_tensor(1, 5, rng), random_tensor(1, 5, rng), random_tensor(4, 5, rng)}, rng);
  });

  // Full Z=2, d=8 model: the total loss (with input pointing) and a random
  // projection of the encoder output, each on fresh episodes and weights.
  const auto& w = testing::tiny_world();
  std::uint64_t seed = 200;
  sweep("total (Z=2,d=8)", [&] {
    ExpertModel m(testing::tiny_hyperparams(), w.vocab.trained_size(), ++seed);
    const FlatEpisode flat = flatten_episode(w.pointing_episode(rng));
    return testing::parameter_gradient_check(
        [&] { return *objectives::episode_losses(m, flat, w.vocab, {1.0, 1.0, true}).total; },
        m.params().vars());
  });
  sweep("model output (Z=2,d=8)", [&] {
    ExpertModel m(testing::tiny_hyperparams(), w.vocab.trained_size(), ++seed);
    const FlatEpisode flat = flatten_episode(w.pointing_episode(rng));
    const Tensor weights = random_tensor(flat.size(), 8, rng);
    return testing::parameter_gradient_check(
        [&] { return ad::sum(ad::mul(m.forward(flat, w.vocab), Var::constant(weights))); },
        m.params().vars());
  });
  const double secs = seconds_since(t0);
  o.require(secs < 120, fmt("runtime %.1f s", secs));
  return o;
}

// ---------------------------------------------------------------------------
// 2. Isolation equivalence.

FlatEpisode only_example(const FlatEpisode& flat, std::size_t x) {
  FlatEpisode sub = flat;
  sub.elements.clear();
  for (const auto& e : flat.elements)
    if (e.example == x) sub.elements.push_back(e);
  return sub;
}

Outcome isolation_equivalence() {
  Outcome o;
  const auto& w = testing::tiny_world();
  std::mt19937_64 rng(301);
  ExpertModel m(testing::tiny_hyperparams(MaskVariant::isolated), w.vocab.trained_size(), 302);
  double worst = 0;
  bool bit_identical = true, perturbation_visible = true;
  int episodes = 0;
  for (int t = 0; t < 20; ++t) {
    const Episode ep = w.pointing_episode(rng);
    const FlatEpisode flat = flatten_episode(ep);
    Episode changed = ep;
    for (auto& r : changed.examples[0].regions)
      for (auto& f : r.feature) f += 0.5;
    const FlatEpisode other = flatten_episode(changed);
    ++episodes;
    for (AttentionPath path : {AttentionPath::dense, AttentionPath::sparse}) {
      const Tensor joint = m.forward(flat, w.vocab, {path, std::nullopt, {}}).value();
      for (std::size_t x = 0; x < flat.num_examples(); ++x) {
        const Tensor alone = m.forward(only_example(flat, x), w.vocab, {path, std::nullopt, {}}).value();
        std::size_t r = 0;
        for (std::size_t i = 0; i < flat.size(); ++i) {
          if (flat.elements[i].example != x) continue;
          for (std::size_t c = 0; c < joint.cols(); ++c)
            worst = std::max(worst, std::abs(joint(i, c) - alone(r, c)));
          ++r;
        }
      }
      const Tensor perturbed = m.forward(other, w.vocab, {path, std::nullopt, {}}).value();
      for (std::size_t i = 0; i < flat.size(); ++i) {
        if (flat.elements[i].example == 0) continue;
        for (std::size_t c = 0; c < joint.cols(); ++c)
          bit_identical &= joint(i, c) == perturbed(i, c);
      }
      perturbation_visible &= max_abs_diff(joint, perturbed) > 0;
    }
  }
  o.require(worst <= 1e-5, fmt("max |joint - separate| %.2e over %.0f episodes", worst, episodes));
  o.require(bit_identical, "other examples bit-identical under perturbation");
  o.require(perturbation_visible, "perturbed example changes");
  return o;
}

// ---------------------------------------------------------------------------
// 3. Cost contract.

Episode uniform_episode(std::size_t k, std::size_t regions, std::size_t tokens) {
  Episode ep;
  for (std::size_t x = 0; x < k; ++x) {
    Example ex;
    for (std::size_t r = 0; r < regions; ++r) {
      Region reg;
      reg.feature.assign(8, 0.1 * static_cast<double>(r + 1));
      ex.regions.push_back(reg);
    }
    ex.tokens.assign(tokens, Vocabulary::kNumSpecial);
    ep.examples.push_back(ex);
    ep.roles.push_back(x == 0 ? Role::target : Role::distractor);
  }
  return ep;
}

Outcome cost_contract() {
  Outcome o;
  for (std::size_t n : {8u, 16u, 32u}) {
    const auto small = flatten_episode(uniform_episode(n, 3, 4));
    const auto big = flatten_episode(uniform_episode(2 * n, 3, 4));
    auto ratio = [&](MaskVariant v) {
      return static_cast<double>(model::count_attended_pairs(model::build_sparse_pattern(v, big))) /
             static_cast<double>(
                 model::count_attended_pairs(model::build_sparse_pattern(v, small)));
    };
    const double vv = ratio(MaskVariant::via_vision), tr = ratio(MaskVariant::target_to_reference),
                 full = ratio(MaskVariant::full);
    o.require(std::abs(vv - 2) <= 0.1 && std::abs(tr - 2) <= 0.1 && std::abs(full - 4) <= 0.1,
              fmt("n=%.0f doubling ratios via-vision %.3f tgt2ref %.3f", n, vv, tr) +
                  fmt(" full %.3f", full));
  }
  const auto& w = testing::tiny_world();
  std::mt19937_64 rng(401);
  double worst = 0;
  for (MaskVariant v : kVariants) {
    ExpertModel m(testing::tiny_hyperparams(v), w.vocab.trained_size(), 402);
    for (int t = 0; t < 5; ++t) {
      const FlatEpisode flat = flatten_episode(w.pointing_episode(rng));
      auto run = [&](AttentionPath path) {
        auto params = m.params().vars();
        for (auto& p : params) p.zero_grad();
        Var h = m.forward(flat, w.vocab, {path, v, {}});
        ad::sum(h).backward();
        std::vector<Tensor> out = {h.value()};
        for (auto& p : params) out.push_back(p.grad());
        return out;
      };
      const auto dense = run(AttentionPath::dense), sparse = run(AttentionPath::sparse);
      for (std::size_t i = 0; i < dense.size(); ++i)
        worst = std::max(worst, max_abs_diff(dense[i], sparse[i]));
    }
  }
  o.require(worst <= 1e-6, fmt("sparse vs dense max diff %.2e (outputs and gradients)", worst));
  return o;
}

// ---------------------------------------------------------------------------
// 4. Masking schedule.

Outcome masking_schedule() {
  Outcome o;
  constexpr int kDraws = 100000;
  std::mt19937_64 rng(501);
  const WorldSpec world = generate_world(WorldConfig{}, rng);
  const SplitSpec split = choose_split(world, 2, 1, 0.1, 0.81, rng);
  const Vocabulary vocab = build_training_vocabulary(world, split, 8);
  const Dataset train = to_dataset(make_split(world, split, 1000, rng).train, vocab);
  const WordIndex index(train);

  // Selection rates, counted per text position and per region over at least
  // kDraws of each.
  double text = 0, text_masked = 0, img = 0, img_masked = 0;
  while (text < kDraws || img < kDraws) {
    const Episode ep = sample_episode(train, index, 0, 0, {}, vocab, rng);
    text += static_cast<double>(ep.examples[0].tokens.size());
    img += static_cast<double>(ep.examples[0].regions.size());
    text_masked += static_cast<double>(ep.text_masks.size());
    img_masked += static_cast<double>(ep.image_masks.size());
  }
  o.require(std::abs(text_masked / text - 1.0 / 3) <= 0.01,
            fmt("text rate %.4f over %.0f positions", text_masked / text, text));
  o.require(std::abs(img_masked / img - 1.0 / 6) <= 0.01,
            fmt("image rate %.4f over %.0f regions", img_masked / img, img));

  // Replacement law. The random branch may redraw the original token, so
  // outcomes are classified by branch via the oracle shares.
  const WordId token = vocab.id(world.nouns[0] == split.held_out_nouns[0] ||
                                        split.is_held_out_word(world.nouns[0])
                                    ? world.verbs.back()
                                    : world.nouns[0]);
  int mask = 0, keep = 0, random = 0;
  for (int i = 0; i < kDraws; ++i) {
    const WordId out = apply_text_mask(token, rng, vocab);
    if (out == Vocabulary::kMask) ++mask;
    else if (out == token) ++keep;
    else ++random;
  }
  const double words = static_cast<double>(vocab.trained_word_ids().size());
  const double pm = mask / double(kDraws), pk = keep / double(kDraws), pr = random / double(kDraws);
  o.require(std::abs(pm - 0.8) <= 0.01 && std::abs(pk - (0.1 + 0.1 / words)) <= 0.01 &&
                std::abs(pr - (0.1 - 0.1 / words)) <= 0.01,
            fmt("mask/keep/random %.4f/%.4f/%.4f", pm, pk, pr));

  Region r;
  r.feature.assign(4, 1.0);
  int zeroed = 0;
  for (int i = 0; i < kDraws; ++i) zeroed += apply_image_mask(r, rng).zeroed;
  o.require(std::abs(zeroed / double(kDraws) - 0.9) <= 0.01,
            fmt("image zeroing %.4f", zeroed / double(kDraws)));
  return o;
}

// ---------------------------------------------------------------------------
// Shared setup for the learning criteria: the default world (24 nouns,
// 10 verbs, 2,000 examples) with its split, vocabulary and datasets.

struct DefaultWorld {
  WorldSpec world;
  SplitSpec split;
  SplitData raw;
  Vocabulary vocab;  // trained words plus held-out words as frozen OOV rows
  Dataset train, new_instance, new_composition, new_word;

  DefaultWorld(std::uint64_t seed, std::size_t dim) {
    std::mt19937_64 rng(seed);
    world = generate_world(WorldConfig{}, rng);
    split = choose_split(world, 2, 1, 0.1, 0.81, rng);
    raw = make_split(world, split, 2000, rng);
    vocab = build_training_vocabulary(world, split, dim);
    for (const auto& w : split.held_out_words())
      vocab.register_oov(w, world_part_of_speech(world, w), rng);
    train = to_dataset(raw.train, vocab);
    new_instance = to_dataset(raw.test_new_instance, vocab);
    new_composition = to_dataset(raw.test_new_composition, vocab);
    new_word = to_dataset(raw.test_new_word, vocab);
  }

  eval::EvalInputs inputs() const {
    return {&world, &split, &new_instance, &new_composition, &new_word};
  }
};

train::TrainConfig desk_config(MaskVariant v, bool input_pointing, int steps,
                               std::uint64_t seed) {
  train::TrainConfig c;
  c.hyperparams.mask_variant = v;
  c.hyperparams.input_pointing = input_pointing;
  c.steps = steps;
  c.seed = seed;
  return c;
}

struct TrainedRun {
  eval::EvalReport report;
  double train_seconds = 0;
};

TrainedRun train_and_evaluate(const DefaultWorld& dw, const train::TrainConfig& cfg,
                              const eval::EvalSettings& settings, std::uint64_t eval_seed,
                              const std::function<void(const ExpertModel&)>& extra = {}) {
  train::Trainer trainer(cfg, dw.train, dw.vocab, &dw.new_instance);
  const auto t0 = Clock::now();
  trainer.run();
  TrainedRun r;
  r.train_seconds = seconds_since(t0);
  r.report = eval::run_protocols(trainer.model(), dw.vocab, dw.inputs(), settings, eval_seed);
  if (extra) extra(trainer.model());
  return r;
}

// ---------------------------------------------------------------------------
// 5. Learning at desk scale.

constexpr int kLearningSteps = 20000;
constexpr int kTrendSteps = 10000;

void region_probe_info(const ExpertModel& m, const DefaultWorld& dw) {
  std::size_t probes = 0, hits = 0;
  for (const auto& ex : dw.new_instance) {
    if (probes == 100) break;
    std::optional<std::size_t> noun;
    for (std::size_t p = 0; p < ex.tokens.size() && !noun; ++p)
      if (dw.vocab.part_of_speech(ex.tokens[p]) == PartOfSpeech::noun) noun = p;
    if (!noun) continue;
    const auto drops =
        eval::region_withholding_probe(m, dw.vocab, eval::single_example_episode(ex, {*noun}));
    hits += !drops.empty() && drops.front().latent_label == dw.vocab.word(ex.tokens[*noun]);
    ++probes;
  }
  info(fmt("region withholding: top region depicts the masked noun in %.0f of %.0f examples "
           "(%.3f; target 0.70)",
           hits, probes, probes ? double(hits) / double(probes) : 0.0));
}

void ablation_info(const ExpertModel& m, const DefaultWorld& dw) {
  Dataset pool = dw.new_word;
  pool.insert(pool.end(), dw.new_instance.begin(), dw.new_instance.end());
  std::mt19937_64 rng(555);
  std::vector<FlatEpisode> flats;
  for (const auto& d : eval::draw_pointing_episodes(pool, eval::held_out_word_ids(dw.split, dw.vocab),
                                                    50, 1, rng))
    flats.push_back(flatten_episode(eval::pointing_episode(pool, d, 1)));
  auto grid = eval::attention_ablation_probe(m, dw.vocab, flats);
  std::stable_sort(grid.cells.begin(), grid.cells.end(),
                   [](const auto& a, const auto& b) { return a.log_prob_drop > b.log_prob_drop; });
  for (std::size_t i = 0; i < 3; ++i) {
    const auto& c = grid.cells[i];
    info("ablation top pair: layer " + std::to_string(c.layer) + " " +
         eval::ablation_group_name(c.query_group) + " -> " +
         eval::ablation_group_name(c.key_group) +
         fmt(" log-prob drop %.3f, accuracy drop %.3f", c.log_prob_drop, c.accuracy_drop));
  }
}

Outcome learning_at_desk_scale() {
  Outcome o;
  const train::TrainConfig cfg = desk_config(MaskVariant::via_vision, false, kLearningSteps, 1);
  const DefaultWorld dw(1, static_cast<std::size_t>(cfg.hyperparams.hidden));
  info(fmt("default world: %.0f nouns, %.0f verbs, %.0f examples", dw.world.nouns.size(),
           dw.world.verbs.size(), dw.raw.total()));
  eval::EvalSettings s;
  s.ratios = {1};
  const TrainedRun run = train_and_evaluate(dw, cfg, s, 7, [&](const ExpertModel& m) {
    region_probe_info(m, dw);
    ablation_info(m, dw);
  });
  const auto& r = run.report;
  o.require(run.train_seconds <= 600, fmt("training %.0f s for %.0f steps", run.train_seconds,
                                          kLearningSteps));
  o.require(r.cloze->all.value() >= 0.9,
            fmt("seen-word cloze top-5 %.3f (chance %.3f)", r.cloze->all.value(), r.cloze->chance));
  const auto* p1 = r.at_ratio(1);
  o.require(p1->accuracy.value() >= 0.8 && p1->chance < 0.35,
            fmt("new-word pointing 1:1 %.3f (chance %.3f, n=%.0f)", p1->accuracy.value(),
                p1->chance, p1->accuracy.total));
  o.require(r.multi_new_word->accuracy.value() >= 2 * r.multi_new_word->chance,
            fmt("multi-new-word %.3f (chance %.3f)", r.multi_new_word->accuracy.value(),
                r.multi_new_word->chance));
  return o;
}

// ---------------------------------------------------------------------------
// 6. Generalisation trends, median over three seeds.

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2;
}

// Pointing summarised as the mean accuracy over the ratio sweep.
double sweep_mean(const eval::EvalReport& r) {
  double s = 0;
  for (const auto& p : r.pointing) s += p.accuracy.value();
  return s / static_cast<double>(r.pointing.size());
}

// Standard error of that mean, counting each nested episode draw once
// (the ratios share draws, so they are not independent samples).
double sweep_mean_se(const eval::EvalReport& r) {
  const double p = sweep_mean(r);
  return std::sqrt(p * (1 - p) / static_cast<double>(r.pointing.front().accuracy.total));
}

Outcome generalisation_trends() {
  Outcome o;
  const std::uint64_t seeds[] = {1, 2, 3};
  struct Arm {
    const char* name;
    MaskVariant variant;
    bool input_pointing;
  };
  const Arm arms[] = {{"isolated", MaskVariant::isolated, false},
                      {"via-vision", MaskVariant::via_vision, false},
                      {"via-vision+input", MaskVariant::via_vision, true}};
  std::map<std::string, std::vector<eval::EvalReport>> reports;
  for (std::uint64_t seed : seeds) {
    const train::TrainConfig base = desk_config(MaskVariant::via_vision, false, kTrendSteps, seed);
    const DefaultWorld dw(seed, static_cast<std::size_t>(base.hyperparams.hidden));
    for (const Arm& arm : arms) {
      const auto cfg = desk_config(arm.variant, arm.input_pointing, kTrendSteps, seed);
      eval::EvalSettings s;
      s.multi_new_word = false;
      const TrainedRun run = train_and_evaluate(dw, cfg, s, 100 + seed);
      const auto& r = run.report;
      std::string curve;
      for (const auto& p : r.pointing) curve += fmt(" %.3f", p.accuracy.value());
      info(std::string(arm.name) + fmt(" seed %.0f: composition drop %.3f, pointing mean %.3f,",
                                       seed, r.composition->difference(), sweep_mean(r)) +
           " curve" + curve + fmt(" (%.0f s)", run.train_seconds));
      reports[arm.name].push_back(r);
    }
  }
  auto med = [&](const char* arm, const std::function<double(const eval::EvalReport&)>& f) {
    std::vector<double> v;
    for (const auto& r : reports[arm]) v.push_back(f(r));
    return median(v);
  };
  auto drop = [](const eval::EvalReport& r) { return r.composition->difference(); };

  // (a)
  const double drop_iso = med("isolated", drop), drop_vv = med("via-vision", drop);
  o.require(drop_vv < drop_iso,
            fmt("(a) composition drop via-vision %.3f < isolated %.3f", drop_vv, drop_iso));

  // (b)
  const double pt_iso = med("isolated", sweep_mean), pt_vv = med("via-vision", sweep_mean);
  o.require(pt_vv >= pt_iso, fmt("(b) pointing via-vision %.3f >= isolated %.3f", pt_vv, pt_iso));

  // (c) noise: two standard errors of the difference of two sweep means.
  const double pt_ip = med("via-vision+input", sweep_mean);
  const double se = std::sqrt(std::pow(med("via-vision", sweep_mean_se), 2) +
                              std::pow(med("via-vision+input", sweep_mean_se), 2));
  o.require(pt_ip >= pt_vv - 2 * se,
            fmt("(c) input pointing %.3f vs %.3f (allowance %.3f)", pt_ip, pt_vv, 2 * se));

  // (d) per-ratio medians of the via-vision curve.
  const auto& vv = reports["via-vision"];
  std::vector<double> curve, errs;
  for (std::size_t i = 0; i < vv.front().pointing.size(); ++i) {
    std::vector<double> acc, err;
    for (const auto& r : vv) {
      acc.push_back(r.pointing[i].accuracy.value());
      err.push_back(r.pointing[i].accuracy.standard_error());
    }
    curve.push_back(median(acc));
    errs.push_back(median(err));
  }
  bool monotone = true;
  std::string shape;
  for (std::size_t i = 0; i < curve.size(); ++i) {
    shape += fmt(i ? " %.3f" : "%.3f", curve[i]);
    if (i > 0)
      monotone &= curve[i] <= curve[i - 1] + 2 * std::hypot(errs[i], errs[i - 1]);
  }
  o.require(monotone, "(d) via-vision pointing non-increasing over ratios 1..10: " + shape);
  return o;
}

// ---------------------------------------------------------------------------
// 7. Reproducibility.

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

Outcome reproducibility() {
  Outcome o;
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / ("expert_acceptance_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  const DefaultWorld dw(2, 16);
  auto config = [&](const std::string& tag) {
    train::TrainConfig c = desk_config(MaskVariant::via_vision, false, 300, 5);
    c.hyperparams.hidden = 16;
    c.hyperparams.layers = 2;
    c.eval_every = 100;
    c.metrics_path = (dir / (tag + ".csv")).string();
    c.checkpoint_path = (dir / (tag + ".bin")).string();
    return c;
  };
  eval::EvalSettings s;
  s.ratios = {1, 2};
  s.pointing_episodes = 100;
  s.multi_episodes = 50;
  std::string reports[2];
  for (int k = 0; k < 2; ++k) {
    train::Trainer t(config("run" + std::to_string(k)), dw.train, dw.vocab, &dw.new_instance);
    t.run();
    reports[k] = nlohmann::json(eval::run_protocols(t.model(), dw.vocab, dw.inputs(), s, 9)).dump();
  }
  o.require(slurp(dir / "run0.csv") == slurp(dir / "run1.csv") && !slurp(dir / "run0.csv").empty(),
            "metric logs byte-identical");
  o.require(slurp(dir / "run0.bin") == slurp(dir / "run1.bin"), "checkpoints byte-identical");
  o.require(reports[0] == reports[1], "eval reports byte-identical");

  // Interrupt at step 150, reload from disk, finish; compare to run0.
  {
    train::TrainConfig c = config("resumed");
    train::Trainer first(c, dw.train, dw.vocab, &dw.new_instance);
    first.run({}, 150);
  }
  train::Trainer second(config("resumed"), dw.train, dw.vocab, &dw.new_instance);
  second.resume(train::load_checkpoint((dir / "resumed.bin").string()));
  second.run();
  const train::Checkpoint a = train::load_checkpoint((dir / "run0.bin").string());
  const train::Checkpoint b = train::load_checkpoint((dir / "resumed.bin").string());
  double worst = 0;
  for (std::size_t i = 0; i < a.tensors.size(); ++i)
    worst = std::max(worst, max_abs_diff(a.tensors[i], b.tensors[i]));
  o.require(worst <= 1e-12 && a.step == b.step,
            fmt("resume max parameter diff %.1e at step %.0f", worst, b.step));
  o.require(slurp(dir / "resumed.csv") == slurp(dir / "run0.csv"), "resumed metric log identical");
  fs::remove_all(dir);
  return o;
}

// ---------------------------------------------------------------------------
// 8. Split hygiene.

Outcome split_hygiene() {
  Outcome o;
  std::size_t word_hits = 0, comp_hits = 0, narrations = 0;
  double lo = 1, hi = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    std::mt19937_64 rng(seed);
    const WorldSpec world = generate_world(WorldConfig{}, rng);
    const SplitSpec split = choose_split(world, 2, 1, 0.1, 0.81, rng);
    const SplitData data = make_split(world, split, 2000, rng);
    // Independent scan over the raw narrations.
    const auto held_words = split.held_out_words();
    const std::set<std::string> held(held_words.begin(), held_words.end());
    for (const auto& ex : data.train) {
      ++narrations;
      const std::set<std::string> tokens(ex.tokens.begin(), ex.tokens.end());
      for (const auto& t : tokens) word_hits += held.contains(t);
      for (const auto& [v, n] : split.held_out_compositions)
        comp_hits += tokens.contains(v) && tokens.contains(n);
    }
    const LeakageReport leak = check_leakage(data.train, split);
    o.require(leak.clean(), fmt("seed %.0f library leakage scan clean", seed));
    lo = std::min(lo, data.train_fraction());
    hi = std::max(hi, data.train_fraction());
  }
  o.require(word_hits == 0 && comp_hits == 0,
            fmt("held-out words %.0f, held-out compositions %.0f in %.0f training narrations",
                word_hits, comp_hits, narrations));
  o.require(lo >= 0.79 && hi <= 0.83, fmt("train fraction in [%.4f, %.4f]", lo, hi));
  return o;
}

}  // namespace
}  // namespace expert

int main(int argc, char** argv) {
  using namespace expert;
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"gradient integrity", gradient_integrity},
      {"isolation equivalence", isolation_equivalence},
      {"cost contract", cost_contract},
      {"masking schedule", masking_schedule},
      {"learning at desk scale", learning_at_desk_scale},
      {"generalization trends", generalisation_trends},
      {"reproducibility", reproducibility},
      {"split hygiene", split_hygiene}};
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!selected.empty() && !selected.contains(id)) continue;
    std::printf("criterion %d (%s): running\n", id, criteria[i].first);
    std::fflush(stdout);
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    failures += !o.pass;
    std::printf("criterion %d (%s): %s [%.0f s] %s\n", id, criteria[i].first,
                o.pass ? "PASS" : "FAIL", seconds_since(t0), o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
