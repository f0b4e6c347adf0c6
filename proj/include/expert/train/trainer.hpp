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
#include <cstdio>
#include <fstream>
#include <functional>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "expert/data/hyperparams.hpp"
#include "expert/data/vocabulary.hpp"
#include "expert/eval/protocols.hpp"
#include "expert/model/expert_model.hpp"
#include "expert/numeric/adam.hpp"
#include "expert/objectives/losses.hpp"
#include "expert/sampler/episode_sampler.hpp"
#include "expert/train/checkpoint.hpp"

namespace expert::train {

using ad::Var;

// Desk-scale default; the reference rate stays available as
// kReferenceLearningRate.
inline constexpr double kDeskLearningRate = 3e-4;

class TrainingAborted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  Hyperparams hyperparams;
  int steps = 6000;
  int batch_size = 8;
  std::uint64_t seed = 1;
  AdamConfig adam{kDeskLearningRate, 0.9, 0.999, kReferenceAdamEpsilon};
  model::AttentionPath path = model::AttentionPath::sparse;
  std::string checkpoint_path;  // empty: no checkpoints
  std::string metrics_path;     // empty: no metric log
  int eval_every = 0;           // 0: no periodic evaluation
  int checkpoint_every = 0;     // 0: only at the end
  std::size_t eval_examples = 100;

  void validate() const {
    hyperparams.validate();
    if (steps <= 0) throw std::invalid_argument("steps must be positive");
    if (batch_size <= 0) throw std::invalid_argument("batch size must be positive");
    if (!(adam.learning_rate > 0) || !(adam.epsilon > 0)) {
      throw std::invalid_argument("optimizer constants must be positive");
    }
    if (eval_every < 0 || checkpoint_every < 0) {
      throw std::invalid_argument("cadences must be >= 0");
    }
  }

  objectives::LossWeights weights() const {
    return {hyperparams.alpha, hyperparams.beta, hyperparams.input_pointing};
  }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"hyperparams", c.hyperparams},
       {"steps", c.steps},
       {"batch_size", c.batch_size},
       {"seed", c.seed},
       {"learning_rate", c.adam.learning_rate},
       {"beta1", c.adam.beta1},
       {"beta2", c.adam.beta2},
       {"epsilon", c.adam.epsilon},
       {"path", c.path == model::AttentionPath::sparse ? "sparse" : "dense"},
       {"checkpoint_path", c.checkpoint_path},
       {"metrics_path", c.metrics_path},
       {"eval_every", c.eval_every},
       {"checkpoint_every", c.checkpoint_every},
       {"eval_examples", c.eval_examples}};
}

struct StepMetrics {
  std::uint64_t step = 0;
  double loss = 0;
  std::optional<double> point, input_point, cloze, vision;
  std::size_t pointing_queries = 0;
  std::size_t pointing_skipped = 0;
  std::optional<double> val_cloze_top5;
};

inline std::string format_number(std::optional<double> v) {
  if (!v) return "";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", *v);
  return buf;
}

inline constexpr const char* kMetricsHeader =
    "step,loss,point,input_point,cloze,vision,pointing_queries,"
    "pointing_skipped,val_cloze_top5";

inline std::string metrics_row(const StepMetrics& m) {
  std::ostringstream os;
  os << m.step << ',' << format_number(m.loss) << ',' << format_number(m.point)
     << ',' << format_number(m.input_point) << ',' << format_number(m.cloze)
     << ',' << format_number(m.vision) << ',' << m.pointing_queries << ','
     << m.pointing_skipped << ',' << format_number(m.val_cloze_top5);
  return os.str();
}

inline std::string rng_to_string(const std::mt19937_64& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

inline std::mt19937_64 rng_from_string(const std::string& s) {
  std::mt19937_64 rng;
  std::istringstream is(s);
  is >> rng;
  if (!is) throw CheckpointError("bad RNG state in checkpoint");
  return rng;
}

// Trained vocabulary as [[word, part of speech], ...], ids in order.
inline nlohmann::json vocabulary_json(const Vocabulary& v) {
  nlohmann::json a = nlohmann::json::array();
  for (WordId i = Vocabulary::kNumSpecial; i < static_cast<WordId>(v.trained_size()); ++i)
    a.push_back({v.word(i), std::string(to_string(v.part_of_speech(i)))});
  return a;
}

inline Vocabulary vocabulary_from_json(const nlohmann::json& a, std::size_t dim) {
  Vocabulary v(dim);
  for (const auto& e : a)
    v.add_word(e.at(0).get<std::string>(), parse_part_of_speech(e.at(1).get<std::string>()));
  return v;
}

// Owns the model, optimizer state and sampling stream of one run.
class Trainer {
 public:
  Trainer(TrainConfig config, const Dataset& train, const Vocabulary& vocab,
          const Dataset* validation = nullptr)
      : config_(std::move(config)),
        train_(train),
        vocab_(vocab),
        validation_(validation),
        index_(train),
        model_(config_.hyperparams, vocab.trained_size(), config_.seed ^ kInitSalt),
        adam_(config_.adam),
        rng_(config_.seed) {
    config_.validate();
    if (train.empty()) throw std::invalid_argument("empty training set");
    for (const auto& ex : train) {
      ex.validate();
      for (WordId w : ex.tokens)
        if (vocab.is_oov(w)) {
          throw std::invalid_argument("training data uses an OOV word: " + vocab.word(w));
        }
    }
  }

  // Continues from a checkpoint written by a run with the same config.
  void resume(const Checkpoint& c) {
    restore(model_, c);
    adam_ = c.adam;
    rng_ = rng_from_string(c.rng_state);
    step_ = c.step;
  }

  const model::ExpertModel& model() const { return model_; }
  model::ExpertModel& model() { return model_; }
  const AdamState& optimizer() const { return adam_; }
  std::uint64_t step_count() const { return step_; }
  const TrainConfig& config() const { return config_; }
  const SamplerStats& sampler_stats() const { return stats_; }

  Checkpoint checkpoint() const {
    // Output locations are not part of the run's state.
    nlohmann::json run = config_;
    run.erase("checkpoint_path");
    run.erase("metrics_path");
    nlohmann::json meta = {{"train_config", std::move(run)},
                           {"vocabulary", vocabulary_json(vocab_)},
                           {"embedding_dim", vocab_.embedding_dim()}};
    return capture(model_, adam_, step_, rng_to_string(rng_), std::move(meta));
  }

  // One optimisation step over a batch of freshly sampled episodes.
  StepMetrics step() {
    const auto& hp = config_.hyperparams;
    std::vector<FlatEpisode> batch;
    for (int b = 0; b < config_.batch_size; ++b) {
      batch.push_back(flatten_episode(sample_episode(train_, index_, hp.max_references,
                                                     hp.max_distractors, hp.masking,
                                                     vocab_, rng_, &stats_)));
    }
    return step_on(batch);
  }

  // One optimisation step over the given episodes; the gradient is the
  // mean over the batch.
  StepMetrics step_on(const std::vector<FlatEpisode>& batch) {
    if (batch.empty()) throw std::invalid_argument("empty batch");
    auto params = model_.params().vars();
    for (auto& p : params) p.zero_grad();
    StepMetrics m;
    m.step = step_ + 1;
    std::vector<Var> totals;
    double point = 0, input_point = 0, cloze = 0, vision = 0;
    int n_point = 0, n_input = 0, n_cloze = 0, n_vision = 0;
    const model::ForwardOptions opt{config_.path, config_.hyperparams.mask_variant, {}};
    try {
      for (const auto& flat : batch) {
        auto el = objectives::episode_losses(model_, flat, vocab_, config_.weights(), opt);
        m.pointing_queries += el.pointing_count;
        m.pointing_skipped += el.pointing_skipped;
        if (el.terms.point) point += el.terms.point->item(), ++n_point;
        if (el.terms.input_point) input_point += el.terms.input_point->item(), ++n_input;
        if (el.terms.cloze) cloze += el.terms.cloze->item(), ++n_cloze;
        if (el.terms.vision) vision += el.terms.vision->item(), ++n_vision;
        if (el.total) totals.push_back(*el.total);
      }
      if (!totals.empty()) {
        Var loss = ad::scale(ad::add_all(totals), 1.0 / static_cast<double>(batch.size()));
        m.loss = loss.item();
        loss.backward();
        adam_step(params, adam_);
      }
    } catch (const NumericError& e) {
      throw TrainingAborted("non-finite value at step " + std::to_string(m.step) +
                            ": " + e.what());
    }
    ++step_;
    if (n_point) m.point = point / n_point;
    if (n_input) m.input_point = input_point / n_input;
    if (n_cloze) m.cloze = cloze / n_cloze;
    if (n_vision) m.vision = vision / n_vision;
    return m;
  }

  // Runs until config.steps (or `stop_at`, if earlier), appending metrics and
  // writing checkpoints. On a non-finite loss the last checkpoint on disk is
  // left as it was.
  void run(const std::function<void(const StepMetrics&)>& on_step = {},
           std::uint64_t stop_at = 0) {
    const std::uint64_t end =
        stop_at > 0 ? std::min<std::uint64_t>(stop_at, config_.steps) : config_.steps;
    std::ofstream metrics;
    if (!config_.metrics_path.empty()) {
      const bool fresh = step_ == 0;
      metrics.open(config_.metrics_path, fresh ? std::ios::trunc : std::ios::app);
      if (!metrics) throw std::runtime_error("cannot open " + config_.metrics_path);
      if (fresh) metrics << kMetricsHeader << '\n';
    }
    while (step_ < end) {
      StepMetrics m = step();
      if (config_.eval_every > 0 && m.step % config_.eval_every == 0 && validation_) {
        m.val_cloze_top5 = validation_cloze();
      }
      if (metrics.is_open()) metrics << metrics_row(m) << '\n' << std::flush;
      if (on_step) on_step(m);
      if (!config_.checkpoint_path.empty() && config_.checkpoint_every > 0 &&
          m.step % config_.checkpoint_every == 0) {
        save_checkpoint(config_.checkpoint_path, checkpoint());
      }
    }
    if (!config_.checkpoint_path.empty()) save_checkpoint(config_.checkpoint_path, checkpoint());
  }

  double validation_cloze() const {
    Dataset slice(validation_->begin(),
                  validation_->begin() + static_cast<std::ptrdiff_t>(std::min(
                                             config_.eval_examples, validation_->size())));
    return eval::cloze_eval(model_, vocab_, slice, {config_.path, std::nullopt, {}}).all.value();
  }

 private:
  static constexpr std::uint64_t kInitSalt = 0x9e3779b97f4a7c15ull;

  TrainConfig config_;
  const Dataset& train_;
  const Vocabulary& vocab_;
  const Dataset* validation_;
  WordIndex index_;
  model::ExpertModel model_;
  AdamState adam_;
  std::mt19937_64 rng_;
  std::uint64_t step_ = 0;
  SamplerStats stats_;
};

}  // namespace expert::train
