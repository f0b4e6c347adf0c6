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

// expert: gen-data | train | eval | probe
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "expert/cli/config.hpp"
#include "expert/data/dataset_io.hpp"
#include "expert/eval/probes.hpp"
#include "expert/eval/report.hpp"
#include "expert/train/checkpoint.hpp"
#include "expert/train/trainer.hpp"
#include "expert/world/synthetic_world.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace expert::cli {
namespace {

constexpr int kRuntimeFailure = 1;
constexpr int kUsageError = 2;

constexpr const char* kTrainFile = "train.jsonl";
constexpr const char* kNewInstanceFile = "test_new_instance.jsonl";
constexpr const char* kNewCompositionFile = "test_new_composition.jsonl";
constexpr const char* kNewWordFile = "test_new_word.jsonl";
constexpr const char* kManifestFile = "manifest.json";
constexpr const char* kCheckpointFile = "checkpoint.bin";
constexpr const char* kMetricsFile = "metrics.csv";

// Salt for the stream that draws frozen OOV rows at evaluation time.
constexpr std::uint64_t kOovSalt = 0x6f6f76726f777321ull;

struct Common {
  std::string config_file;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("-c,--config", c.config_file, "JSON config file");
  cmd->add_option("-s,--set", c.sets, "dotted override, key=value (repeatable)");
  cmd->add_option("--seed", c.seed, "seed (falls back to EXPERT_SEED, then the config)");
  cmd->add_option("-o,--out", c.out, "output directory");
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + p.string());
  os << text;
}

// Everything needed to reproduce an output: config, seed, code version.
void write_run_record(const fs::path& out, const std::string& command,
                      const json& effective, std::uint64_t seed) {
  fs::create_directories(out);
  write_text(out / "effective_config.json", effective.dump(2) + "\n");
  write_text(out / "run.json",
             json{{"command", command}, {"seed", seed}, {"version", kVersion}}.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Dataset directory.

struct DataDir {
  WorldSpec world;
  SplitSpec split;
  RawDataset train, new_instance, new_composition, new_word;
};

DataDir load_data(const fs::path& dir) {
  if (!fs::exists(dir / kManifestFile)) {
    throw std::runtime_error("no dataset at " + dir.string() + " (missing " + kManifestFile + ")");
  }
  std::ifstream is(dir / kManifestFile);
  const json manifest = json::parse(is);
  DataDir d;
  d.world = manifest.at("world").get<WorldSpec>();
  d.split = manifest.at("split").get<SplitSpec>();
  d.train = read_dataset_file((dir / kTrainFile).string());
  d.new_instance = read_dataset_file((dir / kNewInstanceFile).string());
  d.new_composition = read_dataset_file((dir / kNewCompositionFile).string());
  d.new_word = read_dataset_file((dir / kNewWordFile).string());
  return d;
}

json leakage_json(const LeakageReport& r) {
  return {{"narrations_with_held_out_word", r.narrations_with_held_out_word},
          {"narrations_with_held_out_composition", r.narrations_with_held_out_composition},
          {"composition_words_missing_from_train", r.composition_words_missing_from_train},
          {"clean", r.clean()}};
}

int gen_data(const Common& c) {
  const LoadedConfig cfg = load_config(c.config_file, c.sets);
  const std::uint64_t seed = resolve_seed(c.seed, cfg.effective);
  std::mt19937_64 rng(seed);
  const WorldSpec world = generate_world(world_config(cfg.effective), rng);
  const SplitSpec split = split_spec(cfg.effective, world, rng);
  const std::size_t n = cfg.effective.at("split").at("examples");
  const SplitData data = make_split(world, split, n, rng);
  const LeakageReport leak = check_leakage(data.train, split);

  const fs::path out = c.out;
  write_run_record(out, "gen-data", cfg.effective, seed);
  write_dataset_file((out / kTrainFile).string(), data.train);
  write_dataset_file((out / kNewInstanceFile).string(), data.test_new_instance);
  write_dataset_file((out / kNewCompositionFile).string(), data.test_new_composition);
  write_dataset_file((out / kNewWordFile).string(), data.test_new_word);
  const json manifest = {
      {"version", kVersion},
      {"seed", seed},
      {"world", world},
      {"split", split},
      {"counts",
       {{"train", data.train.size()},
        {"test_new_instance", data.test_new_instance.size()},
        {"test_new_composition", data.test_new_composition.size()},
        {"test_new_word", data.test_new_word.size()}}},
      {"train_fraction", data.train_fraction()},
      {"leakage", leakage_json(leak)}};
  write_text(out / kManifestFile, manifest.dump(2) + "\n");

  std::printf("examples: %zu train, %zu new-instance, %zu new-composition, %zu new-word\n",
              data.train.size(), data.test_new_instance.size(),
              data.test_new_composition.size(), data.test_new_word.size());
  std::printf("train fraction: %.4f\n", data.train_fraction());
  std::printf("held out: %zu nouns, %zu verbs, %zu compositions\n", split.held_out_nouns.size(),
              split.held_out_verbs.size(), split.held_out_compositions.size());
  std::printf("leakage: %zu narrations with held-out words, %zu with held-out compositions, "
              "%zu composition words unseen in training: %s\n",
              leak.narrations_with_held_out_word, leak.narrations_with_held_out_composition,
              leak.composition_words_missing_from_train, leak.clean() ? "clean" : "LEAK");
  return leak.clean() ? 0 : kRuntimeFailure;
}

// ---------------------------------------------------------------------------
// Training.

// Keeps the header and rows up to `step`, so a resumed run appends to an
// exact prefix of the uninterrupted log.
void truncate_metrics(const fs::path& p, std::uint64_t step) {
  if (!fs::exists(p)) return;
  std::ifstream is(p);
  std::string line, kept;
  bool header = true;
  while (std::getline(is, line)) {
    if (header || std::stoull(line.substr(0, line.find(','))) <= step) kept += line + "\n";
    header = false;
  }
  is.close();
  write_text(p, kept);
}

struct TrainArgs {
  Common common;
  std::string data;
  std::string mask_variant;
  bool input_pointing = false;
  bool resume = false;
  std::uint64_t stop_after = 0;
};

int train_cmd(const TrainArgs& a) {
  LoadedConfig cfg = load_config(a.common.config_file, a.common.sets);
  if (!a.mask_variant.empty()) cfg.effective["model"]["mask_variant"] = a.mask_variant;
  if (a.input_pointing) cfg.effective["model"]["input_pointing"] = true;
  const std::uint64_t seed = resolve_seed(a.common.seed, cfg.effective);
  train::TrainConfig tc = train_config(cfg.effective, seed);
  const fs::path out = a.common.out;
  tc.checkpoint_path = (out / kCheckpointFile).string();
  tc.metrics_path = (out / kMetricsFile).string();

  const DataDir data = load_data(a.data);
  if (data.world.region_dim != tc.hyperparams.region_dim) {
    throw ConfigError("model.region_dim does not match the dataset's region width");
  }
  const Vocabulary vocab = build_training_vocabulary(
      data.world, data.split, static_cast<std::size_t>(tc.hyperparams.hidden));
  const Dataset train_set = to_dataset(data.train, vocab);
  const Dataset validation = to_dataset(data.new_instance, vocab);

  std::optional<train::Checkpoint> start;
  if (a.resume) {
    if (!fs::exists(tc.checkpoint_path)) {
      throw std::runtime_error("--resume: no checkpoint at " + tc.checkpoint_path);
    }
    start = train::load_checkpoint(tc.checkpoint_path);
    if (!(start->hyperparams == tc.hyperparams)) {
      throw std::runtime_error("--resume: checkpoint hyperparameters differ from the config");
    }
    json saved = start->metadata.at("train_config"), now = tc;
    for (const char* k : {"steps", "checkpoint_path", "metrics_path"}) {
      saved.erase(k);
      now.erase(k);
    }
    if (saved != now) throw std::runtime_error("--resume: checkpoint run settings differ");
  }

  write_run_record(out, "train", cfg.effective, seed);
  train::Trainer trainer(tc, train_set, vocab, &validation);
  if (start) {
    trainer.resume(*start);
    truncate_metrics(tc.metrics_path, start->step);
    std::printf("resumed at step %llu\n", static_cast<unsigned long long>(start->step));
  }
  const int every = tc.eval_every > 0 ? tc.eval_every : 1000;
  trainer.run(
      [&](const train::StepMetrics& m) {
        if (m.step % static_cast<std::uint64_t>(every) != 0) return;
        std::printf("step %llu loss %.5f", static_cast<unsigned long long>(m.step), m.loss);
        if (m.val_cloze_top5) std::printf(" val_cloze_top5 %.3f", *m.val_cloze_top5);
        std::printf("\n");
        std::fflush(stdout);
      },
      a.stop_after);
  std::printf("checkpoint: %s (step %llu)\n", tc.checkpoint_path.c_str(),
              static_cast<unsigned long long>(trainer.step_count()));
  return 0;
}

// ---------------------------------------------------------------------------
// Evaluation and probes share the checkpoint loading.

struct Loaded {
  DataDir data;
  train::Checkpoint ckpt;
  model::ExpertModel model;
  Vocabulary vocab;
  Dataset new_instance, new_composition, new_word;
};

// The user-specified model keys must agree with the checkpoint.
void check_model_keys(const json& user, const Hyperparams& h) {
  if (!user.contains("model")) return;
  const json have = h;
  for (const auto& [key, value] : user.at("model").items()) {
    if (have.at(key) != value) {
      throw std::runtime_error("config model." + key + " = " + value.dump() +
                               " but the checkpoint has " + have.at(key).dump());
    }
  }
}

Loaded load_for_eval(const std::string& data_dir, const std::string& ckpt_path,
                     const LoadedConfig& cfg, std::uint64_t seed) {
  DataDir data = load_data(data_dir);
  train::Checkpoint ckpt = train::load_checkpoint(ckpt_path);
  check_model_keys(cfg.user, ckpt.hyperparams);
  const std::size_t dim = ckpt.metadata.at("embedding_dim");
  Vocabulary vocab = train::vocabulary_from_json(ckpt.metadata.at("vocabulary"), dim);
  const Vocabulary expected = build_training_vocabulary(data.world, data.split, dim);
  if (expected.trained_size() != vocab.trained_size()) {
    throw std::runtime_error("checkpoint vocabulary does not match the dataset");
  }
  for (WordId i = 0; i < static_cast<WordId>(vocab.trained_size()); ++i)
    if (vocab.word(i) != expected.word(i)) {
      throw std::runtime_error("checkpoint vocabulary does not match the dataset");
    }
  std::mt19937_64 oov_rng(seed ^ kOovSalt);
  for (const auto& w : data.split.held_out_words())
    vocab.register_oov(w, world_part_of_speech(data.world, w), oov_rng);
  model::ExpertModel m = train::model_from_checkpoint(ckpt);
  Dataset ni = to_dataset(data.new_instance, vocab);
  Dataset nc = to_dataset(data.new_composition, vocab);
  Dataset nw = to_dataset(data.new_word, vocab);
  return {std::move(data), std::move(ckpt), std::move(m), std::move(vocab),
          std::move(ni), std::move(nc), std::move(nw)};
}

struct EvalArgs {
  Common common;
  std::string data;
  std::string checkpoint;
  std::string protocol = "all";
  std::size_t ratio = 0;
};

int eval_cmd(const EvalArgs& a) {
  LoadedConfig cfg = load_config(a.common.config_file, a.common.sets);
  if (a.ratio > 0) {
    json ratios = json::array();
    for (std::size_t r = 1; r <= a.ratio; ++r) ratios.push_back(r);
    cfg.effective["eval"]["ratios"] = ratios;
  }
  const std::uint64_t seed = resolve_seed(a.common.seed, cfg.effective);
  const eval::EvalSettings settings = eval_settings(cfg.effective, a.protocol);
  const Loaded l = load_for_eval(a.data, a.checkpoint, cfg, seed);
  const eval::EvalInputs in{&l.data.world, &l.data.split, &l.new_instance,
                            &l.new_composition, &l.new_word};
  const eval::EvalReport report =
      eval::run_protocols(l.model, l.vocab, in, settings, seed, a.protocol);

  const fs::path out = a.common.out;
  write_run_record(out, "eval", cfg.effective, seed);
  write_text(out / "report.json", json(report).dump(2) + "\n");
  if (!report.pointing.empty()) {
    std::ofstream os(out / "pointing.csv", std::ios::binary);
    eval::write_pointing_csv(os, report);
  }
  if (report.cloze)
    std::printf("cloze top-5: %.4f (chance %.4f)\n", report.cloze->all.value(),
                report.cloze->chance);
  if (report.composition)
    std::printf("composition: seen %.4f new %.4f drop %.4f\n", report.composition->seen.value(),
                report.composition->unseen.value(), report.composition->difference());
  for (const auto& p : report.pointing)
    std::printf("pointing %zu:1: %.4f (chance %.4f)\n", p.ratio, p.accuracy.value(), p.chance);
  if (report.multi_new_word)
    std::printf("multi-new-word: %.4f (chance %.4f)\n", report.multi_new_word->accuracy.value(),
                report.multi_new_word->chance);
  return 0;
}

struct ProbeArgs {
  Common common;
  std::string data;
  std::string checkpoint;
  std::string kind = "ablation";
};

int probe_cmd(const ProbeArgs& a) {
  const LoadedConfig cfg = load_config(a.common.config_file, a.common.sets);
  const std::uint64_t seed = resolve_seed(a.common.seed, cfg.effective);
  const std::size_t episodes = cfg.effective.at("probe").at("episodes");
  const std::string conf = cfg.effective.at("probe").at("confidence");
  if (episodes == 0) throw ConfigError("probe.episodes must be positive");
  if (conf != "cloze" && conf != "pointing") throw ConfigError("unknown probe.confidence: " + conf);
  const Loaded l = load_for_eval(a.data, a.checkpoint, cfg, seed);
  std::mt19937_64 rng(seed);
  const fs::path out = a.common.out;
  write_run_record(out, "probe", cfg.effective, seed);

  if (a.kind == "ablation") {
    Dataset pool = l.new_word;
    pool.insert(pool.end(), l.new_instance.begin(), l.new_instance.end());
    std::vector<FlatEpisode> flats;
    for (const auto& d : eval::draw_pointing_episodes(
             pool, eval::held_out_word_ids(l.data.split, l.vocab), episodes, 1, rng))
      flats.push_back(flatten_episode(eval::pointing_episode(pool, d, 1)));
    const eval::AblationGrid grid = eval::attention_ablation_probe(l.model, l.vocab, flats);
    std::ofstream os(out / "ablation.csv", std::ios::binary);
    eval::write_ablation_csv(os, grid);
    auto cells = grid.cells;
    std::stable_sort(cells.begin(), cells.end(), [](const auto& x, const auto& y) {
      return x.log_prob_drop > y.log_prob_drop;
    });
    std::printf("baseline pointing accuracy %.4f over %zu episodes\n", grid.baseline_accuracy,
                grid.episodes);
    for (std::size_t i = 0; i < std::min<std::size_t>(5, cells.size()); ++i)
      std::printf("layer %zu %s -> %s: log-prob drop %.4f, accuracy drop %.4f\n",
                  cells[i].layer, eval::ablation_group_name(cells[i].query_group).c_str(),
                  eval::ablation_group_name(cells[i].key_group).c_str(),
                  cells[i].log_prob_drop, cells[i].accuracy_drop);
    return 0;
  }

  // Region withholding: mask the first noun of single examples and rank
  // regions by how much removing them hurts.
  std::ofstream os(out / "regions.csv", std::ios::binary);
  os << eval::kRegionCsvHeader << '\n';
  std::size_t probes = 0, hits = 0;
  std::vector<std::size_t> order(l.new_instance.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  const auto mode = conf == "cloze" ? eval::Confidence::cloze : eval::Confidence::pointing;
  for (std::size_t idx : order) {
    if (probes == episodes) break;
    const Example& ex = l.new_instance[idx];
    std::optional<std::size_t> noun;
    for (std::size_t p = 0; p < ex.tokens.size() && !noun; ++p)
      if (l.vocab.part_of_speech(ex.tokens[p]) == PartOfSpeech::noun) noun = p;
    if (!noun) continue;
    const auto drops = eval::region_withholding_probe(
        l.model, l.vocab, eval::single_example_episode(ex, {*noun}), mode);
    eval::write_region_csv(os, drops, probes);
    hits += !drops.empty() && drops.front().latent_label == l.vocab.word(ex.tokens[*noun]);
    ++probes;
  }
  std::printf("region probe: top region depicts the masked noun in %zu of %zu examples\n", hits,
              probes);
  return 0;
}

}  // namespace
}  // namespace expert::cli

int main(int argc, char** argv) {
  using namespace expert::cli;
  CLI::App app{"Grounded few-shot word learning: data, training, evaluation, probes"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  Common gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "generate a synthetic world and its splits");
  add_common(gen_cmd, gen);

  TrainArgs tr;
  auto* train_sub = app.add_subcommand("train", "train a model on a generated dataset");
  add_common(train_sub, tr.common);
  train_sub->add_option("-d,--data", tr.data, "dataset directory")->required();
  train_sub->add_option("--mask-variant", tr.mask_variant, "attention mask variant")
      ->check(CLI::IsMember({"isolated", "full", "tgt2ref", "via-vision"}));
  train_sub->add_flag("--input-pointing", tr.input_pointing, "add the input pointing loss");
  train_sub->add_flag("--resume", tr.resume, "continue from the checkpoint in --out");
  train_sub->add_option("--stop-after", tr.stop_after, "stop at this step (simulates interruption)");

  EvalArgs ev;
  auto* eval_sub = app.add_subcommand("eval", "run evaluation protocols on a checkpoint");
  add_common(eval_sub, ev.common);
  eval_sub->add_option("-d,--data", ev.data, "dataset directory")->required();
  eval_sub->add_option("--checkpoint", ev.checkpoint, "checkpoint file")->required();
  eval_sub->add_option("--protocol", ev.protocol, "protocol")
      ->check(CLI::IsMember({"cloze", "composition", "pointing", "multi-new-word", "all"}));
  eval_sub->add_option("--ratio", ev.ratio, "sweep distractor ratios 1..N")
      ->check(CLI::Range(1, 1000));

  ProbeArgs pr;
  auto* probe_sub = app.add_subcommand("probe", "run an interpretability probe");
  add_common(probe_sub, pr.common);
  probe_sub->add_option("-d,--data", pr.data, "dataset directory")->required();
  probe_sub->add_option("--checkpoint", pr.checkpoint, "checkpoint file")->required();
  probe_sub->add_option("--kind", pr.kind, "probe kind")
      ->check(CLI::IsMember({"ablation", "region"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsageError;
  }

  try {
    if (*gen_cmd) return gen_data(gen);
    if (*train_sub) return train_cmd(tr);
    if (*eval_sub) return eval_cmd(ev);
    if (*probe_sub) return probe_cmd(pr);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUsageError;
  } catch (const expert::SplitError& e) {
    std::fprintf(stderr, "error: infeasible split: %s\n", e.what());
    return kRuntimeFailure;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kRuntimeFailure;
  }
  return kUsageError;
}
