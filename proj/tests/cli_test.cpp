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

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "expert/cli/config.hpp"
#include "json.hpp"

namespace expert {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Small but complete runs: a narrow model, few steps, short evaluations.
const char* kSmall =
    " --set split.examples=400 --set model.hidden=16 --set model.layers=2"
    " --set train.steps=40 --set train.eval_every=20 --set train.checkpoint_every=20"
    " --set eval.pointing_episodes=40 --set eval.multi_episodes=20";

fs::path scratch() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / ("expert_cli_test_" + std::to_string(::getpid()));
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

struct Result {
  int code = -1;
  std::string output;
};

Result run(const std::string& args, const std::string& env = "") {
  const fs::path log = scratch() / "last_output.txt";
  const std::string cmd = (env.empty() ? "" : env + " ") + std::string(EXPERT_CLI_PATH) + " " +
                          args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream is(log);
  std::stringstream ss;
  ss << is.rdbuf();
  r.output = ss.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

json read_json(const fs::path& p) { return json::parse(slurp(p)); }

// One generated dataset and trained model shared by the suite.
class CliTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    data_ = scratch() / "data";
    model_ = scratch() / "model";
    const Result g = run("gen-data --seed 3 -o " + data_.string() + kSmall);
    ASSERT_EQ(g.code, 0) << g.output;
    const Result t = run("train --seed 3 -d " + data_.string() + " -o " + model_.string() + kSmall);
    ASSERT_EQ(t.code, 0) << t.output;
  }
  static std::string data() { return data_.string(); }
  static std::string checkpoint() { return (model_ / "checkpoint.bin").string(); }

  static inline fs::path data_, model_;
};

TEST_F(CliTest, GenDataWritesSplitsManifestAndLeakageSummary) {
  for (const char* f : {"train.jsonl", "test_new_instance.jsonl", "test_new_composition.jsonl",
                        "test_new_word.jsonl", "manifest.json", "effective_config.json",
                        "run.json"})
    EXPECT_TRUE(fs::exists(data_ / f)) << f;
  const json m = read_json(data_ / "manifest.json");
  EXPECT_TRUE(m.at("leakage").at("clean").get<bool>());
  EXPECT_EQ(m.at("split").at("held_out_nouns").size(), 2u);
  EXPECT_EQ(m.at("split").at("held_out_verbs").size(), 1u);
  EXPECT_NEAR(m.at("train_fraction").get<double>(), 0.81, 0.02);
}

TEST_F(CliTest, ManifestWordsAndCompositionsNeverInTraining) {
  const json split = read_json(data_ / "manifest.json").at("split");
  std::set<std::string> held;
  for (const char* k : {"held_out_nouns", "held_out_verbs"})
    for (const auto& w : split.at(k)) held.insert(w.get<std::string>());
  std::ifstream is(data_ / "train.jsonl");
  std::string line;
  std::size_t lines = 0;
  std::set<std::string> seen;
  while (std::getline(is, line)) {
    ++lines;
    std::set<std::string> tokens;
    const json record = json::parse(line);
    for (const auto& t : record.at("tokens")) tokens.insert(t.get<std::string>());
    for (const auto& w : tokens) EXPECT_FALSE(held.contains(w)) << w;
    for (const auto& c : split.at("held_out_compositions"))
      EXPECT_FALSE(tokens.contains(c[0].get<std::string>()) &&
                   tokens.contains(c[1].get<std::string>()));
    seen.insert(tokens.begin(), tokens.end());
  }
  EXPECT_GT(lines, 0u);
  // And the words of held-out compositions do occur in training.
  for (const auto& c : split.at("held_out_compositions")) {
    EXPECT_TRUE(seen.contains(c[0].get<std::string>()));
    EXPECT_TRUE(seen.contains(c[1].get<std::string>()));
  }
}

TEST_F(CliTest, DefaultSplitKeepsTrainFraction) {
  const fs::path out = scratch() / "default_split";
  const Result r = run("gen-data --seed 11 -o " + out.string());
  ASSERT_EQ(r.code, 0) << r.output;
  const json m = read_json(out / "manifest.json");
  EXPECT_EQ(m.at("counts").at("train").get<std::size_t>() +
                m.at("counts").at("test_new_instance").get<std::size_t>() +
                m.at("counts").at("test_new_composition").get<std::size_t>() +
                m.at("counts").at("test_new_word").get<std::size_t>(),
            2000u);
  EXPECT_NEAR(m.at("train_fraction").get<double>(), 0.81, 0.02);
  EXPECT_NE(r.output.find("leakage"), std::string::npos);
}

TEST_F(CliTest, GenDataIsByteIdenticalForASeedAndHonoursEnvSeed) {
  const fs::path a = scratch() / "gen_a", b = scratch() / "gen_b", c = scratch() / "gen_c";
  ASSERT_EQ(run("gen-data --seed 3 -o " + a.string() + kSmall).code, 0);
  ASSERT_EQ(run("gen-data -o " + b.string() + kSmall, "EXPERT_SEED=3").code, 0);
  ASSERT_EQ(run("gen-data --seed 4 -o " + c.string() + kSmall).code, 0);
  for (const char* f : {"train.jsonl", "test_new_word.jsonl", "manifest.json"}) {
    EXPECT_EQ(slurp(a / f), slurp(data_ / f)) << f;
    EXPECT_EQ(slurp(b / f), slurp(data_ / f)) << f;
  }
  EXPECT_NE(slurp(c / "train.jsonl"), slurp(a / "train.jsonl"));
  EXPECT_EQ(read_json(b / "run.json").at("seed"), 3);
}

TEST_F(CliTest, InfeasibleSplitFailsWithMessage) {
  const fs::path cfg = scratch() / "infeasible.json";
  std::ofstream(cfg) << R"({"split": {"explicit": {"held_out_nouns": ["peach"],
                            "held_out_compositions": [["take", "peach"]]}}})";
  const Result r = run("gen-data -c " + cfg.string() + " -o " + (scratch() / "bad").string());
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.output.find("held-out word"), std::string::npos) << r.output;
}

TEST_F(CliTest, UnknownConfigKeysAreUsageErrors) {
  EXPECT_EQ(run("gen-data --set world.colour=3 -o " + (scratch() / "x").string()).code, 2);
  EXPECT_EQ(run("gen-data --set nonsense -o " + (scratch() / "x").string()).code, 2);
  const fs::path cfg = scratch() / "typo.json";
  std::ofstream(cfg) << R"({"train": {"stpes": 10}})";
  EXPECT_EQ(run("train -c " + cfg.string() + " -d " + data() + " -o " +
                (scratch() / "x").string()).code,
            2);
  EXPECT_EQ(run("gen-data --set world.nouns=many -o " + (scratch() / "x").string()).code, 2);
  EXPECT_EQ(run("frobnicate").code, 2);
}

TEST_F(CliTest, TrainRequiresADataset) {
  const Result r = run("train -d " + (scratch() / "missing").string() + " -o " +
                       (scratch() / "x").string());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("no dataset"), std::string::npos) << r.output;
}

TEST_F(CliTest, InvalidMaskVariantIsUsageError) {
  EXPECT_EQ(run("train --mask-variant sideways -d " + data() + " -o " +
                (scratch() / "x").string()).code,
            2);
}

TEST_F(CliTest, TrainWritesRunRecord) {
  EXPECT_TRUE(fs::exists(model_ / "metrics.csv"));
  const json rec = read_json(model_ / "run.json");
  EXPECT_EQ(rec.at("seed"), 3);
  EXPECT_EQ(rec.at("version"), cli::kVersion);
  const json cfg = read_json(model_ / "effective_config.json");
  EXPECT_EQ(cfg.at("model").at("hidden"), 16);
  EXPECT_EQ(cfg.at("train").at("steps"), 40);
}

TEST_F(CliTest, MaskVariantsGiveDistinctCheckpoints) {
  const fs::path a = scratch() / "iso", b = scratch() / "vv";
  ASSERT_EQ(run("train --seed 3 --mask-variant isolated -d " + data() + " -o " + a.string() +
                kSmall).code,
            0);
  ASSERT_EQ(run("train --seed 3 --mask-variant via-vision -d " + data() + " -o " + b.string() +
                kSmall).code,
            0);
  EXPECT_NE(slurp(a / "checkpoint.bin"), slurp(b / "checkpoint.bin"));
  // The default variant is via-vision, so this matches the shared run.
  EXPECT_EQ(slurp(b / "checkpoint.bin"), slurp(model_ / "checkpoint.bin"));
  EXPECT_EQ(read_json(a / "effective_config.json").at("model").at("mask_variant"), "isolated");
}

TEST_F(CliTest, InputPointingFlagReachesTheModel) {
  const fs::path out = scratch() / "ip";
  ASSERT_EQ(run("train --seed 3 --input-pointing -d " + data() + " -o " + out.string() + kSmall)
                .code,
            0);
  EXPECT_TRUE(read_json(out / "effective_config.json").at("model").at("input_pointing"));
  std::ifstream is(out / "metrics.csv");
  std::string header, row;
  std::getline(is, header);
  std::getline(is, row);
  std::vector<std::string> fields;
  std::stringstream ss(row);
  for (std::string f; std::getline(ss, f, ',');) fields.push_back(f);
  ASSERT_GT(fields.size(), 3u);
  EXPECT_FALSE(fields[3].empty());  // input_point
  EXPECT_NE(slurp(out / "checkpoint.bin"), slurp(model_ / "checkpoint.bin"));
}

TEST_F(CliTest, InterruptedRunResumesToIdenticalTrajectory) {
  const fs::path out = scratch() / "resumed";
  const Result first = run("train --seed 3 --stop-after 25 -d " + data() + " -o " + out.string() +
                           kSmall);
  ASSERT_EQ(first.code, 0) << first.output;
  const Result second =
      run("train --seed 3 --resume -d " + data() + " -o " + out.string() + kSmall);
  ASSERT_EQ(second.code, 0) << second.output;
  EXPECT_NE(second.output.find("resumed at step 25"), std::string::npos) << second.output;
  EXPECT_EQ(slurp(out / "metrics.csv"), slurp(model_ / "metrics.csv"));
  EXPECT_EQ(slurp(out / "checkpoint.bin"), slurp(model_ / "checkpoint.bin"));
}

TEST_F(CliTest, ResumeWithoutCheckpointFails) {
  EXPECT_EQ(run("train --resume -d " + data() + " -o " + (scratch() / "empty").string() + kSmall)
                .code,
            1);
}

TEST_F(CliTest, PointingEvalAtTwoRatiosHasChanceRows) {
  const fs::path out = scratch() / "eval_pointing";
  const Result r = run("eval --seed 5 --protocol pointing --ratio 2 -d " + data() +
                       " --checkpoint " + checkpoint() + " -o " + out.string() + kSmall);
  ASSERT_EQ(r.code, 0) << r.output;
  const json rep = read_json(out / "report.json");
  ASSERT_EQ(rep.at("pointing").size(), 2u);
  EXPECT_EQ(rep["pointing"][0]["ratio"], 1);
  EXPECT_EQ(rep["pointing"][1]["ratio"], 2);
  for (const auto& row : rep["pointing"]) {
    EXPECT_GT(row.at("chance").get<double>(), 0.0);
    EXPECT_EQ(row.at("top1").at("samples"), 40);
  }
  EXPECT_FALSE(rep.contains("cloze"));
  EXPECT_TRUE(fs::exists(out / "pointing.csv"));
}

TEST_F(CliTest, AllProtocolsReportEverySectionDeterministically) {
  const fs::path a = scratch() / "eval_all_a", b = scratch() / "eval_all_b";
  const std::string common = " --protocol all --ratio 3 -d " + data() + " --checkpoint " +
                             checkpoint() + std::string(kSmall);
  ASSERT_EQ(run("eval --seed 5 -o " + a.string() + common).code, 0);
  ASSERT_EQ(run("eval -o " + b.string() + common, "EXPERT_SEED=5").code, 0);
  const json rep = read_json(a / "report.json");
  for (const char* k : {"cloze", "composition", "pointing", "multi_new_word"})
    EXPECT_TRUE(rep.contains(k)) << k;
  EXPECT_TRUE(rep["cloze"].contains("chance"));
  EXPECT_TRUE(rep["composition"].contains("chance"));
  EXPECT_EQ(rep["multi_new_word"]["chance"], 0.2);
  EXPECT_EQ(slurp(a / "report.json"), slurp(b / "report.json"));
}

TEST_F(CliTest, EvalRejectsMismatchedHyperparameters) {
  const Result r = run("eval --set model.hidden=32 -d " + data() + " --checkpoint " +
                       checkpoint() + " -o " + (scratch() / "mismatch").string());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("model.hidden"), std::string::npos) << r.output;
}

TEST_F(CliTest, EvalExitsZeroWhateverTheScores) {
  // An untrained-quality checkpoint still evaluates cleanly.
  const fs::path out = scratch() / "eval_cloze";
  EXPECT_EQ(run("eval --protocol cloze -d " + data() + " --checkpoint " + checkpoint() + " -o " +
                out.string())
                .code,
            0);
  EXPECT_EQ(run("eval --protocol nonsense -d " + data() + " --checkpoint " + checkpoint() +
                " -o " + out.string())
                .code,
            2);
}

TEST_F(CliTest, ProbesWriteGrids) {
  const fs::path out = scratch() / "probe";
  ASSERT_EQ(run("probe --kind ablation --set probe.episodes=4 -d " + data() + " --checkpoint " +
                checkpoint() + " -o " + out.string())
                .code,
            0);
  const std::string csv = slurp(out / "ablation.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 36 * 2);
  ASSERT_EQ(run("probe --kind region --set probe.episodes=4 -d " + data() + " --checkpoint " +
                checkpoint() + " -o " + out.string())
                .code,
            0);
  EXPECT_EQ(slurp(out / "regions.csv").rfind("probe,rank,example,region,latent_label,drop", 0),
            0u);
}

TEST(ConfigTest, OverridesNestAndParseJsonValues) {
  const json o = cli::override_object("train.steps=12");
  EXPECT_EQ(o, json({{"train", {{"steps", 12}}}}));
  EXPECT_EQ(cli::override_object("model.mask_variant=isolated")["model"]["mask_variant"],
            "isolated");
  EXPECT_EQ(cli::override_object("eval.ratios=[1,2]")["eval"]["ratios"], json({1, 2}));
  EXPECT_THROW(cli::override_object("a..b=1"), cli::ConfigError);
  EXPECT_THROW(cli::override_object("=1"), cli::ConfigError);
}

TEST(ConfigTest, StrictMergeRejectsUnknownKeysAndWrongTypes) {
  json base = cli::default_config();
  EXPECT_THROW(cli::merge_strict(base, {{"model", {{"depth", 3}}}}), cli::ConfigError);
  EXPECT_THROW(cli::merge_strict(base, {{"model", {{"hidden", "big"}}}}), cli::ConfigError);
  EXPECT_THROW(cli::merge_strict(base, {{"model", 3}}), cli::ConfigError);
  cli::merge_strict(base, {{"model", {{"hidden", 64}}}});
  EXPECT_EQ(base["model"]["hidden"], 64);
  EXPECT_EQ(base["model"]["layers"], 4);
}

TEST(ConfigTest, DefaultsRoundTripThroughTheBuilders) {
  const json cfg = cli::default_config();
  EXPECT_EQ(cli::hyperparams(cfg), Hyperparams{});
  const auto t = cli::train_config(cfg, 9);
  EXPECT_EQ(t.seed, 9u);
  EXPECT_EQ(t.batch_size, 8);
  const auto s = cli::eval_settings(cfg, "all");
  EXPECT_EQ(s.ratios.size(), 10u);
  EXPECT_EQ(s.pointing_episodes, 500u);
}

TEST(ConfigTest, SeedPrecedence) {
  const json cfg = cli::default_config();
  ::unsetenv("EXPERT_SEED");
  EXPECT_EQ(cli::resolve_seed(std::nullopt, cfg), 1u);
  ::setenv("EXPERT_SEED", "42", 1);
  EXPECT_EQ(cli::resolve_seed(std::nullopt, cfg), 42u);
  EXPECT_EQ(cli::resolve_seed(7, cfg), 7u);
  ::setenv("EXPERT_SEED", "x", 1);
  EXPECT_THROW(cli::resolve_seed(std::nullopt, cfg), cli::ConfigError);
  ::unsetenv("EXPERT_SEED");
}

}  // namespace
}  // namespace expert
