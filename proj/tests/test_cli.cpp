// Copyright 2026 The FlowCon Authors.
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

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "flowcon/binary_io.hpp"
#include "flowcon/checkpoint.hpp"
#include "flowcon/cli/commands.hpp"
#include "flowcon/cli/config.hpp"
#include "flowcon/datasets.hpp"
#include "flowcon/oodscore.hpp"
#include "test_util.hpp"

namespace flowcon::cli {
namespace {

namespace fs = std::filesystem;

struct Result {
  int code;
  std::string out, err;
};

Result call(std::vector<std::string> args) {
  args.insert(args.begin(), "flowcon");
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

TEST(Config, ParsesKeysAndComments) {
  const RunConfig c = parse_config(
      "# run\ntrain_features = a.fcft\nout_dir=runs/x  # trailing\nK = 4\nh=16\n"
      "lambda = 0.5\ntau1=2\nepochs = 3\nseed = 9\ncontrastive = false\n");
  EXPECT_EQ(c.train_features, "a.fcft");
  EXPECT_EQ(c.out_dir, "runs/x");
  EXPECT_EQ(c.blocks, 4u);
  EXPECT_EQ(c.hidden, 16u);
  EXPECT_EQ(c.train.loss.lambda, 0.5);
  EXPECT_EQ(c.train.loss.tau1, 2.0);
  EXPECT_EQ(c.train.epochs, 3u);
  EXPECT_EQ(c.train.seed, 9u);
  EXPECT_FALSE(c.train.loss.contrastive);
}

TEST(Config, DefaultsFollowPublishedSettings) {
  const RunConfig c = parse_config("train_features=a\nout_dir=b\n");
  EXPECT_EQ(c.train.epochs, 700u);
  EXPECT_EQ(c.train.batch_size, 64u);
  EXPECT_EQ(c.train.optimizer.lr, 1e-5);
  EXPECT_EQ(c.train.optimizer.weight_decay, 1e-5);
  EXPECT_EQ(c.train.loss.lambda, 0.07);
  EXPECT_EQ(c.train.loss.tau1, 1.5);
  EXPECT_EQ(c.train.loss.tau2, 0.1);
  EXPECT_EQ(c.blocks, 8u);
  // to_text output parses back to the same config.
  EXPECT_EQ(parse_config(c.to_text()).to_text(), c.to_text());
}

TEST(Config, RejectsBadInput) {
  EXPECT_THROW(parse_config("train_features=a\nout_dir=b\nfrobnicate = 1\n"), ConfigError);
  EXPECT_THROW(parse_config("train_features=a\nout_dir=b\nepochs = -1\n"), ConfigError);
  EXPECT_THROW(parse_config("train_features=a\nout_dir=b\nlr = abc\n"), ConfigError);
  EXPECT_THROW(parse_config("train_features=a\nout_dir=b\nno equals sign\n"), ConfigError);
  EXPECT_THROW(parse_config("out_dir=b\n").validate(), ConfigError);
  EXPECT_THROW(parse_config("train_features=a\nout_dir=b\nepochs=0\n").validate(), ConfigError);
  try {
    parse_config("train_features=a\nbogus=1\n", "my.cfg");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("my.cfg:2"), std::string::npos) << e.what();
  }
  EXPECT_EQ(split_assignment("a=b=c"), (std::pair<std::string, std::string>{"a", "b=c"}));
  EXPECT_THROW(split_assignment("novalue"), ConfigError);
}

TEST(Cli, UsageErrors) {
  EXPECT_EQ(call({}).code, kExitUsage);
  EXPECT_EQ(call({"gen-synth", "--kind", "moons"}).code, kExitUsage);
  EXPECT_EQ(call({"gen-synth", "--kind", "spirals", "--out", "x"}).code, kExitUsage);
  const auto dir = testing::temp_dir("cli_conflict");
  EXPECT_EQ(call({"gen-synth", "--kind", "moons", "--k", "3", "--out", dir.string()}).code,
            kExitUsage);
  EXPECT_EQ(call({"train", (dir / "missing.cfg").string()}).code, kExitUsage);
  EXPECT_EQ(call({"--help"}).code, 0);
}

TEST(Cli, GenSynthMoonsDeterministic) {
  const auto a = testing::temp_dir("cli_moons_a"), b = testing::temp_dir("cli_moons_b");
  for (const auto& d : {a, b}) {
    const Result r = call({"gen-synth", "--kind", "moons", "--n", "2000", "--noise", "0.08",
                           "--seed", "7", "--out", d.string()});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  for (const char* f : {"id_train.fcft", "id_test.fcft", "ood.fcft"}) {
    ASSERT_TRUE(fs::exists(a / f)) << f;
    EXPECT_EQ(io::read_file((a / f).string()), io::read_file((b / f).string())) << f;
  }
  const FeatureDataset train = read_features((a / "id_train.fcft").string());
  EXPECT_EQ(train.size(), 2000u);
  EXPECT_EQ(train.dim, 2u);
}

TEST(Cli, GenSynthBlobsReportsClasses) {
  const auto dir = testing::temp_dir("cli_blobs");
  const Result r = call({"gen-synth", "--kind", "blobs", "--k", "10", "--d", "64", "--n", "20",
                         "--n-test", "5", "--n-ood", "30", "--out", dir.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const FeatureDataset train = read_features((dir / "id_train.fcft").string());
  const FeatureDataset test = read_features((dir / "id_test.fcft").string());
  EXPECT_EQ(train.num_classes, 10u);
  EXPECT_EQ(test.num_classes, 10u);
  EXPECT_EQ(train.dim, 64u);
  EXPECT_EQ(train.size(), 200u);
  EXPECT_EQ(test.size(), 50u);
  EXPECT_EQ(read_features((dir / "ood.fcft").string()).size(), 30u);
}

class Pipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = testing::temp_dir("cli_pipeline");
    ASSERT_EQ(call({"gen-synth", "--kind", "moons", "--n", "200", "--n-test", "100", "--n-ood",
                    "60", "--seed", "3", "--out", (dir_ / "data").string()})
                  .code,
              0);
    std::ofstream cfg(dir_ / "run.cfg");
    cfg << "train_features = " << (dir_ / "data" / "id_train.fcft").string() << "\n"
        << "out_dir = " << (dir_ / "run").string() << "\n"
        << "K = 2\nh = 8\nepochs = 2\nlr = 1e-3\nseed = 1\n";
  }
  static fs::path dir_;
};
fs::path Pipeline::dir_;

TEST_F(Pipeline, TrainWritesArtifactsDeterministically) {
  Result r = call({"train", (dir_ / "run.cfg").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* f :
       {"model.fckp", "model.fckp.fcos", "prototypes.fcpt", "train_log.jsonl", "config.txt"})
    EXPECT_TRUE(fs::exists(dir_ / "run" / f)) << f;
  const auto first = io::read_file((dir_ / "run" / "model.fckp").string());

  std::istringstream log(slurp(dir_ / "run" / "train_log.jsonl"));
  std::string header;
  std::getline(log, header);
  const auto h = nlohmann::json::parse(header)["config"];
  EXPECT_EQ(h["tau1"], 1.5);
  EXPECT_EQ(h["tau2"], 0.1);
  EXPECT_EQ(h["lambda"], 0.07);

  r = call({"train", (dir_ / "run.cfg").string(), "--set",
            "out_dir=" + (dir_ / "run2").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(io::read_file((dir_ / "run2" / "model.fckp").string()), first);

  r = call({"train", (dir_ / "run.cfg").string(), "--set", "lambda=0.0", "--set",
            "out_dir=" + (dir_ / "run_flow").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  r = call({"train", (dir_ / "run.cfg").string(), "--set", "nonsense=1"});
  EXPECT_EQ(r.code, kExitUsage);
}

TEST_F(Pipeline, EvalWritesReportsPerOodSet) {
  ASSERT_EQ(call({"train", (dir_ / "run.cfg").string()}).code, 0);
  const auto data = dir_ / "data";
  const auto out = dir_ / "eval";
  const Result r = call({"eval", "--model", (dir_ / "run" / "model.fckp").string(),
                         "--prototypes", (dir_ / "run" / "prototypes.fcpt").string(),
                         "--id-test", (data / "id_test.fcft").string(), "--ood",
                         "first=" + (data / "ood.fcft").string(), "--ood",
                         "second=" + (data / "ood.fcft").string(), "--ratio", "0.2", "--seed",
                         "11", "--out", out.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  std::size_t json = 0;
  for (const auto& e : fs::directory_iterator(out)) json += e.path().extension() == ".json";
  EXPECT_EQ(json, 3u);
  for (const char* f : {"report_first.json", "report_second.json", "report_mean.json"}) {
    const auto j = nlohmann::json::parse(slurp(out / f));
    EXPECT_EQ(j["seed"], 11) << f;
    EXPECT_EQ(j["ratio"], 0.2) << f;
  }
  EXPECT_TRUE(fs::exists(out / "hist_first.csv"));
  EXPECT_NE(r.out.find("AUROC"), std::string::npos);

  const Result h = call({"export-hist", "--model", (dir_ / "run" / "model.fckp").string(),
                         "--prototypes", (dir_ / "run" / "prototypes.fcpt").string(),
                         "--id-test", (data / "id_test.fcft").string(), "--ood",
                         (data / "ood.fcft").string(), "--out", (dir_ / "hist").string()});
  ASSERT_EQ(h.code, 0) << h.err;
  EXPECT_TRUE(fs::exists(dir_ / "hist" / "hist_ood.csv"));
}

TEST_F(Pipeline, EvalRejectsDimensionMismatch) {
  ASSERT_EQ(call({"train", (dir_ / "run.cfg").string()}).code, 0);
  FeatureDataset wide;
  wide.dim = 3;
  wide.num_classes = 2;
  wide.push_back(0, std::vector<double>{1, 2, 3});
  write_features(wide, (dir_ / "wide.fcft").string());
  const Result r = call({"eval", "--model", (dir_ / "run" / "model.fckp").string(),
                         "--prototypes", (dir_ / "run" / "prototypes.fcpt").string(),
                         "--id-test", (dir_ / "wide.fcft").string(), "--ood",
                         (dir_ / "wide.fcft").string(), "--out", (dir_ / "bad").string()});
  EXPECT_EQ(r.code, kExitUsage);
}

TEST_F(Pipeline, ClassifyAndUnlabeledError) {
  ASSERT_EQ(call({"train", (dir_ / "run.cfg").string()}).code, 0);
  const Result r = call({"classify", "--model", (dir_ / "run" / "model.fckp").string(),
                         "--prototypes", (dir_ / "run" / "prototypes.fcpt").string(),
                         "--features", (dir_ / "data" / "id_test.fcft").string(), "--out",
                         (dir_ / "acc.json").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(slurp(dir_ / "acc.json"));
  EXPECT_GE(j["accuracy"].get<double>(), 0.0);
  EXPECT_EQ(j["labeled"], 100);

  const Result bad = call({"classify", "--model", (dir_ / "run" / "model.fckp").string(),
                           "--prototypes", (dir_ / "run" / "prototypes.fcpt").string(),
                           "--features", (dir_ / "data" / "ood.fcft").string()});
  EXPECT_EQ(bad.code, kExitUsage);
  EXPECT_NE(bad.err.find("no labeled rows"), std::string::npos) << bad.err;
}

TEST_F(Pipeline, ExportEmbedIdentityModel) {
  const FlowModel m = init_model(2, 2, 4, 0);
  save_checkpoint(m, (dir_ / "identity.fckp").string());
  const auto test = dir_ / "data" / "id_test.fcft";
  const auto ood = dir_ / "data" / "ood.fcft";
  const Result r = call({"export-embed", "--model", (dir_ / "identity.fckp").string(), "--input",
                         "id=" + test.string(), "--input", "ood=" + ood.string(), "--out",
                         (dir_ / "embed.csv").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const FeatureDataset a = read_features(test.string());
  const FeatureDataset b = read_features(ood.string());
  std::istringstream csv(slurp(dir_ / "embed.csv"));
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "z0,z1,label,source");
  std::size_t rows = 0;
  while (std::getline(csv, line)) {
    const bool in_id = rows < a.size();
    const FeatureDataset& ds = in_id ? a : b;
    const std::size_t i = in_id ? rows : rows - a.size();
    std::istringstream ls(line);
    std::string cell;
    for (std::size_t j = 0; j < 2; ++j) {
      std::getline(ls, cell, ',');
      EXPECT_NEAR(std::stod(cell), ds.row(i)[j], 1e-9);
    }
    std::getline(ls, cell, ',');
    EXPECT_EQ(std::stol(cell), in_id ? static_cast<long>(ds.labels[i]) : -1);
    std::getline(ls, cell, ',');
    EXPECT_EQ(cell, in_id ? "id" : "ood");
    ++rows;
  }
  EXPECT_EQ(rows, a.size() + b.size());
}

}  // namespace
}  // namespace flowcon::cli
