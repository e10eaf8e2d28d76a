// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <opencv2/imgcodecs.hpp>

#include "sammese/cli.hpp"
#include "sammese/data_io.hpp"
#include "test_support.hpp"

namespace sammese {
namespace {

namespace fs = std::filesystem;
using testing::TempDir;

struct CliRun {
  int code;
  std::string out, err;
};

CliRun cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

/// Writes a small config file equivalent to testing::tiny_config().
std::string tiny_cfg(const TempDir& dir) {
  const std::string path = dir / "tiny.cfg";
  std::ofstream(path) << testing::tiny_config().to_text();
  return path;
}

TEST(Cli, UsageErrorsExitWithTwo) {
  EXPECT_EQ(cli({}).code, kExitUsage);
  EXPECT_EQ(cli({"bogus"}).code, kExitUsage);
  EXPECT_EQ(cli({"train", "--no-such-flag"}).code, kExitUsage);
  const CliRun missing = cli({"train", "--data", "/nonexistent/dataset"});
  EXPECT_EQ(missing.code, kExitUsage);
  EXPECT_NE(missing.err.find("/nonexistent/dataset"), std::string::npos);
  EXPECT_EQ(cli({"predict", "--data", "."}).code, kExitUsage);  // no --ckpt
  EXPECT_EQ(cli({"train", "--set", "queries"}).code, kExitUsage);
  EXPECT_EQ(cli({"train", "--ablate", "no-such-row"}).code, kExitUsage);
  EXPECT_EQ(cli({"ablate", "--which", "tables"}).code, kExitUsage);
  EXPECT_EQ(cli({"synth-data", "--out", "x", "--corruption", "fog"}).code, kExitUsage);
}

TEST(Cli, HelpExitsWithZero) {
  const CliRun r = cli({"--help"});
  EXPECT_EQ(r.code, kExitOk);
  EXPECT_NE(r.out.find("train"), std::string::npos);
  EXPECT_EQ(cli({"predict", "--help"}).code, kExitOk);
}

TEST(Cli, AblationNamesMapToConfigRows) {
  RunConfig c;
  apply_ablation(c, "no-mcfm,no-fusion,no-geometric");
  EXPECT_EQ(c.mcfm_variant, McfmVariant::no_mcfm);
  EXPECT_EQ(c.adapter_variant, AdapterVariant::no_fusion);
  EXPECT_FALSE(c.geometric_prompts);
  EXPECT_TRUE(c.semantic_prompts);
  EXPECT_THROW(apply_ablation(c, "bad"), ConfigError);

  const RunConfig base = RunConfig::toy();
  EXPECT_EQ(ablation_rows(base, "mcfm", {}).size(), 3u);
  EXPECT_EQ(ablation_rows(base, "madapter", {}).size(), 5u);
  EXPECT_EQ(ablation_rows(base, "prompts", {}).size(), 3u);
  const auto q = ablation_rows(base, "queries", {});
  ASSERT_EQ(q.size(), 4u);
  EXPECT_EQ(q[3].cfg.queries, 50);
  const auto l = ablation_rows(base, "level", {2, 3});
  ASSERT_EQ(l.size(), 2u);
  EXPECT_EQ(l[1].cfg.feature_level, 3);
  EXPECT_THROW(ablation_rows(base, "queries", {0}), ConfigError);
}

TEST(Cli, TrainPredictEvalRoundTrip) {
  TempDir dir("cli");
  const std::string cfg = tiny_cfg(dir);
  const std::string data = dir / "data";
  ASSERT_EQ(cli({"synth-data", "--out", data, "--n", "2", "--size", "40"}).code, kExitOk);

  const CliRun train = cli({"train", "--data", data, "--config", cfg, "--set", "max_steps=2",
                         "--out", dir / "run"});
  ASSERT_EQ(train.code, kExitOk) << train.err;
  EXPECT_NE(train.out.find("learnable parameters:"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir / "run/model.ckpt"));
  EXPECT_TRUE(fs::exists(dir / "run/train_log.csv"));

  const CliRun pred = cli({"predict", "--data", data, "--ckpt", dir / "run/model.ckpt", "--out",
                        dir / "pred", "--dump-prompts", "--coarse"});
  ASSERT_EQ(pred.code, kExitOk) << pred.err;
  const Tensor png = read_image(dir / "pred/syn0.png");
  EXPECT_EQ(png.shape(), (Shape{3, 40, 40}));  // source resolution
  EXPECT_TRUE(fs::exists(dir / "pred/prompts.json"));
  EXPECT_TRUE(fs::exists(dir / "pred/coarse/syn1.png"));

  const CliRun single = cli({"predict", "--rgb", data + "/RGB/syn1.png", "--aux", data + "/T/syn1.png",
                          "--ckpt", dir / "run/model.ckpt", "--out", dir / "single"});
  ASSERT_EQ(single.code, kExitOk) << single.err;
  EXPECT_TRUE(fs::exists(dir / "single/syn1.png"));

  const CliRun ev = cli({"eval", "--pred", dir / "pred", "--data", data, "--out", dir / "ev.csv"});
  ASSERT_EQ(ev.code, kExitOk) << ev.err;
  EXPECT_NE(ev.out.find("MAE"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir / "ev.csv"));

  fs::remove(dir / "pred/syn1.png");
  EXPECT_EQ(cli({"eval", "--pred", dir / "pred", "--data", data}).code, kExitRuntime);
}

TEST(Cli, CorruptImageFailsThatFileButFinishesTheBatch) {
  TempDir dir("cli_bad");
  const std::string cfg = tiny_cfg(dir);
  const std::string data = dir / "data";
  ASSERT_EQ(cli({"synth-data", "--out", data, "--n", "3", "--size", "32"}).code, kExitOk);
  ASSERT_EQ(cli({"train", "--data", data, "--config", cfg, "--set", "max_steps=1", "--out",
                 dir / "run"}).code,
            kExitOk);
  std::ofstream(data + "/RGB/syn1.png") << "garbage";
  const CliRun r = cli({"predict", "--data", data, "--ckpt", dir / "run/model.ckpt", "--out",
                     dir / "pred"});
  EXPECT_EQ(r.code, kExitRuntime);
  EXPECT_NE(r.err.find("syn1"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir / "pred/syn0.png"));
  EXPECT_TRUE(fs::exists(dir / "pred/syn2.png"));
  EXPECT_FALSE(fs::exists(dir / "pred/syn1.png"));
}

}  // namespace
}  // namespace sammese
