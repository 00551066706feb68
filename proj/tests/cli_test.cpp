// Copyright 2026 The MixPro Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>
#include <json.hpp>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>
#include <unistd.h>

namespace {

namespace fs = std::filesystem;

struct CmdResult {
  int code = -1;
  std::string out;
};

CmdResult run(const std::string& args) {
  const std::string cmd = std::string(MIXPRO_CLI_PATH) + " " + args + " 2>&1";
  CmdResult r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf;
  while (std::size_t n = std::fread(buf.data(), 1, buf.size(), pipe)) r.out.append(buf.data(), n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const char* kTiny =
    "--set image_size=16 --set patch_size=4 --set embed_dim=16 --set heads=2 --set depth=1 "
    "--set num_classes=4 --set epochs=2 --set batch_size=8 --set synth_per_class=10 "
    "--set warmup_epochs=0 --set drop_path=0";

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = fs::temp_directory_path() / ("mixpro_cli_" + std::to_string(::getpid()));
    fs::create_directories(dir_);
    trained_ = run(std::string("train -q ") + kTiny + " --set log_lambdas=true --out " +
                   (dir_ / "run").string());
  }
  static void TearDownTestSuite() { fs::remove_all(dir_); }

  static std::string manifest() { return "--manifest " + (dir_ / "run" / "manifest.json").string(); }
  static std::string checkpoint() { return "--checkpoint " + (dir_ / "run" / "checkpoint.bin").string(); }

  static inline fs::path dir_;
  static inline CmdResult trained_;
};

TEST_F(Cli, TrainWritesArtifacts) {
  ASSERT_EQ(trained_.code, 0) << trained_.out;
  for (const char* f : {"manifest.json", "metrics.csv", "checkpoint.bin", "lambdas.csv"}) {
    EXPECT_TRUE(fs::exists(dir_ / "run" / f)) << f;
  }
  const auto m = nlohmann::json::parse(slurp(dir_ / "run" / "manifest.json"));
  EXPECT_EQ(m["config"]["embed_dim"], "16");
  EXPECT_EQ(m["seed"], 0);
  EXPECT_FALSE(m["started_at"].is_null());
  EXPECT_FALSE(m["finished_at"].is_null());
  EXPECT_TRUE(m["outputs"].contains("lambdas"));
  const std::string csv = slurp(dir_ / "run" / "metrics.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "epoch,step,lr,train_loss,alpha_mean,val_top1");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
}

TEST_F(Cli, ManifestReplaysToSameMetrics) {
  ASSERT_EQ(trained_.code, 0);
  const CmdResult again = run("train -q " + manifest() + " --out " + (dir_ / "replay").string());
  ASSERT_EQ(again.code, 0) << again.out;
  EXPECT_EQ(slurp(dir_ / "replay" / "metrics.csv"), slurp(dir_ / "run" / "metrics.csv"));
}

TEST_F(Cli, EvalMatchesFinalValidation) {
  ASSERT_EQ(trained_.code, 0);
  const CmdResult r = run("eval " + manifest() + " " + checkpoint());
  ASSERT_EQ(r.code, 0) << r.out;
  const std::string csv = slurp(dir_ / "run" / "metrics.csv");
  const std::string last = csv.substr(csv.rfind(',', csv.size() - 2) + 1);
  EXPECT_EQ(r.out, "top1 " + last);
}

TEST_F(Cli, OcclusionCsv) {
  ASSERT_EQ(trained_.code, 0);
  const fs::path out = dir_ / "occ.csv";
  const CmdResult r = run("occlusion " + manifest() + " " + checkpoint() +
                          " --modes salient,random --ratios 0,0.5,1 -o " + out.string());
  ASSERT_EQ(r.code, 0) << r.out;
  const std::string csv = slurp(out);
  EXPECT_EQ(csv[0], '#');
  EXPECT_NE(csv.find("mode,ratio,top1\nsalient,0,"), std::string::npos);
  EXPECT_NE(csv.find("\nrandom,1,"), std::string::npos);
  EXPECT_EQ(run("occlusion " + manifest() + " " + checkpoint() + " --ratios 0.5,0.2").code, 2);
  EXPECT_EQ(run("occlusion " + manifest() + " " + checkpoint() + " --modes edges").code, 2);
}

TEST_F(Cli, VisualizeWritesFourFilesPerPair) {
  ASSERT_EQ(trained_.code, 0);
  const fs::path out = dir_ / "vis";
  const CmdResult r = run("visualize " + manifest() + " " + checkpoint() + " -n 3 -o " + out.string());
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(std::distance(fs::directory_iterator(out), fs::directory_iterator{}), 12);
  const std::string ppm = slurp(out / "pair0_mixed.ppm");
  EXPECT_EQ(ppm.substr(0, 13), "P6\n16 16\n255\n");
  EXPECT_EQ(ppm.size(), 13u + 16 * 16 * 3);
  const std::string pgm = slurp(out / "pair2_attention.pgm");
  EXPECT_EQ(pgm.substr(0, 13), "P5\n16 16\n255\n");
  EXPECT_EQ(pgm.size(), 13u + 16 * 16);
}

TEST(CliErrors, ExitCodes) {
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("train --set bogus=1").code, 2);
  EXPECT_EQ(run("train --set epochs").code, 2);
  EXPECT_EQ(run("train -c /nonexistent/desk.conf").code, 2);
  EXPECT_EQ(run("eval --checkpoint /nonexistent/ckpt.bin").code, 3);
  EXPECT_EQ(run("ablate --table nonsense").code, 2);
  const CmdResult v = run("--version");
  EXPECT_EQ(v.code, 0);
  EXPECT_FALSE(v.out.empty());
}

TEST(CliErrors, GradcheckNamesCorruptedOp) {
  const CmdResult r = run("gradcheck --seeds 1 --corrupt gelu");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("worst op gelu"), std::string::npos) << r.out;
}

}  // namespace
