// Copyright 2026 The mvlip Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <regex>

#include "mvlip/data.hpp"
#include "test_util.hpp"

namespace mvlip {
namespace {

struct Result {
  int code = -1;
  std::string out;
};

Result run(const std::string& args, const testing::TempDir& dir) {
  const auto log = dir / "cli.log";
  const std::string cmd = std::string(MVLIP_CLI) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = testing::slurp(log);
  return r;
}

const std::string kTiny =
    " --set synth.scale=0.2 --set synth.classes=4 --set synth.train_subjects=3"
    " --set synth.val_subjects=1 --set synth.test_subjects=1";
const std::string kSmallModel =
    " --set model.encoder_sizes=6,6,6 --set model.bottleneck=3 --set model.stream_hidden=3"
    " --set model.fusion_hidden=3 --set rbm.enabled=false --set train.max_epochs=2";

TEST(Cli, UsageErrorsExitOne) {
  testing::TempDir dir;
  EXPECT_EQ(run("", dir).code, 1);
  EXPECT_EQ(run("train", dir).code, 1);
  EXPECT_EQ(run("gradcheck --set no.such.key=1", dir).code, 1);
}

TEST(Cli, GradcheckPasses) {
  testing::TempDir dir;
  const auto r = run("gradcheck -o " + (dir / "gc").string(), dir);
  EXPECT_EQ(r.code, 0) << r.out;
  std::smatch m;
  ASSERT_TRUE(std::regex_search(r.out, m, std::regex("max relative error ([0-9.e+-]+) over")))
      << r.out;
  EXPECT_LT(std::stod(m[1]), 1e-5);
}

TEST(Cli, MissingViewFileExitsTwoNamingRow) {
  testing::TempDir dir;
  const auto data = dir / "data";
  ASSERT_EQ(run("synth -o " + data.string() + kTiny, dir).code, 0);
  const auto manifest = read_manifest(data / "manifest.tsv");
  std::filesystem::remove(data / manifest.entries[3].path);
  const auto r = run("train -d " + (data / "manifest.tsv").string() + " --views 0 -o " +
                         (dir / "run").string() + kSmallModel,
                     dir);
  EXPECT_EQ(r.code, 2) << r.out;
  EXPECT_NE(r.out.find("manifest row 4"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find(manifest.entries[3].path), std::string::npos) << r.out;
}

TEST(Cli, FiveViewSweepHasThirtyOneRows) {
  testing::TempDir dir;
  const auto data = dir / "data";
  ASSERT_EQ(run("synth -o " + data.string() + kTiny + " --set synth.views=0,30,45,60,90", dir).code, 0);
  const auto r = run("sweep -d " + (data / "manifest.tsv").string() + " -o " +
                         (dir / "sweep").string() + kSmallModel + " --set sweep.runs=1 --set train.max_epochs=1",
                     dir);
  ASSERT_EQ(r.code, 0) << r.out;
  const std::string tsv = testing::slurp(dir / "sweep" / "report.tsv");
  EXPECT_EQ(std::count(tsv.begin(), tsv.end(), '\n'), 32);
}

TEST(Cli, TrainFuseEvalChain) {
  testing::TempDir dir;
  const auto data = dir / "data";
  ASSERT_EQ(run("synth -o " + data.string() + kTiny +
                    " --set synth.views=0,90 --set synth.mode=complementary",
                dir).code,
            0);
  const std::string m = (data / "manifest.tsv").string();
  for (const char* v : {"0", "90"}) {
    const auto r = run("train -d " + m + " --views " + v + " -o " + (dir / ("s" + std::string(v))).string() + kSmallModel, dir);
    ASSERT_EQ(r.code, 0) << r.out;
  }
  std::vector<std::filesystem::path> ckpts;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir.path())) {
    if (e.path().extension() == ".mvlm") ckpts.push_back(e.path());
  }
  ASSERT_EQ(ckpts.size(), 2u);
  std::sort(ckpts.begin(), ckpts.end());
  auto r = run("fuse -d " + m + " -m " + ckpts[0].string() + " -m " + ckpts[1].string() + " -o " +
                   (dir / "fused").string() + kSmallModel,
               dir);
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_TRUE(std::filesystem::exists(dir / "fused" / "config.txt"));

  std::filesystem::path fused;
  for (const auto& e : std::filesystem::directory_iterator(dir / "fused")) {
    if (e.path().extension() == ".mvlm") fused = e.path();
  }
  ASSERT_FALSE(fused.empty());
  r = run("eval -d " + m + " -m " + fused.string() + " -o " + (dir / "ev").string(), dir);
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("test accuracy"), std::string::npos);

  std::string bytes = testing::slurp(fused);
  bytes[0] = 'X';
  testing::spit(dir / "broken.mvlm", bytes);
  r = run("eval -d " + m + " -m " + (dir / "broken.mvlm").string() + " -o " + (dir / "ev2").string(), dir);
  EXPECT_EQ(r.code, 2) << r.out;
  EXPECT_NE(r.out.find("bad magic"), std::string::npos) << r.out;
}

}  // namespace
}  // namespace mvlip
