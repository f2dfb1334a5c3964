#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>

#include "samkd/checkpoint.hpp"

namespace fs = std::filesystem;

namespace {

const fs::path& work_dir() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / "samkd_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    std::ofstream(d / "tiny.cfg") << "train_scenes = 8\ntest_scenes = 4\nepochs = 1\n"
                                     "teacher_epochs = 1\nbeta = 2\n";
    return d;
  }();
  return dir;
}

/// Runs the CLI with stdout/stderr captured to files; returns the exit code.
int run(const std::string& args, const std::string& tag) {
  const auto dir = work_dir();
  const std::string cmd = std::string(SAMKD_CLI_PATH) + " " + args + " > " +
                          (dir / (tag + ".out")).string() + " 2> " +
                          (dir / (tag + ".err")).string();
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string common(const std::string& out) {
  return "--config " + (work_dir() / "tiny.cfg").string() + " --out " + (work_dir() / out).string();
}

// One teacher shared by the tests that need a checkpoint.
const fs::path& teacher_ckpt() {
  static const fs::path p = [] {
    EXPECT_EQ(run("train-teacher " + common("teacher"), "teacher"), 0);
    return work_dir() / "teacher" / "teacher.ckpt.json";
  }();
  return p;
}

}  // namespace

TEST(Cli, TrainTeacherWritesCheckpointLogAndConfig) {
  ASSERT_TRUE(fs::exists(teacher_ckpt()));
  EXPECT_TRUE(fs::exists(work_dir() / "teacher" / "teacher_log.jsonl"));
  const auto cfg = slurp(work_dir() / "teacher" / "effective.cfg");
  EXPECT_NE(cfg.find("train_scenes = 8"), std::string::npos);
}

TEST(Cli, FlagsOverrideConfigFile) {
  ASSERT_EQ(run("distill --baseline --alpha 0.5 --seed 3 " + common("prec"), "prec"), 0);
  const auto cfg = slurp(work_dir() / "prec" / "effective.cfg");
  EXPECT_NE(cfg.find("alpha = 0.5\n"), std::string::npos);
  EXPECT_NE(cfg.find("beta = 2\n"), std::string::npos);
  EXPECT_NE(cfg.find("seed = 3\n"), std::string::npos);
}

TEST(Cli, DistillIsDeterministicApartFromTimestamp) {
  const std::string t = " --teacher " + teacher_ckpt().string() + " ";
  ASSERT_EQ(run("distill" + t + common("d1"), "d1"), 0);
  ASSERT_EQ(run("distill" + t + common("d2"), "d2"), 0);
  EXPECT_EQ(slurp(work_dir() / "d1" / "student_log.jsonl"),
            slurp(work_dir() / "d2" / "student_log.jsonl"));
  const auto a = samkd::read_json((work_dir() / "d1" / "student.ckpt.json").string());
  const auto b = samkd::read_json((work_dir() / "d2" / "student.ckpt.json").string());
  EXPECT_EQ(samkd::strip_timestamp(a), samkd::strip_timestamp(b));
}

TEST(Cli, EvalReportsMetrics) {
  ASSERT_EQ(run("eval --checkpoint " + teacher_ckpt().string() + " " + common("eval"), "eval"), 0);
  const auto j = samkd::read_json((work_dir() / "eval" / "eval.json").string());
  for (const char* k : {"mAP", "AP_s", "AP_m", "AP_l", "AR"}) EXPECT_TRUE(j.contains(k)) << k;
}

TEST(Cli, HeatmapsPerSceneAndDeterministic) {
  const std::string args = "export-heatmaps --checkpoint " + teacher_ckpt().string() +
                           " --scenes 0,1 ";
  ASSERT_EQ(run(args + common("hm1"), "hm1"), 0);
  ASSERT_EQ(run(args + common("hm2"), "hm2"), 0);
  for (int scene : {0, 1}) {
    int count = 0;
    for (const auto& e : fs::directory_iterator(work_dir() / "hm1")) {
      const auto name = e.path().filename().string();
      if (name.rfind("scene" + std::to_string(scene) + "_", 0) != 0) continue;
      ++count;
      EXPECT_EQ(slurp(e.path()), slurp(work_dir() / "hm2" / name)) << name;
    }
    EXPECT_GE(count, 4) << "scene " << scene;
  }
}

TEST(Cli, UnknownSceneSkippedWithWarning) {
  ASSERT_EQ(run("export-heatmaps --checkpoint " + teacher_ckpt().string() + " --scenes 0,99 " +
                    common("hm3"),
                "hm3"),
            0);
  EXPECT_NE(slurp(work_dir() / "hm3.err").find("warning: scene 99"), std::string::npos);
  EXPECT_TRUE(fs::exists(work_dir() / "hm3" / "scene0_input.ppm"));
}

TEST(Cli, EmptySceneListSucceeds) {
  EXPECT_EQ(run("export-heatmaps --checkpoint " + teacher_ckpt().string() + " " + common("hm4"),
                "hm4"),
            0);
}

TEST(Cli, ErrorsAreReportedCleanly) {
  EXPECT_EQ(run("ablate nosuch " + common("bad1"), "bad1"), 1);
  EXPECT_NE(slurp(work_dir() / "bad1.err").find("error=config"), std::string::npos);
  EXPECT_NE(slurp(work_dir() / "bad1.err").find("components"), std::string::npos);
  EXPECT_EQ(run("eval --checkpoint /nonexistent.json " + common("bad2"), "bad2"), 1);
  EXPECT_EQ(run("distill --teacher " + (work_dir() / "d1" / "student.ckpt.json").string() + " " +
                    common("bad3"),
                "bad3"),
            1);
  EXPECT_EQ(run("frobnicate", "bad4"), 2);
  EXPECT_EQ(run("train-teacher --config /missing.cfg", "bad5"), 1);
}
