#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include <gtest/gtest.h>
#include <json.hpp>

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct RunResult {
  int code = -1;
  std::string out;
};

RunResult Rigkit(const std::string& args) {
  const std::string cmd = std::string(RIGKIT_CLI_PATH) + " " + args + " 2>/dev/null";
  RunResult r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  while (std::size_t n = fread(buf, 1, sizeof buf, pipe)) r.out.append(buf, n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string ReadAll(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = fs::temp_directory_path() /
            ("rigkit_cli_" + std::to_string(::getpid()) + "_" +
             ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(root_);
    fs::create_directories(root_);
  }
  void TearDown() override { fs::remove_all(root_); }

  std::string Gen(const std::string& name, const std::string& extra = "") {
    const fs::path dir = root_ / name;
    const RunResult r = Rigkit("gen --cameras 3 --frames 9 --size 16x16 --seed 4 --out " +
                            dir.string() + " " + extra);
    EXPECT_EQ(r.code, 0) << r.out;
    return dir.string();
  }

  fs::path root_;
};

TEST_F(Cli, GenIsByteDeterministic) {
  const fs::path a = Gen("a");
  const fs::path b = Gen("b");
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    ++files;
    EXPECT_EQ(ReadAll(e.path()), ReadAll(b / fs::relative(e.path(), a))) << e.path();
  }
  EXPECT_GT(files, 9u);
}

TEST_F(Cli, RecoverSceneMeetsTolerance) {
  const std::string dir = Gen("s");
  const RunResult r = Rigkit("recover --scene " + dir + " --assert-tol 1e-6");
  ASSERT_EQ(r.code, 0) << r.out;
  const json j = json::parse(r.out);
  EXPECT_LT(j["max_error"]["focal_rel"].get<double>(), 1e-6);
  EXPECT_EQ(j["cameras"].size(), 9u);
}

TEST_F(Cli, EvalAgainstItselfIsPerfect) {
  const std::string dir = Gen("s");
  const RunResult r = Rigkit("eval --pred " + dir + " --gt " + dir + " --mode both --align none");
  ASSERT_EQ(r.code, 0) << r.out;
  const json j = json::parse(r.out);
  EXPECT_EQ(j["pose"]["rra"].get<double>(), 1.0);
  EXPECT_EQ(j["pose"]["rta"].get<double>(), 1.0);
  EXPECT_EQ(j["pose"]["maa"].get<double>(), 1.0);
  EXPECT_EQ(j["points"]["chamfer"].get<double>(), 0.0);
}

TEST_F(Cli, EvalFrameCountMismatchExitsTwo) {
  const std::string a = Gen("a");
  const fs::path b = root_ / "b";
  ASSERT_EQ(Rigkit("gen --cameras 3 --frames 6 --size 16x16 --out " + b.string()).code, 0);
  EXPECT_EQ(Rigkit("eval --pred " + b.string() + " --gt " + a).code, 2);
}

TEST_F(Cli, CorruptBlobExitsTwo) {
  const std::string dir = Gen("s");
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.path().extension() == ".f32") {
      fs::resize_file(e.path(), 5);
      break;
    }
  }
  EXPECT_EQ(Rigkit("discover --scene " + dir).code, 2);
}

TEST_F(Cli, UnwritableOutputExitsTwo) {
  const fs::path blocker = root_ / "file";
  std::ofstream(blocker) << "x";
  EXPECT_EQ(Rigkit("gen --cameras 1 --frames 2 --size 8x8 --out " + (blocker / "sub").string())
                .code,
            2);
}

TEST_F(Cli, BadArgumentsExitTwo) {
  EXPECT_EQ(Rigkit("gen --cameras 4 --out " + (root_ / "x").string()).code, 2);
  EXPECT_EQ(Rigkit("gen --cameras 3 --size 16by16 --out " + (root_ / "x").string()).code, 2);
  EXPECT_EQ(Rigkit("no-such-command").code, 2);
}

TEST_F(Cli, DiscoverFindsRigAndMonocularFlag) {
  const std::string rig = Gen("rig");
  RunResult r = Rigkit("discover --scene " + rig + " --assert-accuracy 1.0");
  ASSERT_EQ(r.code, 0) << r.out;
  json j = json::parse(r.out);
  EXPECT_EQ(j["num_clusters"].get<int>(), 3);
  EXPECT_FALSE(j["no_rig"].get<bool>());
  EXPECT_EQ(j["rig_maa"].get<double>(), 1.0);

  const fs::path mono = root_ / "mono";
  ASSERT_EQ(Rigkit("gen --cameras 1 --frames 4 --size 16x16 --out " + mono.string()).code, 0);
  r = Rigkit("discover --scene " + mono.string());
  ASSERT_EQ(r.code, 0) << r.out;
  j = json::parse(r.out);
  EXPECT_EQ(j["num_clusters"].get<int>(), 1);
  EXPECT_TRUE(j["no_rig"].get<bool>());
}

TEST_F(Cli, FailedAssertionExitsOne) {
  const std::string dir = Gen("s");
  EXPECT_EQ(Rigkit("discover --scene " + dir + " --noise-sigma 0.6 --assert-accuracy 1.0").code,
            1);
}

TEST_F(Cli, NoiseSweepWritesCsv) {
  const std::string dir = Gen("s");
  const fs::path csv = root_ / "sweep.csv";
  const RunResult r = Rigkit("noise-sweep --scene " + dir + " --sigmas 0,0.2 --trials 3 --out " +
                          csv.string());
  ASSERT_EQ(r.code, 0) << r.out;
  const std::string text = ReadAll(csv);
  EXPECT_EQ(text.rfind("sigma,trial,rig_maa,rig_id_accuracy,num_clusters,aggregate", 0), 0u);
  const json j = json::parse(r.out);
  ASSERT_EQ(j["levels"].size(), 2u);
  EXPECT_EQ(j["levels"][0]["mean_rig_maa"].get<double>(), 1.0);
}

TEST_F(Cli, MicromodelCheckGradPasses) {
  const RunResult r = Rigkit("micromodel check-grad --assert");
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_TRUE(json::parse(r.out)["passed"].get<bool>());
}

TEST_F(Cli, MicromodelTrainAndEval) {
  const fs::path scene = root_ / "tiny";
  ASSERT_EQ(Rigkit("gen --cameras 3 --frames 2 --size 8x8 --seed 3 --out " + scene.string()).code,
            0);
  const fs::path ckpt = root_ / "ckpt";
  RunResult r = Rigkit("micromodel train --scene " + scene.string() + " --steps 300 --out " +
                    ckpt.string());
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_LT(json::parse(r.out)["ratio"].get<double>(), 1.0);
  r = Rigkit("micromodel eval --ckpt " + ckpt.string() + " --scene " + scene.string() +
          " --out " + (root_ / "pred").string());
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_TRUE(json::parse(r.out).contains("pose"));
}

}  // namespace
