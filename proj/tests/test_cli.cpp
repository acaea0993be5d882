#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code = -1;
  std::string out;
};

Outcome cli(const std::string& args) {
  const std::string cmd = std::string(HERDSCOPE_CLI) + " " + args + " 2>&1";
  Outcome o;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) return o;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) o.out.append(buf, n);
  const int status = ::pclose(pipe);
  o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return o;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class CliTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = new fs::path(fs::temp_directory_path() / ("cli_" + std::to_string(::getpid())));
    fs::remove_all(*root_);
    const auto r = cli("synth --preset savmap-like --frames 2 --width 1024 --height 1024 --animals 8 --seed 3 --out " +
                       (*root_ / "data").string());
    ASSERT_EQ(r.code, 0) << r.out;
    std::ofstream(*root_ / "f2.json")
        << R"({"manifest": "data/manifest.json", "degrade_factor": 2, "sr": {"backend": "bicubic"}, "seed": 3})";
  }
  static void TearDownTestSuite() {
    fs::remove_all(*root_);
    delete root_;
  }
  static fs::path p(const std::string& rel) { return *root_ / rel; }
  static std::string s(const std::string& rel) { return p(rel).string(); }

 private:
  static fs::path* root_;
};

fs::path* CliTest::root_ = nullptr;

}  // namespace

TEST_F(CliTest, RunEqualsStagedPath) {
  auto r = cli("run --config " + s("f2.json") + " --out " + s("run"));
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("Blob oracle + Bicubic | 256×256 → 512×512"), std::string::npos) << r.out;

  r = cli("tile --config " + s("f2.json") + " --out " + s("staged"));
  ASSERT_EQ(r.code, 0) << r.out;
  r = cli("detect --config " + s("f2.json") + " --tiles " + s("staged/tiles.json") + " --out " + s("staged"));
  ASSERT_EQ(r.code, 0) << r.out;
  r = cli("eval --config " + s("f2.json") + " --detections " + s("staged/detections.csv") + " --out " + s("staged"));
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(slurp(p("staged/detections.csv")), slurp(p("run/detections.csv")));
  EXPECT_EQ(slurp(p("staged/report.json")), slurp(p("run/report.json")));
}

TEST_F(CliTest, DeterministicAcrossRunsAndThreads) {
  ASSERT_EQ(cli("run --config " + s("f2.json") + " --out " + s("d1")).code, 0);
  ASSERT_EQ(cli("run --threads 3 --config " + s("f2.json") + " --out " + s("d2")).code, 0);
  EXPECT_EQ(slurp(p("d1/report.json")), slurp(p("d2/report.json")));
  // A report reproduces its own run.
  ASSERT_EQ(cli("run --config " + s("d1/report.json") + " --out " + s("d3")).code, 0);
  EXPECT_EQ(slurp(p("d1/report.json")), slurp(p("d3/report.json")));
}

TEST_F(CliTest, SweepAndReport) {
  ASSERT_EQ(cli("run --config " + s("f2.json") + " --out " + s("sw")).code, 0);
  ASSERT_EQ(cli("run --config " + s("f2.json") + " --out " + s("run")).code, 0);
  auto r = cli("sweep --config " + s("f2.json") + " --detections " + s("sw/detections.csv") +
               " --thresholds 0.1,0.3,0.5,0.7,0.9 --out " + s("sw"));
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_TRUE(fs::exists(p("sw/sweep.svg")));
  EXPECT_TRUE(fs::exists(p("sw/sweep.csv")));
  r = cli("report --inputs " + s("sw/report.json") + " " + s("run/report.json") + " --out " + s("rep"));
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(slurp(p("rep/report.md")).find("| Method | Operational Resolution |"), std::string::npos);
}

TEST_F(CliTest, ExitCodes) {
  EXPECT_EQ(cli("run").code, 2);
  EXPECT_EQ(cli("no-such-command").code, 2);
  std::ofstream(p("bad.json")) << R"({"manifest": "data/manifest.json", "degrade_factor": 3})";
  EXPECT_EQ(cli("run --config " + s("bad.json") + " --out " + s("x")).code, 2);
  std::ofstream(p("nodata.json")) << R"({"manifest": "nowhere/manifest.json"})";
  EXPECT_EQ(cli("run --config " + s("nodata.json") + " --out " + s("x")).code, 3);
  EXPECT_EQ(cli("eval --config " + s("f2.json") + " --detections " + s("missing.csv") + " --out " + s("x")).code, 3);
  std::ofstream(p("fail.json"))
      << R"({"manifest": "data/manifest.json", "degrade_factor": 2,
             "sr": {"backend": "external", "adapter": {"executable": ")"
      << FAKE_ADAPTER << R"(", "args": ["fail"]}}})";
  const auto r = cli("run --config " + s("fail.json") + " --out " + s("fail"));
  EXPECT_EQ(r.code, 4) << r.out;
  EXPECT_NE(slurp(p("fail/report.json")).find("CUDA out of memory"), std::string::npos);
}

TEST_F(CliTest, DegradeUpscaleAndGradCheck) {
  const auto img = p("data/images/frame_0000.ppm");
  ASSERT_EQ(cli("degrade --in " + img.string() + " --factor 4 --out " + s("small.ppm")).code, 0);
  ASSERT_EQ(cli("upscale --in " + s("small.ppm") + " --scale 4 --out " + s("big.ppm")).code, 0);
  EXPECT_EQ(slurp(p("big.ppm")).size(), slurp(img).size());
  const auto r = cli("grad-check --seed 5");
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("\"passed\":true"), std::string::npos) << r.out;
}
