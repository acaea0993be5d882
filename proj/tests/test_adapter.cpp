#include <gtest/gtest.h>

#include <chrono>
#include <thread>

#include "herdscope/adapter.hpp"
#include "herdscope/error.hpp"
#include "test_util.hpp"

using namespace herdscope;

namespace {

AdapterConfig fake(const std::string& mode, double timeout = 20.0) {
  AdapterConfig cfg;
  cfg.executable = FAKE_ADAPTER;
  cfg.prefix_args = {mode};
  cfg.timeout_seconds = timeout;
  cfg.max_concurrent = 2;
  return cfg;
}

ImageBuffer smooth_patch(int size) {
  return testutil::disks(size, size, {{size * 0.3, size * 0.4, size * 0.2}, {size * 0.7, size * 0.6, size * 0.15}});
}

Error capture(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e;
  }
  return Error(ErrorCode::kInternal, "no error thrown");
}

}  // namespace

TEST(Adapter, OkMatchesBicubic) {
  testutil::TempDir dir;
  const auto patch = smooth_patch(24);
  save_image(patch, dir / "in.ppm");
  const auto out = external_upscale(dir / "in.ppm", 2, fake("ok"));
  EXPECT_EQ(out, resample_bicubic(patch, 48, 48));
}

TEST(Adapter, FailureCarriesStderr) {
  testutil::TempDir dir;
  save_image(smooth_patch(8), dir / "in.ppm");
  const auto e = capture([&] { external_upscale(dir / "in.ppm", 2, fake("fail")); });
  EXPECT_EQ(e.code(), ErrorCode::kAdapter);
  EXPECT_NE(std::string(e.what()).find("CUDA out of memory"), std::string::npos) << e.what();
}

TEST(Adapter, DimensionContract) {
  testutil::TempDir dir;
  save_image(smooth_patch(8), dir / "in.ppm");
  const auto e = capture([&] { external_upscale(dir / "in.ppm", 2, fake("narrow")); });
  EXPECT_EQ(e.code(), ErrorCode::kAdapter);
  EXPECT_NE(std::string(e.what()).find("15"), std::string::npos) << e.what();
}

TEST(Adapter, Timeout) {
  testutil::TempDir dir;
  save_image(smooth_patch(8), dir / "in.ppm");
  const auto start = std::chrono::steady_clock::now();
  const auto e = capture([&] { external_upscale(dir / "in.ppm", 2, fake("sleep", 0.5)); });
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  EXPECT_EQ(e.code(), ErrorCode::kAdapter);
  EXPECT_NE(std::string(e.what()).find("timed out"), std::string::npos);
  EXPECT_LT(secs, 10.0);
}

TEST(Adapter, GarbageOutput) {
  testutil::TempDir dir;
  save_image(smooth_patch(8), dir / "in.ppm");
  EXPECT_EQ(capture([&] { external_upscale(dir / "in.ppm", 2, fake("garbage")); }).code(),
            ErrorCode::kAdapter);
}

TEST(Adapter, MissingExecutable) {
  testutil::TempDir dir;
  save_image(smooth_patch(8), dir / "in.ppm");
  AdapterConfig cfg;
  cfg.executable = (dir / "no_such_tool").string();
  EXPECT_EQ(capture([&] { external_upscale(dir / "in.ppm", 2, cfg); }).code(), ErrorCode::kAdapter);
  cfg.executable.clear();
  EXPECT_EQ(capture([&] { external_upscale(dir / "in.ppm", 2, cfg); }).code(), ErrorCode::kConfig);
  EXPECT_EQ(capture([&] { external_upscale(dir / "in.ppm", 3, fake("ok")); }).code(),
            ErrorCode::kInvalidArgument);
}

TEST(Adapter, CliUpscaleConformance) {
  testutil::TempDir dir;
  const auto patch = smooth_patch(32);
  save_image(patch, dir / "in.ppm");
  AdapterConfig cfg;
  cfg.executable = HERDSCOPE_CLI;
  cfg.prefix_args = {"upscale", "--backend", "bicubic"};
  for (int r : {2, 4}) {
    const auto out = external_upscale(dir / "in.ppm", r, cfg);
    const auto ref = resample_bicubic(patch, 32 * r, 32 * r);
    ASSERT_EQ(out.width(), ref.width());
    int worst = 0;
    for (std::size_t i = 0; i < out.data().size(); ++i)
      worst = std::max(worst, std::abs(int(out.data()[i]) - int(ref.data()[i])));
    EXPECT_LE(worst, 1);
  }
}

TEST(Adapter, SharedUpscalerAcrossThreads) {
  ExternalUpscaler up(fake("ok"));
  const auto patch = smooth_patch(16);
  const auto ref = resample_bicubic(patch, 32, 32);
  std::vector<std::thread> pool;
  std::atomic<int> good{0};
  for (int t = 0; t < 4; ++t)
    pool.emplace_back([&] {
      if (up.upscale(patch, 2) == ref) ++good;
    });
  for (auto& th : pool) th.join();
  EXPECT_EQ(good.load(), 4);
}
