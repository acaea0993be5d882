#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "herdscope/error.hpp"
#include "herdscope/image.hpp"
#include "herdscope/rng.hpp"
#include "test_util.hpp"

using namespace herdscope;

namespace {

ImageBuffer gaussian_blobs(int w, int h) {
  ImageBuffer img(w, h, 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double a = std::exp(-((x - 20.0) * (x - 20.0) + (y - 24.0) * (y - 24.0)) / 200.0);
      const double b = std::exp(-((x - 44.0) * (x - 44.0) + (y - 40.0) * (y - 40.0)) / 300.0);
      img.at(x, y, 0) = quantize(40 + 180 * a);
      img.at(x, y, 1) = quantize(60 + 150 * b);
      img.at(x, y, 2) = quantize(30 + 100 * a + 90 * b);
    }
  return img;
}

ImageBuffer random_image(int w, int h, int ch, std::uint64_t seed) {
  Rng rng(seed);
  ImageBuffer img(w, h, ch);
  for (auto& v : img.data()) v = static_cast<std::uint8_t>(rng.below(256));
  return img;
}

}  // namespace

TEST(Quantize, RoundsHalfAwayFromZeroAndClamps) {
  EXPECT_EQ(quantize(0.49), 0);
  EXPECT_EQ(quantize(0.5), 1);
  EXPECT_EQ(quantize(1.5), 2);
  EXPECT_EQ(quantize(2.5), 3);
  EXPECT_EQ(quantize(-0.5), 0);
  EXPECT_EQ(quantize(-7.0), 0);
  EXPECT_EQ(quantize(254.49), 254);
  EXPECT_EQ(quantize(254.5), 255);
  EXPECT_EQ(quantize(1e9), 255);
  EXPECT_EQ(quantize(std::numeric_limits<double>::quiet_NaN()), 0);
}

TEST(CubicKernel, KeysValues) {
  EXPECT_DOUBLE_EQ(cubic_kernel(0.0), 1.0);
  EXPECT_DOUBLE_EQ(cubic_kernel(1.0), 0.0);
  EXPECT_DOUBLE_EQ(cubic_kernel(2.0), 0.0);
  EXPECT_DOUBLE_EQ(cubic_kernel(0.5), 0.5625);
  EXPECT_DOUBLE_EQ(cubic_kernel(-1.5), -0.0625);
  EXPECT_DOUBLE_EQ(cubic_kernel(3.0), 0.0);
  // Partition of unity at an arbitrary phase.
  const double t = 0.3;
  EXPECT_NEAR(cubic_kernel(t + 1) + cubic_kernel(t) + cubic_kernel(1 - t) + cubic_kernel(2 - t), 1.0,
              1e-12);
}

TEST(Resample, IdentityWithinOneLevel) {
  const auto img = random_image(37, 23, 3, 5);
  const auto out = resample_bicubic(img, 37, 23);
  ASSERT_EQ(out.width(), 37);
  for (std::size_t i = 0; i < img.data().size(); ++i)
    EXPECT_LE(std::abs(int(img.data()[i]) - int(out.data()[i])), 1);
}

TEST(Resample, UpscaleShape) {
  const ImageBuffer img(512, 512, 3, 9);
  const auto out = resample_bicubic(img, 1024, 1024);
  EXPECT_EQ(out.width(), 1024);
  EXPECT_EQ(out.height(), 1024);
  EXPECT_EQ(out.channels(), 3);
}

TEST(Resample, ConstantStaysConstant) {
  const ImageBuffer img(40, 30, 3, 173);
  for (auto [w, h] : {std::pair{80, 60}, std::pair{20, 15}, std::pair{13, 41}}) {
    const auto out = resample_bicubic(img, w, h);
    for (auto v : out.data()) ASSERT_EQ(v, 173);
  }
}

TEST(Resample, ReproducesLinearRampAwayFromEdges) {
  // src[x] = 8x; at 2x the output sample i sits at source position i/2 - 1/4,
  // so the exact value is 4i - 2.
  ImageBuffer img(16, 4, 1);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 16; ++x) img.at(x, y, 0) = static_cast<std::uint8_t>(8 * x);
  const auto out = resample_bicubic(img, 32, 8);
  for (int i = 4; i < 28; ++i) EXPECT_EQ(out.at(i, 3, 0), 4 * i - 2) << "i=" << i;
}

TEST(Resample, Deterministic) {
  const auto img = random_image(50, 40, 3, 11);
  EXPECT_EQ(resample_bicubic(img, 123, 77), resample_bicubic(img, 123, 77));
}

TEST(Resample, DownUpSmoothImageAbove30dB) {
  const auto img = gaussian_blobs(64, 64);
  const auto down = resample_bicubic(img, 32, 32);
  const auto up = resample_bicubic(down, 64, 64);
  EXPECT_GT(psnr(img, up), 30.0);
}

TEST(Resample, RejectsBadTargets) {
  const ImageBuffer img(4, 4, 1);
  EXPECT_THROW(resample_bicubic(img, 0, 4), Error);
  EXPECT_THROW(resample_bicubic(ImageBuffer{}, 4, 4), Error);
}

TEST(Psnr, Anchors) {
  const auto a = random_image(31, 17, 3, 3);
  EXPECT_TRUE(std::isinf(psnr(a, a)));
  EXPECT_GT(psnr(a, a), 0);
  ImageBuffer b(8, 8, 3, 100), c(8, 8, 3, 101);
  // 20 log10(255), computed independently.
  EXPECT_NEAR(psnr(b, c), 48.130803608679, 1e-9);
}

TEST(Psnr, Symmetric) {
  const auto a = random_image(20, 20, 3, 1);
  const auto b = random_image(20, 20, 3, 2);
  EXPECT_EQ(psnr(a, b), psnr(b, a));
}

TEST(Psnr, ShapeMismatchThrows) {
  EXPECT_THROW(psnr(ImageBuffer(4, 4, 3), ImageBuffer(4, 5, 3)), Error);
}

TEST(Pixmap, RoundTripP6AndP5) {
  testutil::TempDir dir;
  const auto rgb = random_image(13, 7, 3, 8);
  const auto gray = random_image(5, 9, 1, 9);
  save_image(rgb, dir / "a.ppm");
  save_image(gray, dir / "b.pgm");
  EXPECT_EQ(load_image(dir / "a.ppm"), rgb);
  EXPECT_EQ(load_image(dir / "b.pgm"), gray);
  const auto info = read_image_info(dir / "a.ppm");
  EXPECT_EQ(info.width, 13);
  EXPECT_EQ(info.height, 7);
  EXPECT_EQ(info.channels, 3);
}

TEST(Pixmap, HeaderComments) {
  testutil::TempDir dir;
  testutil::write_text(dir / "c.pgm", std::string("P5\n# made by hand\n2 1\n# depth\n255\n") + "\x05\x07");
  const auto img = load_image(dir / "c.pgm");
  EXPECT_EQ(img.width(), 2);
  EXPECT_EQ(img.at(1, 0, 0), 7);
}

TEST(Pixmap, Errors) {
  testutil::TempDir dir;
  auto code_of = [](auto fn) {
    try {
      fn();
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::kInternal;
  };
  testutil::write_text(dir / "deep.pgm", "P5 2 2 65535\n12345678");
  testutil::write_text(dir / "short.ppm", "P6 4 4 255\nabc");
  testutil::write_text(dir / "ascii.ppm", "P3 1 1 255\n1 2 3");
  EXPECT_EQ(code_of([&] { load_image(dir / "deep.pgm"); }), ErrorCode::kData);
  EXPECT_EQ(code_of([&] { load_image(dir / "short.ppm"); }), ErrorCode::kData);
  EXPECT_EQ(code_of([&] { load_image(dir / "ascii.ppm"); }), ErrorCode::kData);
  EXPECT_EQ(code_of([&] { load_image(dir / "missing.ppm"); }), ErrorCode::kIo);
}

TEST(ImageBuffer, GrayIsChannelMean) {
  ImageBuffer img(1, 1, 3);
  img.at(0, 0, 0) = 30;
  img.at(0, 0, 1) = 60;
  img.at(0, 0, 2) = 90;
  EXPECT_DOUBLE_EQ(img.gray(0, 0), 60.0 / 255.0);
  EXPECT_THROW(ImageBuffer(2, 2, 2), Error);
}
