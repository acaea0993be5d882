#include <gtest/gtest.h>

#include <cmath>

#include "herdscope/detector.hpp"
#include "herdscope/error.hpp"
#include "test_util.hpp"

using namespace herdscope;

namespace {

constexpr double kBackboneGoldenSum = 89.8592472;

DetectorConfig small_cfg() {
  DetectorConfig cfg;
  cfg.input_size = 64;
  cfg.head_channels = 4;
  cfg.fc_hidden = 8;
  return cfg;
}

ImageBuffer pattern(int size) {
  ImageBuffer img(size, size, 3);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = static_cast<std::uint8_t>((x * 31 + y * 17 + c * 70) % 256);
  return img;
}

FeatureTensor ones(int h, int w, int c) { return FeatureTensor(1, h, w, c, 1.0f); }

}  // namespace

TEST(Backbone, PyramidSizes) {
  DetectorConfig cfg;
  cfg.head_channels = 4;
  const auto pyr = backbone_pyramid(pattern(512), cfg, random_detector_weights(cfg, 1));
  EXPECT_EQ(pyr[0].width(), 64);
  EXPECT_EQ(pyr[1].width(), 32);
  EXPECT_EQ(pyr[2].width(), 16);
  EXPECT_EQ(pyr[2].height(), 16);
  EXPECT_EQ(pyr[2].channels(), 4);
}

TEST(Backbone, ZeroInputZeroBiasGivesZeros) {
  const auto cfg = small_cfg();
  auto w = random_detector_weights(cfg, 2);
  for (const auto& t : std::vector<NamedTensor>(w.tensors()))
    if (t.name.size() > 2 && t.name.compare(t.name.size() - 2, 2, ".b") == 0)
      std::fill(w.get(t.name).values.begin(), w.get(t.name).values.end(), 0.0f);
  const auto pyr = backbone_pyramid(ImageBuffer(64, 64, 3, 0), cfg, w);
  for (const auto& level : pyr)
    for (float v : level.data()) EXPECT_EQ(v, 0.0f);
}

TEST(Backbone, GoldenChecksum) {
  const auto cfg = small_cfg();
  const auto pyr = backbone_pyramid(pattern(64), cfg, random_detector_weights(cfg, 2024));
  double s = 0.0;
  for (const auto& level : pyr)
    for (float v : level.data()) s += v;
  EXPECT_NEAR(s, kBackboneGoldenSum, 1e-5);
}

TEST(Backbone, WrongPatchSizeRejected) {
  const auto cfg = small_cfg();
  EXPECT_THROW(backbone_pyramid(pattern(32), cfg, random_detector_weights(cfg, 1)), Error);
}

TEST(AltitudeFusion, FeatureVector) {
  DetectorConfig cfg = small_cfg();
  const auto feat = ones(2, 2, 4);
  const auto v = altitude_feature_vector(feat, 1496.68, cfg);
  ASSERT_EQ(v.size(), 17u);
  EXPECT_FLOAT_EQ(v.back(), 1.49668f);
  cfg.altitude_normalizer = 1.0;
  EXPECT_EQ(altitude_feature_vector(feat, 1496.68, cfg).back(), 1496.68f);
}

TEST(AltitudeFusion, ZeroColumnMakesAltitudeIrrelevant) {
  const auto cfg = small_cfg();
  auto w = random_detector_weights(cfg, 3);
  const auto feat = backbone_pyramid(pattern(64), cfg, w)[2];
  EXPECT_NE(altitude_fuse(feat, 100, cfg, w), altitude_fuse(feat, 1000, cfg, w));
  zero_altitude_column(w, cfg);
  EXPECT_EQ(altitude_fuse(feat, 100, cfg, w), altitude_fuse(feat, 1000, cfg, w));
}

TEST(AltitudeFusion, OutputShapeMatchesInput) {
  const auto cfg = small_cfg();
  const auto w = random_detector_weights(cfg, 3);
  const auto feat = backbone_pyramid(pattern(64), cfg, w)[2];
  const auto out = altitude_fuse(feat, 500, cfg, w);
  EXPECT_EQ(out.height(), feat.height());
  EXPECT_EQ(out.width(), feat.width());
  EXPECT_EQ(out.channels(), feat.channels());
  EXPECT_EQ(fused_feature_length(cfg), 2 * 2 * 4);
}

TEST(Decode, ZeroLogits) {
  const auto cfg = small_cfg();
  const FeatureTensor head(1, 4, 4, 5);
  const auto dets = decode_detections(head, cfg, 32);
  ASSERT_EQ(dets.size(), 16u);
  for (const auto& d : dets) EXPECT_EQ(d.confidence, 0.5);
  // Interior cell (1,1): center 48, 25x23 anchor.
  const auto& d = dets[5];
  EXPECT_DOUBLE_EQ(d.box.x_min, 48 - 12.5);
  EXPECT_DOUBLE_EQ(d.box.x_max, 48 + 12.5);
  EXPECT_DOUBLE_EQ(d.box.height(), 23.0);
}

TEST(Decode, LowConfidenceSuppressed) {
  const auto cfg = small_cfg();
  FeatureTensor head(1, 2, 2, 5);
  head.at(0, 0, 4) = -4.0f;
  const auto dets = decode_detections(head, cfg, 32);
  EXPECT_EQ(dets.size(), 3u);
  EXPECT_LT(1.0 / (1.0 + std::exp(4.0)), 0.1);
  EXPECT_THROW(decode_detections(FeatureTensor(1, 2, 2, 4), cfg, 32), Error);
}

TEST(ToyNet, RunsEndToEnd) {
  const auto cfg = small_cfg();
  const auto w = random_detector_weights(cfg, 4);
  const auto a = toy_net_detect(pattern(64), 800, cfg, w);
  EXPECT_EQ(a, toy_net_detect(pattern(64), 800, cfg, w));
  for (const auto& d : a) {
    EXPECT_GE(d.confidence, cfg.conf_threshold);
    EXPECT_TRUE(d.box.valid());
  }
}

TEST(GradCheck, SeededInstance) {
  const auto r = fc_gradient_check(17);
  EXPECT_LT(r.max_relative_error, 1e-4);
  EXPECT_NE(r.altitude_gradient, 0.0);
  EXPECT_GT(r.checked, 0);
}

TEST(GradCheck, ZeroWeights) {
  FusionMlp mlp;
  const int len = mlp.input_len, hid = mlp.hidden;
  mlp.w1.assign(hid * (len + 1), 0.0);
  mlp.b1.assign(hid, 0.0);
  mlp.w2.assign(len * hid, 0.0);
  mlp.b2.assign(len, 0.0);
  const auto g = fusion_gradients(mlp, std::vector<double>(len, 0.7), 1.5);
  EXPECT_EQ(g.loss, 0.0);
  EXPECT_EQ(g.altitude, 0.0);
  for (double v : g.w1) EXPECT_EQ(v, 0.0);
  for (double v : g.w2) EXPECT_EQ(v, 0.0);
  for (double v : g.b2) EXPECT_EQ(v, 0.0);
}

TEST(Gsd, Formula) {
  const CameraModel cam{0.05, 5e-6};
  EXPECT_NEAR(gsd(100, cam), 0.01, 1e-15);
  EXPECT_NEAR(gsd(800, cam), 0.08, 1e-15);
  EXPECT_LT(gsd(1e-9, cam), 1e-12);
}

TEST(ScalePrior, Band) {
  const CameraModel cam{0.05, 5e-6};
  // altitude 800 m, extent 2 m -> e = 25 px
  const std::vector<Detection> dets{{Box{0, 0, 25, 23}, 0.9, 0}, {Box{0, 0, 500, 500}, 0.8, 0}};
  const auto kept = scale_prior_filter(dets, 800, cam, 2.0);
  ASSERT_EQ(kept.size(), 1u);
  EXPECT_EQ(kept[0], dets[0]);
}

TEST(ScalePrior, FlipPoints) {
  // A 25 px box stays inside [0.25e, 4e] for e in [6.25, 100], i.e. 200..3200 m.
  const CameraModel cam{0.05, 5e-6};
  const std::vector<Detection> d{{Box{0, 0, 25, 23}, 0.9, 0}};
  EXPECT_EQ(scale_prior_filter(d, 3200, cam, 2.0).size(), 1u);
  EXPECT_EQ(scale_prior_filter(d, 3300, cam, 2.0).size(), 0u);
  EXPECT_EQ(scale_prior_filter(d, 200, cam, 2.0).size(), 1u);
  EXPECT_EQ(scale_prior_filter(d, 190, cam, 2.0).size(), 0u);
}

TEST(ScalePrior, SubsetAndMonotoneInBand) {
  const CameraModel cam{0.05, 5e-6};
  std::vector<Detection> dets;
  for (int s = 1; s < 200; s += 3) dets.push_back({Box{0, 0, double(s), double(s)}, 0.5, 0});
  const auto narrow = scale_prior_filter(dets, 800, cam, 2.0, {0.5, 2.0});
  const auto wide = scale_prior_filter(dets, 800, cam, 2.0, {0.25, 4.0});
  EXPECT_LE(narrow.size(), wide.size());
  for (const auto& d : narrow) EXPECT_NE(std::find(wide.begin(), wide.end(), d), wide.end());
  for (const auto& d : wide) EXPECT_NE(std::find(dets.begin(), dets.end(), d), dets.end());
}

TEST(BlobOracle, SingleDisk) {
  const auto img = testutil::disks(64, 64, {{30, 20, 8}});
  const auto dets = blob_oracle_detect(img, 0.5, 1);
  ASSERT_EQ(dets.size(), 1u);
  EXPECT_LE(dets[0].box.x_min, 30);
  EXPECT_GT(dets[0].box.x_max, 30);
  EXPECT_LE(dets[0].box.y_min, 20);
  EXPECT_GT(dets[0].box.y_max, 20);
  EXPECT_NEAR(dets[0].confidence, 220.0 / 255.0, 1e-9);
}

TEST(BlobOracle, BlankPatch) {
  EXPECT_TRUE(blob_oracle_detect(ImageBuffer(32, 32, 3, 20), 0.5, 1).empty());
}

TEST(BlobOracle, TwoSeparatedBlobs) {
  // Two 3x3 squares on 16x16 with one dark column between them.
  ImageBuffer img(16, 16, 1, 0);
  for (int y = 5; y < 8; ++y)
    for (int x = 2; x < 5; ++x) img.at(x, y, 0) = 255;
  for (int y = 5; y < 8; ++y)
    for (int x = 6; x < 9; ++x) img.at(x, y, 0) = 255;
  const auto dets = blob_oracle_detect(img, 0.5, 1);
  ASSERT_EQ(dets.size(), 2u);
  EXPECT_EQ(dets[0].box, (Box{2, 5, 5, 8}));
  EXPECT_EQ(dets[1].box, (Box{6, 5, 9, 8}));
  img.at(5, 6, 0) = 255;
  EXPECT_EQ(blob_oracle_detect(img, 0.5, 1).size(), 1u);
  ImageBuffer diag(4, 4, 1, 0);
  diag.at(0, 0, 0) = 255;
  diag.at(1, 1, 0) = 255;
  EXPECT_EQ(blob_oracle_detect(diag, 0.5, 1).size(), 1u);
  EXPECT_TRUE(blob_oracle_detect(img, 0.5, 100).empty());
}
