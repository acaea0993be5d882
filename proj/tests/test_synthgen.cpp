#include <gtest/gtest.h>

#include "herdscope/datasets.hpp"
#include "herdscope/error.hpp"
#include "herdscope/synthgen.hpp"
#include "test_util.hpp"

using namespace herdscope;

namespace {

SceneConfig small_scene(int n, std::uint64_t seed = 1) {
  SceneConfig cfg;
  cfg.frame_w = 400;
  cfg.frame_h = 300;
  cfg.altitude = 800;
  cfg.n_animals = n;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST(Synth, AnimalCounts) {
  const auto empty = generate_scene(small_scene(0));
  EXPECT_TRUE(empty.ground_truth.empty());
  EXPECT_EQ(empty.image.width(), 400);
  EXPECT_EQ(empty.image.height(), 300);
  EXPECT_EQ(generate_scene(small_scene(5)).ground_truth.size(), 5u);
}

TEST(Synth, NominalExtent) {
  SceneConfig cfg;
  cfg.camera = {0.05, 5e-6};
  cfg.animal_extent = 2.0;
  cfg.altitude = 100;
  EXPECT_NEAR(nominal_extent_px(cfg), 200.0, 1e-9);
  cfg.altitude = 800;
  EXPECT_NEAR(nominal_extent_px(cfg), 25.0, 1e-9);
}

TEST(Synth, BoxesTrackNominalSize) {
  for (double alt : {400.0, 800.0}) {
    auto cfg = small_scene(6);
    cfg.altitude = alt;
    const double e = nominal_extent_px(cfg);
    for (const auto& b : generate_scene(cfg).ground_truth) {
      EXPECT_GT(std::max(b.width(), b.height()), 0.85 * e);
      EXPECT_LT(std::max(b.width(), b.height()), 1.25 * e + 2);
    }
  }
}

TEST(Synth, Deterministic) {
  const auto a = generate_scene(small_scene(5, 9));
  const auto b = generate_scene(small_scene(5, 9));
  EXPECT_EQ(a.image, b.image);
  EXPECT_EQ(a.ground_truth, b.ground_truth);
  EXPECT_NE(a.image, generate_scene(small_scene(5, 10)).image);
}

TEST(Synth, AnimalPixelsLieInsideBoxes) {
  auto cfg = small_scene(8, 3);
  cfg.texture_amplitude = 0.0;
  const auto s = generate_scene(cfg);
  const auto bg = quantize(cfg.background_level * 255.0);
  int animal_px = 0;
  for (int y = 0; y < s.image.height(); ++y)
    for (int x = 0; x < s.image.width(); ++x) {
      if (s.image.at(x, y, 1) == bg) continue;
      ++animal_px;
      bool inside = false;
      for (const auto& b : s.ground_truth)
        inside |= x >= b.x_min && x < b.x_max && y >= b.y_min && y < b.y_max;
      ASSERT_TRUE(inside) << x << "," << y;
    }
  EXPECT_GT(animal_px, 8 * 300);
}

TEST(Synth, Separation) {
  auto cfg = small_scene(12, 4);
  cfg.min_separation = 10;
  const auto s = generate_scene(cfg);
  for (std::size_t i = 0; i < s.ground_truth.size(); ++i)
    for (std::size_t j = i + 1; j < s.ground_truth.size(); ++j) {
      const auto& a = s.ground_truth[i];
      const auto& b = s.ground_truth[j];
      const double gx = std::max(a.x_min, b.x_min) - std::min(a.x_max, b.x_max);
      const double gy = std::max(a.y_min, b.y_min) - std::min(a.y_max, b.y_max);
      EXPECT_GE(std::max(gx, gy), 8.0);
    }
}

TEST(Synth, PlacementFailure) {
  auto cfg = small_scene(400);
  cfg.min_separation = 20;
  try {
    generate_scene(cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kData);
    EXPECT_NE(std::string(e.what()).find("could not place"), std::string::npos);
  }
}

TEST(Synth, ConfigValidation) {
  auto cfg = small_scene(1);
  cfg.altitude = 0;
  EXPECT_THROW(generate_scene(cfg), Error);
  cfg = small_scene(1);
  cfg.altitude_spread = 1.0;
  EXPECT_THROW(generate_scene(cfg), Error);
  cfg = small_scene(1);
  cfg.altitude = 10;  // 1600 px animals in a 400x300 frame
  EXPECT_THROW(generate_scene(cfg), Error);
  EXPECT_THROW(preset_by_name("nope", 1), Error);
}

TEST(Degrade, Sizes) {
  const ImageBuffer f(512, 512, 3, 100);
  EXPECT_EQ(degrade_frame(f, 2).width(), 256);
  EXPECT_EQ(degrade_frame(f, 8).width(), 64);
  const auto odd = degrade_frame(ImageBuffer(515, 301, 3, 5), 4);
  EXPECT_EQ(odd.width(), 128);
  EXPECT_EQ(odd.height(), 75);
  const auto back = resample_bicubic(degrade_frame(f, 4), 512, 512);
  EXPECT_EQ(back.width(), 512);
  EXPECT_EQ(back.height(), 512);
  EXPECT_THROW(degrade_frame(f, 3), Error);
  EXPECT_THROW(degrade_frame(ImageBuffer(4, 4, 3), 8), Error);
}

TEST(Presets, Extents) {
  const auto sav = savmap_like_preset(1);
  EXPECT_EQ(sav.frame_w, 3000);
  EXPECT_EQ(sav.frame_h, 4000);
  EXPECT_NEAR(nominal_extent_px(sav), 25.0, 1e-9);
  EXPECT_NEAR(nominal_extent_px(aed_like_preset(1)), 100.0, 1e-9);
  EXPECT_EQ(preset_by_name("savmap-like", 3).seed, 3u);
}

TEST(Dataset, WriteAndIngest) {
  testutil::TempDir dir;
  auto base = small_scene(3, 5);
  base.altitude_spread = 0.5;
  const auto out = write_synthetic_dataset(base, 4, dir.path());
  EXPECT_EQ(out.frames, 4);
  EXPECT_EQ(out.animals, 12);
  const auto m = load_manifest(out.manifest);
  ASSERT_EQ(m.frames.size(), 4u);
  const auto gt = load_manifest_ground_truth(m);
  for (std::size_t i = 0; i < 4; ++i) {
    const auto cfg = dataset_frame_config(base, static_cast<int>(i));
    EXPECT_GE(*m.frames[i].altitude, 400.0f);
    EXPECT_LE(*m.frames[i].altitude, 1200.0f);
    EXPECT_EQ(*m.frames[i].altitude, static_cast<float>(cfg.altitude));
    const auto scene = generate_scene(cfg);
    EXPECT_EQ(load_image(m.frames[i].image_path), scene.image);
    ASSERT_EQ(gt[i].size(), scene.ground_truth.size());
    for (std::size_t k = 0; k < gt[i].size(); ++k) EXPECT_EQ(gt[i][k].box, scene.ground_truth[k]);
  }
  const auto alts = attach_altitude(m.frames, out.altitude_csv);
  EXPECT_EQ(*alts[2].altitude, *m.frames[2].altitude);
}

TEST(Dataset, AltitudeSpreadVaries) {
  auto base = small_scene(1, 8);
  base.altitude_spread = 0.5;
  double lo = 1e9, hi = 0;
  for (int i = 0; i < 30; ++i) {
    const double a = dataset_frame_config(base, i).altitude;
    lo = std::min(lo, a);
    hi = std::max(hi, a);
  }
  EXPECT_GE(lo, 400.0);
  EXPECT_LE(hi, 1200.0);
  EXPECT_GT(hi - lo, 300.0);
  base.altitude_spread = 0.0;
  EXPECT_EQ(dataset_frame_config(base, 7).altitude, 800.0);
}
