#include <gtest/gtest.h>

#include "herdscope/error.hpp"
#include "herdscope/pipeline.hpp"
#include "herdscope/synthgen.hpp"
#include "test_util.hpp"

using namespace herdscope;
using nlohmann::json;

namespace {

// Small savmap-like dataset shared by the tests in this file.
class PipelineTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new testutil::TempDir("pipe");
    SceneConfig base = savmap_like_preset(21);
    base.frame_w = 1024;
    base.frame_h = 1024;
    base.n_animals = 12;
    write_synthetic_dataset(base, 3, dir_->path() / "data");
  }
  static void TearDownTestSuite() {
    delete dir_;
    dir_ = nullptr;
  }

  static PipelineConfig base_cfg() {
    PipelineConfig cfg;
    cfg.manifest = dir_->path() / "data" / "manifest.json";
    cfg.seed = 5;
    return cfg;
  }

  static std::filesystem::path root() { return dir_->path(); }

 private:
  static testutil::TempDir* dir_;
};

testutil::TempDir* PipelineTest::dir_ = nullptr;

Error capture(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e;
  }
  return Error(ErrorCode::kInternal, "no error thrown");
}

}  // namespace

TEST_F(PipelineTest, ConfigRoundTrip) {
  auto cfg = base_cfg();
  cfg.degrade_factor = 4;
  cfg.sr_backend = SrBackend::kBicubic;
  cfg.scale_prior.enabled = true;
  cfg.sweep_thresholds = {0.2, 0.4};
  resolve(cfg);
  const json j = to_json(cfg);
  auto back = pipeline_config_from_json(j, "/");
  resolve(back);
  EXPECT_EQ(to_json(back), j);
  EXPECT_EQ(back.sr_scale, 4);
  EXPECT_FALSE(j.contains("threads"));
}

TEST_F(PipelineTest, ResolveErrors) {
  auto expect_config_error = [](PipelineConfig c) {
    EXPECT_EQ(capture([&] { resolve(c); }).code(), ErrorCode::kConfig);
  };
  auto c = base_cfg();
  c.degrade_factor = 3;
  expect_config_error(c);
  c = base_cfg();
  c.sr_backend = SrBackend::kBicubic;  // no degradation, no scale
  expect_config_error(c);
  c = base_cfg();
  c.tile_size = 500;
  c.degrade_factor = 8;
  expect_config_error(c);
  c = base_cfg();
  c.detector = DetectorKind::kToyNet;
  c.toy_net.input_size = 256;
  expect_config_error(c);
  c = base_cfg();
  c.sweep_thresholds = {0.5, 0.2};
  expect_config_error(c);
  c = base_cfg();
  c.threads = 0;
  expect_config_error(c);
  EXPECT_EQ(capture([] { pipeline_config_from_json(json{{"manifest", "m"}, {"sr", {{"backend", "edsr"}}}}, "/"); })
                .code(),
            ErrorCode::kConfig);
}

TEST_F(PipelineTest, Labels) {
  auto c = base_cfg();
  resolve(c);
  EXPECT_EQ(method_label(c), "Blob oracle");
  EXPECT_EQ(operational_resolution(c), "512×512");
  c.degrade_factor = 2;
  c.sr_backend = SrBackend::kBicubic;
  c.sr_scale = 0;
  c.scale_prior.enabled = true;
  resolve(c);
  EXPECT_EQ(method_label(c), "Blob oracle + Bicubic + Scale prior");
  EXPECT_EQ(operational_resolution(c), "256×256 → 512×512");
  c.degrade_factor = 8;
  c.sr_scale = 0;
  resolve(c);
  EXPECT_EQ(operational_resolution(c), "64×64 → 512×512");
}

TEST_F(PipelineTest, AccountingAndDeterminism) {
  const auto a = run_pipeline(base_cfg());
  EXPECT_FALSE(a.failed);
  EXPECT_EQ(a.report.gt_count, 36);
  EXPECT_EQ(a.report.iou.tp + a.report.iou.fn, a.report.gt_count);
  EXPECT_EQ(a.report.chebyshev.tp + a.report.chebyshev.fn, a.report.gt_count);
  EXPECT_GT(a.report.iou.ap, 0.5);
  const auto b = run_pipeline(base_cfg());
  EXPECT_EQ(to_json(a.report).dump(), to_json(b.report).dump());
}

TEST_F(PipelineTest, ThreadCountDoesNotChangeResults) {
  auto cfg = base_cfg();
  cfg.degrade_factor = 2;
  cfg.sr_backend = SrBackend::kBicubic;
  const auto one = run_pipeline(cfg);
  cfg.threads = 4;
  const auto four = run_pipeline(cfg);
  EXPECT_EQ(to_json(one.report).dump(), to_json(four.report).dump());
}

TEST_F(PipelineTest, RerunFromReportConfig) {
  auto cfg = base_cfg();
  cfg.degrade_factor = 4;
  cfg.sr_backend = SrBackend::kBicubic;
  const auto first = run_pipeline(cfg);
  testutil::write_text(root() / "report.json", to_json(first.report).dump(2));
  const auto again = run_pipeline(load_pipeline_config(root() / "report.json"));
  EXPECT_EQ(to_json(first.report).dump(), to_json(again.report).dump());
}

TEST_F(PipelineTest, BicubicHelpsAtFactorEight) {
  auto cfg = base_cfg();
  cfg.degrade_factor = 8;
  const auto plain = run_pipeline(cfg);
  cfg.sr_backend = SrBackend::kBicubic;
  const auto sr = run_pipeline(cfg);
  EXPECT_GE(sr.report.iou.ap, plain.report.iou.ap);
  EXPECT_GT(sr.report.iou.ap, 0.5);
}

TEST_F(PipelineTest, ToyHanAndToyNetRun) {
  auto cfg = base_cfg();
  cfg.degrade_factor = 2;
  cfg.sr_backend = SrBackend::kToyHan;
  cfg.han.channels = 4;
  cfg.han.groups = 1;
  cfg.han.blocks_per_group = 1;
  cfg.detector = DetectorKind::kToyNet;
  cfg.toy_net.head_channels = 4;
  cfg.toy_net.fc_hidden = 8;
  cfg.subset = "test";
  cfg.split_ratios = {0.34, 0.0, 0.66};
  const auto r = run_pipeline(cfg);
  EXPECT_EQ(r.report.frames.size(), 1u);
  EXPECT_EQ(r.report.aborted_frames, 0);
  EXPECT_EQ(r.report.method, "Toy detector + Toy-HAN + Altitude-augmented");
  EXPECT_EQ(r.report.iou.tp + r.report.iou.fn, r.report.gt_count);
}

TEST_F(PipelineTest, AbortedFrames) {
  auto m = load_manifest(root() / "data" / "manifest.json");
  Frame ghost;
  ghost.frame_id = "ghost";
  ghost.image_path = root() / "data" / "images" / "missing.ppm";
  ghost.altitude = 800;
  m.frames.push_back(ghost);
  save_manifest(m, root() / "data" / "with_ghost.json");
  auto cfg = base_cfg();
  cfg.manifest = root() / "data" / "with_ghost.json";
  const auto r = run_pipeline(cfg);
  EXPECT_TRUE(r.failed);
  EXPECT_EQ(r.report.aborted_frames, 1);
  EXPECT_TRUE(r.report.frames[3].aborted);
  EXPECT_NE(r.report.frames[3].diagnostic.find("missing.ppm"), std::string::npos);
  EXPECT_EQ(r.report.iou.tp + r.report.iou.fn, r.report.gt_count);
  cfg.max_abort_fraction = 0.5;
  EXPECT_FALSE(run_pipeline(cfg).failed);
}

TEST_F(PipelineTest, EmitReportFormats) {
  auto cfg = base_cfg();
  cfg.sweep_thresholds = {0.1, 0.3, 0.5, 0.7, 0.9};
  auto a = run_pipeline(cfg).report;
  cfg.degrade_factor = 2;
  cfg.sr_backend = SrBackend::kBicubic;
  auto b = run_pipeline(cfg).report;
  const auto out = root() / "emit";
  emit_report({a, b}, out, {"json", "markdown", "csv", "svg"});
  const std::string svg = testutil::read_text(out / "sweep.svg");
  int circles = 0;
  for (auto pos = svg.find("<circle"); pos != std::string::npos; pos = svg.find("<circle", pos + 1)) ++circles;
  EXPECT_EQ(circles, 10);
  const std::string md = testutil::read_text(out / "report.md");
  EXPECT_NE(md.find("| Method | Operational Resolution | mAP(IoU) | mAP(Che) |"), std::string::npos);
  EXPECT_NE(md.find("256×256 → 512×512"), std::string::npos);
  EXPECT_TRUE(std::filesystem::exists(out / "sweep.csv"));
  EXPECT_EQ(json::parse(testutil::read_text(out / "report.json"))["reports"].size(), 2u);

  a.sweep.clear();
  const auto bare = root() / "emit_bare";
  emit_report({a}, bare, {"json", "svg"});
  EXPECT_FALSE(std::filesystem::exists(bare / "sweep.svg"));
  EXPECT_TRUE(json::parse(testutil::read_text(bare / "report.json")).contains("plot_note"));
}

TEST_F(PipelineTest, ReportJsonRoundTrip) {
  const auto r = run_pipeline(base_cfg()).report;
  EXPECT_EQ(to_json(report_from_json(to_json(r))).dump(), to_json(r).dump());
}

TEST_F(PipelineTest, DetectionsCsvRoundTrip) {
  const auto r = run_pipeline(base_cfg());
  save_detections_csv(root() / "dets.csv", r.detections);
  const auto back = load_detections_csv(root() / "dets.csv");
  ASSERT_EQ(back.size(), r.detections.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].frame_id, r.detections[i].frame_id);
    EXPECT_EQ(back[i].dets, r.detections[i].dets);
  }
  testutil::write_text(root() / "bad.csv",
                       "frame_id,x_min,y_min,x_max,y_max,confidence,class_id\nf,5,5,1,9,0.5,0\n");
  EXPECT_EQ(capture([&] { load_detections_csv(root() / "bad.csv"); }).code(), ErrorCode::kData);
}

TEST_F(PipelineTest, StagedTilesMatchRun) {
  auto cfg = base_cfg();
  cfg.degrade_factor = 2;
  cfg.sr_backend = SrBackend::kBicubic;
  cfg.overlap = 64;
  const auto direct = run_pipeline(cfg);
  const auto index = write_tiles(cfg, root() / "staged");
  const auto reloaded = load_tile_index(root() / "staged" / "tiles.json");
  EXPECT_EQ(reloaded.tiles.size(), index.tiles.size());
  const auto staged = detect_tiles(cfg, reloaded);
  ASSERT_EQ(staged.size(), direct.detections.size());
  for (std::size_t i = 0; i < staged.size(); ++i) EXPECT_EQ(staged[i].dets, direct.detections[i].dets);
}

TEST(ParallelFor, CoversEveryIndexAndPropagatesErrors) {
  std::vector<int> hits(100, 0);
  parallel_for(hits.size(), 4, [&](std::size_t i) { hits[i] += 1; });
  for (int h : hits) EXPECT_EQ(h, 1);
  EXPECT_THROW(parallel_for(10, 3, [](std::size_t i) {
                 if (i == 7) throw std::runtime_error("boom");
               }),
               std::runtime_error);
}
