#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "herdscope/adapter.hpp"
#include "herdscope/datasets.hpp"
#include "herdscope/detector.hpp"
#include "herdscope/han.hpp"
#include "herdscope/metrics.hpp"
#include "herdscope/report.hpp"
#include "herdscope/tiling.hpp"

namespace herdscope {

enum class SrBackend { kNone, kBicubic, kToyHan, kExternal };
enum class DetectorKind { kBlobOracle, kToyNet };

struct BlobOracleConfig {
  double threshold = 0.5;
  int min_area = 64;  // px^2 in the detection image; 8x8 is the smallest resolvable footprint
};

struct ScalePriorConfig {
  bool enabled = false;
  CameraModel camera{};
  double animal_extent = 2.0;
  ScaleBand band{};
};

struct PipelineConfig {
  std::filesystem::path manifest;
  // "all", or one of "train"/"val"/"test" from a seeded split.
  std::string subset = "all";
  SplitRatios split_ratios{};
  std::uint64_t split_seed = 0;

  int tile_size = 512;
  int overlap = 0;
  int degrade_factor = 1;

  SrBackend sr_backend = SrBackend::kNone;
  int sr_scale = 0;  // 0: equal to degrade_factor
  AdapterConfig adapter{};
  HanConfig han{};
  std::optional<std::filesystem::path> han_weights;

  DetectorKind detector = DetectorKind::kBlobOracle;
  BlobOracleConfig blob{};
  DetectorConfig toy_net{};
  std::optional<std::filesystem::path> toy_net_weights;
  bool use_altitude_fusion = true;

  ScalePriorConfig scale_prior{};
  double merge_nms_iou = 0.5;

  EvalConfig eval{};
  std::vector<double> sweep_thresholds{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  std::string method;  // empty: derived from the stages

  std::uint64_t seed = 0;
  double max_abort_fraction = 0.1;
  // Execution only; never changes results and is not part of the report.
  int threads = 1;
};

// Fails with ErrorCode::kConfig on inconsistent settings; fills sr_scale.
void resolve(PipelineConfig& cfg);

// Relative paths resolve against base_dir. A report document (with a
// "config" member) is accepted and its embedded config used.
PipelineConfig pipeline_config_from_json(const nlohmann::json& j,
                                         const std::filesystem::path& base_dir);
nlohmann::json to_json(const PipelineConfig& cfg);
PipelineConfig load_pipeline_config(const std::filesystem::path& path);

std::string method_label(const PipelineConfig& cfg);
std::string operational_resolution(const PipelineConfig& cfg);

// Super-resolution stage with weights and adapter state prepared once.
class SuperResolver {
 public:
  explicit SuperResolver(const PipelineConfig& cfg);
  ImageBuffer upscale(const ImageBuffer& img, int r) const;
  SrBackend backend() const { return backend_; }

 private:
  SrBackend backend_;
  HanConfig han_;
  WeightSet han_weights_;
  std::shared_ptr<ExternalUpscaler> external_;
};

class PatchDetector {
 public:
  explicit PatchDetector(const PipelineConfig& cfg);
  std::vector<Detection> detect(const ImageBuffer& patch, double altitude_m) const;
  bool needs_altitude() const;

 private:
  DetectorKind kind_;
  BlobOracleConfig blob_;
  DetectorConfig net_;
  WeightSet net_weights_;
  bool fuse_;
};

// degrade -> SR -> detect on one tile, remapped to frame coordinates.
std::vector<Detection> detect_tile(const ImageBuffer& tile, const TileOrigin& origin,
                                   double altitude_m, const PipelineConfig& cfg,
                                   const SuperResolver& sr, const PatchDetector& det);
// Merges a frame's tile detections and applies the scale prior.
std::vector<Detection> finish_frame(std::vector<Detection> dets, const Frame& meta,
                                    const PipelineConfig& cfg);
// Altitude for the frame, failing when a stage needs one and none is known.
double frame_altitude(const Frame& meta, const PipelineConfig& cfg, const PatchDetector& det);

// tile -> degrade -> SR -> detect -> remap -> merge -> scale prior.
std::vector<Detection> detect_frame(const ImageBuffer& frame, const Frame& meta,
                                    const PipelineConfig& cfg, const SuperResolver& sr,
                                    const PatchDetector& det);

// Detections for one frame in frame coordinates.
struct FrameDetections {
  std::string frame_id;
  std::vector<Detection> dets;
};

// CSV: frame_id,x_min,y_min,x_max,y_max,confidence,class_id
void save_detections_csv(const std::filesystem::path& path,
                         const std::vector<FrameDetections>& frames);
std::vector<FrameDetections> load_detections_csv(const std::filesystem::path& path);

// Evaluates detections against the manifest's ground truth under both
// criteria plus the IoU sweep. Frames without detections count as empty.
EvalReport evaluate_frames(const std::vector<Frame>& frames,
                           const std::vector<std::vector<Box>>& gts,
                           const std::vector<FrameDetections>& dets, const EvalConfig& eval,
                           const std::vector<double>& sweep_thresholds);

struct RunResult {
  EvalReport report;
  std::vector<FrameDetections> detections;
  bool failed = false;  // abort fraction exceeded
};

RunResult run_pipeline(const PipelineConfig& cfg);

// Runs fn(0..n-1) on up to `threads` workers. Results must be written to
// per-index slots so the outcome does not depend on scheduling.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

// Tiles written to disk for the staged tile -> detect -> eval path.
struct TileEntry {
  std::string frame_id;
  TileOrigin origin;
  std::filesystem::path path;
};
struct TileIndex {
  int tile_size = 0;
  int overlap = 0;
  std::vector<std::string> frames;  // selection order
  std::vector<TileEntry> tiles;     // grouped by frame, row-major within a frame
};
// Writes <out_dir>/tiles/*.ppm and <out_dir>/tiles.json.
TileIndex write_tiles(const PipelineConfig& cfg, const std::filesystem::path& out_dir);
TileIndex load_tile_index(const std::filesystem::path& path);
// Detections per indexed frame, from the tile images.
std::vector<FrameDetections> detect_tiles(const PipelineConfig& cfg, const TileIndex& index);

// Frames of the configured subset, in manifest order, with their GT.
struct EvalSet {
  std::vector<Frame> frames;
  std::vector<std::vector<Box>> gts;
};
EvalSet select_frames(const PipelineConfig& cfg);

}  // namespace herdscope
