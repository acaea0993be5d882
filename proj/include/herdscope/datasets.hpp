#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "herdscope/box.hpp"
#include "herdscope/camera.hpp"

namespace herdscope {

struct Frame {
  std::string frame_id;
  std::filesystem::path image_path;
  std::optional<float> altitude;  // metres, kept at 32-bit precision
  std::optional<CameraModel> camera;
  int width = 0;  // 0 when unknown
  int height = 0;
};

struct GroundTruthBox {
  std::string frame_id;
  Box box;
  int class_id = 0;

  friend bool operator==(const GroundTruthBox&, const GroundTruthBox&) = default;
};

struct FrameSize {
  int width = 0;
  int height = 0;
};

// frame_id -> size. Supplying one enables unknown-id checks and clamping.
using FrameIndex = std::map<std::string, FrameSize>;

FrameIndex make_frame_index(const std::vector<Frame>& frames);

// CSV: frame_id,x_min,y_min,x_max,y_max,class_id
std::vector<GroundTruthBox> load_annotations_boxes(const std::filesystem::path& path,
                                                   const FrameIndex* index = nullptr);

// CSV: frame_id,cx,cy,class_id, expanded to box_size squares around each center.
std::vector<GroundTruthBox> load_annotations_centers(const std::filesystem::path& path,
                                                     int box_size = 100,
                                                     const FrameIndex* index = nullptr);

// Even sizes split evenly; odd sizes put the extra pixel after the center:
// [c - floor(s/2), c + ceil(s/2)).
Box expand_center(double cx, double cy, int box_size);

// Inverse of expand_center for unclamped boxes.
std::pair<double, double> center_of_expanded(const Box& box, int box_size);

void save_annotations_boxes(const std::filesystem::path& path,
                            const std::vector<GroundTruthBox>& boxes);

struct SplitRatios {
  double train = 0.7;
  double val = 0.1;
  double test = 0.2;
};

struct DatasetSplit {
  std::vector<std::string> train;
  std::vector<std::string> val;
  std::vector<std::string> test;
};

// Frame-level split. val and test sizes are floor(n * ratio); train takes the
// remainder. The permutation is a seeded Fisher-Yates shuffle.
DatasetSplit split_dataset(const std::vector<Frame>& frames, SplitRatios ratios,
                           std::uint64_t seed);

// CSV: frame_id,altitude_m. Every frame must be listed.
std::vector<Frame> attach_altitude(std::vector<Frame> frames,
                                   const std::filesystem::path& meta_path);

enum class AnnotationFormat { kBoxes, kCenters };

// JSON manifest: {"frames": [{frame_id, image_path, altitude_m, width, height}],
// optional "annotations": {"path", "format", "box_size"}, optional "camera"}.
// Relative paths resolve against the manifest's directory.
struct Manifest {
  std::vector<Frame> frames;
  std::optional<std::filesystem::path> annotations;
  AnnotationFormat annotation_format = AnnotationFormat::kBoxes;
  int box_size = 100;
  std::optional<CameraModel> camera;
};

Manifest load_manifest(const std::filesystem::path& path);
void save_manifest(const Manifest& m, const std::filesystem::path& path);

// Ground truth for the manifest's frames, grouped in frame order.
std::vector<std::vector<GroundTruthBox>> load_manifest_ground_truth(const Manifest& m);

}  // namespace herdscope
