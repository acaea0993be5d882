#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "herdscope/box.hpp"
#include "herdscope/camera.hpp"
#include "herdscope/image.hpp"

namespace herdscope {

struct SceneConfig {
  int frame_w = 3000;
  int frame_h = 4000;
  double altitude = 800.0;  // m
  // Datasets draw each frame's altitude uniformly from
  // altitude * [1 - altitude_spread, 1 + altitude_spread].
  double altitude_spread = 0.0;
  CameraModel camera{};
  int n_animals = 20;
  double animal_extent = 2.0;    // m
  double animal_contrast = 0.5;  // added intensity, (0, 1]
  double background_level = 0.3;
  double texture_amplitude = 0.06;  // std of the background texture
  double correlation_length = 6.0;  // px, Gaussian sigma of the texture filter
  int min_separation = 8;           // px gap between GT boxes
  std::uint64_t seed = 0;
};

void validate(const SceneConfig& cfg);

// Nominal animal size in pixels at the configured altitude.
double nominal_extent_px(const SceneConfig& cfg);

struct Scene {
  ImageBuffer image;
  std::vector<Box> ground_truth;
  double altitude = 0.0;
};

// Correlated-noise background plus anti-aliased axis-aligned ellipses. Each
// ellipse has diameter ~ nominal_extent_px with aspect jittered in [0.8, 1.2];
// its GT box is the tight box of pixels it touches.
Scene generate_scene(const SceneConfig& cfg);

// Bicubic shrink by factor in {2, 4, 8}; sizes round down.
ImageBuffer degrade_frame(const ImageBuffer& frame, int factor);

// Frame 3000x4000 with ~25 px animals (altitude 800 m, spread 0.5).
SceneConfig savmap_like_preset(std::uint64_t seed);
// Animals ~100 px.
SceneConfig aed_like_preset(std::uint64_t seed);
SceneConfig preset_by_name(const std::string& name, std::uint64_t seed);

// Scene parameters of frame `index` in a generated dataset: derived seed and
// per-frame altitude.
SceneConfig dataset_frame_config(const SceneConfig& base, int index);

// Writes frames as P6 images together with manifest.json, ground_truth.csv
// and altitude.csv so synthetic data takes the normal ingestion path.
struct SynthOutput {
  std::filesystem::path manifest;
  std::filesystem::path annotations;
  std::filesystem::path altitude_csv;
  int frames = 0;
  int animals = 0;
};

SynthOutput write_synthetic_dataset(const SceneConfig& base, int n_frames,
                                    const std::filesystem::path& out_dir);

}  // namespace herdscope
