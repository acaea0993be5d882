#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "herdscope/box.hpp"
#include "herdscope/camera.hpp"
#include "herdscope/image.hpp"
#include "herdscope/tensor.hpp"
#include "herdscope/weights.hpp"

namespace herdscope {

// ---- ground sampling distance and the altitude scale prior ----

// Metres of ground per pixel for a nadir view.
double gsd(double altitude_m, const CameraModel& cam);

struct ScaleBand {
  double lo = 0.25;
  double hi = 4.0;
};

// Keeps detections whose longer side lies in [band.lo * e, band.hi * e],
// e = animal_extent_m / gsd(altitude, cam).
std::vector<Detection> scale_prior_filter(const std::vector<Detection>& dets, double altitude_m,
                                          const CameraModel& cam, double animal_extent_m,
                                          ScaleBand band = {});

// ---- blob oracle ----

// Threshold the channel-mean image at `threshold` (strictly greater), label
// 8-connected components, and report each component with at least min_area
// pixels. Confidence is the component's mean intensity. Components are
// emitted in raster order of their first pixel.
std::vector<Detection> blob_oracle_detect(const ImageBuffer& patch, double threshold,
                                          int min_area);

// ---- toy altitude-augmented detector ----

struct DetectorConfig {
  int input_size = 512;
  std::array<int, 3> pyramid_strides{8, 16, 32};
  int head_channels = 16;
  int fc_hidden = 64;
  double conf_threshold = 0.1;
  double altitude_normalizer = 1000.0;  // 1 feeds raw metres
  double anchor_w = 25.0;
  double anchor_h = 23.0;
  std::uint64_t seed = 0;
};

void validate(const DetectorConfig& cfg);

// Length of the flattened stride-32 feature map.
int fused_feature_length(const DetectorConfig& cfg);

WeightSet random_detector_weights(const DetectorConfig& cfg, std::uint64_t seed);

// Stride-2 conv stack: 3 -> stem (/2) -> /4 -> /8 -> /16 -> /32; the last three
// outputs are returned.
std::array<FeatureTensor, 3> backbone_pyramid(const ImageBuffer& patch, const DetectorConfig& cfg,
                                              const WeightSet& weights);

// Flattened features with the (normalized) altitude appended as last element.
std::vector<float> altitude_feature_vector(const FeatureTensor& feat, double altitude_m,
                                           const DetectorConfig& cfg);

// FC1 (L+1 -> hidden, ReLU) then FC2 (hidden -> L), reshaped to feat's dims.
FeatureTensor altitude_fuse(const FeatureTensor& feat, double altitude_m,
                            const DetectorConfig& cfg, const WeightSet& weights);

// Zeroes the FC1 column that multiplies the altitude input.
void zero_altitude_column(WeightSet& weights, const DetectorConfig& cfg);

// head has 5 channels per cell: tx, ty, tw, th, tconf.
std::vector<Detection> decode_detections(const FeatureTensor& head, const DetectorConfig& cfg,
                                         int grid_stride);

// backbone -> (optional) altitude fusion on the stride-32 map -> 1x1 head -> decode.
std::vector<Detection> toy_net_detect(const ImageBuffer& patch, double altitude_m,
                                      const DetectorConfig& cfg, const WeightSet& weights,
                                      bool use_altitude_fusion = true);

// ---- fusion-layer gradients ----

// Two-layer fusion MLP in double precision, used to verify that the layers
// are correctly differentiable.
struct FusionMlp {
  int input_len = 12;  // L
  int hidden = 8;
  std::vector<double> w1;  // hidden x (L + 1)
  std::vector<double> b1;  // hidden
  std::vector<double> w2;  // L x hidden
  std::vector<double> b2;  // L
};

struct FusionGradients {
  double loss = 0.0;  // sum of squares of the FC2 output
  std::vector<double> w1, b1, w2, b2;
  double altitude = 0.0;
};

FusionGradients fusion_gradients(const FusionMlp& mlp, const std::vector<double>& feat,
                                 double altitude);

struct GradCheckResult {
  double max_relative_error = 0.0;
  double altitude_gradient = 0.0;
  double loss = 0.0;
  int checked = 0;
};

// Compares analytic gradients against central differences (step 1e-4).
GradCheckResult gradient_check(const FusionMlp& mlp, const std::vector<double>& feat,
                               double altitude, double step = 1e-4);

// Seeded L = 12 instance.
GradCheckResult fc_gradient_check(std::uint64_t seed);

// Regimen used to train the original networks; informational only.
struct TrainingConfig {
  struct Sr {
    const char* optimizer = "Adam";
    double lr = 1e-4;
    double lr_decay = 0.5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-4;
    int epochs = 50;
  } sr;
  struct Det {
    const char* optimizer = "SGD";
    double lr = 1e-4;
    double weight_decay = 1e-3;
    double momentum = 0.9;
    int epochs = 1000;
  } det;
};

inline constexpr TrainingConfig kTrainingConfig{};

}  // namespace herdscope
