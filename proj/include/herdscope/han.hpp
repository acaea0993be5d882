#pragma once

#include <cstdint>
#include <vector>

#include "herdscope/image.hpp"
#include "herdscope/tensor.hpp"
#include "herdscope/weights.hpp"

namespace herdscope {

// Toy-scale holistic attention network. Structure:
//   shallow conv -> G residual groups (B conv-ReLU-conv blocks each, with
//   block and group skips) -> layer attention over the G group outputs ->
//   fuse conv (G*C -> C) -> channel-spatial attention -> global skip ->
//   upsampling conv (C -> C*r^2) -> pixel shuffle -> tail conv (C -> 3).
struct HanConfig {
  int channels = 8;
  int groups = 2;
  int blocks_per_group = 2;
  int scale = 2;
  float lam_alpha = 0.0f;
  float csam_beta = 0.0f;
  std::uint64_t seed = 0;
};

void validate(const HanConfig& cfg);

// Seeded uniform weights with fan-in scaling, shaped for cfg.
WeightSet random_han_weights(const HanConfig& cfg, std::uint64_t seed);

// Fails unless every tensor han_forward needs is present with the right shape.
void check_han_weights(const HanConfig& cfg, const WeightSet& weights);

// Row-softmax of the N x N Gram matrix of the flattened layers.
std::vector<double> layer_attention_matrix(const FeatureTensor& features);

// out_i = alpha * sum_j softmax_ij * f_j + f_i
FeatureTensor layer_attention(const FeatureTensor& features, float alpha);

// sigmoid(3x3x3 conv over the H x W x C volume + bias), zero padded. Values
// are kept inside the open interval (0, 1).
std::vector<double> csam_attention_map(const FeatureTensor& features,
                                       std::span<const float> kernel27, float bias);

// out = beta * (attention .* f) + f
FeatureTensor channel_spatial_attention(const FeatureTensor& features, float beta,
                                        std::span<const float> kernel27, float bias);

// [H, W, C*r*r] -> [r*H, r*W, C]; out(y*r+i, x*r+j, c) = in(y, x, c*r*r + i*r + j).
FeatureTensor pixel_shuffle(const FeatureTensor& features, int r);
FeatureTensor pixel_unshuffle(const FeatureTensor& features, int r);

struct HanStages {
  bool layer_attention = true;
  bool channel_spatial_attention = true;
};

FeatureTensor han_forward_tensor(const ImageBuffer& patch, const HanConfig& cfg,
                                 const WeightSet& weights, HanStages stages = {});

ImageBuffer han_forward(const ImageBuffer& patch, const HanConfig& cfg,
                        const WeightSet& weights, HanStages stages = {});

}  // namespace herdscope
