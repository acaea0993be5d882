#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "herdscope/image.hpp"

namespace herdscope {

// Dense float tensor laid out [layers][height][width][channels], row-major.
class FeatureTensor {
 public:
  FeatureTensor() = default;
  FeatureTensor(int layers, int height, int width, int channels, float fill = 0.0f);
  FeatureTensor(int height, int width, int channels)
      : FeatureTensor(1, height, width, channels) {}

  int layers() const { return n_; }
  int height() const { return h_; }
  int width() const { return w_; }
  int channels() const { return c_; }
  std::size_t size() const { return data_.size(); }
  std::size_t layer_size() const { return static_cast<std::size_t>(h_) * w_ * c_; }

  float& at(int n, int y, int x, int c) { return data_[index(n, y, x, c)]; }
  float at(int n, int y, int x, int c) const { return data_[index(n, y, x, c)]; }
  float& at(int y, int x, int c) { return data_[index(0, y, x, c)]; }
  float at(int y, int x, int c) const { return data_[index(0, y, x, c)]; }

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }
  std::span<float> layer(int n) { return std::span(data_).subspan(n * layer_size(), layer_size()); }
  std::span<const float> layer(int n) const {
    return std::span(data_).subspan(n * layer_size(), layer_size());
  }

  bool all_finite() const;

  friend bool operator==(const FeatureTensor&, const FeatureTensor&) = default;

 private:
  std::size_t index(int n, int y, int x, int c) const {
    return ((static_cast<std::size_t>(n) * h_ + y) * w_ + x) * c_ + c;
  }

  int n_ = 0;
  int h_ = 0;
  int w_ = 0;
  int c_ = 0;
  std::vector<float> data_;
};

// Samples scaled to [0, 1].
FeatureTensor to_tensor(const ImageBuffer& img);
// Clamped to [0, 1], then quantized to 8 bits.
ImageBuffer to_image(const FeatureTensor& t);

// Square-kernel 2D convolution on a single-layer tensor with zero "same"
// padding. Weights are [out][ky][kx][in]; bias is [out].
FeatureTensor conv2d(const FeatureTensor& in, std::span<const float> weight,
                     std::span<const float> bias, int out_channels, int kernel = 3,
                     int stride = 1);

void relu_inplace(FeatureTensor& t);

// Fails with ErrorCode::kNumeric naming `stage` if any value is NaN or inf.
void check_finite(const FeatureTensor& t, const char* stage);

}  // namespace herdscope
