#include "herdscope/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "herdscope/error.hpp"

namespace herdscope {

FeatureTensor::FeatureTensor(int layers, int height, int width, int channels, float fill)
    : n_(layers), h_(height), w_(width), c_(channels) {
  require(layers > 0 && height > 0 && width > 0 && channels > 0, ErrorCode::kInvalidArgument,
          "tensor dimensions must be positive");
  data_.assign(static_cast<std::size_t>(layers) * height * width * channels, fill);
}

bool FeatureTensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

FeatureTensor to_tensor(const ImageBuffer& img) {
  FeatureTensor t(img.height(), img.width(), img.channels());
  const auto src = img.data();
  auto dst = t.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] / 255.0f;
  return t;
}

ImageBuffer to_image(const FeatureTensor& t) {
  require(t.layers() == 1 && (t.channels() == 1 || t.channels() == 3),
          ErrorCode::kInvalidArgument, "tensor is not an image");
  ImageBuffer img(t.width(), t.height(), t.channels());
  const auto src = t.data();
  auto dst = img.data();
  for (std::size_t i = 0; i < src.size(); ++i)
    dst[i] = quantize(std::clamp(static_cast<double>(src[i]), 0.0, 1.0) * 255.0);
  return img;
}

FeatureTensor conv2d(const FeatureTensor& in, std::span<const float> weight,
                     std::span<const float> bias, int out_channels, int kernel, int stride) {
  require(in.layers() == 1, ErrorCode::kInvalidArgument, "conv2d expects a single layer");
  const int cin = in.channels();
  require(weight.size() == static_cast<std::size_t>(out_channels) * kernel * kernel * cin,
          ErrorCode::kInvalidArgument, "conv2d weight size mismatch");
  require(bias.size() == static_cast<std::size_t>(out_channels), ErrorCode::kInvalidArgument,
          "conv2d bias size mismatch");
  const int pad = kernel / 2;
  const int oh = (in.height() + 2 * pad - kernel) / stride + 1;
  const int ow = (in.width() + 2 * pad - kernel) / stride + 1;
  FeatureTensor out(oh, ow, out_channels);
  const auto src = in.data();
  auto dst = out.data();
  const std::size_t wstride = static_cast<std::size_t>(kernel) * kernel * cin;
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      float* o = &dst[(static_cast<std::size_t>(y) * ow + x) * out_channels];
      for (int co = 0; co < out_channels; ++co) o[co] = bias[co];
      for (int ky = 0; ky < kernel; ++ky) {
        const int iy = y * stride + ky - pad;
        if (iy < 0 || iy >= in.height()) continue;
        for (int kx = 0; kx < kernel; ++kx) {
          const int ix = x * stride + kx - pad;
          if (ix < 0 || ix >= in.width()) continue;
          const float* px = &src[(static_cast<std::size_t>(iy) * in.width() + ix) * cin];
          const std::size_t koff = (static_cast<std::size_t>(ky) * kernel + kx) * cin;
          for (int co = 0; co < out_channels; ++co) {
            const float* wk = &weight[co * wstride + koff];
            float acc = 0.0f;
            for (int ci = 0; ci < cin; ++ci) acc += wk[ci] * px[ci];
            o[co] += acc;
          }
        }
      }
    }
  }
  return out;
}

void relu_inplace(FeatureTensor& t) {
  for (float& v : t.data()) v = std::max(v, 0.0f);
}

void check_finite(const FeatureTensor& t, const char* stage) {
  require(t.all_finite(), ErrorCode::kNumeric,
          std::string("non-finite values after ") + stage);
}

}  // namespace herdscope
