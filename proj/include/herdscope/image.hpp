#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace herdscope {

// Interleaved 8-bit image, row-major, 1 or 3 channels.
class ImageBuffer {
 public:
  ImageBuffer() = default;
  ImageBuffer(int width, int height, int channels, std::uint8_t fill = 0);
  ImageBuffer(int width, int height, int channels, std::vector<std::uint8_t> data);

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  bool empty() const { return data_.empty(); }

  std::span<const std::uint8_t> data() const { return data_; }
  std::span<std::uint8_t> data() { return data_; }

  std::uint8_t at(int x, int y, int c) const {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }
  std::uint8_t& at(int x, int y, int c) {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }

  // Channel mean of one pixel, scaled to [0, 1].
  double gray(int x, int y) const;

  friend bool operator==(const ImageBuffer&, const ImageBuffer&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<std::uint8_t> data_;
};

// Round half away from zero, then clamp to [0, 255]. Negative inputs round to
// <= 0 and clamp, so only the positive half of the rounding rule matters.
inline std::uint8_t quantize(double value) {
  if (!(value >= 0.5)) return 0;
  if (value >= 254.5) return 255;
  return static_cast<std::uint8_t>(value + 0.5);
}

// Separable Keys cubic convolution (a = -0.5) with clamp-to-edge extension.
// When shrinking, the kernel is widened by the reduction ratio so the result
// is low-pass filtered rather than point-sampled.
ImageBuffer resample_bicubic(const ImageBuffer& src, int target_w, int target_h);

// Keys kernel value at offset x.
double cubic_kernel(double x);

// 10*log10(255^2 / MSE) over every sample of every channel; +inf when equal.
double psnr(const ImageBuffer& a, const ImageBuffer& b);

// Binary portable pixmaps: P5 (gray) and P6 (RGB), maxval 255.
ImageBuffer load_image(const std::filesystem::path& path);
void save_image(const ImageBuffer& img, const std::filesystem::path& path);

// Header only; cheap for large frames.
struct ImageInfo {
  int width = 0;
  int height = 0;
  int channels = 0;
};
ImageInfo read_image_info(const std::filesystem::path& path);

}  // namespace herdscope
