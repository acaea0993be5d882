#include "herdscope/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>

#include "herdscope/error.hpp"

namespace herdscope {

namespace {

void check_shape(int width, int height, int channels) {
  require(width > 0 && height > 0, ErrorCode::kInvalidArgument,
          "image dimensions must be positive, got " + std::to_string(width) +
              "x" + std::to_string(height));
  require(channels == 1 || channels == 3, ErrorCode::kInvalidArgument,
          "image must have 1 or 3 channels, got " + std::to_string(channels));
}

// Per-output-index filter taps along one axis.
struct AxisTaps {
  std::vector<int> first;     // first source index for each output index
  std::vector<int> count;     // number of taps
  std::vector<int> index;     // flattened, already clamped source indices
  std::vector<float> weight;  // flattened weights, normalized per output
  std::vector<int> offset;    // start of each output's taps in index/weight
};

AxisTaps build_taps(int src_len, int dst_len) {
  const double scale = static_cast<double>(dst_len) / src_len;
  const double stretch = scale < 1.0 ? 1.0 / scale : 1.0;
  const double support = 2.0 * stretch;

  AxisTaps taps;
  taps.offset.reserve(dst_len + 1);
  taps.count.reserve(dst_len);
  for (int i = 0; i < dst_len; ++i) {
    const double center = (i + 0.5) / scale - 0.5;
    const int lo = static_cast<int>(std::ceil(center - support));
    const int hi = static_cast<int>(std::floor(center + support));
    taps.offset.push_back(static_cast<int>(taps.index.size()));
    std::vector<double> w;
    double sum = 0.0;
    for (int j = lo; j <= hi; ++j) {
      const double k = cubic_kernel((j - center) / stretch);
      w.push_back(k);
      sum += k;
    }
    int n = 0;
    for (int j = lo; j <= hi; ++j) {
      const double k = w[j - lo];
      if (k == 0.0) continue;
      taps.index.push_back(std::clamp(j, 0, src_len - 1));
      taps.weight.push_back(static_cast<float>(k / sum));
      ++n;
    }
    taps.count.push_back(n);
  }
  taps.offset.push_back(static_cast<int>(taps.index.size()));
  return taps;
}

std::string read_token(std::istream& in) {
  std::string tok;
  for (;;) {
    int ch = in.get();
    if (ch == EOF) return tok;
    if (ch == '#') {
      if (!tok.empty()) {
        in.unget();
        return tok;
      }
      while (ch != EOF && ch != '\n' && ch != '\r') ch = in.get();
      continue;
    }
    if (std::isspace(ch)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(static_cast<char>(ch));
  }
}

int parse_header_int(std::istream& in, const std::filesystem::path& path,
                     const char* field) {
  const std::string tok = read_token(in);
  int value = 0;
  try {
    std::size_t used = 0;
    value = std::stoi(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
  } catch (const std::exception&) {
    fail(ErrorCode::kData, "malformed pixmap header in " + path.string() +
                               ": bad " + field + " '" + tok + "'");
  }
  return value;
}

struct Header {
  ImageInfo info;
  int maxval = 0;
};

Header read_header(std::istream& in, const std::filesystem::path& path) {
  const std::string magic = read_token(in);
  Header h;
  if (magic == "P5") {
    h.info.channels = 1;
  } else if (magic == "P6") {
    h.info.channels = 3;
  } else {
    fail(ErrorCode::kData, "unsupported image format in " + path.string() +
                               " (expected binary P5/P6 pixmap)");
  }
  h.info.width = parse_header_int(in, path, "width");
  h.info.height = parse_header_int(in, path, "height");
  h.maxval = parse_header_int(in, path, "maxval");
  require(h.info.width > 0 && h.info.height > 0, ErrorCode::kData,
          "malformed pixmap header in " + path.string() + ": non-positive size");
  require(h.maxval == 255, ErrorCode::kData,
          "unsupported bit depth in " + path.string() + ": maxval " +
              std::to_string(h.maxval) + " (only 8-bit supported)");
  return h;
}

}  // namespace

ImageBuffer::ImageBuffer(int width, int height, int channels, std::uint8_t fill)
    : width_(width), height_(height), channels_(channels) {
  check_shape(width, height, channels);
  data_.assign(static_cast<std::size_t>(width) * height * channels, fill);
}

ImageBuffer::ImageBuffer(int width, int height, int channels,
                         std::vector<std::uint8_t> data)
    : width_(width), height_(height), channels_(channels), data_(std::move(data)) {
  check_shape(width, height, channels);
  require(data_.size() == static_cast<std::size_t>(width) * height * channels,
          ErrorCode::kInvalidArgument, "image data length does not match shape");
}

double ImageBuffer::gray(int x, int y) const {
  const std::uint8_t* p = &data_[(static_cast<std::size_t>(y) * width_ + x) * channels_];
  if (channels_ == 1) return p[0] / 255.0;
  return (static_cast<int>(p[0]) + p[1] + p[2]) / (3.0 * 255.0);
}

double cubic_kernel(double x) {
  constexpr double a = -0.5;
  x = std::fabs(x);
  if (x < 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
  return 0.0;
}

ImageBuffer resample_bicubic(const ImageBuffer& src, int target_w, int target_h) {
  require(target_w > 0 && target_h > 0, ErrorCode::kInvalidArgument,
          "resample target must be positive, got " + std::to_string(target_w) +
              "x" + std::to_string(target_h));
  require(!src.empty(), ErrorCode::kInvalidArgument, "resample of empty image");
  const int sw = src.width();
  const int sh = src.height();
  const int ch = src.channels();
  if (sw == target_w && sh == target_h) return src;

  const AxisTaps xt = build_taps(sw, target_w);
  const AxisTaps yt = build_taps(sh, target_h);

  // Horizontal pass: sh rows of target_w * ch floats.
  const std::size_t row_len = static_cast<std::size_t>(target_w) * ch;
  std::vector<float> mid(static_cast<std::size_t>(sh) * row_len);
  std::vector<float> srow(static_cast<std::size_t>(sw) * ch);
  const auto in = src.data();
  for (int y = 0; y < sh; ++y) {
    const std::uint8_t* s8 = in.data() + static_cast<std::size_t>(y) * sw * ch;
    for (std::size_t i = 0; i < srow.size(); ++i) srow[i] = s8[i];
    float* drow = mid.data() + static_cast<std::size_t>(y) * row_len;
    if (ch == 3) {
      for (int x = 0; x < target_w; ++x) {
        const int* idx = &xt.index[xt.offset[x]];
        const float* wt = &xt.weight[xt.offset[x]];
        float r = 0.0f, g = 0.0f, b = 0.0f;
        for (int t = 0; t < xt.count[x]; ++t) {
          const float* p = &srow[static_cast<std::size_t>(idx[t]) * 3];
          r += wt[t] * p[0];
          g += wt[t] * p[1];
          b += wt[t] * p[2];
        }
        drow[3 * x] = r;
        drow[3 * x + 1] = g;
        drow[3 * x + 2] = b;
      }
    } else {
      for (int x = 0; x < target_w; ++x) {
        const int* idx = &xt.index[xt.offset[x]];
        const float* wt = &xt.weight[xt.offset[x]];
        float acc = 0.0f;
        for (int t = 0; t < xt.count[x]; ++t) acc += wt[t] * srow[idx[t]];
        drow[x] = acc;
      }
    }
  }

  // Vertical pass, row-at-a-time so the inner loop vectorizes.
  ImageBuffer out(target_w, target_h, ch);
  auto dst = out.data();
  std::vector<float> acc(row_len);
  for (int y = 0; y < target_h; ++y) {
    std::fill(acc.begin(), acc.end(), 0.0f);
    const int o = yt.offset[y];
    for (int t = 0; t < yt.count[y]; ++t) {
      const float w = yt.weight[o + t];
      const float* mrow = mid.data() + static_cast<std::size_t>(yt.index[o + t]) * row_len;
      for (std::size_t i = 0; i < row_len; ++i) acc[i] += w * mrow[i];
    }
    std::uint8_t* drow = dst.data() + static_cast<std::size_t>(y) * row_len;
    for (std::size_t i = 0; i < row_len; ++i) drow[i] = quantize(acc[i]);
  }
  return out;
}

double psnr(const ImageBuffer& a, const ImageBuffer& b) {
  require(a.width() == b.width() && a.height() == b.height() &&
              a.channels() == b.channels(),
          ErrorCode::kInvalidArgument, "psnr: image shapes differ");
  const auto da = a.data();
  const auto db = b.data();
  std::uint64_t sse = 0;
  for (std::size_t i = 0; i < da.size(); ++i) {
    const int d = static_cast<int>(da[i]) - static_cast<int>(db[i]);
    sse += static_cast<std::uint64_t>(d * d);
  }
  if (sse == 0) return std::numeric_limits<double>::infinity();
  const double mse = static_cast<double>(sse) / static_cast<double>(da.size());
  return 10.0 * std::log10(255.0 * 255.0 / mse);
}

ImageInfo read_image_info(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::kIo, "cannot open image " + path.string());
  return read_header(in, path).info;
}

ImageBuffer load_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::kIo, "cannot open image " + path.string());
  const Header h = read_header(in, path);
  // Exactly one whitespace byte separates maxval from the raster; read_token
  // already consumed it.
  const std::size_t n = static_cast<std::size_t>(h.info.width) * h.info.height *
                        h.info.channels;
  std::vector<std::uint8_t> data(n);
  in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(n));
  require(static_cast<std::size_t>(in.gcount()) == n, ErrorCode::kData,
          "truncated image data in " + path.string() + ": expected " +
              std::to_string(n) + " bytes, got " + std::to_string(in.gcount()));
  return ImageBuffer(h.info.width, h.info.height, h.info.channels, std::move(data));
}

void save_image(const ImageBuffer& img, const std::filesystem::path& path) {
  require(!img.empty(), ErrorCode::kInvalidArgument, "cannot save an empty image");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorCode::kIo, "cannot write image " + path.string());
  out << (img.channels() == 1 ? "P5" : "P6") << '\n'
      << img.width() << ' ' << img.height() << '\n'
      << 255 << '\n';
  const auto d = img.data();
  out.write(reinterpret_cast<const char*>(d.data()), static_cast<std::streamsize>(d.size()));
  require(static_cast<bool>(out), ErrorCode::kIo, "failed writing image " + path.string());
}

}  // namespace herdscope
