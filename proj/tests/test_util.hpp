#pragma once

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <unistd.h>

#include "herdscope/image.hpp"

namespace testutil {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "hs") {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            (tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

inline std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Gray disks of value `fg` on a `bg` background.
struct Disk {
  double cx, cy, r;
};
inline herdscope::ImageBuffer disks(int w, int h, const std::vector<Disk>& ds, std::uint8_t bg = 20,
                                    std::uint8_t fg = 220, int channels = 3) {
  herdscope::ImageBuffer img(w, h, channels, bg);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (const auto& d : ds) {
        const double dx = x + 0.5 - d.cx, dy = y + 0.5 - d.cy;
        if (dx * dx + dy * dy <= d.r * d.r)
          for (int c = 0; c < channels; ++c) img.at(x, y, c) = fg;
      }
  return img;
}

}  // namespace testutil
