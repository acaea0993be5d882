#include "herdscope/tiling.hpp"

#include <algorithm>
#include <cstring>
#include <string>

#include "herdscope/error.hpp"
#include "herdscope/metrics.hpp"

namespace herdscope {

namespace {

std::vector<int> axis_origins(int length, int tile, int overlap) {
  const int stride = tile - overlap;
  const int count = 1 + (length - tile + stride - 1) / stride;
  std::vector<int> origins;
  origins.reserve(count);
  for (int i = 0; i < count; ++i) origins.push_back(std::min(i * stride, length - tile));
  return origins;
}

}  // namespace

TileGrid plan_tiles(int frame_w, int frame_h, int tile_size, int overlap) {
  require(frame_w > 0 && frame_h > 0, ErrorCode::kInvalidArgument,
          "frame dimensions must be positive");
  require(tile_size > 0, ErrorCode::kInvalidArgument, "tile size must be positive");
  require(tile_size <= std::min(frame_w, frame_h), ErrorCode::kInvalidArgument,
          "tile size " + std::to_string(tile_size) + " exceeds frame " +
              std::to_string(frame_w) + "x" + std::to_string(frame_h));
  require(overlap >= 0 && overlap < tile_size, ErrorCode::kInvalidArgument,
          "overlap must be in [0, tile_size)");

  TileGrid grid;
  grid.frame_w = frame_w;
  grid.frame_h = frame_h;
  grid.tile_size = tile_size;
  grid.overlap = overlap;
  const auto xs = axis_origins(frame_w, tile_size, overlap);
  const auto ys = axis_origins(frame_h, tile_size, overlap);
  grid.columns = static_cast<int>(xs.size());
  grid.rows = static_cast<int>(ys.size());
  grid.tiles.reserve(xs.size() * ys.size());
  for (int y : ys)
    for (int x : xs) grid.tiles.push_back({x, y});
  return grid;
}

ImageBuffer extract_tile(const ImageBuffer& frame, TileOrigin origin, int tile_size) {
  require(tile_size > 0, ErrorCode::kInvalidArgument, "tile size must be positive");
  require(origin.x >= 0 && origin.y >= 0 && origin.x + tile_size <= frame.width() &&
              origin.y + tile_size <= frame.height(),
          ErrorCode::kInvalidArgument,
          "tile at (" + std::to_string(origin.x) + "," + std::to_string(origin.y) +
              ") size " + std::to_string(tile_size) + " is outside the frame");
  const int ch = frame.channels();
  ImageBuffer tile(tile_size, tile_size, ch);
  const std::size_t row_bytes = static_cast<std::size_t>(tile_size) * ch;
  for (int y = 0; y < tile_size; ++y) {
    const std::uint8_t* src = &frame.data()[(static_cast<std::size_t>(origin.y + y) *
                                                 frame.width() + origin.x) * ch];
    std::memcpy(&tile.data()[static_cast<std::size_t>(y) * row_bytes], src, row_bytes);
  }
  return tile;
}

std::vector<Detection> remap_detections(const std::vector<Detection>& dets,
                                        TileOrigin origin, double scale) {
  require(scale > 0.0, ErrorCode::kInvalidArgument, "remap scale must be positive");
  std::vector<Detection> out;
  out.reserve(dets.size());
  for (Detection d : dets) {
    d.box.x_min = origin.x + d.box.x_min / scale;
    d.box.y_min = origin.y + d.box.y_min / scale;
    d.box.x_max = origin.x + d.box.x_max / scale;
    d.box.y_max = origin.y + d.box.y_max / scale;
    out.push_back(d);
  }
  return out;
}

std::vector<Detection> merge_frame_detections(std::vector<Detection> dets,
                                              double nms_iou) {
  require(nms_iou >= 0.0 && nms_iou <= 1.0, ErrorCode::kInvalidArgument,
          "nms_iou must be in [0, 1]");
  std::stable_sort(dets.begin(), dets.end(), [](const Detection& a, const Detection& b) {
    if (a.confidence != b.confidence) return a.confidence > b.confidence;
    if (a.box.x_min != b.box.x_min) return a.box.x_min < b.box.x_min;
    return a.box.y_min < b.box.y_min;
  });
  std::vector<Detection> kept;
  for (const auto& d : dets) {
    const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](const Detection& k) {
      return iou(k.box, d.box) > nms_iou;
    });
    if (!suppressed) kept.push_back(d);
  }
  return kept;
}

}  // namespace herdscope
