#pragma once

#include <vector>

#include "herdscope/box.hpp"
#include "herdscope/image.hpp"

namespace herdscope {

struct TileOrigin {
  int x = 0;
  int y = 0;
  friend bool operator==(const TileOrigin&, const TileOrigin&) = default;
};

// Row-major list of square tiles covering a frame. The last tile of each
// row/column is anchored to the frame border, so it may overlap its
// neighbour by more than `overlap`.
struct TileGrid {
  int frame_w = 0;
  int frame_h = 0;
  int tile_size = 512;
  int overlap = 0;
  int columns = 0;
  int rows = 0;
  std::vector<TileOrigin> tiles;
};

TileGrid plan_tiles(int frame_w, int frame_h, int tile_size = 512, int overlap = 0);

ImageBuffer extract_tile(const ImageBuffer& frame, TileOrigin origin, int tile_size);

// Maps boxes found on a tile that was rescaled by `scale` before detection
// back to frame coordinates: origin + box / scale.
std::vector<Detection> remap_detections(const std::vector<Detection>& dets,
                                        TileOrigin origin, double scale);

// Greedy NMS: descending confidence, ties by (x_min, y_min); a box is dropped
// when its IoU with an already kept box exceeds nms_iou.
std::vector<Detection> merge_frame_detections(std::vector<Detection> dets,
                                              double nms_iou = 0.5);

}  // namespace herdscope
