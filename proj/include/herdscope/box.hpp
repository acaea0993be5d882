#pragma once

namespace herdscope {

// Axis-aligned box in pixel coordinates, half-open: [x_min, x_max) x [y_min, y_max).
struct Box {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  double area() const { return width() * height(); }
  double center_x() const { return 0.5 * (x_min + x_max); }
  double center_y() const { return 0.5 * (y_min + y_max); }
  bool valid() const { return x_min < x_max && y_min < y_max; }

  friend bool operator==(const Box&, const Box&) = default;
};

struct Detection {
  Box box;
  double confidence = 0.0;
  int class_id = 0;

  friend bool operator==(const Detection&, const Detection&) = default;
};

}  // namespace herdscope
