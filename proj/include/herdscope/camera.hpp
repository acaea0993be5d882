#pragma once

namespace herdscope {

// Pinhole nadir camera, SI units.
struct CameraModel {
  double focal_length = 0.05;  // m
  double pixel_pitch = 5e-6;   // m per pixel
};

}  // namespace herdscope
