#include "herdscope/detector.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "herdscope/error.hpp"
#include "herdscope/rng.hpp"

namespace herdscope {

namespace {

constexpr int kBackboneConvs = 5;

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

std::string bb_name(int i) { return "backbone.conv" + std::to_string(i); }

int fused_side(const DetectorConfig& cfg) { return cfg.input_size / 32; }

}  // namespace

// ---- gsd / scale prior ----

double gsd(double altitude_m, const CameraModel& cam) {
  require(altitude_m > 0.0 && std::isfinite(altitude_m), ErrorCode::kInvalidArgument,
          "altitude must be positive and finite");
  require(cam.focal_length > 0.0 && cam.pixel_pitch > 0.0, ErrorCode::kInvalidArgument,
          "camera focal length and pixel pitch must be positive");
  return altitude_m * cam.pixel_pitch / cam.focal_length;
}

std::vector<Detection> scale_prior_filter(const std::vector<Detection>& dets, double altitude_m,
                                          const CameraModel& cam, double animal_extent_m,
                                          ScaleBand band) {
  require(band.lo > 0.0 && band.lo < band.hi, ErrorCode::kInvalidArgument,
          "scale band must satisfy 0 < lo < hi");
  require(animal_extent_m > 0.0, ErrorCode::kInvalidArgument, "animal extent must be positive");
  const double expected = animal_extent_m / gsd(altitude_m, cam);
  const double lo = band.lo * expected;
  const double hi = band.hi * expected;
  std::vector<Detection> kept;
  for (const auto& d : dets) {
    const double side = std::max(d.box.width(), d.box.height());
    if (side >= lo && side <= hi) kept.push_back(d);
  }
  return kept;
}

// ---- blob oracle ----

std::vector<Detection> blob_oracle_detect(const ImageBuffer& patch, double threshold,
                                          int min_area) {
  require(threshold > 0.0 && threshold < 1.0, ErrorCode::kInvalidArgument,
          "blob threshold must be in (0, 1)");
  const int w = patch.width();
  const int h = patch.height();
  const int ch = patch.channels();
  // Compare channel sums against the scaled threshold to stay in integers.
  const double sum_threshold = threshold * 255.0 * ch;
  const auto px = patch.data();
  std::vector<int> sums(static_cast<std::size_t>(w) * h);
  std::vector<std::uint8_t> on(sums.size());
  for (std::size_t i = 0; i < sums.size(); ++i) {
    int s = 0;
    for (int c = 0; c < ch; ++c) s += px[i * ch + c];
    sums[i] = s;
    on[i] = s > sum_threshold;
  }

  std::vector<Detection> out;
  std::vector<int> stack;
  for (int y0 = 0; y0 < h; ++y0) {
    for (int x0 = 0; x0 < w; ++x0) {
      const std::size_t seed = static_cast<std::size_t>(y0) * w + x0;
      if (!on[seed]) continue;
      on[seed] = 0;
      stack.assign(1, static_cast<int>(seed));
      int area = 0;
      long long total = 0;
      int xmin = x0, xmax = x0, ymin = y0, ymax = y0;
      while (!stack.empty()) {
        const int p = stack.back();
        stack.pop_back();
        const int x = p % w;
        const int y = p / w;
        ++area;
        total += sums[p];
        xmin = std::min(xmin, x);
        xmax = std::max(xmax, x);
        ymin = std::min(ymin, y);
        ymax = std::max(ymax, y);
        for (int dy = -1; dy <= 1; ++dy) {
          const int yy = y + dy;
          if (yy < 0 || yy >= h) continue;
          for (int dx = -1; dx <= 1; ++dx) {
            const int xx = x + dx;
            if (xx < 0 || xx >= w) continue;
            const std::size_t q = static_cast<std::size_t>(yy) * w + xx;
            if (on[q]) {
              on[q] = 0;
              stack.push_back(static_cast<int>(q));
            }
          }
        }
      }
      if (area < min_area) continue;
      Detection d;
      d.box = {static_cast<double>(xmin), static_cast<double>(ymin),
               static_cast<double>(xmax + 1), static_cast<double>(ymax + 1)};
      d.confidence = std::clamp(static_cast<double>(total) / (area * 255.0 * ch), 0.0, 1.0);
      out.push_back(d);
    }
  }
  return out;
}

// ---- toy detector ----

void validate(const DetectorConfig& cfg) {
  require(cfg.input_size > 0 && cfg.input_size % 32 == 0, ErrorCode::kConfig,
          "detector input_size must be a positive multiple of 32");
  require(cfg.pyramid_strides == std::array<int, 3>{8, 16, 32}, ErrorCode::kConfig,
          "detector pyramid strides are fixed at {8, 16, 32}");
  require(cfg.head_channels >= 1 && cfg.fc_hidden >= 1, ErrorCode::kConfig,
          "detector head_channels and fc_hidden must be >= 1");
  require(cfg.conf_threshold >= 0.0 && cfg.conf_threshold <= 1.0, ErrorCode::kConfig,
          "detector conf_threshold must be in [0, 1]");
  require(cfg.altitude_normalizer > 0.0, ErrorCode::kConfig,
          "altitude_normalizer must be positive");
  require(cfg.anchor_w > 0.0 && cfg.anchor_h > 0.0, ErrorCode::kConfig,
          "anchor size must be positive");
}

int fused_feature_length(const DetectorConfig& cfg) {
  const int side = fused_side(cfg);
  return side * side * cfg.head_channels;
}

WeightSet random_detector_weights(const DetectorConfig& cfg, std::uint64_t seed) {
  validate(cfg);
  Rng rng(seed);
  WeightSet w;
  const int c = cfg.head_channels;
  for (int i = 0; i < kBackboneConvs; ++i) {
    const int cin = i == 0 ? 3 : c;
    w.add_uniform(bb_name(i) + ".w", {c, 3, 3, cin}, std::sqrt(6.0 / (9.0 * cin)), rng);
    w.add_uniform(bb_name(i) + ".b", {c}, 0.01, rng);
  }
  const int len = fused_feature_length(cfg);
  w.add_uniform("fuse.fc1.w", {cfg.fc_hidden, len + 1}, std::sqrt(6.0 / (len + 1)), rng);
  w.add_uniform("fuse.fc1.b", {cfg.fc_hidden}, 0.01, rng);
  w.add_uniform("fuse.fc2.w", {len, cfg.fc_hidden}, std::sqrt(6.0 / cfg.fc_hidden), rng);
  w.add_uniform("fuse.fc2.b", {len}, 0.01, rng);
  w.add_uniform("head.w", {5, 1, 1, c}, std::sqrt(6.0 / c), rng);
  w.add_uniform("head.b", {5}, 0.01, rng);
  return w;
}

std::array<FeatureTensor, 3> backbone_pyramid(const ImageBuffer& patch, const DetectorConfig& cfg,
                                              const WeightSet& weights) {
  validate(cfg);
  require(patch.width() == cfg.input_size && patch.height() == cfg.input_size &&
              patch.channels() == 3,
          ErrorCode::kInvalidArgument,
          "detector expects a " + std::to_string(cfg.input_size) + "x" +
              std::to_string(cfg.input_size) + "x3 patch, got " + std::to_string(patch.width()) +
              "x" + std::to_string(patch.height()) + "x" + std::to_string(patch.channels()));
  const int c = cfg.head_channels;
  std::array<FeatureTensor, 3> taps;
  FeatureTensor x = to_tensor(patch);
  for (int i = 0; i < kBackboneConvs; ++i) {
    const int cin = i == 0 ? 3 : c;
    x = conv2d(x, weights.expect(bb_name(i) + ".w", {c, 3, 3, cin}),
               weights.expect(bb_name(i) + ".b", {c}), c, 3, 2);
    relu_inplace(x);
    if (i >= 2) taps[i - 2] = x;
  }
  return taps;
}

std::vector<float> altitude_feature_vector(const FeatureTensor& feat, double altitude_m,
                                           const DetectorConfig& cfg) {
  require(std::isfinite(altitude_m), ErrorCode::kInvalidArgument, "altitude must be finite");
  require(altitude_m > 0.0, ErrorCode::kInvalidArgument, "altitude must be positive");
  std::vector<float> v(feat.data().begin(), feat.data().end());
  // The scalar is carried at 32-bit precision.
  v.push_back(static_cast<float>(altitude_m / cfg.altitude_normalizer));
  return v;
}

FeatureTensor altitude_fuse(const FeatureTensor& feat, double altitude_m,
                            const DetectorConfig& cfg, const WeightSet& weights) {
  const auto v = altitude_feature_vector(feat, altitude_m, cfg);
  const int len = static_cast<int>(feat.size());
  const int hid = cfg.fc_hidden;
  const auto w1 = weights.expect("fuse.fc1.w", {hid, len + 1});
  const auto b1 = weights.expect("fuse.fc1.b", {hid});
  const auto w2 = weights.expect("fuse.fc2.w", {len, hid});
  const auto b2 = weights.expect("fuse.fc2.b", {len});

  std::vector<double> hidden(hid);
  for (int j = 0; j < hid; ++j) {
    double acc = b1[j];
    const float* row = &w1[static_cast<std::size_t>(j) * (len + 1)];
    for (int i = 0; i <= len; ++i) acc += static_cast<double>(row[i]) * v[i];
    hidden[j] = std::max(acc, 0.0);
  }
  FeatureTensor out(feat.layers(), feat.height(), feat.width(), feat.channels());
  auto od = out.data();
  for (int i = 0; i < len; ++i) {
    double acc = b2[i];
    const float* row = &w2[static_cast<std::size_t>(i) * hid];
    for (int j = 0; j < hid; ++j) acc += static_cast<double>(row[j]) * hidden[j];
    od[i] = static_cast<float>(acc);
  }
  check_finite(out, "altitude fusion");
  return out;
}

void zero_altitude_column(WeightSet& weights, const DetectorConfig& cfg) {
  auto& t = weights.get("fuse.fc1.w");
  require(t.shape.size() == 2, ErrorCode::kInvalidArgument, "fuse.fc1.w must be 2-D");
  const int cols = t.shape[1];
  (void)cfg;
  for (int j = 0; j < t.shape[0]; ++j) t.values[static_cast<std::size_t>(j) * cols + cols - 1] = 0.0f;
}

std::vector<Detection> decode_detections(const FeatureTensor& head, const DetectorConfig& cfg,
                                         int grid_stride) {
  require(head.layers() == 1 && head.channels() == 5, ErrorCode::kInvalidArgument,
          "detection head must have 5 channels (tx, ty, tw, th, tconf), got " +
              std::to_string(head.channels()));
  require(grid_stride > 0, ErrorCode::kInvalidArgument, "grid stride must be positive");
  const double limit_x = static_cast<double>(head.width()) * grid_stride;
  const double limit_y = static_cast<double>(head.height()) * grid_stride;
  std::vector<Detection> out;
  for (int gy = 0; gy < head.height(); ++gy) {
    for (int gx = 0; gx < head.width(); ++gx) {
      const double conf = sigmoid(head.at(gy, gx, 4));
      if (conf < cfg.conf_threshold) continue;
      const double cx = (gx + sigmoid(head.at(gy, gx, 0))) * grid_stride;
      const double cy = (gy + sigmoid(head.at(gy, gx, 1))) * grid_stride;
      const double bw = cfg.anchor_w * std::exp(static_cast<double>(head.at(gy, gx, 2)));
      const double bh = cfg.anchor_h * std::exp(static_cast<double>(head.at(gy, gx, 3)));
      Detection d;
      d.box = {std::clamp(cx - 0.5 * bw, 0.0, limit_x), std::clamp(cy - 0.5 * bh, 0.0, limit_y),
               std::clamp(cx + 0.5 * bw, 0.0, limit_x), std::clamp(cy + 0.5 * bh, 0.0, limit_y)};
      if (!d.box.valid()) continue;
      d.confidence = conf;
      out.push_back(d);
    }
  }
  return out;
}

std::vector<Detection> toy_net_detect(const ImageBuffer& patch, double altitude_m,
                                      const DetectorConfig& cfg, const WeightSet& weights,
                                      bool use_altitude_fusion) {
  auto pyramid = backbone_pyramid(patch, cfg, weights);
  FeatureTensor feat = std::move(pyramid[2]);
  if (use_altitude_fusion) feat = altitude_fuse(feat, altitude_m, cfg, weights);
  const int c = cfg.head_channels;
  const FeatureTensor head = conv2d(feat, weights.expect("head.w", {5, 1, 1, c}),
                                    weights.expect("head.b", {5}), 5, 1, 1);
  check_finite(head, "detection head");
  return decode_detections(head, cfg, cfg.pyramid_strides[2]);
}

// ---- gradients ----

FusionGradients fusion_gradients(const FusionMlp& mlp, const std::vector<double>& feat,
                                 double altitude) {
  const int len = mlp.input_len;
  const int hid = mlp.hidden;
  require(static_cast<int>(feat.size()) == len, ErrorCode::kInvalidArgument,
          "feature length mismatch");
  require(mlp.w1.size() == static_cast<std::size_t>(hid) * (len + 1) &&
              mlp.b1.size() == static_cast<std::size_t>(hid) &&
              mlp.w2.size() == static_cast<std::size_t>(len) * hid &&
              mlp.b2.size() == static_cast<std::size_t>(len),
          ErrorCode::kInvalidArgument, "fusion MLP parameter shapes are inconsistent");

  std::vector<double> x(feat);
  x.push_back(altitude);
  std::vector<double> pre(hid), act(hid);
  for (int j = 0; j < hid; ++j) {
    double acc = mlp.b1[j];
    for (int i = 0; i <= len; ++i) acc += mlp.w1[j * (len + 1) + i] * x[i];
    pre[j] = acc;
    act[j] = std::max(acc, 0.0);
  }
  std::vector<double> y(len);
  FusionGradients g;
  for (int k = 0; k < len; ++k) {
    double acc = mlp.b2[k];
    for (int j = 0; j < hid; ++j) acc += mlp.w2[k * hid + j] * act[j];
    y[k] = acc;
    g.loss += acc * acc;
  }

  g.w1.assign(mlp.w1.size(), 0.0);
  g.b1.assign(hid, 0.0);
  g.w2.assign(mlp.w2.size(), 0.0);
  g.b2.assign(len, 0.0);
  std::vector<double> d_act(hid, 0.0);
  for (int k = 0; k < len; ++k) {
    const double dy = 2.0 * y[k];
    g.b2[k] = dy;
    for (int j = 0; j < hid; ++j) {
      g.w2[k * hid + j] = dy * act[j];
      d_act[j] += dy * mlp.w2[k * hid + j];
    }
  }
  for (int j = 0; j < hid; ++j) {
    const double d_pre = pre[j] > 0.0 ? d_act[j] : 0.0;
    g.b1[j] = d_pre;
    for (int i = 0; i <= len; ++i) g.w1[j * (len + 1) + i] = d_pre * x[i];
    g.altitude += d_pre * mlp.w1[j * (len + 1) + len];
  }
  return g;
}

GradCheckResult gradient_check(const FusionMlp& mlp, const std::vector<double>& feat,
                               double altitude, double step) {
  const FusionGradients analytic = fusion_gradients(mlp, feat, altitude);
  GradCheckResult res;
  res.loss = analytic.loss;
  res.altitude_gradient = analytic.altitude;

  auto relative = [](double a, double n) {
    const double denom = std::max({std::fabs(a), std::fabs(n), 1e-6});
    return std::fabs(a - n) / denom;
  };
  auto probe = [&](double& param, double analytic_grad, FusionMlp& m, double& alt) {
    const double saved = param;
    param = saved + step;
    const double up = fusion_gradients(m, feat, alt).loss;
    param = saved - step;
    const double down = fusion_gradients(m, feat, alt).loss;
    param = saved;
    const double numeric = (up - down) / (2.0 * step);
    res.max_relative_error = std::max(res.max_relative_error, relative(analytic_grad, numeric));
    ++res.checked;
  };

  FusionMlp m = mlp;
  double alt = altitude;
  for (std::size_t i = 0; i < m.w1.size(); ++i) probe(m.w1[i], analytic.w1[i], m, alt);
  for (std::size_t i = 0; i < m.b1.size(); ++i) probe(m.b1[i], analytic.b1[i], m, alt);
  for (std::size_t i = 0; i < m.w2.size(); ++i) probe(m.w2[i], analytic.w2[i], m, alt);
  for (std::size_t i = 0; i < m.b2.size(); ++i) probe(m.b2[i], analytic.b2[i], m, alt);
  probe(alt, analytic.altitude, m, alt);
  return res;
}

GradCheckResult fc_gradient_check(std::uint64_t seed) {
  Rng rng(seed);
  FusionMlp mlp;
  const int len = mlp.input_len;
  const int hid = mlp.hidden;
  auto fill = [&](std::vector<double>& v, std::size_t n, double bound) {
    v.resize(n);
    for (double& x : v) x = rng.uniform(-bound, bound);
  };
  fill(mlp.w1, static_cast<std::size_t>(hid) * (len + 1), 0.5);
  fill(mlp.b1, hid, 0.1);
  fill(mlp.w2, static_cast<std::size_t>(len) * hid, 0.5);
  fill(mlp.b2, len, 0.1);
  std::vector<double> feat;
  fill(feat, len, 1.0);
  const double altitude = 1496.68 / DetectorConfig{}.altitude_normalizer;
  return gradient_check(mlp, feat, altitude);
}

}  // namespace herdscope
