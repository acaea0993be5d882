#include "herdscope/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "herdscope/csv.hpp"
#include "herdscope/datasets.hpp"
#include "herdscope/detector.hpp"
#include "herdscope/error.hpp"
#include "herdscope/rng.hpp"

namespace herdscope {

namespace fs = std::filesystem;

namespace {

constexpr int kAttemptsPerAnimal = 1000;
constexpr int kSuper = 4;  // supersamples per axis for ellipse coverage

// Three box-blur passes approximate a Gaussian of the given sigma.
void box_blur_1d(std::vector<float>& line, std::vector<float>& tmp, int radius) {
  const int n = static_cast<int>(line.size());
  const float inv = 1.0f / (2 * radius + 1);
  double acc = 0.0;
  for (int i = -radius; i <= radius; ++i) acc += line[std::clamp(i, 0, n - 1)];
  for (int i = 0; i < n; ++i) {
    tmp[i] = static_cast<float>(acc * inv);
    acc += line[std::min(i + radius + 1, n - 1)] - line[std::max(i - radius, 0)];
  }
  line.swap(tmp);
}

void blur3(std::vector<float>& field, int w, int h, double sigma);
void normalize(std::vector<float>& field);

std::vector<float> correlated_noise(int w, int h, double sigma, Rng& rng) {
  std::vector<float> field(static_cast<std::size_t>(w) * h);
  // Uniform white noise; the blur passes make the field close to Gaussian.
  for (float& v : field) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  if (sigma > 0.0) blur3(field, w, h, sigma);
  normalize(field);
  return field;
}

void blur3(std::vector<float>& field, int w, int h, double sigma) {
  // Box width for three passes: w_box^2 = 12 sigma^2 / 3 + 1.
  const int radius = std::max(1, static_cast<int>(std::lround((std::sqrt(4.0 * sigma * sigma + 1.0) - 1.0) / 2.0)));
  std::vector<float> line(w), tmp(w);
  std::vector<double> acc(w);
  std::vector<float> col_out(static_cast<std::size_t>(w) * h);
  const double inv = 1.0 / (2 * radius + 1);
  auto row = [&](std::vector<float>& f, int y) {
    return &f[static_cast<std::size_t>(std::clamp(y, 0, h - 1)) * w];
  };
  for (int pass = 0; pass < 3; ++pass) {
    for (int y = 0; y < h; ++y) {
      float* r = row(field, y);
      std::copy_n(r, w, line.begin());
      box_blur_1d(line, tmp, radius);
      std::copy_n(line.begin(), w, r);
    }
    // Vertical running sums over whole rows keep memory access sequential.
    std::fill(acc.begin(), acc.end(), 0.0);
    for (int y = -radius; y <= radius; ++y) {
      const float* r = row(field, y);
      for (int x = 0; x < w; ++x) acc[x] += r[x];
    }
    for (int y = 0; y < h; ++y) {
      float* o = &col_out[static_cast<std::size_t>(y) * w];
      for (int x = 0; x < w; ++x) o[x] = static_cast<float>(acc[x] * inv);
      const float* add = row(field, y + radius + 1);
      const float* sub = row(field, y - radius);
      for (int x = 0; x < w; ++x) acc[x] += add[x] - sub[x];
    }
    field.swap(col_out);
  }
}

// Zero mean, unit standard deviation.
void normalize(std::vector<float>& field) {
  double sum = 0.0, sq = 0.0;
  for (float v : field) {
    sum += v;
    sq += static_cast<double>(v) * v;
  }
  const double n = static_cast<double>(field.size());
  const double mean = sum / n;
  const double sd = std::sqrt(std::max(sq / n - mean * mean, 1e-12));
  for (float& v : field) v = static_cast<float>((v - mean) / sd);
}

struct Ellipse {
  double cx, cy, rx, ry;
  Box bounds() const {
    return {std::floor(cx - rx), std::floor(cy - ry), std::ceil(cx + rx), std::ceil(cy + ry)};
  }
};

double box_gap(const Box& a, const Box& b) {
  const double gx = std::max({0.0, b.x_min - a.x_max, a.x_min - b.x_max});
  const double gy = std::max({0.0, b.y_min - a.y_max, a.y_min - b.y_max});
  return std::max(gx, gy);
}

// Fraction of the pixel [x, x+1) x [y, y+1) inside the ellipse.
double coverage(const Ellipse& e, int x, int y) {
  int inside = 0;
  for (int sy = 0; sy < kSuper; ++sy) {
    const double py = (y + (sy + 0.5) / kSuper - e.cy) / e.ry;
    for (int sx = 0; sx < kSuper; ++sx) {
      const double px = (x + (sx + 0.5) / kSuper - e.cx) / e.rx;
      if (px * px + py * py <= 1.0) ++inside;
    }
  }
  return static_cast<double>(inside) / (kSuper * kSuper);
}

}  // namespace

void validate(const SceneConfig& cfg) {
  require(cfg.frame_w > 0 && cfg.frame_h > 0, ErrorCode::kConfig, "frame size must be positive");
  require(cfg.n_animals >= 0, ErrorCode::kConfig, "n_animals must be >= 0");
  require(cfg.animal_extent > 0.0, ErrorCode::kConfig, "animal_extent must be positive");
  require(cfg.animal_contrast > 0.0 && cfg.animal_contrast <= 1.0, ErrorCode::kConfig,
          "animal_contrast must be in (0, 1]");
  require(cfg.min_separation >= 0, ErrorCode::kConfig, "min_separation must be >= 0");
  require(cfg.altitude > 0.0, ErrorCode::kConfig, "altitude must be positive");
  require(cfg.altitude_spread >= 0.0 && cfg.altitude_spread < 1.0, ErrorCode::kConfig,
          "altitude_spread must be in [0, 1)");
  const double e = nominal_extent_px(cfg);
  require(e * 1.2 + 2 < std::min(cfg.frame_w, cfg.frame_h), ErrorCode::kConfig,
          "animals of ~" + std::to_string(e) + " px do not fit in the frame");
}

double nominal_extent_px(const SceneConfig& cfg) {
  return cfg.animal_extent / gsd(cfg.altitude, cfg.camera);
}

Scene generate_scene(const SceneConfig& cfg) {
  validate(cfg);
  Rng rng(cfg.seed);
  const int w = cfg.frame_w;
  const int h = cfg.frame_h;
  const double e = nominal_extent_px(cfg);

  // Place animals first so the noise stream does not depend on their count.
  std::vector<Ellipse> animals;
  std::vector<Box> boxes;
  Rng place(cfg.seed ^ 0x9e3779b97f4a7c15ull);
  for (int a = 0; a < cfg.n_animals; ++a) {
    bool placed = false;
    for (int attempt = 0; attempt < kAttemptsPerAnimal && !placed; ++attempt) {
      const double aspect = place.uniform(0.8, 1.2);
      const double rx = 0.5 * e * std::sqrt(aspect);
      const double ry = 0.5 * e / std::sqrt(aspect);
      const Ellipse el{place.uniform(rx + 1.0, w - rx - 1.0), place.uniform(ry + 1.0, h - ry - 1.0),
                       rx, ry};
      const Box b = el.bounds();
      const bool clear = std::all_of(boxes.begin(), boxes.end(), [&](const Box& o) {
        return box_gap(b, o) >= cfg.min_separation;
      });
      if (!clear) continue;
      animals.push_back(el);
      boxes.push_back(b);
      placed = true;
    }
    require(placed, ErrorCode::kData,
            "could not place animal " + std::to_string(a + 1) + " of " +
                std::to_string(cfg.n_animals) + " after " + std::to_string(kAttemptsPerAnimal) +
                " attempts; lower n_animals or min_separation");
  }

  const auto noise = correlated_noise(w, h, cfg.correlation_length, rng);
  std::vector<float> level(noise.size());
  for (std::size_t i = 0; i < noise.size(); ++i)
    level[i] = static_cast<float>(cfg.background_level + cfg.texture_amplitude * noise[i]);

  for (const auto& el : animals) {
    const Box b = el.bounds();
    for (int y = static_cast<int>(b.y_min); y < static_cast<int>(b.y_max); ++y)
      for (int x = static_cast<int>(b.x_min); x < static_cast<int>(b.x_max); ++x) {
        const double cov = coverage(el, x, y);
        level[static_cast<std::size_t>(y) * w + x] += static_cast<float>(cfg.animal_contrast * cov);
      }
  }

  // Slight warm tint; the channel mean equals the level.
  Scene scene{ImageBuffer(w, h, 3), {}, cfg.altitude};
  auto px = scene.image.data();
  for (std::size_t i = 0; i < level.size(); ++i) {
    const double v = level[i] * 255.0;
    px[3 * i + 0] = quantize(v + 6.0);
    px[3 * i + 1] = quantize(v);
    px[3 * i + 2] = quantize(v - 6.0);
  }
  // A GT box holds every pixel its ellipse touches.
  for (const auto& el : animals) {
    Box b = el.bounds();
    double x0 = b.x_max, y0 = b.y_max, x1 = b.x_min, y1 = b.y_min;
    for (int y = static_cast<int>(b.y_min); y < static_cast<int>(b.y_max); ++y)
      for (int x = static_cast<int>(b.x_min); x < static_cast<int>(b.x_max); ++x)
        if (coverage(el, x, y) > 0.0) {
          x0 = std::min<double>(x0, x);
          y0 = std::min<double>(y0, y);
          x1 = std::max<double>(x1, x + 1);
          y1 = std::max<double>(y1, y + 1);
        }
    scene.ground_truth.push_back({x0, y0, x1, y1});
  }
  return scene;
}

ImageBuffer degrade_frame(const ImageBuffer& frame, int factor) {
  require(factor == 2 || factor == 4 || factor == 8, ErrorCode::kInvalidArgument,
          "degrade factor must be 2, 4 or 8");
  require(frame.width() >= factor && frame.height() >= factor, ErrorCode::kInvalidArgument,
          "frame smaller than degrade factor");
  return resample_bicubic(frame, frame.width() / factor, frame.height() / factor);
}

SceneConfig savmap_like_preset(std::uint64_t seed) {
  SceneConfig c;
  c.frame_w = 3000;
  c.frame_h = 4000;
  c.altitude = 800.0;  // 0.08 m/px -> 25 px animals
  c.altitude_spread = 0.5;
  c.n_animals = 20;
  c.seed = seed;
  return c;
}

SceneConfig aed_like_preset(std::uint64_t seed) {
  SceneConfig c = savmap_like_preset(seed);
  c.altitude = 200.0;  // 0.02 m/px -> 100 px animals
  c.altitude_spread = 0.0;
  c.n_animals = 12;
  c.min_separation = 20;
  return c;
}

SceneConfig preset_by_name(const std::string& name, std::uint64_t seed) {
  if (name == "savmap-like") return savmap_like_preset(seed);
  if (name == "aed-like") return aed_like_preset(seed);
  fail(ErrorCode::kConfig, "unknown scene preset '" + name + "' (savmap-like, aed-like)");
}

SceneConfig dataset_frame_config(const SceneConfig& base, int index) {
  SceneConfig cfg = base;
  cfg.seed = base.seed * 1000003ull + static_cast<std::uint64_t>(index);
  if (base.altitude_spread > 0.0) {
    Rng alt_rng(cfg.seed ^ 0x51ed270b27c3a4e5ull);
    cfg.altitude = base.altitude * (1.0 + base.altitude_spread * alt_rng.uniform(-1.0, 1.0));
  }
  return cfg;
}

SynthOutput write_synthetic_dataset(const SceneConfig& base, int n_frames,
                                    const fs::path& out_dir) {
  require(n_frames >= 1, ErrorCode::kConfig, "need at least one frame");
  fs::create_directories(out_dir / "images");
  SynthOutput out;
  out.manifest = out_dir / "manifest.json";
  out.annotations = out_dir / "ground_truth.csv";
  out.altitude_csv = out_dir / "altitude.csv";

  Manifest m;
  m.annotations = out.annotations;
  m.camera = base.camera;
  std::vector<GroundTruthBox> gts;
  std::ofstream alt(out.altitude_csv, std::ios::trunc);
  require(static_cast<bool>(alt), ErrorCode::kIo, "cannot write " + out.altitude_csv.string());
  alt << "frame_id,altitude_m\n";
  for (int i = 0; i < n_frames; ++i) {
    const SceneConfig cfg = dataset_frame_config(base, i);
    const Scene s = generate_scene(cfg);
    std::ostringstream id;
    id << "frame_" << std::setw(4) << std::setfill('0') << i;
    const fs::path img = out_dir / "images" / (id.str() + ".ppm");
    save_image(s.image, img);
    Frame f;
    f.frame_id = id.str();
    f.image_path = img;
    f.altitude = static_cast<float>(cfg.altitude);
    f.width = s.image.width();
    f.height = s.image.height();
    m.frames.push_back(f);
    alt << f.frame_id << ',' << csv::format_double(cfg.altitude) << '\n';
    for (const auto& b : s.ground_truth) gts.push_back({f.frame_id, b, 0});
    out.animals += static_cast<int>(s.ground_truth.size());
  }
  save_annotations_boxes(out.annotations, gts);
  save_manifest(m, out.manifest);
  out.frames = n_frames;
  return out;
}

}  // namespace herdscope
