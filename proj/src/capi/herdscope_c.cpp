#include "herdscope/herdscope.h"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include <json.hpp>

#include "herdscope/datasets.hpp"
#include "herdscope/detector.hpp"
#include "herdscope/error.hpp"
#include "herdscope/image.hpp"
#include "herdscope/metrics.hpp"
#include "herdscope/pipeline.hpp"
#include "herdscope/report.hpp"
#include "herdscope/synthgen.hpp"
#include "herdscope/tiling.hpp"

struct hs_image {
  herdscope::ImageBuffer img;
};

namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using herdscope::ErrorCode;

thread_local std::string g_last_error;

template <typename Fn>
hs_status guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return HS_OK;
  } catch (const herdscope::Error& e) {
    g_last_error = e.what();
    return static_cast<hs_status>(static_cast<int>(e.code()));
  } catch (const json::exception& e) {
    g_last_error = std::string("json: ") + e.what();
    return HS_ERR_CONFIG;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return HS_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return HS_ERR_INTERNAL;
  }
}

void need(const void* p, const char* what) {
  herdscope::require(p != nullptr, ErrorCode::kInvalidArgument, std::string(what) + " is null");
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void put_string(char** out, const std::string& s) {
  if (out) *out = dup_string(s);
}

hs_image* wrap(herdscope::ImageBuffer img) { return new hs_image{std::move(img)}; }

std::vector<herdscope::Detection> to_core(const hs_detection* dets, std::size_t n) {
  if (n > 0) need(dets, "detections");
  std::vector<herdscope::Detection> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    out.push_back({{dets[i].x_min, dets[i].y_min, dets[i].x_max, dets[i].y_max},
                   dets[i].confidence,
                   dets[i].class_id});
  return out;
}

void from_core(const std::vector<herdscope::Detection>& dets, hs_detection** out,
               std::size_t* count) {
  need(out, "out");
  need(count, "count");
  auto* arr = static_cast<hs_detection*>(std::malloc(std::max<std::size_t>(dets.size(), 1) *
                                                     sizeof(hs_detection)));
  if (!arr) throw std::bad_alloc();
  for (std::size_t i = 0; i < dets.size(); ++i)
    arr[i] = {dets[i].box.x_min, dets[i].box.y_min, dets[i].box.x_max,
              dets[i].box.y_max, dets[i].confidence, dets[i].class_id};
  *out = arr;
  *count = dets.size();
}

json parse_json(const char* text, const char* what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    herdscope::fail(ErrorCode::kConfig, std::string("malformed ") + what + ": " + e.what());
  }
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  herdscope::require(static_cast<bool>(in), ErrorCode::kIo, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    herdscope::fail(ErrorCode::kConfig, "malformed JSON in " + path.string() + ": " + e.what());
  }
}

herdscope::PipelineConfig load_config(const char* config_path, const char* overrides_json) {
  need(config_path, "config_path");
  const fs::path path = fs::absolute(config_path);
  json doc = read_json_file(path);
  if (doc.contains("config") && doc["config"].is_object()) doc = doc["config"];
  if (overrides_json && *overrides_json) doc.merge_patch(parse_json(overrides_json, "overrides"));
  return herdscope::pipeline_config_from_json(doc, path.parent_path());
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  herdscope::require(!ec, ErrorCode::kIo, "cannot create " + dir.string() + ": " + ec.message());
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  herdscope::require(static_cast<bool>(out), ErrorCode::kIo, "cannot write " + path.string());
  out << text;
  herdscope::require(static_cast<bool>(out), ErrorCode::kIo, "failed writing " + path.string());
}

std::string report_text(const herdscope::EvalReport& r) {
  return herdscope::to_json(r).dump(2) + "\n";
}

herdscope::EvalReport labelled(herdscope::EvalReport r, const herdscope::PipelineConfig& cfg) {
  r.method = herdscope::method_label(cfg);
  r.operational_resolution = herdscope::operational_resolution(cfg);
  r.config = herdscope::to_json(cfg);
  return r;
}

}  // namespace

extern "C" {

const char* hs_version(void) { return "0.3.0"; }

const char* hs_last_error(void) { return g_last_error.c_str(); }

const char* hs_status_name(hs_status status) {
  switch (status) {
    case HS_OK: return "ok";
    case HS_ERR_INVALID_ARGUMENT: return "invalid argument";
    case HS_ERR_CONFIG: return "config error";
    case HS_ERR_DATA: return "data error";
    case HS_ERR_STAGE_FAILURE: return "stage failure";
    case HS_ERR_IO: return "i/o error";
    case HS_ERR_ADAPTER: return "adapter error";
    case HS_ERR_NUMERIC: return "numeric error";
    case HS_ERR_INTERNAL: return "internal error";
  }
  return "unknown";
}

void hs_string_free(char* s) { std::free(s); }

hs_status hs_image_create(int width, int height, int channels, const uint8_t* data,
                          hs_image** out) {
  return guarded([&] {
    need(out, "out");
    herdscope::ImageBuffer img(width, height, channels);
    if (data) std::copy_n(data, img.data().size(), img.data().begin());
    *out = wrap(std::move(img));
  });
}

hs_status hs_image_load(const char* path, hs_image** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = wrap(herdscope::load_image(path));
  });
}

hs_status hs_image_save(const hs_image* img, const char* path) {
  return guarded([&] {
    need(img, "image");
    need(path, "path");
    herdscope::save_image(img->img, path);
  });
}

void hs_image_free(hs_image* img) { delete img; }
int hs_image_width(const hs_image* img) { return img ? img->img.width() : 0; }
int hs_image_height(const hs_image* img) { return img ? img->img.height() : 0; }
int hs_image_channels(const hs_image* img) { return img ? img->img.channels() : 0; }
const uint8_t* hs_image_data(const hs_image* img) { return img ? img->img.data().data() : nullptr; }

hs_status hs_resample_bicubic(const hs_image* img, int width, int height, hs_image** out) {
  return guarded([&] {
    need(img, "image");
    need(out, "out");
    *out = wrap(herdscope::resample_bicubic(img->img, width, height));
  });
}

hs_status hs_degrade(const hs_image* img, int factor, hs_image** out) {
  return guarded([&] {
    need(img, "image");
    need(out, "out");
    *out = wrap(herdscope::degrade_frame(img->img, factor));
  });
}

hs_status hs_psnr(const hs_image* a, const hs_image* b, double* out) {
  return guarded([&] {
    need(a, "image a");
    need(b, "image b");
    need(out, "out");
    *out = herdscope::psnr(a->img, b->img);
  });
}

hs_status hs_upscale(const hs_image* img, int scale, const char* sr_json, const char* base_dir,
                     uint64_t seed, hs_image** out) {
  return guarded([&] {
    need(img, "image");
    need(out, "out");
    herdscope::require(scale == 2 || scale == 4 || scale == 8, ErrorCode::kConfig,
                       "scale must be 2, 4 or 8");
    json sr = sr_json && *sr_json ? parse_json(sr_json, "sr config") : json::object();
    if (!sr.contains("backend")) sr["backend"] = "bicubic";
    const json doc = {{"manifest", "."}, {"sr", sr}, {"seed", seed}};
    auto cfg = herdscope::pipeline_config_from_json(
        doc, base_dir ? fs::absolute(base_dir) : fs::current_path());
    herdscope::require(cfg.sr_backend != herdscope::SrBackend::kNone, ErrorCode::kConfig,
                       "upscale needs an SR backend");
    cfg.sr_scale = scale;
    cfg.han.scale = scale;
    if (cfg.sr_backend == herdscope::SrBackend::kToyHan) herdscope::validate(cfg.han);
    if (cfg.sr_backend == herdscope::SrBackend::kExternal)
      herdscope::require(!cfg.adapter.executable.empty(), ErrorCode::kConfig,
                         "external SR backend needs adapter.executable");
    const herdscope::SuperResolver resolver(cfg);
    *out = wrap(resolver.upscale(img->img, scale));
  });
}

hs_status hs_plan_tiles(int frame_w, int frame_h, int tile_size, int overlap,
                        hs_tile_origin** tiles, size_t* count) {
  return guarded([&] {
    need(tiles, "tiles");
    need(count, "count");
    const auto grid = herdscope::plan_tiles(frame_w, frame_h, tile_size, overlap);
    auto* arr = static_cast<hs_tile_origin*>(
        std::malloc(std::max<std::size_t>(grid.tiles.size(), 1) * sizeof(hs_tile_origin)));
    if (!arr) throw std::bad_alloc();
    for (std::size_t i = 0; i < grid.tiles.size(); ++i) arr[i] = {grid.tiles[i].x, grid.tiles[i].y};
    *tiles = arr;
    *count = grid.tiles.size();
  });
}

void hs_tiles_free(hs_tile_origin* tiles) { std::free(tiles); }

hs_status hs_extract_tile(const hs_image* frame, hs_tile_origin origin, int tile_size,
                          hs_image** out) {
  return guarded([&] {
    need(frame, "frame");
    need(out, "out");
    *out = wrap(herdscope::extract_tile(frame->img, {origin.x, origin.y}, tile_size));
  });
}

void hs_detections_free(hs_detection* dets) { std::free(dets); }

hs_status hs_detect_blobs(const hs_image* patch, double threshold, int min_area,
                          hs_detection** out, size_t* count) {
  return guarded([&] {
    need(patch, "patch");
    from_core(herdscope::blob_oracle_detect(patch->img, threshold, min_area), out, count);
  });
}

hs_status hs_remap_detections(const hs_detection* dets, size_t count, hs_tile_origin origin,
                              double scale, hs_detection** out, size_t* out_count) {
  return guarded([&] {
    from_core(herdscope::remap_detections(to_core(dets, count), {origin.x, origin.y}, scale), out,
              out_count);
  });
}

hs_status hs_merge_detections(const hs_detection* dets, size_t count, double nms_iou,
                              hs_detection** out, size_t* out_count) {
  return guarded([&] {
    from_core(herdscope::merge_frame_detections(to_core(dets, count), nms_iou), out, out_count);
  });
}

hs_status hs_scale_prior_filter(const hs_detection* dets, size_t count, double altitude_m,
                                double focal_length_m, double pixel_pitch_m,
                                double animal_extent_m, double k_lo, double k_hi,
                                hs_detection** out, size_t* out_count) {
  return guarded([&] {
    from_core(herdscope::scale_prior_filter(to_core(dets, count), altitude_m,
                                            {focal_length_m, pixel_pitch_m}, animal_extent_m,
                                            {k_lo, k_hi}),
              out, out_count);
  });
}

hs_status hs_match_count(const hs_detection* dets, size_t n_dets, const double* gt_boxes,
                         size_t n_gt, const char* criterion, double threshold, int* tp) {
  return guarded([&] {
    need(criterion, "criterion");
    need(tp, "tp");
    if (n_gt > 0) need(gt_boxes, "gt_boxes");
    std::vector<herdscope::Box> gts;
    for (std::size_t i = 0; i < n_gt; ++i)
      gts.push_back({gt_boxes[4 * i], gt_boxes[4 * i + 1], gt_boxes[4 * i + 2], gt_boxes[4 * i + 3]});
    herdscope::EvalConfig cfg;
    cfg.criterion = herdscope::criterion_from_string(criterion);
    if (cfg.criterion == herdscope::MatchCriterion::kIoU)
      cfg.iou_threshold = threshold;
    else
      cfg.chebyshev_threshold = threshold;
    herdscope::validate(cfg);
    *tp = herdscope::match_detections(to_core(dets, n_dets), gts, cfg).tp;
  });
}

double hs_chebyshev(const double* a, const double* b) {
  if (!a || !b) return NAN;
  return herdscope::chebyshev({a[0], a[1], a[2], a[3]}, {b[0], b[1], b[2], b[3]});
}

hs_status hs_config_resolve(const char* config_path, const char* overrides_json,
                            char** resolved_json) {
  return guarded([&] {
    auto cfg = load_config(config_path, overrides_json);
    herdscope::resolve(cfg);
    put_string(resolved_json, herdscope::to_json(cfg).dump(2) + "\n");
  });
}

hs_status hs_run(const char* config_path, const char* overrides_json, const char* out_dir,
                 char** report_json, int* failed) {
  return guarded([&] {
    auto cfg = load_config(config_path, overrides_json);
    const auto res = herdscope::run_pipeline(cfg);
    const std::string text = report_text(res.report);
    if (out_dir) {
      ensure_dir(out_dir);
      write_file(fs::path(out_dir) / "report.json", text);
      herdscope::save_detections_csv(fs::path(out_dir) / "detections.csv", res.detections);
    }
    if (failed) *failed = res.failed ? 1 : 0;
    put_string(report_json, text);
  });
}

hs_status hs_tile(const char* config_path, const char* overrides_json, const char* out_dir,
                  char** summary_json) {
  return guarded([&] {
    need(out_dir, "out_dir");
    const auto cfg = load_config(config_path, overrides_json);
    const auto index = herdscope::write_tiles(cfg, out_dir);
    put_string(summary_json, json{{"frames", index.frames.size()},
                                  {"tiles", index.tiles.size()},
                                  {"index", (fs::path(out_dir) / "tiles.json").string()}}
                                 .dump());
  });
}

hs_status hs_detect(const char* config_path, const char* overrides_json, const char* tiles_index,
                    const char* detections_csv, char** summary_json) {
  return guarded([&] {
    need(detections_csv, "detections_csv");
    auto cfg = load_config(config_path, overrides_json);
    std::vector<herdscope::FrameDetections> dets;
    if (tiles_index) {
      dets = herdscope::detect_tiles(cfg, herdscope::load_tile_index(tiles_index));
    } else {
      herdscope::resolve(cfg);
      const auto set = herdscope::select_frames(cfg);
      const herdscope::SuperResolver sr(cfg);
      const herdscope::PatchDetector det(cfg);
      dets.resize(set.frames.size());
      herdscope::parallel_for(set.frames.size(), cfg.threads, [&](std::size_t i) {
        dets[i].frame_id = set.frames[i].frame_id;
        dets[i].dets = herdscope::detect_frame(herdscope::load_image(set.frames[i].image_path),
                                               set.frames[i], cfg, sr, det);
      });
    }
    const fs::path out(detections_csv);
    if (out.has_parent_path()) ensure_dir(out.parent_path());
    herdscope::save_detections_csv(out, dets);
    std::size_t total = 0;
    for (const auto& d : dets) total += d.dets.size();
    put_string(summary_json, json{{"frames", dets.size()}, {"detections", total}}.dump());
  });
}

hs_status hs_evaluate(const char* config_path, const char* overrides_json,
                      const char* detections_csv, char** report_json) {
  return guarded([&] {
    need(detections_csv, "detections_csv");
    auto cfg = load_config(config_path, overrides_json);
    herdscope::resolve(cfg);
    const auto set = herdscope::select_frames(cfg);
    const auto dets = herdscope::load_detections_csv(detections_csv);
    const auto report = labelled(
        herdscope::evaluate_frames(set.frames, set.gts, dets, cfg.eval, cfg.sweep_thresholds), cfg);
    put_string(report_json, report_text(report));
  });
}

hs_status hs_emit_report(const char* reports_json, const char* out_dir, const char* formats,
                         char** written_json) {
  return guarded([&] {
    need(reports_json, "reports_json");
    need(out_dir, "out_dir");
    const json doc = parse_json(reports_json, "reports");
    std::vector<herdscope::EvalReport> reports;
    if (doc.is_array()) {
      for (const auto& r : doc) reports.push_back(herdscope::report_from_json(r));
    } else if (doc.contains("reports")) {
      for (const auto& r : doc["reports"]) reports.push_back(herdscope::report_from_json(r));
    } else {
      reports.push_back(herdscope::report_from_json(doc));
    }
    std::set<std::string> fmt;
    std::stringstream ss(formats ? formats : "json,markdown,csv,svg");
    for (std::string f; std::getline(ss, f, ',');)
      if (!f.empty()) fmt.insert(f);
    json written = json::array();
    for (const auto& p : herdscope::emit_report(reports, out_dir, fmt)) written.push_back(p.string());
    put_string(written_json, written.dump());
  });
}

hs_status hs_synth(const char* preset, int n_frames, uint64_t seed, const char* overrides_json,
                   const char* out_dir, char** summary_json) {
  return guarded([&] {
    need(preset, "preset");
    need(out_dir, "out_dir");
    auto scene = herdscope::preset_by_name(preset, seed);
    if (overrides_json && *overrides_json) {
      const json o = parse_json(overrides_json, "scene overrides");
      static const std::set<std::string> known{
          "frame_w", "frame_h", "altitude", "altitude_spread", "n_animals", "animal_extent", "animal_contrast",
          "background_level", "texture_amplitude", "correlation_length", "min_separation",
          "camera"};
      for (const auto& [k, v] : o.items())
        herdscope::require(known.count(k), ErrorCode::kConfig, "unknown scene field '" + k + "'");
      scene.frame_w = o.value("frame_w", scene.frame_w);
      scene.frame_h = o.value("frame_h", scene.frame_h);
      scene.altitude = o.value("altitude", scene.altitude);
      scene.altitude_spread = o.value("altitude_spread", scene.altitude_spread);
      scene.n_animals = o.value("n_animals", scene.n_animals);
      scene.animal_extent = o.value("animal_extent", scene.animal_extent);
      scene.animal_contrast = o.value("animal_contrast", scene.animal_contrast);
      scene.background_level = o.value("background_level", scene.background_level);
      scene.texture_amplitude = o.value("texture_amplitude", scene.texture_amplitude);
      scene.correlation_length = o.value("correlation_length", scene.correlation_length);
      scene.min_separation = o.value("min_separation", scene.min_separation);
      if (o.contains("camera")) {
        scene.camera.focal_length = o["camera"].value("focal_length", scene.camera.focal_length);
        scene.camera.pixel_pitch = o["camera"].value("pixel_pitch", scene.camera.pixel_pitch);
      }
    }
    herdscope::validate(scene);
    const auto res = herdscope::write_synthetic_dataset(scene, n_frames, out_dir);
    const fs::path config = fs::path(out_dir) / "config.json";
    write_file(config, json{{"manifest", "manifest.json"}, {"seed", seed}}.dump(2) + "\n");
    put_string(summary_json, json{{"manifest", res.manifest.string()},
                                  {"annotations", res.annotations.string()},
                                  {"altitude", res.altitude_csv.string()},
                                  {"config", config.string()},
                                  {"frames", res.frames},
                                  {"animals", res.animals}}
                                 .dump());
  });
}

hs_status hs_ingest(const char* request_json, const char* out_manifest, char** summary_json) {
  return guarded([&] {
    need(request_json, "request_json");
    need(out_manifest, "out_manifest");
    const json req = parse_json(request_json, "ingest request");
    const fs::path images = fs::absolute(req.at("images").get<std::string>());
    herdscope::require(fs::is_directory(images), ErrorCode::kData,
                       "image directory " + images.string() + " does not exist");
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(images)) {
      const auto ext = e.path().extension().string();
      if (e.is_regular_file() && (ext == ".ppm" || ext == ".pgm")) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    herdscope::require(!files.empty(), ErrorCode::kData, "no .ppm/.pgm images in " + images.string());

    herdscope::Manifest m;
    for (const auto& p : files) {
      const auto info = herdscope::read_image_info(p);
      herdscope::Frame f;
      f.frame_id = p.stem().string();
      f.image_path = fs::absolute(p);
      f.width = info.width;
      f.height = info.height;
      m.frames.push_back(std::move(f));
    }
    if (req.contains("altitude") && !req["altitude"].is_null())
      m.frames = herdscope::attach_altitude(std::move(m.frames),
                                            fs::absolute(req["altitude"].get<std::string>()));
    if (req.contains("camera"))
      m.camera = herdscope::CameraModel{req["camera"].at("focal_length").get<double>(),
                                        req["camera"].at("pixel_pitch").get<double>()};
    std::size_t boxes = 0;
    if (req.contains("annotations") && !req["annotations"].is_null()) {
      m.annotations = fs::absolute(req["annotations"].get<std::string>());
      const std::string format = req.value("format", "boxes");
      herdscope::require(format == "boxes" || format == "centers", ErrorCode::kConfig,
                         "annotation format must be boxes or centers");
      m.annotation_format = format == "boxes" ? herdscope::AnnotationFormat::kBoxes
                                              : herdscope::AnnotationFormat::kCenters;
      m.box_size = req.value("box_size", 100);
      herdscope::require(m.box_size > 0, ErrorCode::kConfig, "box_size must be positive");
      for (const auto& g : herdscope::load_manifest_ground_truth(m)) boxes += g.size();
    }
    const fs::path out = fs::absolute(out_manifest);
    if (out.has_parent_path()) ensure_dir(out.parent_path());
    herdscope::save_manifest(m, out);
    put_string(summary_json, json{{"manifest", out.string()},
                                  {"frames", m.frames.size()},
                                  {"boxes", boxes}}
                                 .dump());
  });
}

hs_status hs_grad_check(uint64_t seed, char** result_json) {
  return guarded([&] {
    const auto r = herdscope::fc_gradient_check(seed);
    put_string(result_json, json{{"seed", seed},
                                 {"checked", r.checked},
                                 {"max_relative_error", r.max_relative_error},
                                 {"altitude_gradient", r.altitude_gradient},
                                 {"loss", r.loss},
                                 {"passed", r.max_relative_error < 1e-4}}
                                .dump());
  });
}

}  // extern "C"
