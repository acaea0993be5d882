#include "herdscope/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "herdscope/csv.hpp"
#include "herdscope/error.hpp"
#include "herdscope/synthgen.hpp"

namespace herdscope {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::map<std::string, SrBackend> kSrNames{{"none", SrBackend::kNone},
                                                {"bicubic", SrBackend::kBicubic},
                                                {"toy-han", SrBackend::kToyHan},
                                                {"external", SrBackend::kExternal}};
const std::map<std::string, DetectorKind> kDetectorNames{{"blob-oracle", DetectorKind::kBlobOracle},
                                                         {"toy-net", DetectorKind::kToyNet}};

template <typename E>
std::string name_of(const std::map<std::string, E>& names, E value) {
  for (const auto& [k, v] : names)
    if (v == value) return k;
  return "?";
}

template <typename E>
E parse_name(const std::map<std::string, E>& names, const std::string& s, const char* what) {
  const auto it = names.find(s);
  if (it == names.end()) {
    std::string opts;
    for (const auto& [k, v] : names) opts += (opts.empty() ? "" : ", ") + k;
    fail(ErrorCode::kConfig, std::string("unknown ") + what + " '" + s + "' (" + opts + ")");
  }
  return it->second;
}

fs::path resolve_path(const fs::path& base, const std::string& p) {
  fs::path path(p);
  if (path.is_relative()) path = base / path;
  return fs::absolute(path).lexically_normal();
}

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
  if (j.contains(key) && !j[key].is_null()) out = j[key].get<T>();
}

CameraModel camera_from_json(const json& j) {
  CameraModel c;
  read_opt(j, "focal_length", c.focal_length);
  read_opt(j, "pixel_pitch", c.pixel_pitch);
  return c;
}

json camera_to_json(const CameraModel& c) {
  return {{"focal_length", c.focal_length}, {"pixel_pitch", c.pixel_pitch}};
}

std::string side(int n) { return std::to_string(n) + "×" + std::to_string(n); }

}  // namespace

void resolve(PipelineConfig& cfg) {
  require(!cfg.manifest.empty(), ErrorCode::kConfig, "pipeline config needs a manifest");
  require(cfg.subset == "all" || cfg.subset == "train" || cfg.subset == "val" ||
              cfg.subset == "test",
          ErrorCode::kConfig, "subset must be all, train, val or test");
  require(cfg.tile_size > 0, ErrorCode::kConfig, "tile_size must be positive");
  require(cfg.overlap >= 0 && cfg.overlap < cfg.tile_size, ErrorCode::kConfig,
          "overlap must be in [0, tile_size)");
  const int f = cfg.degrade_factor;
  require(f == 1 || f == 2 || f == 4 || f == 8, ErrorCode::kConfig,
          "degrade_factor must be 1, 2, 4 or 8");
  require(cfg.tile_size % f == 0, ErrorCode::kConfig, "tile_size must be divisible by degrade_factor");

  if (cfg.sr_backend == SrBackend::kNone) {
    require(cfg.sr_scale == 0 || cfg.sr_scale == 1, ErrorCode::kConfig,
            "sr scale given without an SR backend");
    cfg.sr_scale = 1;
  } else {
    if (cfg.sr_scale == 0) {
      require(f > 1, ErrorCode::kConfig,
              "an SR backend needs degrade_factor > 1 or an explicit sr scale");
      cfg.sr_scale = f;
    }
    require(cfg.sr_scale == 2 || cfg.sr_scale == 4 || cfg.sr_scale == 8, ErrorCode::kConfig,
            "sr scale must be 2, 4 or 8");
    cfg.han.scale = cfg.sr_scale;
    if (cfg.sr_backend == SrBackend::kToyHan) validate(cfg.han);
    if (cfg.sr_backend == SrBackend::kExternal)
      require(!cfg.adapter.executable.empty(), ErrorCode::kConfig,
              "external SR backend needs adapter.executable");
  }
  if (cfg.detector == DetectorKind::kToyNet) {
    validate(cfg.toy_net);
    const int detect_size = cfg.tile_size / f * cfg.sr_scale;
    require(detect_size == cfg.toy_net.input_size, ErrorCode::kConfig,
            "toy-net input_size " + std::to_string(cfg.toy_net.input_size) +
                " does not match the detection resolution " + std::to_string(detect_size));
  } else {
    require(cfg.blob.threshold > 0.0 && cfg.blob.threshold < 1.0, ErrorCode::kConfig,
            "blob threshold must be in (0, 1)");
    require(cfg.blob.min_area >= 1, ErrorCode::kConfig, "blob min_area must be >= 1");
  }
  if (cfg.scale_prior.enabled) {
    require(cfg.scale_prior.band.lo > 0 && cfg.scale_prior.band.lo < cfg.scale_prior.band.hi,
            ErrorCode::kConfig, "scale prior band must satisfy 0 < lo < hi");
    require(cfg.scale_prior.animal_extent > 0, ErrorCode::kConfig, "animal_extent must be positive");
    require(cfg.scale_prior.camera.focal_length > 0 && cfg.scale_prior.camera.pixel_pitch > 0,
            ErrorCode::kConfig, "scale prior camera must have positive focal length and pitch");
  }
  require(cfg.merge_nms_iou >= 0 && cfg.merge_nms_iou <= 1, ErrorCode::kConfig,
          "merge_nms_iou must be in [0, 1]");
  validate(cfg.eval);
  require(std::is_sorted(cfg.sweep_thresholds.begin(), cfg.sweep_thresholds.end()),
          ErrorCode::kConfig, "sweep thresholds must be ascending");
  for (double t : cfg.sweep_thresholds)
    require(t > 0 && t <= 1, ErrorCode::kConfig, "sweep thresholds must be in (0, 1]");
  require(cfg.max_abort_fraction >= 0 && cfg.max_abort_fraction <= 1, ErrorCode::kConfig,
          "max_abort_fraction must be in [0, 1]");
  require(cfg.threads >= 1, ErrorCode::kConfig, "threads must be >= 1");
}

PipelineConfig pipeline_config_from_json(const json& doc, const fs::path& base_dir) {
  const json& j = doc.contains("config") && doc["config"].is_object() ? doc["config"] : doc;
  PipelineConfig c;
  try {
    c.manifest = resolve_path(base_dir, j.at("manifest").get<std::string>());
    read_opt(j, "subset", c.subset);
    if (j.contains("split")) {
      const auto& s = j["split"];
      if (s.contains("ratios")) {
        const auto r = s["ratios"].get<std::vector<double>>();
        require(r.size() == 3, ErrorCode::kConfig, "split.ratios needs three values");
        c.split_ratios = {r[0], r[1], r[2]};
      }
      read_opt(s, "seed", c.split_seed);
    }
    read_opt(j, "tile_size", c.tile_size);
    read_opt(j, "overlap", c.overlap);
    read_opt(j, "degrade_factor", c.degrade_factor);
    if (j.contains("sr")) {
      const auto& s = j["sr"];
      if (s.contains("backend")) c.sr_backend = parse_name(kSrNames, s["backend"].get<std::string>(), "sr backend");
      read_opt(s, "scale", c.sr_scale);
      if (s.contains("adapter")) {
        const auto& a = s["adapter"];
        read_opt(a, "executable", c.adapter.executable);
        read_opt(a, "args", c.adapter.prefix_args);
        read_opt(a, "timeout_s", c.adapter.timeout_seconds);
        read_opt(a, "max_concurrent", c.adapter.max_concurrent);
        if (!c.adapter.executable.empty() && c.adapter.executable.find('/') != std::string::npos)
          c.adapter.executable = resolve_path(base_dir, c.adapter.executable).string();
      }
      if (s.contains("han")) {
        const auto& h = s["han"];
        read_opt(h, "channels", c.han.channels);
        read_opt(h, "groups", c.han.groups);
        read_opt(h, "blocks_per_group", c.han.blocks_per_group);
        read_opt(h, "lam_alpha", c.han.lam_alpha);
        read_opt(h, "csam_beta", c.han.csam_beta);
        if (h.contains("weights") && !h["weights"].is_null())
          c.han_weights = resolve_path(base_dir, h["weights"].get<std::string>());
      }
    }
    if (j.contains("detector")) {
      const auto& d = j["detector"];
      if (d.contains("kind")) c.detector = parse_name(kDetectorNames, d["kind"].get<std::string>(), "detector");
      read_opt(d, "blob_threshold", c.blob.threshold);
      read_opt(d, "min_area", c.blob.min_area);
      read_opt(d, "use_altitude_fusion", c.use_altitude_fusion);
      if (d.contains("toy_net")) {
        const auto& t = d["toy_net"];
        read_opt(t, "input_size", c.toy_net.input_size);
        read_opt(t, "head_channels", c.toy_net.head_channels);
        read_opt(t, "fc_hidden", c.toy_net.fc_hidden);
        read_opt(t, "conf_threshold", c.toy_net.conf_threshold);
        read_opt(t, "altitude_normalizer", c.toy_net.altitude_normalizer);
        read_opt(t, "anchor_w", c.toy_net.anchor_w);
        read_opt(t, "anchor_h", c.toy_net.anchor_h);
        if (t.contains("weights") && !t["weights"].is_null())
          c.toy_net_weights = resolve_path(base_dir, t["weights"].get<std::string>());
      }
    }
    if (j.contains("scale_prior")) {
      const auto& s = j["scale_prior"];
      read_opt(s, "enabled", c.scale_prior.enabled);
      if (s.contains("camera")) c.scale_prior.camera = camera_from_json(s["camera"]);
      read_opt(s, "animal_extent", c.scale_prior.animal_extent);
      if (s.contains("band")) {
        const auto b = s["band"].get<std::vector<double>>();
        require(b.size() == 2, ErrorCode::kConfig, "scale_prior.band needs two values");
        c.scale_prior.band = {b[0], b[1]};
      }
    }
    read_opt(j, "merge_nms_iou", c.merge_nms_iou);
    if (j.contains("eval")) {
      const auto& e = j["eval"];
      read_opt(e, "iou_threshold", c.eval.iou_threshold);
      read_opt(e, "chebyshev_threshold", c.eval.chebyshev_threshold);
      read_opt(e, "conf_threshold", c.eval.conf_threshold);
      read_opt(e, "sweep_thresholds", c.sweep_thresholds);
    }
    read_opt(j, "method", c.method);
    read_opt(j, "seed", c.seed);
    read_opt(j, "max_abort_fraction", c.max_abort_fraction);
    read_opt(j, "threads", c.threads);
  } catch (const json::exception& e) {
    fail(ErrorCode::kConfig, std::string("invalid pipeline config: ") + e.what());
  }
  c.toy_net.seed = c.seed;
  c.han.seed = c.seed;
  return c;
}

json to_json(const PipelineConfig& c) {
  json j;
  j["manifest"] = c.manifest.string();
  j["subset"] = c.subset;
  j["split"] = {{"ratios", {c.split_ratios.train, c.split_ratios.val, c.split_ratios.test}},
                {"seed", c.split_seed}};
  j["tile_size"] = c.tile_size;
  j["overlap"] = c.overlap;
  j["degrade_factor"] = c.degrade_factor;
  j["sr"] = {{"backend", name_of(kSrNames, c.sr_backend)},
             {"scale", c.sr_scale},
             {"adapter", {{"executable", c.adapter.executable},
                          {"args", c.adapter.prefix_args},
                          {"timeout_s", c.adapter.timeout_seconds},
                          {"max_concurrent", c.adapter.max_concurrent}}},
             {"han", {{"channels", c.han.channels},
                      {"groups", c.han.groups},
                      {"blocks_per_group", c.han.blocks_per_group},
                      {"lam_alpha", c.han.lam_alpha},
                      {"csam_beta", c.han.csam_beta},
                      {"weights", c.han_weights ? json(c.han_weights->string()) : json(nullptr)}}}};
  j["detector"] = {
      {"kind", name_of(kDetectorNames, c.detector)},
      {"blob_threshold", c.blob.threshold},
      {"min_area", c.blob.min_area},
      {"use_altitude_fusion", c.use_altitude_fusion},
      {"toy_net", {{"input_size", c.toy_net.input_size},
                   {"head_channels", c.toy_net.head_channels},
                   {"fc_hidden", c.toy_net.fc_hidden},
                   {"conf_threshold", c.toy_net.conf_threshold},
                   {"altitude_normalizer", c.toy_net.altitude_normalizer},
                   {"anchor_w", c.toy_net.anchor_w},
                   {"anchor_h", c.toy_net.anchor_h},
                   {"weights", c.toy_net_weights ? json(c.toy_net_weights->string()) : json(nullptr)}}}};
  j["scale_prior"] = {{"enabled", c.scale_prior.enabled},
                      {"camera", camera_to_json(c.scale_prior.camera)},
                      {"animal_extent", c.scale_prior.animal_extent},
                      {"band", {c.scale_prior.band.lo, c.scale_prior.band.hi}}};
  j["merge_nms_iou"] = c.merge_nms_iou;
  j["eval"] = {{"iou_threshold", c.eval.iou_threshold},
               {"chebyshev_threshold", c.eval.chebyshev_threshold},
               {"conf_threshold", c.eval.conf_threshold},
               {"sweep_thresholds", c.sweep_thresholds}};
  j["method"] = c.method;
  j["seed"] = c.seed;
  j["max_abort_fraction"] = c.max_abort_fraction;
  return j;
}

PipelineConfig load_pipeline_config(const fs::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::kIo, "cannot open config " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorCode::kConfig, "malformed config " + path.string() + ": " + e.what());
  }
  return pipeline_config_from_json(doc, fs::absolute(path).parent_path());
}

std::string method_label(const PipelineConfig& cfg) {
  if (!cfg.method.empty()) return cfg.method;
  std::string m = cfg.detector == DetectorKind::kBlobOracle ? "Blob oracle" : "Toy detector";
  switch (cfg.sr_backend) {
    case SrBackend::kBicubic: m += " + Bicubic"; break;
    case SrBackend::kToyHan: m += " + Toy-HAN"; break;
    case SrBackend::kExternal: m += " + External SR"; break;
    case SrBackend::kNone: break;
  }
  if (cfg.detector == DetectorKind::kToyNet && cfg.use_altitude_fusion) m += " + Altitude-augmented";
  if (cfg.scale_prior.enabled) m += " + Scale prior";
  return m;
}

std::string operational_resolution(const PipelineConfig& cfg) {
  const int in = cfg.tile_size / std::max(cfg.degrade_factor, 1);
  const int scale = std::max(cfg.sr_scale, 1);
  if (scale == 1) return side(in);
  return side(in) + " → " + side(in * scale);
}

SuperResolver::SuperResolver(const PipelineConfig& cfg) : backend_(cfg.sr_backend), han_(cfg.han) {
  if (backend_ == SrBackend::kToyHan) {
    han_weights_ = cfg.han_weights ? WeightSet::load(*cfg.han_weights)
                                   : random_han_weights(cfg.han, cfg.seed);
    check_han_weights(han_, han_weights_);
  } else if (backend_ == SrBackend::kExternal) {
    external_ = std::make_shared<ExternalUpscaler>(cfg.adapter);
  }
}

ImageBuffer SuperResolver::upscale(const ImageBuffer& img, int r) const {
  switch (backend_) {
    case SrBackend::kNone: return img;
    case SrBackend::kBicubic: return resample_bicubic(img, img.width() * r, img.height() * r);
    case SrBackend::kToyHan: {
      HanConfig h = han_;
      h.scale = r;
      return han_forward(img, h, han_weights_);
    }
    case SrBackend::kExternal: return external_->upscale(img, r);
  }
  fail(ErrorCode::kInternal, "unhandled SR backend");
}

PatchDetector::PatchDetector(const PipelineConfig& cfg)
    : kind_(cfg.detector), blob_(cfg.blob), net_(cfg.toy_net), fuse_(cfg.use_altitude_fusion) {
  if (kind_ == DetectorKind::kToyNet)
    net_weights_ = cfg.toy_net_weights ? WeightSet::load(*cfg.toy_net_weights)
                                       : random_detector_weights(cfg.toy_net, cfg.seed + 1);
}

bool PatchDetector::needs_altitude() const { return kind_ == DetectorKind::kToyNet && fuse_; }

std::vector<Detection> PatchDetector::detect(const ImageBuffer& patch, double altitude_m) const {
  if (kind_ == DetectorKind::kBlobOracle)
    return blob_oracle_detect(patch, blob_.threshold, blob_.min_area);
  return toy_net_detect(patch, altitude_m, net_, net_weights_, fuse_);
}

double frame_altitude(const Frame& meta, const PipelineConfig& cfg, const PatchDetector& det) {
  const bool need_alt = det.needs_altitude() || cfg.scale_prior.enabled;
  require(!need_alt || meta.altitude.has_value(), ErrorCode::kData,
          "frame '" + meta.frame_id + "' has no altitude");
  return meta.altitude.value_or(0.0f);
}

std::vector<Detection> detect_tile(const ImageBuffer& tile, const TileOrigin& origin,
                                   double altitude_m, const PipelineConfig& cfg,
                                   const SuperResolver& sr, const PatchDetector& det) {
  require(tile.width() == cfg.tile_size && tile.height() == cfg.tile_size, ErrorCode::kData,
          "tile is " + std::to_string(tile.width()) + "x" + std::to_string(tile.height()) +
              ", expected " + std::to_string(cfg.tile_size));
  const ImageBuffer* patch = &tile;
  ImageBuffer work;
  if (cfg.degrade_factor > 1) {
    work = degrade_frame(*patch, cfg.degrade_factor);
    patch = &work;
  }
  if (cfg.sr_backend != SrBackend::kNone) {
    work = sr.upscale(*patch, cfg.sr_scale);
    patch = &work;
  }
  const double scale = static_cast<double>(patch->width()) / cfg.tile_size;
  return remap_detections(det.detect(*patch, altitude_m), origin, scale);
}

std::vector<Detection> finish_frame(std::vector<Detection> dets, const Frame& meta,
                                    const PipelineConfig& cfg) {
  auto merged = merge_frame_detections(std::move(dets), cfg.merge_nms_iou);
  if (cfg.scale_prior.enabled)
    merged = scale_prior_filter(merged, meta.altitude.value_or(0.0f),
                                meta.camera.value_or(cfg.scale_prior.camera),
                                cfg.scale_prior.animal_extent, cfg.scale_prior.band);
  return merged;
}

std::vector<Detection> detect_frame(const ImageBuffer& frame, const Frame& meta,
                                    const PipelineConfig& cfg, const SuperResolver& sr,
                                    const PatchDetector& det) {
  const double altitude = frame_altitude(meta, cfg, det);
  const TileGrid grid = plan_tiles(frame.width(), frame.height(), cfg.tile_size, cfg.overlap);
  std::vector<Detection> all;
  for (const auto& origin : grid.tiles) {
    const auto found =
        detect_tile(extract_tile(frame, origin, cfg.tile_size), origin, altitude, cfg, sr, det);
    all.insert(all.end(), found.begin(), found.end());
  }
  return finish_frame(std::move(all), meta, cfg);
}

void save_detections_csv(const fs::path& path, const std::vector<FrameDetections>& frames) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorCode::kIo, "cannot write " + path.string());
  out << "frame_id,x_min,y_min,x_max,y_max,confidence,class_id\n";
  for (const auto& f : frames)
    for (const auto& d : f.dets)
      out << f.frame_id << ',' << csv::format_double(d.box.x_min) << ','
          << csv::format_double(d.box.y_min) << ',' << csv::format_double(d.box.x_max) << ','
          << csv::format_double(d.box.y_max) << ',' << csv::format_double(d.confidence) << ','
          << d.class_id << '\n';
  require(static_cast<bool>(out), ErrorCode::kIo, "failed writing " + path.string());
}

std::vector<FrameDetections> load_detections_csv(const fs::path& path) {
  const auto t = csv::read_file(path);
  const std::string src = path.string();
  csv::require_columns(t, {"frame_id", "x_min", "y_min", "x_max", "y_max", "confidence", "class_id"},
                       src);
  const int c_id = t.column("frame_id");
  std::vector<FrameDetections> out;
  std::map<std::string, std::size_t> pos;
  for (const auto& row : t.rows) {
    require(static_cast<int>(row.fields.size()) > c_id, ErrorCode::kData,
            src + " line " + std::to_string(row.line) + ": too few fields");
    Detection d;
    d.box = {csv::to_double(row, t.column("x_min"), src), csv::to_double(row, t.column("y_min"), src),
             csv::to_double(row, t.column("x_max"), src), csv::to_double(row, t.column("y_max"), src)};
    d.confidence = csv::to_double(row, t.column("confidence"), src);
    d.class_id = static_cast<int>(csv::to_int(row, t.column("class_id"), src));
    require(d.box.valid(), ErrorCode::kData,
            src + " line " + std::to_string(row.line) + ": degenerate detection box");
    require(d.confidence >= 0 && d.confidence <= 1, ErrorCode::kData,
            src + " line " + std::to_string(row.line) + ": confidence outside [0, 1]");
    const std::string& id = row.fields[c_id];
    auto [it, inserted] = pos.emplace(id, out.size());
    if (inserted) out.push_back({id, {}});
    out[it->second].dets.push_back(d);
  }
  return out;
}

EvalSet select_frames(const PipelineConfig& cfg) {
  const Manifest m = load_manifest(cfg.manifest);
  require(!m.frames.empty(), ErrorCode::kData, "manifest lists no frames");
  const auto grouped = load_manifest_ground_truth(m);
  std::set<std::string> keep;
  if (cfg.subset != "all") {
    const auto split = split_dataset(m.frames, cfg.split_ratios, cfg.split_seed);
    const auto& ids = cfg.subset == "train" ? split.train : cfg.subset == "val" ? split.val : split.test;
    keep.insert(ids.begin(), ids.end());
  }
  EvalSet set;
  for (std::size_t i = 0; i < m.frames.size(); ++i) {
    if (cfg.subset != "all" && !keep.count(m.frames[i].frame_id)) continue;
    Frame f = m.frames[i];
    if (!f.camera && m.camera) f.camera = m.camera;
    set.frames.push_back(std::move(f));
    std::vector<Box> boxes;
    for (const auto& g : grouped[i]) boxes.push_back(g.box);
    set.gts.push_back(std::move(boxes));
  }
  return set;
}

EvalReport evaluate_frames(const std::vector<Frame>& frames, const std::vector<std::vector<Box>>& gts,
                           const std::vector<FrameDetections>& dets, const EvalConfig& eval,
                           const std::vector<double>& sweep_thresholds) {
  require(frames.size() == gts.size(), ErrorCode::kInternal, "frame/GT count mismatch");
  std::map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < frames.size(); ++i) pos[frames[i].frame_id] = i;
  std::vector<std::vector<Detection>> per_frame(frames.size());
  for (const auto& fd : dets) {
    const auto it = pos.find(fd.frame_id);
    require(it != pos.end(), ErrorCode::kData,
            "detections reference frame '" + fd.frame_id + "' which is not being evaluated");
    per_frame[it->second].insert(per_frame[it->second].end(), fd.dets.begin(), fd.dets.end());
  }

  EvalConfig iou_cfg = eval;
  iou_cfg.criterion = MatchCriterion::kIoU;
  EvalConfig che_cfg = eval;
  che_cfg.criterion = MatchCriterion::kChebyshev;
  const Evaluation ei = evaluate(per_frame, gts, iou_cfg);
  const Evaluation ec = evaluate(per_frame, gts, che_cfg);

  EvalReport r;
  r.eval = eval;
  r.iou = ei.result;
  r.chebyshev = ec.result;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    FrameReport fr;
    fr.frame_id = frames[i].frame_id;
    fr.gt = static_cast<int>(gts[i].size());
    fr.detections = static_cast<int>(std::count_if(per_frame[i].begin(), per_frame[i].end(),
        [&](const Detection& d) { return d.confidence >= eval.conf_threshold; }));
    fr.iou = ei.per_frame[i];
    fr.chebyshev = ec.per_frame[i];
    r.gt_count += fr.gt;
    r.detection_count += fr.detections;
    r.frames.push_back(std::move(fr));
  }
  if (!sweep_thresholds.empty()) r.sweep = map_sweep(per_frame, gts, sweep_thresholds, eval);
  r.notes = {
      "Single class: mAP equals AP.",
      "AP is the all-point interpolated area under the precision envelope.",
      "Matching is one-to-one: detections in descending confidence claim the best passing "
      "unmatched ground truth, re-routing earlier claims when that adds a true positive.",
      "Chebyshev distances are center-to-center in original frame pixels; accepted when <= "
      "threshold.",
  };
  return r;
}

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(std::max(threads, 1), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < workers; ++t)
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < n;) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

RunResult run_pipeline(const PipelineConfig& input) {
  PipelineConfig cfg = input;
  resolve(cfg);
  const EvalSet set = select_frames(cfg);
  const SuperResolver sr(cfg);
  const PatchDetector det(cfg);

  const std::size_t n = set.frames.size();
  std::vector<FrameDetections> outcome(n);
  std::vector<std::string> diagnostics(n);
  auto work = [&](std::size_t i) {
    const Frame& f = set.frames[i];
    outcome[i].frame_id = f.frame_id;
    try {
      const ImageBuffer img = load_image(f.image_path);
      outcome[i].dets = detect_frame(img, f, cfg, sr, det);
    } catch (const std::exception& e) {
      outcome[i].dets.clear();
      diagnostics[i] = e.what();
    }
  };

  parallel_for(n, cfg.threads, work);

  RunResult res;
  res.report = evaluate_frames(set.frames, set.gts, outcome, cfg.eval, cfg.sweep_thresholds);
  res.report.method = method_label(cfg);
  res.report.operational_resolution = operational_resolution(cfg);
  res.report.config = to_json(cfg);
  for (std::size_t i = 0; i < n; ++i) {
    if (diagnostics[i].empty()) continue;
    res.report.frames[i].aborted = true;
    res.report.frames[i].diagnostic = diagnostics[i];
    ++res.report.aborted_frames;
  }
  if (res.report.aborted_frames > 0)
    res.report.notes.push_back("Aborted frames contribute no detections; their ground truth "
                               "counts as missed.");
  res.failed = n > 0 && static_cast<double>(res.report.aborted_frames) / n > cfg.max_abort_fraction;
  res.detections = std::move(outcome);
  return res;
}

TileIndex write_tiles(const PipelineConfig& input, const fs::path& out_dir) {
  PipelineConfig cfg = input;
  resolve(cfg);
  const EvalSet set = select_frames(cfg);
  const fs::path tile_dir = out_dir / "tiles";
  std::error_code ec;
  fs::create_directories(tile_dir, ec);
  require(!ec, ErrorCode::kIo, "cannot create " + tile_dir.string() + ": " + ec.message());

  TileIndex index;
  index.tile_size = cfg.tile_size;
  index.overlap = cfg.overlap;
  std::vector<std::vector<TileEntry>> per_frame(set.frames.size());
  parallel_for(set.frames.size(), cfg.threads, [&](std::size_t i) {
    const Frame& f = set.frames[i];
    const ImageBuffer img = load_image(f.image_path);
    const TileGrid grid = plan_tiles(img.width(), img.height(), cfg.tile_size, cfg.overlap);
    for (const auto& o : grid.tiles) {
      const fs::path p = tile_dir / (f.frame_id + "_" + std::to_string(o.x) + "_" +
                                     std::to_string(o.y) + ".ppm");
      save_image(extract_tile(img, o, cfg.tile_size), p);
      per_frame[i].push_back({f.frame_id, o, p});
    }
  });
  json tiles = json::array();
  for (std::size_t i = 0; i < set.frames.size(); ++i) {
    index.frames.push_back(set.frames[i].frame_id);
    for (auto& t : per_frame[i]) {
      tiles.push_back({{"frame_id", t.frame_id},
                       {"x", t.origin.x},
                       {"y", t.origin.y},
                       {"path", fs::relative(t.path, out_dir).string()}});
      index.tiles.push_back(std::move(t));
    }
  }
  const json doc = {{"tile_size", index.tile_size},
                    {"overlap", index.overlap},
                    {"frames", index.frames},
                    {"tiles", tiles}};
  std::ofstream out(out_dir / "tiles.json", std::ios::trunc);
  require(static_cast<bool>(out), ErrorCode::kIo, "cannot write " + (out_dir / "tiles.json").string());
  out << doc.dump(2) << "\n";
  return index;
}

TileIndex load_tile_index(const fs::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::kIo, "cannot open tile index " + path.string());
  TileIndex index;
  try {
    const json doc = json::parse(in);
    index.tile_size = doc.at("tile_size").get<int>();
    index.overlap = doc.at("overlap").get<int>();
    index.frames = doc.at("frames").get<std::vector<std::string>>();
    const fs::path base = fs::absolute(path).parent_path();
    for (const auto& t : doc.at("tiles"))
      index.tiles.push_back({t.at("frame_id").get<std::string>(),
                             {t.at("x").get<int>(), t.at("y").get<int>()},
                             resolve_path(base, t.at("path").get<std::string>())});
  } catch (const json::exception& e) {
    fail(ErrorCode::kData, "malformed tile index " + path.string() + ": " + e.what());
  }
  return index;
}

std::vector<FrameDetections> detect_tiles(const PipelineConfig& input, const TileIndex& index) {
  PipelineConfig cfg = input;
  resolve(cfg);
  require(index.tile_size == cfg.tile_size, ErrorCode::kConfig,
          "tile index was written with tile_size " + std::to_string(index.tile_size));
  const EvalSet set = select_frames(cfg);
  std::map<std::string, const Frame*> meta;
  for (const auto& f : set.frames) meta[f.frame_id] = &f;
  const SuperResolver sr(cfg);
  const PatchDetector det(cfg);

  std::vector<FrameDetections> out(index.frames.size());
  std::map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < index.frames.size(); ++i) {
    out[i].frame_id = index.frames[i];
    pos[index.frames[i]] = i;
    require(meta.count(index.frames[i]), ErrorCode::kData,
            "tile index frame '" + index.frames[i] + "' is not in the configured frame set");
  }
  std::vector<std::vector<const TileEntry*>> tiles(out.size());
  for (const auto& t : index.tiles) {
    const auto it = pos.find(t.frame_id);
    require(it != pos.end(), ErrorCode::kData, "tile for unlisted frame '" + t.frame_id + "'");
    tiles[it->second].push_back(&t);
  }
  parallel_for(out.size(), cfg.threads, [&](std::size_t i) {
    const Frame& f = *meta.at(out[i].frame_id);
    const double altitude = frame_altitude(f, cfg, det);
    std::vector<Detection> all;
    for (const TileEntry* t : tiles[i]) {
      const auto found = detect_tile(load_image(t->path), t->origin, altitude, cfg, sr, det);
      all.insert(all.end(), found.begin(), found.end());
    }
    out[i].dets = finish_frame(std::move(all), f, cfg);
  });
  return out;
}

}  // namespace herdscope
