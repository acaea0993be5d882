#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "herdscope/herdscope.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum Exit { kOk = 0, kInternal = 1, kConfig = 2, kData = 3, kStage = 4 };

int exit_code(hs_status s) {
  switch (s) {
    case HS_OK: return kOk;
    case HS_ERR_INVALID_ARGUMENT:
    case HS_ERR_CONFIG: return kConfig;
    case HS_ERR_DATA:
    case HS_ERR_IO: return kData;
    case HS_ERR_STAGE_FAILURE:
    case HS_ERR_ADAPTER:
    case HS_ERR_NUMERIC: return kStage;
    case HS_ERR_INTERNAL: return kInternal;
  }
  return kInternal;
}

// Thrown to leave a subcommand with a specific exit code.
struct Exit_ {
  int code;
};

void check(hs_status s, const std::string& context) {
  if (s == HS_OK) return;
  std::cerr << "herdscope " << context << ": " << hs_status_name(s) << ": " << hs_last_error()
            << "\n";
  throw Exit_{exit_code(s)};
}

[[noreturn]] void usage_error(const std::string& msg) {
  std::cerr << "herdscope: " << msg << "\n";
  throw Exit_{kConfig};
}

// Owns a malloc'd string from the C API.
struct CString {
  char* p = nullptr;
  ~CString() { hs_string_free(p); }
  std::string str() const { return p ? p : ""; }
};

struct ImageHandle {
  hs_image* p = nullptr;
  ~ImageHandle() { hs_image_free(p); }
};

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    std::cerr << "herdscope: cannot write " << path << "\n";
    throw Exit_{kData};
  }
  out << text;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    std::cerr << "herdscope: cannot read " << path << "\n";
    throw Exit_{kData};
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) {
    std::cerr << "herdscope: cannot create " << dir << ": " << ec.message() << "\n";
    throw Exit_{kData};
  }
}

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  int threads = 1;

  const char* config_path() const {
    if (config.empty()) usage_error("--config is required");
    return config.c_str();
  }
  const std::string& out_dir() const {
    if (out.empty()) usage_error("--out is required");
    return out;
  }
  std::string overrides() const {
    json o = {{"threads", threads}};
    if (seed) o["seed"] = *seed;
    return o.dump();
  }
};

void print_summary(const std::string& report_text) {
  const json r = json::parse(report_text);
  const auto& m = r.at("metrics");
  std::printf("%s | %s | mAP(IoU)=%.4f | mAP(Che)=%.4f | GT=%d | detections=%d | aborted=%d\n",
              r.value("method", "").c_str(), r.value("operational_resolution", "").c_str(),
              m.at("iou").at("map").get<double>(), m.at("chebyshev").at("map").get<double>(),
              r.at("gt_count").get<int>(), r.at("detection_count").get<int>(),
              r.value("aborted_frames", 0));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"herdscope: tiled aerial animal detection with super-resolution and evaluation"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", std::string(hs_version()));

  Globals g;
  app.add_option("--config", g.config, "Pipeline config JSON (or a report to reproduce)");
  app.add_option_function<std::uint64_t>("--seed", [&](std::uint64_t s) { g.seed = s; },
                                         "Seed override");
  app.add_option("--out", g.out, "Output directory (output image for degrade/upscale)");
  app.add_option("--threads", g.threads, "Frame-level worker threads")->check(CLI::PositiveNumber);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  std::string preset = "savmap-like";
  int frames = 10;
  std::optional<int> width, height, animals;
  std::optional<double> altitude;
  synth->add_option("--preset", preset, "savmap-like or aed-like")->capture_default_str();
  synth->add_option("--frames", frames, "Number of frames")->capture_default_str();
  synth->add_option_function<int>("--width", [&](int v) { width = v; }, "Frame width");
  synth->add_option_function<int>("--height", [&](int v) { height = v; }, "Frame height");
  synth->add_option_function<int>("--animals", [&](int v) { animals = v; }, "Animals per frame");
  synth->add_option_function<double>("--altitude", [&](double v) { altitude = v; }, "Altitude (m)");

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Build a manifest from images and CSVs");
  std::string images, annotations, ann_format = "boxes", altitude_csv;
  int box_size = 100;
  std::optional<double> focal, pitch;
  ingest->add_option("--images", images, "Directory of .ppm/.pgm frames")->required();
  ingest->add_option("--annotations", annotations, "Annotation CSV");
  ingest->add_option("--format", ann_format, "boxes or centers")->capture_default_str();
  ingest->add_option("--box-size", box_size, "Box size for centers")->capture_default_str();
  ingest->add_option("--altitude", altitude_csv, "frame_id,altitude_m CSV");
  ingest->add_option_function<double>("--focal", [&](double v) { focal = v; }, "Focal length (m)");
  ingest->add_option_function<double>("--pitch", [&](double v) { pitch = v; }, "Pixel pitch (m)");

  auto* tile = app.add_subcommand("tile", "Cut the configured frames into tiles");

  // degrade / upscale
  std::string in_path;
  int factor = 2, scale = 2;
  std::string backend = "bicubic", weights;
  auto* degrade = app.add_subcommand("degrade", "Shrink an image by 2, 4 or 8");
  degrade->add_option("--in", in_path, "Input image")->required();
  degrade->add_option("--factor", factor, "Factor")->capture_default_str();
  auto* upscale = app.add_subcommand("upscale", "Super-resolve an image");
  upscale->add_option("--in", in_path, "Input image")->required();
  upscale->add_option("--scale", scale, "Scale factor")->capture_default_str();
  upscale->add_option("--backend", backend, "bicubic, toy-han or external")->capture_default_str();
  upscale->add_option("--weights", weights, "Toy-HAN weight manifest");

  // detect / eval / sweep / run
  std::string tiles_index, detections;
  auto* detect = app.add_subcommand("detect", "Detect animals, writing detections.csv");
  detect->add_option("--tiles", tiles_index, "tiles.json from the tile subcommand");
  auto* eval = app.add_subcommand("eval", "Evaluate detections against ground truth");
  eval->add_option("--detections", detections, "Detections CSV")->required();
  auto* sweep = app.add_subcommand("sweep", "mAP over a range of IoU thresholds");
  std::vector<double> thresholds;
  sweep->add_option("--detections", detections, "Detections CSV")->required();
  sweep->add_option("--thresholds", thresholds, "IoU thresholds (default 0.1..0.9)")->delimiter(',');
  auto* run = app.add_subcommand("run", "Full pipeline: tile, degrade, SR, detect, merge, eval");

  // report
  std::vector<std::string> inputs;
  std::string formats = "json,markdown,csv,svg";
  auto* report = app.add_subcommand("report", "Emit tables, plots and CSV from reports");
  report->add_option("--inputs", inputs, "report.json files")->required();
  report->add_option("--formats", formats, "Comma list of json, markdown, csv, svg")
      ->capture_default_str();

  auto* grad = app.add_subcommand("grad-check", "Finite-difference check of the fusion layers");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kConfig;
  }

  try {
    if (*synth) {
      json o = json::object();
      if (width) o["frame_w"] = *width;
      if (height) o["frame_h"] = *height;
      if (animals) o["n_animals"] = *animals;
      if (altitude) o["altitude"] = *altitude;
      CString summary;
      check(hs_synth(preset.c_str(), frames, g.seed.value_or(0), o.dump().c_str(),
                     g.out_dir().c_str(), &summary.p),
            "synth");
      std::cout << summary.str() << "\n";
    } else if (*ingest) {
      json req = {{"images", images}, {"format", ann_format}, {"box_size", box_size}};
      if (!annotations.empty()) req["annotations"] = annotations;
      if (!altitude_csv.empty()) req["altitude"] = altitude_csv;
      if (focal || pitch) {
        if (!focal || !pitch) usage_error("--focal and --pitch go together");
        req["camera"] = {{"focal_length", *focal}, {"pixel_pitch", *pitch}};
      }
      make_dir(g.out_dir());
      CString summary;
      check(hs_ingest(req.dump().c_str(), (fs::path(g.out) / "manifest.json").c_str(), &summary.p),
            "ingest");
      std::cout << summary.str() << "\n";
    } else if (*tile) {
      CString summary;
      check(hs_tile(g.config_path(), g.overrides().c_str(), g.out_dir().c_str(), &summary.p), "tile");
      std::cout << summary.str() << "\n";
    } else if (*degrade) {
      ImageHandle src, dst;
      check(hs_image_load(in_path.c_str(), &src.p), "degrade");
      check(hs_degrade(src.p, factor, &dst.p), "degrade");
      check(hs_image_save(dst.p, g.out_dir().c_str()), "degrade");
    } else if (*upscale) {
      json sr = json::object();
      if (!g.config.empty()) {
        const json doc = json::parse(read_file(g.config));
        const json& cfg = doc.contains("config") ? doc["config"] : doc;
        if (cfg.contains("sr")) sr = cfg["sr"];
      }
      if (upscale->count("--backend") || !sr.contains("backend")) sr["backend"] = backend;
      if (!weights.empty()) sr["han"]["weights"] = fs::absolute(weights).string();
      const std::string base =
          g.config.empty() ? fs::current_path().string() : fs::absolute(g.config).parent_path().string();
      ImageHandle src, dst;
      check(hs_image_load(in_path.c_str(), &src.p), "upscale");
      check(hs_upscale(src.p, scale, sr.dump().c_str(), base.c_str(), g.seed.value_or(0), &dst.p),
            "upscale");
      check(hs_image_save(dst.p, g.out_dir().c_str()), "upscale");
    } else if (*detect) {
      make_dir(g.out_dir());
      CString summary;
      check(hs_detect(g.config_path(), g.overrides().c_str(),
                      tiles_index.empty() ? nullptr : tiles_index.c_str(),
                      (fs::path(g.out) / "detections.csv").c_str(), &summary.p),
            "detect");
      std::cout << summary.str() << "\n";
    } else if (*eval || *sweep) {
      json o = json::parse(g.overrides());
      if (*sweep && !thresholds.empty()) o["eval"]["sweep_thresholds"] = thresholds;
      CString text;
      check(hs_evaluate(g.config_path(), o.dump().c_str(), detections.c_str(), &text.p),
            *eval ? "eval" : "sweep");
      make_dir(g.out_dir());
      write_file(fs::path(g.out) / "report.json", text.str());
      if (*sweep) {
        CString written;
        check(hs_emit_report(text.p, g.out.c_str(), "csv,svg", &written.p), "sweep");
      }
      print_summary(text.str());
    } else if (*run) {
      CString text;
      int failed = 0;
      check(hs_run(g.config_path(), g.overrides().c_str(), g.out_dir().c_str(), &text.p, &failed),
            "run");
      print_summary(text.str());
      if (failed) {
        std::cerr << "herdscope run: too many frames aborted; see report.json diagnostics\n";
        return kStage;
      }
    } else if (*report) {
      json docs = json::array();
      for (const auto& p : inputs) {
        json d;
        try {
          d = json::parse(read_file(p));
        } catch (const json::exception& e) {
          std::cerr << "herdscope report: malformed " << p << ": " << e.what() << "\n";
          return kData;
        }
        if (d.contains("reports"))
          for (auto& r : d["reports"]) docs.push_back(r);
        else
          docs.push_back(d);
      }
      CString written;
      check(hs_emit_report(docs.dump().c_str(), g.out_dir().c_str(), formats.c_str(), &written.p),
            "report");
      for (const auto& p : json::parse(written.str())) std::cout << p.get<std::string>() << "\n";
    } else if (*grad) {
      CString result;
      check(hs_grad_check(g.seed.value_or(0), &result.p), "grad-check");
      std::cout << result.str() << "\n";
      if (!json::parse(result.str()).at("passed").get<bool>()) return kStage;
    }
  } catch (const Exit_& e) {
    return e.code;
  }
  return kOk;
}
