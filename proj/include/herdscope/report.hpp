#pragma once

#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "herdscope/metrics.hpp"

namespace herdscope {

struct FrameReport {
  std::string frame_id;
  int gt = 0;
  int detections = 0;  // after the confidence filter
  FrameCounts iou;
  FrameCounts chebyshev;
  bool aborted = false;
  std::string diagnostic;
};

struct EvalReport {
  std::string method;
  std::string operational_resolution;
  nlohmann::json config;  // resolved pipeline config, null when not from `run`
  EvalConfig eval;
  int gt_count = 0;
  int detection_count = 0;
  CriterionResult iou;
  CriterionResult chebyshev;
  std::vector<FrameReport> frames;
  std::vector<SweepPoint> sweep;
  int aborted_frames = 0;
  std::vector<std::string> notes;
};

nlohmann::json to_json(const EvalReport& r);
EvalReport report_from_json(const nlohmann::json& j);
EvalReport load_report(const std::filesystem::path& path);

// "Method | Operational Resolution | mAP(IoU) | mAP(Che)" table.
std::string markdown_table(const std::vector<EvalReport>& reports);
std::string pr_curve_csv(const EvalReport& r);
std::string sweep_csv(const std::vector<EvalReport>& reports);
// Line plot of mAP against IoU threshold, one series per report. Empty when
// no report carries a sweep.
std::string sweep_svg(const std::vector<EvalReport>& reports);

// formats: any of "json", "markdown", "csv", "svg". Returns written files.
// When no sweep exists the SVG is skipped and the JSON says so.
std::vector<std::filesystem::path> emit_report(const std::vector<EvalReport>& reports,
                                               const std::filesystem::path& out_dir,
                                               const std::set<std::string>& formats);

}  // namespace herdscope
