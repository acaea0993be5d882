#include "herdscope/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "herdscope/csv.hpp"
#include "herdscope/error.hpp"

namespace herdscope {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json criterion_json(const CriterionResult& c) {
  json pr = json::array();
  for (const auto& p : c.pr) pr.push_back({p.recall, p.precision});
  return {{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}, {"map", c.ap}, {"pr", pr}};
}

CriterionResult criterion_from_json(const json& j) {
  CriterionResult c;
  c.tp = j.at("tp").get<int>();
  c.fp = j.at("fp").get<int>();
  c.fn = j.at("fn").get<int>();
  c.ap = j.at("map").get<double>();
  for (const auto& p : j.at("pr")) c.pr.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
  return c;
}

json counts_json(const FrameCounts& c) { return {{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}}; }

FrameCounts counts_from_json(const json& j) {
  return {j.at("tp").get<int>(), j.at("fp").get<int>(), j.at("fn").get<int>()};
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string csv_field(const std::string& s) {
  std::string out = s;
  std::replace(out.begin(), out.end(), ',', ';');
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorCode::kIo, "cannot write " + path.string());
  out << text;
  require(static_cast<bool>(out), ErrorCode::kIo, "failed writing " + path.string());
}

bool any_sweep(const std::vector<EvalReport>& reports) {
  return std::any_of(reports.begin(), reports.end(),
                     [](const EvalReport& r) { return !r.sweep.empty(); });
}

}  // namespace

json to_json(const EvalReport& r) {
  json j;
  j["method"] = r.method;
  j["operational_resolution"] = r.operational_resolution;
  j["config"] = r.config;
  j["eval"] = {{"iou_threshold", r.eval.iou_threshold},
               {"chebyshev_threshold", r.eval.chebyshev_threshold},
               {"conf_threshold", r.eval.conf_threshold}};
  j["gt_count"] = r.gt_count;
  j["detection_count"] = r.detection_count;
  j["metrics"] = {{"iou", criterion_json(r.iou)}, {"chebyshev", criterion_json(r.chebyshev)}};
  json frames = json::array();
  for (const auto& f : r.frames) {
    json fj = {{"frame_id", f.frame_id},
               {"gt", f.gt},
               {"detections", f.detections},
               {"iou", counts_json(f.iou)},
               {"chebyshev", counts_json(f.chebyshev)},
               {"aborted", f.aborted}};
    if (f.aborted) fj["diagnostic"] = f.diagnostic;
    frames.push_back(std::move(fj));
  }
  j["frames"] = std::move(frames);
  json sweep = json::array();
  for (const auto& s : r.sweep) sweep.push_back({{"iou_threshold", s.threshold}, {"map", s.map}});
  j["sweep"] = std::move(sweep);
  j["aborted_frames"] = r.aborted_frames;
  j["notes"] = r.notes;
  return j;
}

EvalReport report_from_json(const json& j) {
  EvalReport r;
  try {
    r.method = j.value("method", "");
    r.operational_resolution = j.value("operational_resolution", "");
    if (j.contains("config")) r.config = j["config"];
    const auto& e = j.at("eval");
    r.eval.iou_threshold = e.at("iou_threshold").get<double>();
    r.eval.chebyshev_threshold = e.at("chebyshev_threshold").get<double>();
    r.eval.conf_threshold = e.at("conf_threshold").get<double>();
    r.gt_count = j.at("gt_count").get<int>();
    r.detection_count = j.at("detection_count").get<int>();
    r.iou = criterion_from_json(j.at("metrics").at("iou"));
    r.chebyshev = criterion_from_json(j.at("metrics").at("chebyshev"));
    for (const auto& f : j.at("frames")) {
      FrameReport fr;
      fr.frame_id = f.at("frame_id").get<std::string>();
      fr.gt = f.at("gt").get<int>();
      fr.detections = f.at("detections").get<int>();
      fr.iou = counts_from_json(f.at("iou"));
      fr.chebyshev = counts_from_json(f.at("chebyshev"));
      fr.aborted = f.value("aborted", false);
      fr.diagnostic = f.value("diagnostic", "");
      r.frames.push_back(std::move(fr));
    }
    for (const auto& s : j.at("sweep"))
      r.sweep.push_back({s.at("iou_threshold").get<double>(), s.at("map").get<double>()});
    r.aborted_frames = j.value("aborted_frames", 0);
    if (j.contains("notes")) r.notes = j["notes"].get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    fail(ErrorCode::kData, std::string("malformed report: ") + e.what());
  }
  return r;
}

EvalReport load_report(const fs::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::kIo, "cannot open report " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorCode::kData, "malformed report " + path.string() + ": " + e.what());
  }
  return report_from_json(j);
}

std::string markdown_table(const std::vector<EvalReport>& reports) {
  std::ostringstream out;
  out << "| Method | Operational Resolution | mAP(IoU) | mAP(Che) |\n";
  out << "|---|---|---|---|\n";
  for (const auto& r : reports)
    out << "| " << r.method << " | " << r.operational_resolution << " | " << fixed(r.iou.ap, 4)
        << " | " << fixed(r.chebyshev.ap, 4) << " |\n";
  return out.str();
}

std::string pr_curve_csv(const EvalReport& r) {
  std::ostringstream out;
  out << "criterion,rank,recall,precision\n";
  auto emit = [&](const char* name, const CriterionResult& c) {
    for (std::size_t i = 0; i < c.pr.size(); ++i)
      out << name << ',' << i + 1 << ',' << csv::format_double(c.pr[i].recall) << ','
          << csv::format_double(c.pr[i].precision) << '\n';
  };
  emit("iou", r.iou);
  emit("chebyshev", r.chebyshev);
  return out.str();
}

std::string sweep_csv(const std::vector<EvalReport>& reports) {
  std::ostringstream out;
  out << "method,iou_threshold,map\n";
  for (const auto& r : reports)
    for (const auto& s : r.sweep)
      out << csv_field(r.method) << ',' << csv::format_double(s.threshold) << ','
          << csv::format_double(s.map) << '\n';
  return out.str();
}

std::string sweep_svg(const std::vector<EvalReport>& reports) {
  if (!any_sweep(reports)) return {};
  const double w = 640, h = 420, left = 60, right = 200, top = 30, bottom = 50;
  const double pw = w - left - right, ph = h - top - bottom;
  double tmin = 1, tmax = 0;
  for (const auto& r : reports)
    for (const auto& s : r.sweep) {
      tmin = std::min(tmin, s.threshold);
      tmax = std::max(tmax, s.threshold);
    }
  if (tmax <= tmin) {
    tmin -= 0.05;
    tmax += 0.05;
  }
  auto px = [&](double t) { return left + (t - tmin) / (tmax - tmin) * pw; };
  auto py = [&](double m) { return top + (1.0 - m) * ph; };

  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                  "#9467bd", "#8c564b", "#e377c2", "#17becf"};
  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<line x1=\"" << left << "\" y1=\"" << top + ph << "\" x2=\"" << left + pw << "\" y2=\""
      << top + ph << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + ph
      << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double m = i / 5.0;
    out << "<text x=\"" << left - 8 << "\" y=\"" << fixed(py(m) + 4, 1)
        << "\" text-anchor=\"end\">" << fixed(m, 1) << "</text>\n";
  }
  for (int i = 0; i <= 4; ++i) {
    const double t = tmin + (tmax - tmin) * i / 4.0;
    out << "<text x=\"" << fixed(px(t), 1) << "\" y=\"" << top + ph + 18
        << "\" text-anchor=\"middle\">" << fixed(t, 2) << "</text>\n";
  }
  out << "<text x=\"" << left + pw / 2 << "\" y=\"" << h - 10
      << "\" text-anchor=\"middle\">IoU threshold</text>\n";
  out << "<text x=\"15\" y=\"" << top + ph / 2 << "\" transform=\"rotate(-90 15 " << top + ph / 2
      << ")\" text-anchor=\"middle\">mAP</text>\n";
  int series = 0;
  for (const auto& r : reports) {
    if (r.sweep.empty()) continue;
    const char* color = kColors[series % 8];
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (const auto& s : r.sweep) out << fixed(px(s.threshold), 2) << ',' << fixed(py(s.map), 2) << ' ';
    out << "\"/>\n";
    for (const auto& s : r.sweep)
      out << "<circle cx=\"" << fixed(px(s.threshold), 2) << "\" cy=\"" << fixed(py(s.map), 2)
          << "\" r=\"3\" fill=\"" << color << "\"/>\n";
    const double ly = top + 10 + 18 * series;
    out << "<line x1=\"" << left + pw + 15 << "\" y1=\"" << ly << "\" x2=\"" << left + pw + 35
        << "\" y2=\"" << ly << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    out << "<text x=\"" << left + pw + 40 << "\" y=\"" << ly + 4 << "\">"
        << xml_escape(r.method.empty() ? "run " + std::to_string(series + 1) : r.method)
        << "</text>\n";
    ++series;
  }
  out << "</svg>\n";
  return out.str();
}

std::vector<fs::path> emit_report(const std::vector<EvalReport>& reports, const fs::path& out_dir,
                                  const std::set<std::string>& formats) {
  require(!reports.empty(), ErrorCode::kInvalidArgument, "no reports to emit");
  for (const auto& f : formats)
    require(f == "json" || f == "markdown" || f == "csv" || f == "svg", ErrorCode::kConfig,
            "unknown report format '" + f + "'");
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  require(!ec, ErrorCode::kIo, "cannot create " + out_dir.string() + ": " + ec.message());

  std::vector<fs::path> written;
  const bool sweep = any_sweep(reports);
  if (formats.count("json")) {
    json doc;
    if (reports.size() == 1) {
      doc = to_json(reports.front());
    } else {
      doc = {{"reports", json::array()}};
      for (const auto& r : reports) doc["reports"].push_back(to_json(r));
    }
    if (formats.count("svg") && !sweep) doc["plot_note"] = "no sweep data; mAP plot not produced";
    const auto p = out_dir / "report.json";
    write_text(p, doc.dump(2) + "\n");
    written.push_back(p);
  }
  if (formats.count("markdown")) {
    const auto p = out_dir / "report.md";
    write_text(p, markdown_table(reports));
    written.push_back(p);
  }
  if (formats.count("csv")) {
    for (std::size_t i = 0; i < reports.size(); ++i) {
      const auto p = out_dir / (reports.size() == 1 ? std::string("pr_curve.csv")
                                                     : "pr_curve_" + std::to_string(i + 1) + ".csv");
      write_text(p, pr_curve_csv(reports[i]));
      written.push_back(p);
    }
    if (sweep) {
      const auto p = out_dir / "sweep.csv";
      write_text(p, sweep_csv(reports));
      written.push_back(p);
    }
  }
  if (formats.count("svg") && sweep) {
    const auto p = out_dir / "sweep.svg";
    write_text(p, sweep_svg(reports));
    written.push_back(p);
  }
  return written;
}

}  // namespace herdscope
