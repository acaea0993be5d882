#include "herdscope/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "herdscope/csv.hpp"
#include "herdscope/error.hpp"
#include "herdscope/rng.hpp"

namespace herdscope {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

// Collects row-level problems so a bad file is reported in one pass.
class Problems {
 public:
  explicit Problems(std::string source) : source_(std::move(source)) {}
  void add(const csv::Row& row, const std::string& msg) {
    lines_.push_back(source_ + " line " + std::to_string(row.line) + ": " + msg);
  }
  void add(const std::string& msg) { lines_.push_back(source_ + ": " + msg); }
  void raise_if_any() const {
    if (lines_.empty()) return;
    std::string msg = std::to_string(lines_.size()) + " annotation error(s)";
    for (const auto& l : lines_) msg += "\n  " + l;
    fail(ErrorCode::kData, msg);
  }

 private:
  std::string source_;
  std::vector<std::string> lines_;
};

// Applies the frame index to a parsed box: unknown ids and boxes that vanish
// after clamping are problems.
bool finish_box(GroundTruthBox& gt, const FrameIndex* index, const csv::Row& row,
                Problems& problems) {
  if (!gt.box.valid()) {
    problems.add(row, "box has non-positive extent (x_max <= x_min or y_max <= y_min)");
    return false;
  }
  if (!index) return true;
  const auto it = index->find(gt.frame_id);
  if (it == index->end()) {
    problems.add(row, "unknown frame_id '" + gt.frame_id + "'");
    return false;
  }
  const auto [w, h] = it->second;
  if (w > 0 && h > 0) {
    gt.box.x_min = std::clamp(gt.box.x_min, 0.0, static_cast<double>(w));
    gt.box.x_max = std::clamp(gt.box.x_max, 0.0, static_cast<double>(w));
    gt.box.y_min = std::clamp(gt.box.y_min, 0.0, static_cast<double>(h));
    gt.box.y_max = std::clamp(gt.box.y_max, 0.0, static_cast<double>(h));
    if (!gt.box.valid()) {
      problems.add(row, "box lies entirely outside frame '" + gt.frame_id + "'");
      return false;
    }
  }
  return true;
}

fs::path resolve(const fs::path& base_dir, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : (base_dir / path).lexically_normal();
}

std::string relative_to(const fs::path& p, const fs::path& base_dir) {
  const fs::path rel = fs::absolute(p).lexically_normal().lexically_relative(
      fs::absolute(base_dir).lexically_normal());
  return rel.empty() ? p.generic_string() : rel.generic_string();
}

}  // namespace

FrameIndex make_frame_index(const std::vector<Frame>& frames) {
  FrameIndex idx;
  for (const auto& f : frames) idx[f.frame_id] = {f.width, f.height};
  return idx;
}

std::vector<GroundTruthBox> load_annotations_boxes(const fs::path& path,
                                                   const FrameIndex* index) {
  const auto table = csv::read_file(path);
  const std::string src = path.string();
  csv::require_columns(table, {"frame_id", "x_min", "y_min", "x_max", "y_max", "class_id"},
                       src);
  const int c_id = table.column("frame_id");
  const int c_x0 = table.column("x_min");
  const int c_y0 = table.column("y_min");
  const int c_x1 = table.column("x_max");
  const int c_y1 = table.column("y_max");
  const int c_cls = table.column("class_id");

  Problems problems(src);
  std::vector<GroundTruthBox> out;
  for (const auto& row : table.rows) {
    try {
      require(row.fields.size() == table.header.size(), ErrorCode::kData,
              "expected " + std::to_string(table.header.size()) + " fields, got " +
                  std::to_string(row.fields.size()));
      GroundTruthBox gt;
      gt.frame_id = row.fields[c_id];
      require(!gt.frame_id.empty(), ErrorCode::kData, "empty frame_id");
      gt.box = {csv::to_double(row, c_x0, src), csv::to_double(row, c_y0, src),
                csv::to_double(row, c_x1, src), csv::to_double(row, c_y1, src)};
      gt.class_id = static_cast<int>(csv::to_int(row, c_cls, src));
      if (finish_box(gt, index, row, problems)) out.push_back(std::move(gt));
    } catch (const Error& e) {
      problems.add(row, e.what());
    }
  }
  problems.raise_if_any();
  return out;
}

Box expand_center(double cx, double cy, int box_size) {
  require(box_size > 0, ErrorCode::kInvalidArgument, "box_size must be positive");
  const int before = box_size / 2;
  const int after = box_size - before;
  return {cx - before, cy - before, cx + after, cy + after};
}

std::pair<double, double> center_of_expanded(const Box& box, int box_size) {
  const int before = box_size / 2;
  return {box.x_min + before, box.y_min + before};
}

std::vector<GroundTruthBox> load_annotations_centers(const fs::path& path, int box_size,
                                                     const FrameIndex* index) {
  require(box_size > 0, ErrorCode::kInvalidArgument, "box_size must be positive");
  const auto table = csv::read_file(path);
  const std::string src = path.string();
  csv::require_columns(table, {"frame_id", "cx", "cy", "class_id"}, src);
  const int c_id = table.column("frame_id");
  const int c_cx = table.column("cx");
  const int c_cy = table.column("cy");
  const int c_cls = table.column("class_id");

  Problems problems(src);
  std::vector<GroundTruthBox> out;
  for (const auto& row : table.rows) {
    try {
      require(row.fields.size() == table.header.size(), ErrorCode::kData,
              "expected " + std::to_string(table.header.size()) + " fields, got " +
                  std::to_string(row.fields.size()));
      GroundTruthBox gt;
      gt.frame_id = row.fields[c_id];
      require(!gt.frame_id.empty(), ErrorCode::kData, "empty frame_id");
      gt.box = expand_center(csv::to_double(row, c_cx, src), csv::to_double(row, c_cy, src),
                             box_size);
      gt.class_id = static_cast<int>(csv::to_int(row, c_cls, src));
      if (finish_box(gt, index, row, problems)) out.push_back(std::move(gt));
    } catch (const Error& e) {
      problems.add(row, e.what());
    }
  }
  problems.raise_if_any();
  return out;
}

void save_annotations_boxes(const fs::path& path, const std::vector<GroundTruthBox>& boxes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorCode::kIo, "cannot write " + path.string());
  out << "frame_id,x_min,y_min,x_max,y_max,class_id\n";
  for (const auto& b : boxes) {
    out << b.frame_id << ',' << csv::format_double(b.box.x_min) << ','
        << csv::format_double(b.box.y_min) << ',' << csv::format_double(b.box.x_max) << ','
        << csv::format_double(b.box.y_max) << ',' << b.class_id << '\n';
  }
  require(static_cast<bool>(out), ErrorCode::kIo, "failed writing " + path.string());
}

DatasetSplit split_dataset(const std::vector<Frame>& frames, SplitRatios ratios,
                           std::uint64_t seed) {
  require(!frames.empty(), ErrorCode::kInvalidArgument, "cannot split an empty frame list");
  require(ratios.train >= 0 && ratios.val >= 0 && ratios.test >= 0,
          ErrorCode::kInvalidArgument, "split ratios must be non-negative");
  require(std::fabs(ratios.train + ratios.val + ratios.test - 1.0) <= 1e-9,
          ErrorCode::kInvalidArgument, "split ratios must sum to 1");

  const std::size_t n = frames.size();
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);

  // The epsilon keeps exact products such as 10 * 0.7 from flooring low.
  const auto n_val = static_cast<std::size_t>(std::floor(n * ratios.val + 1e-9));
  const auto n_test = static_cast<std::size_t>(std::floor(n * ratios.test + 1e-9));
  const std::size_t n_train = n - n_val - n_test;

  DatasetSplit s;
  for (std::size_t i = 0; i < n; ++i) {
    const std::string& id = frames[perm[i]].frame_id;
    if (i < n_train)
      s.train.push_back(id);
    else if (i < n_train + n_val)
      s.val.push_back(id);
    else
      s.test.push_back(id);
  }
  return s;
}

std::vector<Frame> attach_altitude(std::vector<Frame> frames, const fs::path& meta_path) {
  const auto table = csv::read_file(meta_path);
  const std::string src = meta_path.string();
  csv::require_columns(table, {"frame_id", "altitude_m"}, src);
  const int c_id = table.column("frame_id");
  const int c_alt = table.column("altitude_m");

  std::map<std::string, double> alt;
  Problems problems(src);
  for (const auto& row : table.rows) {
    try {
      const std::string id = row.fields.at(c_id);
      const double a = csv::to_double(row, c_alt, src);
      if (!(a > 0.0)) {
        problems.add(row, "altitude must be positive, got " + row.fields[c_alt]);
        continue;
      }
      const auto [it, inserted] = alt.emplace(id, a);
      if (!inserted && it->second != a)
        problems.add(row, "conflicting altitude for frame '" + id + "'");
    } catch (const std::out_of_range&) {
      problems.add(row, "too few fields");
    } catch (const Error& e) {
      problems.add(row, e.what());
    }
  }
  std::vector<std::string> missing;
  for (auto& f : frames) {
    const auto it = alt.find(f.frame_id);
    if (it == alt.end())
      missing.push_back(f.frame_id);
    else
      f.altitude = static_cast<float>(it->second);
  }
  if (!missing.empty()) {
    std::string ids;
    for (const auto& m : missing) ids += (ids.empty() ? "" : ", ") + m;
    problems.add("no altitude for frame(s): " + ids);
  }
  problems.raise_if_any();
  return frames;
}

Manifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::kIo, "cannot open manifest " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorCode::kData, "malformed manifest " + path.string() + ": " + e.what());
  }
  const fs::path base = fs::absolute(path).parent_path();
  Manifest m;
  try {
    std::set<std::string> seen;
    for (const auto& jf : doc.at("frames")) {
      Frame f;
      f.frame_id = jf.at("frame_id").get<std::string>();
      require(seen.insert(f.frame_id).second, ErrorCode::kData,
              "duplicate frame_id '" + f.frame_id + "' in manifest");
      f.image_path = resolve(base, jf.at("image_path").get<std::string>());
      if (jf.contains("altitude_m") && !jf["altitude_m"].is_null()) {
        const double a = jf["altitude_m"].get<double>();
        require(a > 0.0, ErrorCode::kData, "frame '" + f.frame_id + "' altitude must be positive");
        f.altitude = static_cast<float>(a);
      }
      f.width = jf.value("width", 0);
      f.height = jf.value("height", 0);
      if (jf.contains("camera")) {
        f.camera = CameraModel{jf["camera"].at("focal_length").get<double>(),
                               jf["camera"].at("pixel_pitch").get<double>()};
      }
      m.frames.push_back(std::move(f));
    }
    if (doc.contains("annotations")) {
      const auto& ja = doc["annotations"];
      m.annotations = resolve(base, ja.at("path").get<std::string>());
      const std::string fmt = ja.value("format", "boxes");
      require(fmt == "boxes" || fmt == "centers", ErrorCode::kData,
              "unknown annotation format '" + fmt + "'");
      m.annotation_format = fmt == "boxes" ? AnnotationFormat::kBoxes : AnnotationFormat::kCenters;
      m.box_size = ja.value("box_size", 100);
    }
    if (doc.contains("camera")) {
      m.camera = CameraModel{doc["camera"].at("focal_length").get<double>(),
                             doc["camera"].at("pixel_pitch").get<double>()};
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::kData, "invalid manifest " + path.string() + ": " + e.what());
  }
  return m;
}

void save_manifest(const Manifest& m, const fs::path& path) {
  const fs::path base = fs::absolute(path).parent_path();
  json doc;
  doc["frames"] = json::array();
  for (const auto& f : m.frames) {
    json jf = {{"frame_id", f.frame_id},
               {"image_path", relative_to(f.image_path, base)},
               {"width", f.width},
               {"height", f.height}};
    jf["altitude_m"] = f.altitude ? json(static_cast<double>(*f.altitude)) : json(nullptr);
    if (f.camera)
      jf["camera"] = {{"focal_length", f.camera->focal_length},
                      {"pixel_pitch", f.camera->pixel_pitch}};
    doc["frames"].push_back(std::move(jf));
  }
  if (m.annotations) {
    doc["annotations"] = {
        {"path", relative_to(*m.annotations, base)},
        {"format", m.annotation_format == AnnotationFormat::kBoxes ? "boxes" : "centers"},
        {"box_size", m.box_size}};
  }
  if (m.camera)
    doc["camera"] = {{"focal_length", m.camera->focal_length},
                     {"pixel_pitch", m.camera->pixel_pitch}};
  std::ofstream out(path, std::ios::trunc);
  require(static_cast<bool>(out), ErrorCode::kIo, "cannot write manifest " + path.string());
  out << doc.dump(2) << '\n';
}

std::vector<std::vector<GroundTruthBox>> load_manifest_ground_truth(const Manifest& m) {
  std::vector<std::vector<GroundTruthBox>> grouped(m.frames.size());
  if (!m.annotations) return grouped;
  const FrameIndex index = make_frame_index(m.frames);
  const auto boxes = m.annotation_format == AnnotationFormat::kBoxes
                         ? load_annotations_boxes(*m.annotations, &index)
                         : load_annotations_centers(*m.annotations, m.box_size, &index);
  std::map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < m.frames.size(); ++i) pos[m.frames[i].frame_id] = i;
  for (const auto& b : boxes) grouped[pos.at(b.frame_id)].push_back(b);
  return grouped;
}

}  // namespace herdscope
