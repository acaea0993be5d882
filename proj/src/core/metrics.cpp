#include "herdscope/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "herdscope/error.hpp"

namespace herdscope {

namespace {

// Score of a passing (det, gt) pair, higher is better; NaN when not passing.
struct PairScorer {
  const EvalConfig& cfg;

  bool passes(const Box& d, const Box& g, double* score) const {
    if (cfg.criterion == MatchCriterion::kIoU) {
      const double v = iou(d, g);
      *score = v;
      return v > 0.0 && v >= cfg.iou_threshold;
    }
    const double dist = chebyshev(d, g);
    *score = -dist;
    return dist <= cfg.chebyshev_threshold;
  }
};

class Augmenter {
 public:
  Augmenter(const std::vector<std::vector<int>>& adj, std::vector<int>& det_for_gt,
            std::vector<int>& gt_for_det)
      : adj_(adj), det_for_gt_(det_for_gt), gt_for_det_(gt_for_det) {}

  bool assign(int det) {
    visited_.assign(det_for_gt_.size(), false);
    return try_det(det);
  }

 private:
  bool try_det(int det) {
    // Unclaimed candidates first, best score first.
    for (int g : adj_[det]) {
      if (det_for_gt_[g] < 0) {
        claim(det, g);
        return true;
      }
    }
    for (int g : adj_[det]) {
      if (visited_[g]) continue;
      visited_[g] = true;
      if (try_det(det_for_gt_[g])) {
        claim(det, g);
        return true;
      }
    }
    return false;
  }

  void claim(int det, int g) {
    det_for_gt_[g] = det;
    gt_for_det_[det] = g;
  }

  const std::vector<std::vector<int>>& adj_;
  std::vector<int>& det_for_gt_;
  std::vector<int>& gt_for_det_;
  std::vector<bool> visited_;
};

}  // namespace

void validate(const EvalConfig& cfg) {
  require(cfg.iou_threshold > 0.0 && cfg.iou_threshold <= 1.0, ErrorCode::kConfig,
          "iou_threshold must be in (0, 1]");
  require(cfg.chebyshev_threshold > 0.0, ErrorCode::kConfig,
          "chebyshev_threshold must be positive");
  require(cfg.conf_threshold >= 0.0 && cfg.conf_threshold <= 1.0, ErrorCode::kConfig,
          "conf_threshold must be in [0, 1]");
}

double iou(const Box& a, const Box& b) {
  require(a.valid() && b.valid(), ErrorCode::kInvalidArgument,
          "iou of a degenerate box");
  const double ix = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  const double iy = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  if (ix <= 0.0 || iy <= 0.0) return 0.0;
  const double inter = ix * iy;
  return inter / (a.area() + b.area() - inter);
}

double chebyshev(const Box& a, const Box& b) {
  return std::max(std::fabs(a.center_x() - b.center_x()),
                  std::fabs(a.center_y() - b.center_y()));
}

Matching match_detections(const std::vector<Detection>& dets,
                          const std::vector<Box>& gts, const EvalConfig& cfg) {
  const int nd = static_cast<int>(dets.size());
  const int ng = static_cast<int>(gts.size());
  const PairScorer scorer{cfg};

  std::vector<std::vector<int>> adj(nd);
  for (int i = 0; i < nd; ++i) {
    std::vector<std::pair<double, int>> cands;
    for (int g = 0; g < ng; ++g) {
      double s = 0.0;
      if (scorer.passes(dets[i].box, gts[g], &s)) cands.emplace_back(s, g);
    }
    std::stable_sort(cands.begin(), cands.end(), [](const auto& a, const auto& b) {
      return a.first > b.first;
    });
    for (const auto& c : cands) adj[i].push_back(c.second);
  }

  std::vector<int> order(nd);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return dets[a].confidence > dets[b].confidence;
  });

  Matching m;
  m.gt_for_det.assign(nd, -1);
  m.det_for_gt.assign(ng, -1);
  Augmenter aug(adj, m.det_for_gt, m.gt_for_det);
  for (int i : order) aug.assign(i);

  for (int i = 0; i < nd; ++i) (m.gt_for_det[i] >= 0 ? m.tp : m.fp) += 1;
  m.fn = ng - m.tp;
  return m;
}

std::vector<PrPoint> pr_curve(const std::vector<FrameEval>& frames, int total_gt) {
  struct Ranked {
    double conf;
    bool tp;
  };
  std::vector<Ranked> pool;
  for (const auto& f : frames)
    for (std::size_t i = 0; i < f.dets.size(); ++i)
      pool.push_back({f.dets[i].confidence, f.matching.gt_for_det[i] >= 0});
  std::stable_sort(pool.begin(), pool.end(),
                   [](const Ranked& a, const Ranked& b) { return a.conf > b.conf; });

  std::vector<PrPoint> curve;
  curve.reserve(pool.size());
  int tp = 0;
  int fp = 0;
  for (const auto& r : pool) {
    (r.tp ? tp : fp) += 1;
    const double recall = total_gt > 0 ? static_cast<double>(tp) / total_gt : 0.0;
    curve.push_back({recall, static_cast<double>(tp) / (tp + fp)});
  }
  return curve;
}

double average_precision(const std::vector<PrPoint>& curve) {
  if (curve.empty()) return 0.0;
  std::vector<double> envelope(curve.size());
  double best = 0.0;
  for (std::size_t i = curve.size(); i-- > 0;) {
    best = std::max(best, curve[i].precision);
    envelope[i] = best;
  }
  double ap = 0.0;
  double prev_recall = 0.0;
  for (std::size_t i = 0; i < curve.size(); ++i) {
    ap += (curve[i].recall - prev_recall) * envelope[i];
    prev_recall = curve[i].recall;
  }
  return ap;
}

Evaluation evaluate(const std::vector<std::vector<Detection>>& dets,
                    const std::vector<std::vector<Box>>& gts, const EvalConfig& cfg) {
  validate(cfg);
  require(dets.size() == gts.size(), ErrorCode::kInvalidArgument,
          "evaluate: detection and ground-truth frame counts differ");
  Evaluation ev;
  std::vector<FrameEval> frames(dets.size());
  int total_gt = 0;
  for (std::size_t f = 0; f < dets.size(); ++f) {
    for (const auto& d : dets[f])
      if (d.confidence >= cfg.conf_threshold) frames[f].dets.push_back(d);
    frames[f].matching = match_detections(frames[f].dets, gts[f], cfg);
    const auto& m = frames[f].matching;
    ev.per_frame.push_back({m.tp, m.fp, m.fn});
    ev.result.tp += m.tp;
    ev.result.fp += m.fp;
    ev.result.fn += m.fn;
    total_gt += static_cast<int>(gts[f].size());
  }
  ev.result.pr = pr_curve(frames, total_gt);
  if (total_gt == 0)
    ev.result.ap = ev.result.fp == 0 ? 1.0 : 0.0;
  else
    ev.result.ap = average_precision(ev.result.pr);
  return ev;
}

std::vector<SweepPoint> map_sweep(const std::vector<std::vector<Detection>>& dets,
                                  const std::vector<std::vector<Box>>& gts,
                                  const std::vector<double>& iou_thresholds,
                                  EvalConfig base) {
  require(std::is_sorted(iou_thresholds.begin(), iou_thresholds.end()),
          ErrorCode::kInvalidArgument, "sweep thresholds must be ascending");
  base.criterion = MatchCriterion::kIoU;
  std::vector<SweepPoint> out;
  for (double t : iou_thresholds) {
    base.iou_threshold = t;
    out.push_back({t, evaluate(dets, gts, base).result.ap});
  }
  return out;
}

std::string to_string(MatchCriterion c) {
  return c == MatchCriterion::kIoU ? "iou" : "chebyshev";
}

MatchCriterion criterion_from_string(const std::string& s) {
  if (s == "iou" || s == "IoU") return MatchCriterion::kIoU;
  if (s == "chebyshev" || s == "che") return MatchCriterion::kChebyshev;
  fail(ErrorCode::kConfig, "unknown match criterion '" + s + "'");
}

}  // namespace herdscope
