#pragma once

#include <string>
#include <vector>

#include "herdscope/box.hpp"

namespace herdscope {

enum class MatchCriterion { kIoU, kChebyshev };

struct EvalConfig {
  MatchCriterion criterion = MatchCriterion::kIoU;
  double iou_threshold = 0.3;
  double chebyshev_threshold = 200.0;  // pixels, inclusive
  double conf_threshold = 0.1;
};

void validate(const EvalConfig& cfg);

// Intersection over union; throws on a zero-area box.
double iou(const Box& a, const Box& b);

// max(|dx|, |dy|) between box centers.
double chebyshev(const Box& a, const Box& b);

// Per-frame one-to-one assignment. gt_for_det[i] is the GT index claimed by
// detection i, or -1 when it is a false positive.
struct Matching {
  std::vector<int> gt_for_det;
  std::vector<int> det_for_gt;
  int tp = 0;
  int fp = 0;
  int fn = 0;
};

// Detections are visited in descending confidence (ties by input index).
// Each claims the best-scoring unmatched GT that passes the threshold
// (ties by GT index). When every passing GT is already claimed, the
// detection tries to re-route an earlier claimant to another passing GT
// (augmenting path), so the TP count is the maximum one-to-one matching and
// higher-confidence detections keep priority for TP status.
Matching match_detections(const std::vector<Detection>& dets,
                          const std::vector<Box>& gts, const EvalConfig& cfg);

struct PrPoint {
  double recall = 0.0;
  double precision = 0.0;
};

// One evaluated frame: detections already filtered at conf_threshold.
struct FrameEval {
  std::vector<Detection> dets;
  Matching matching;
};

// Cumulative walk over all detections ranked globally by descending
// confidence (ties by frame order, then detection order).
std::vector<PrPoint> pr_curve(const std::vector<FrameEval>& frames, int total_gt);

// All-point interpolated area under the precision envelope.
double average_precision(const std::vector<PrPoint>& curve);

struct CriterionResult {
  int tp = 0;
  int fp = 0;
  int fn = 0;
  double ap = 0.0;  // single class, so also the mAP
  std::vector<PrPoint> pr;
};

struct FrameCounts {
  int tp = 0;
  int fp = 0;
  int fn = 0;
};

struct Evaluation {
  CriterionResult result;
  std::vector<FrameCounts> per_frame;
};

// dets[i] and gts[i] belong to frame i. Detections below cfg.conf_threshold
// are discarded first. An entirely GT-free set scores AP 1 with no
// detections and 0 otherwise.
Evaluation evaluate(const std::vector<std::vector<Detection>>& dets,
                    const std::vector<std::vector<Box>>& gts, const EvalConfig& cfg);

struct SweepPoint {
  double threshold = 0.0;
  double map = 0.0;
};

// IoU criterion, one full evaluation per threshold (ascending).
std::vector<SweepPoint> map_sweep(const std::vector<std::vector<Detection>>& dets,
                                  const std::vector<std::vector<Box>>& gts,
                                  const std::vector<double>& iou_thresholds,
                                  EvalConfig base = {});

std::string to_string(MatchCriterion c);
MatchCriterion criterion_from_string(const std::string& s);

}  // namespace herdscope
