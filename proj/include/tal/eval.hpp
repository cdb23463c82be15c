#pragma once

#include <map>
#include <vector>

#include "tal/types.hpp"

namespace tal {

// Temporal IoU of [as, ae] and [bs, be]; 0 when disjoint.
double tiou(double as, double ae, double bs, double be);

// HACS-style grid 0.5:0.05:0.95.
std::vector<double> default_tiou_grid();

struct EvalResult {
  std::vector<double> thresholds;
  std::vector<double> map_per_threshold;
  double average_map = 0.0;
  std::map<int, double> class_average_ap;  // mean AP over thresholds, per class with GT

  std::string table() const;  // aligned text
};

// Score-ordered greedy matching per class, each ground truth matched at most
// once per threshold; interpolated AP (precision envelope); classes without
// ground truth are skipped.
EvalResult average_map(std::vector<Detection> dets, const std::vector<GtInstance>& gts,
                       std::vector<double> thresholds = default_tiou_grid());

// Greedy per-video per-class suppression of lower-scored overlapping segments.
std::vector<Detection> nms(std::vector<Detection> dets, double tiou_threshold);

// Performance-weighted pooling: weights val_scores normalized to sum 1,
// detection scores scaled by their set's weight, then NMS.
std::vector<Detection> ensemble_fuse(const std::vector<std::vector<Detection>>& result_sets,
                                     const std::vector<double>& val_scores, double nms_threshold);

// Class-agnostic recall over a tIoU grid with at most top_n proposals/video.
double average_recall_at(std::vector<Proposal> proposals, const std::vector<GtInstance>& gts,
                         const std::vector<double>& thresholds, size_t top_n = 100);

// Deterministic detection ordering used everywhere scores tie.
bool detection_order(const Detection& a, const Detection& b);

}  // namespace tal
