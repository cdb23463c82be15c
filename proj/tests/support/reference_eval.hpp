#pragma once

// Brute-force reference evaluator, written independently of tal::average_map:
// explicit PR-curve construction and exhaustive envelope lookup per point.
// Test-only oracle code.

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "tal/eval.hpp"
#include "tal/types.hpp"

namespace refeval {

inline double seg_tiou(double as, double ae, double bs, double be) {
  double lo = std::max(as, bs), hi = std::min(ae, be);
  double inter = hi > lo ? hi - lo : 0.0;
  if (inter == 0.0) return 0.0;
  return inter / ((ae - as) + (be - bs) - inter);
}

// AP for one class at one tIoU threshold via explicit PR-curve integration.
inline double reference_class_ap(std::vector<tal::Detection> dets,
                                 std::vector<tal::GtInstance> gts, double thr) {
  if (gts.empty()) return 0.0;
  std::sort(dets.begin(), dets.end(), tal::detection_order);
  std::vector<bool> taken(gts.size(), false);
  std::vector<std::pair<double, double>> pr;  // (recall, precision) after each detection
  int tp_count = 0;
  for (size_t d = 0; d < dets.size(); ++d) {
    int chosen = -1;
    double chosen_tiou = 0.0;
    for (size_t g = 0; g < gts.size(); ++g) {
      if (taken[g]) continue;
      if (gts[g].video_id != dets[d].video_id) continue;
      double v = seg_tiou(dets[d].s, dets[d].e, gts[g].s, gts[g].e);
      if (v >= thr && v > chosen_tiou) {
        chosen_tiou = v;
        chosen = static_cast<int>(g);
      }
    }
    if (chosen >= 0) {
      taken[static_cast<size_t>(chosen)] = true;
      ++tp_count;
    }
    pr.emplace_back(static_cast<double>(tp_count) / static_cast<double>(gts.size()),
                    static_cast<double>(tp_count) / static_cast<double>(d + 1));
  }
  // integrate: for every recall step, precision = max precision among all
  // points with recall >= r (exhaustive scan)
  double ap = 0.0;
  double prev_r = 0.0;
  for (size_t i = 0; i < pr.size(); ++i) {
    double r = pr[i].first;
    if (r <= prev_r) continue;
    double p_interp = 0.0;
    for (const auto& [rr, pp] : pr)
      if (rr >= r) p_interp = std::max(p_interp, pp);
    ap += (r - prev_r) * p_interp;
    prev_r = r;
  }
  return ap;
}

inline double reference_average_map(const std::vector<tal::Detection>& dets,
                                    const std::vector<tal::GtInstance>& gts,
                                    const std::vector<double>& thresholds) {
  std::set<int> classes;
  for (const auto& g : gts) classes.insert(g.class_id);
  if (classes.empty()) return 0.0;
  double total = 0.0;
  for (double thr : thresholds) {
    double sum_ap = 0.0;
    for (int k : classes) {
      std::vector<tal::Detection> cd;
      std::vector<tal::GtInstance> cg;
      for (const auto& d : dets)
        if (d.class_id == k) cd.push_back(d);
      for (const auto& g : gts)
        if (g.class_id == k) cg.push_back(g);
      sum_ap += reference_class_ap(cd, cg, thr);
    }
    total += sum_ap / static_cast<double>(classes.size());
  }
  return total / static_cast<double>(thresholds.size());
}

}  // namespace refeval
