#include "tal/eval.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <set>
#include <sstream>

#include "tal/errors.hpp"

namespace tal {

double tiou(double as, double ae, double bs, double be) {
  double inter = std::min(ae, be) - std::max(as, bs);
  if (inter <= 0.0) return 0.0;
  double uni = std::max(ae, be) - std::min(as, bs);
  return inter / uni;
}

std::vector<double> default_tiou_grid() {
  std::vector<double> g;
  for (int i = 0; i <= 9; ++i) g.push_back(0.5 + 0.05 * i);
  return g;
}

bool detection_order(const Detection& a, const Detection& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.video_id != b.video_id) return a.video_id < b.video_id;
  if (a.s != b.s) return a.s < b.s;
  if (a.e != b.e) return a.e < b.e;
  return a.class_id < b.class_id;
}

namespace {

// AP for one class at one threshold. dets must already be sorted.
double class_ap(const std::vector<Detection>& dets, const std::vector<GtInstance>& gts,
                double threshold) {
  if (gts.empty()) return 0.0;
  std::vector<bool> gt_used(gts.size(), false);
  std::vector<int> tp(dets.size(), 0);
  for (size_t d = 0; d < dets.size(); ++d) {
    double best = 0.0;
    long best_g = -1;
    for (size_t g = 0; g < gts.size(); ++g) {
      if (gt_used[g] || gts[g].video_id != dets[d].video_id) continue;
      double v = tiou(dets[d].s, dets[d].e, gts[g].s, gts[g].e);
      if (v >= threshold && v > best) {
        best = v;
        best_g = static_cast<long>(g);
      }
    }
    if (best_g >= 0) {
      tp[d] = 1;
      gt_used[static_cast<size_t>(best_g)] = true;
    }
  }
  // precision envelope, integrated over recall steps
  size_t n = dets.size();
  std::vector<double> precision(n), recall(n);
  double cum_tp = 0;
  for (size_t d = 0; d < n; ++d) {
    cum_tp += tp[d];
    precision[d] = cum_tp / static_cast<double>(d + 1);
    recall[d] = cum_tp / static_cast<double>(gts.size());
  }
  double ap = 0.0, prev_recall = 0.0, run_max = 0.0;
  // envelope: max precision at recall >= r
  std::vector<double> envelope(n);
  for (size_t d = n; d-- > 0;) {
    run_max = std::max(run_max, precision[d]);
    envelope[d] = run_max;
  }
  for (size_t d = 0; d < n; ++d) {
    ap += (recall[d] - prev_recall) * envelope[d];
    prev_recall = recall[d];
  }
  return ap;
}

}  // namespace

EvalResult average_map(std::vector<Detection> dets, const std::vector<GtInstance>& gts,
                       std::vector<double> thresholds) {
  if (thresholds.empty()) throw ConfigError("average_map: empty threshold list");
  for (double t : thresholds)
    if (t <= 0.0 || t >= 1.0) throw ConfigError("average_map: thresholds must be in (0,1)");
  for (const auto& d : dets)
    if (!(d.s < d.e)) throw ContractError("average_map: detection with s >= e");
  std::sort(dets.begin(), dets.end(), detection_order);

  std::set<int> classes;
  for (const auto& g : gts) classes.insert(g.class_id);

  EvalResult res;
  res.thresholds = thresholds;
  res.map_per_threshold.assign(thresholds.size(), 0.0);
  if (classes.empty()) return res;

  std::map<int, std::vector<Detection>> dets_by_class;
  std::map<int, std::vector<GtInstance>> gts_by_class;
  for (const auto& d : dets) dets_by_class[d.class_id].push_back(d);
  for (const auto& g : gts) gts_by_class[g.class_id].push_back(g);

  for (size_t t = 0; t < thresholds.size(); ++t) {
    double sum_ap = 0.0;
    for (int k : classes) {
      double ap = class_ap(dets_by_class[k], gts_by_class[k], thresholds[t]);
      sum_ap += ap;
      res.class_average_ap[k] += ap / static_cast<double>(thresholds.size());
    }
    res.map_per_threshold[t] = sum_ap / static_cast<double>(classes.size());
    res.average_map += res.map_per_threshold[t] / static_cast<double>(thresholds.size());
  }
  return res;
}

std::vector<Detection> nms(std::vector<Detection> dets, double tiou_threshold) {
  if (tiou_threshold <= 0.0 || tiou_threshold >= 1.0)
    throw ConfigError("nms: threshold must be in (0,1)");
  std::sort(dets.begin(), dets.end(), detection_order);
  std::vector<Detection> kept;
  for (const auto& d : dets) {
    bool suppressed = false;
    for (const auto& k : kept) {
      if (k.video_id != d.video_id || k.class_id != d.class_id) continue;
      if (tiou(d.s, d.e, k.s, k.e) > tiou_threshold) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(d);
  }
  return kept;
}

std::vector<Detection> ensemble_fuse(const std::vector<std::vector<Detection>>& result_sets,
                                     const std::vector<double>& val_scores, double nms_threshold) {
  if (result_sets.size() != val_scores.size())
    throw DimensionError("ensemble_fuse: one validation score per result set required");
  if (result_sets.empty()) throw ConfigError("ensemble_fuse: no result sets");
  double total = 0.0;
  for (double v : val_scores) {
    if (v <= 0.0) throw ConfigError("ensemble_fuse: validation scores must be positive");
    total += v;
  }
  std::vector<Detection> pooled;
  for (size_t i = 0; i < result_sets.size(); ++i) {
    double w = val_scores[i] / total;
    for (Detection d : result_sets[i]) {
      d.score *= w;
      pooled.push_back(d);
    }
  }
  return nms(std::move(pooled), nms_threshold);
}

double average_recall_at(std::vector<Proposal> proposals, const std::vector<GtInstance>& gts,
                         const std::vector<double>& thresholds, size_t top_n) {
  if (gts.empty() || thresholds.empty()) return 0.0;
  std::map<std::string, std::vector<Proposal>> by_video;
  for (auto& p : proposals)
    if (p.valid) by_video[p.video_id].push_back(p);
  for (auto& [vid, ps] : by_video) {
    std::sort(ps.begin(), ps.end(), [](const Proposal& a, const Proposal& b) {
      if (a.score != b.score) return a.score > b.score;
      if (a.s != b.s) return a.s < b.s;
      return a.e < b.e;
    });
    if (ps.size() > top_n) ps.resize(top_n);
  }
  double acc = 0.0;
  for (double thr : thresholds) {
    size_t hit = 0;
    for (const auto& g : gts) {
      auto it = by_video.find(g.video_id);
      if (it == by_video.end()) continue;
      for (const auto& p : it->second)
        if (tiou(p.s, p.e, g.s, g.e) >= thr) {
          ++hit;
          break;
        }
    }
    acc += static_cast<double>(hit) / static_cast<double>(gts.size());
  }
  return acc / static_cast<double>(thresholds.size());
}

std::string EvalResult::table() const {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  os << "tIoU      mAP\n";
  for (size_t i = 0; i < thresholds.size(); ++i)
    os << std::setw(4) << std::setprecision(2) << thresholds[i] << "   " << std::setprecision(4)
       << map_per_threshold[i] << "\n";
  os << "avg    " << std::setprecision(4) << average_map << "\n";
  return os.str();
}

}  // namespace tal
