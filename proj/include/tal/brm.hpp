#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tal/graph.hpp"
#include "tal/params.hpp"
#include "tal/rng.hpp"
#include "tal/types.hpp"

namespace tal {

// Predefined segment hypothesis at output-feature granularity.
struct Anchor {
  double t_x;  // temporal position
  double t_w;  // temporal length (scale)
};

struct BrmConfig {
  size_t in_channels = 0;
  size_t width = 128;
  std::vector<double> scales = {4, 8, 16, 32};
  double gamma = 0.25;        // boundary inflation ratio
  double min_len = 2.0;       // keep rule: inner length >= this many snippets
  double oic_keep_max = 0.0;  // after warmup, anchors with OIC above this drop out of the loss
  bool full_interval_outer = false;

  size_t num_scales() const { return scales.size(); }
  void validate() const;
};

struct BrmParams {
  ParamTensor* k1;
  ParamTensor* b1;
  ParamTensor* k2;
  ParamTensor* b2;
  ParamTensor* k3;
  ParamTensor* b3;
  ParamTensor* pred_k;  // 2M output channels: (p_x, p_w) per scale
  ParamTensor* pred_b;
};

BrmParams register_brm(ParamStore& store, const std::string& prefix, const BrmConfig& cfg,
                       Rng& rng);
BrmParams bind_brm(ParamStore& store, const std::string& prefix);

// One anchor per output cell per scale: (t_x = cell + 0.5, t_w = scale).
std::vector<Anchor> generate_anchors(size_t t_out, const std::vector<double>& scales);

// r_x = t_x + t_w * p_x, r_w = t_w * exp(p_w); inner boundary (s, e).
void decode_anchor(const Anchor& a, double p_x, double p_w, double& s, double& e);

// Outer boundary: S = s - r_w * gamma, E = e + r_w * gamma (no clamping here).
void inflate(double s, double e, double gamma, double& outer_s, double& outer_e);

// Three stacked convs with ReLU plus the 2M-channel prediction conv.
Graph::Id brm_grid(Graph& g, Graph::Id feats, const BrmParams& p, const BrmConfig& cfg);

struct BrmTrainResult {
  Graph::Id loss;  // sum over classes of the mean OIC over kept anchors
  size_t anchors_in_loss = 0;
  // (class index into `classes`, anchor index) pairs that entered the loss
  std::vector<std::pair<size_t, size_t>> kept;
};

// OIC training loss over the enhanced CAS. `warmup` keeps every anchor that
// survives the geometric keep rule; afterwards positive-OIC anchors drop out.
// kept_override pins the selection (the finite-difference oracle needs the
// discrete choices frozen).
BrmTrainResult brm_oic_loss(Graph& g, Graph::Id grid, Graph::Id cas_norm,
                            const std::vector<int>& gt_classes, const BrmConfig& cfg, bool warmup,
                            const std::vector<std::pair<size_t, size_t>>* kept_override = nullptr);

// Inference: decoded anchors passing the keep rule and the negative-OIC
// filter, scored by inner mean activation times the video class score.
std::vector<Detection> brm_detect(Graph& g, Graph::Id grid, Graph::Id cas_norm,
                                  const std::vector<std::pair<int, double>>& class_scores,
                                  const BrmConfig& cfg, const std::string& video_id);

}  // namespace tal
