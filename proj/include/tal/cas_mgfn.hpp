#pragma once

#include <string>
#include <vector>

#include "tal/graph.hpp"
#include "tal/params.hpp"
#include "tal/rng.hpp"
#include "tal/types.hpp"

namespace tal {

// Cascaded dilated classification block: a two-conv base net feeding parallel
// dilated branches, each with its own class projection applied position-wise
// (the per-branch localization sequence) and fused into a dense CAS.
struct MdcmConfig {
  size_t in_channels = 0;
  size_t width = 256;
  std::vector<int> dilation_rates = {1, 2, 3, 5};  // first entry must be 1
  size_t classes = 0;

  size_t branch_count() const { return dilation_rates.size(); }
  void validate() const;
};

struct MdcmBranchParams {
  ParamTensor* kernel;
  ParamTensor* bias;
  ParamTensor* head_w;  // width x K class projection
  ParamTensor* head_b;
};

struct MdcmParams {
  ParamTensor* base_k1;
  ParamTensor* base_b1;
  ParamTensor* base_k2;
  ParamTensor* base_b2;
  std::vector<MdcmBranchParams> branches;
};

MdcmParams register_mdcm(ParamStore& store, const std::string& prefix, const MdcmConfig& cfg,
                         Rng& rng);
MdcmParams bind_mdcm(ParamStore& store, const std::string& prefix, const MdcmConfig& cfg);

struct MdcmOut {
  std::vector<Graph::Id> branch_cas;  // T x K logits per branch
  Graph::Id cas;                      // fused T x K logits
  Graph::Id class_logits;             // K (GAP of the fused CAS)
  Graph::Id class_scores;             // K in (0,1)
  Graph::Id pooled;                   // width: mean over branches of GAP features
};

MdcmOut mdcm_forward(Graph& g, Graph::Id feats, const MdcmParams& p, const MdcmConfig& cfg);

// H = H_0 + (1/n_d) * sum of the dilated branches.
Graph::Id fuse_branches(Graph& g, const std::vector<Graph::Id>& branch_cas);

// Mean binary cross-entropy of per-class scores against multi-hot labels.
Graph::Id classification_loss(Graph& g, Graph::Id class_scores, const std::vector<double>& labels);

// Row mask of positions whose normalized activation reaches theta times the
// per-class max for any ground-truth class.
std::vector<uint8_t> oae_mask(const Tensor& cas_logits, const std::vector<int>& gt_classes,
                              double theta);

// Feature rows at masked positions zeroed; the mask itself is not part of the
// differentiable computation, erased rows pass no gradient.
Graph::Id oae_erase(Graph& g, Graph::Id feats, const Tensor& cas_logits,
                    const std::vector<int>& gt_classes, double theta);

struct CascadeOut {
  MdcmOut stage1;
  MdcmOut stage2;
  Graph::Id cas;  // elementwise max of the two stage CAS logit tracks
};

CascadeOut cascade_forward(Graph& g, Graph::Id feats, const MdcmParams& stage1,
                           const MdcmParams& stage2, const MdcmConfig& cfg,
                           const std::vector<int>& gt_classes, double theta);

// Simple thresholding detector over a normalized CAS: contiguous runs at or
// above theta times the per-class max become detections scored by mean
// activation times the video class score.
std::vector<Detection> threshold_detect(const Tensor& cas_norm, const std::string& video_id,
                                        const std::vector<std::pair<int, double>>& class_scores,
                                        double theta, double min_len);

}  // namespace tal
