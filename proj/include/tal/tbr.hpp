#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tal/graph.hpp"
#include "tal/params.hpp"
#include "tal/rng.hpp"
#include "tal/types.hpp"

namespace tal {

// Temporal boundary refinement: frame-level offsets from the boundary
// contexts, segment-level center/width offsets plus confidence from the full
// context, fused with coefficient tau, applied over one or more stages.
struct TbrConfig {
  size_t stages = 2;
  double tau = 0.5;
  size_t hidden = 128;
  double match_tiou = 0.5;  // proposals below this train the confidence head only

  static constexpr size_t kStartLen = 8;
  static constexpr size_t kCenterLen = 16;
  static constexpr size_t kEndLen = 8;

  void validate() const;
};

struct TbrStageParams {
  // frame-level two-conv stack, shared between the start and end contexts
  ParamTensor* frame_k1;
  ParamTensor* frame_b1;
  ParamTensor* frame_k2;
  ParamTensor* frame_b2;
  // segment-level stack over [F_s, F_c, F_e], three outputs
  ParamTensor* seg_k1;
  ParamTensor* seg_b1;
  ParamTensor* seg_k2;
  ParamTensor* seg_b2;
};

TbrStageParams register_tbr_stage(ParamStore& store, const std::string& prefix, size_t channels,
                                  const TbrConfig& cfg, Rng& rng);
TbrStageParams bind_tbr_stage(ParamStore& store, const std::string& prefix);
std::vector<TbrStageParams> register_tbr_stages(ParamStore& store, size_t channels,
                                                const TbrConfig& cfg, Rng& rng);
std::vector<TbrStageParams> bind_tbr_stages(ParamStore& store, const TbrConfig& cfg);

struct ProposalContexts {
  Graph::Id f_start;   // kStartLen x C over [s - w/4, s + w/4]
  Graph::Id f_center;  // kCenterLen x C over [s, e]
  Graph::Id f_end;     // kEndLen x C over [e - w/4, e + w/4]
};

ProposalContexts sample_contexts(Graph& g, Graph::Id feats, const Proposal& p);

// (ds, de): boundary offsets in proposal-width units.
std::pair<Graph::Id, Graph::Id> frame_level_regress(Graph& g, const ProposalContexts& ctx,
                                                    const TbrStageParams& sp);
// (dx, dw, p_conf): center/log-width offsets and confidence in (0,1).
struct SegmentRegression {
  Graph::Id dx;
  Graph::Id dw;
  Graph::Id conf;  // sigmoid output
};
SegmentRegression segment_level_regress(Graph& g, const ProposalContexts& ctx,
                                        const TbrStageParams& sp);

// Plain decode of both offset routes, fused; clamped to [0, video_len] and
// flagged invalid (score 0) when degenerate after clamping.
Proposal decode_and_fuse(const Proposal& p, double ds, double de, double dx, double dw, double tau,
                         double video_len);

// On-tape version of the same arithmetic (pre-clamp), for losses.
struct DecodedOnTape {
  Graph::Id s1, e1;  // frame-level route
  Graph::Id s2, e2;  // segment-level route
  Graph::Id s, e;    // fused
};
DecodedOnTape decode_and_fuse_tape(Graph& g, const Proposal& p, Graph::Id ds, Graph::Id de,
                                   Graph::Id dx, Graph::Id dw, double tau);

// One full stage pass over one proposal.
struct TbrStageForward {
  DecodedOnTape decoded;
  Graph::Id conf;
  Proposal refined;  // decoded from values, clamped, confidence applied
};
TbrStageForward tbr_stage_forward(Graph& g, Graph::Id feats, const Proposal& p,
                                  const TbrStageParams& sp, const TbrConfig& cfg,
                                  double video_len);

// Smooth-L1 on both routes in width-normalized units plus squared confidence
// error against the realized tIoU (a stop-gradient target). Unmatched
// proposals (matched == nullopt) contribute only the confidence term with
// target 0. conf_target_override pins the target, e.g. for gradient checks.
Graph::Id tbr_loss(Graph& g, const TbrStageForward& fwd, const Proposal& input,
                   const std::optional<GtInstance>& matched, double video_len,
                   std::optional<double> conf_target_override = std::nullopt);

// Inference-time progressive refinement (no gradients used).
std::vector<Proposal> tbr_refine(const Tensor& encoded_feats, std::vector<Proposal> proposals,
                                 const std::vector<TbrStageParams>& stages, const TbrConfig& cfg);

}  // namespace tal
