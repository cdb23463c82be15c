#include "tal/tbr.hpp"

#include <algorithm>
#include <cmath>

#include "tal/errors.hpp"
#include "tal/eval.hpp"

namespace tal {

void TbrConfig::validate() const {
  if (stages == 0) throw ConfigError("tbr: stages must be >= 1");
  if (tau < 0.0 || tau > 1.0) throw ConfigError("tbr: tau must lie in [0,1]");
  if (hidden == 0) throw ConfigError("tbr: hidden width must be positive");
  if (match_tiou <= 0.0 || match_tiou >= 1.0) throw ConfigError("tbr: match_tiou must be in (0,1)");
}

TbrStageParams register_tbr_stage(ParamStore& store, const std::string& prefix, size_t channels,
                                  const TbrConfig& cfg, Rng& rng) {
  cfg.validate();
  TbrStageParams p;
  size_t h = cfg.hidden;
  p.frame_k1 = &store.add_uniform(prefix + "frame_k1", {3, channels, h}, 3 * channels, rng);
  p.frame_b1 = &store.add_constant(prefix + "frame_b1", {h}, 0.0);
  p.frame_k2 = &store.add_uniform(prefix + "frame_k2", {3, h, 1}, 3 * h, rng);
  p.frame_b2 = &store.add_constant(prefix + "frame_b2", {1}, 0.0);
  p.seg_k1 = &store.add_uniform(prefix + "seg_k1", {3, channels, h}, 3 * channels, rng);
  p.seg_b1 = &store.add_constant(prefix + "seg_b1", {h}, 0.0);
  p.seg_k2 = &store.add_uniform(prefix + "seg_k2", {3, h, 3}, 3 * h, rng);
  p.seg_b2 = &store.add_constant(prefix + "seg_b2", {3}, 0.0);
  return p;
}

TbrStageParams bind_tbr_stage(ParamStore& store, const std::string& prefix) {
  TbrStageParams p;
  p.frame_k1 = &store.at(prefix + "frame_k1");
  p.frame_b1 = &store.at(prefix + "frame_b1");
  p.frame_k2 = &store.at(prefix + "frame_k2");
  p.frame_b2 = &store.at(prefix + "frame_b2");
  p.seg_k1 = &store.at(prefix + "seg_k1");
  p.seg_b1 = &store.at(prefix + "seg_b1");
  p.seg_k2 = &store.at(prefix + "seg_k2");
  p.seg_b2 = &store.at(prefix + "seg_b2");
  return p;
}

static std::string stage_prefix(size_t i) { return "tbr.stage" + std::to_string(i) + "."; }

std::vector<TbrStageParams> register_tbr_stages(ParamStore& store, size_t channels,
                                                const TbrConfig& cfg, Rng& rng) {
  std::vector<TbrStageParams> out;
  for (size_t i = 0; i < cfg.stages; ++i)
    out.push_back(register_tbr_stage(store, stage_prefix(i), channels, cfg, rng));
  return out;
}

std::vector<TbrStageParams> bind_tbr_stages(ParamStore& store, const TbrConfig& cfg) {
  std::vector<TbrStageParams> out;
  for (size_t i = 0; i < cfg.stages; ++i) out.push_back(bind_tbr_stage(store, stage_prefix(i)));
  return out;
}

static std::vector<double> region_midpoints(double a, double b, size_t n) {
  std::vector<double> pos(n);
  double step = (b - a) / static_cast<double>(n);
  for (size_t i = 0; i < n; ++i) pos[i] = a + (static_cast<double>(i) + 0.5) * step;
  return pos;
}

ProposalContexts sample_contexts(Graph& g, Graph::Id feats, const Proposal& p) {
  double w = p.width();
  if (!(w > 0.0)) throw DegenerateInputError("sample_contexts: zero-length proposal");
  double q = w / 4.0;
  ProposalContexts ctx;
  ctx.f_start = g.linear_resample(feats, region_midpoints(p.s - q, p.s + q, TbrConfig::kStartLen));
  ctx.f_center = g.linear_resample(feats, region_midpoints(p.s, p.e, TbrConfig::kCenterLen));
  ctx.f_end = g.linear_resample(feats, region_midpoints(p.e - q, p.e + q, TbrConfig::kEndLen));
  return ctx;
}

// conv(k3,p1) -> relu -> conv(k3,p1) -> GAP
static Graph::Id conv_stack_pool(Graph& g, Graph::Id x, const TbrStageParams& sp, bool frame) {
  auto k1 = g.param(frame ? *sp.frame_k1 : *sp.seg_k1);
  auto b1 = g.param(frame ? *sp.frame_b1 : *sp.seg_b1);
  auto k2 = g.param(frame ? *sp.frame_k2 : *sp.seg_k2);
  auto b2 = g.param(frame ? *sp.frame_b2 : *sp.seg_b2);
  auto h = g.relu(g.add_bias(g.conv1d(x, k1, 1, 1, 1), b1));
  auto out = g.add_bias(g.conv1d(h, k2, 1, 1, 1), b2);
  return g.global_avg_pool(out);
}

std::pair<Graph::Id, Graph::Id> frame_level_regress(Graph& g, const ProposalContexts& ctx,
                                                    const TbrStageParams& sp) {
  auto ds = g.at(conv_stack_pool(g, ctx.f_start, sp, /*frame=*/true), 0);
  auto de = g.at(conv_stack_pool(g, ctx.f_end, sp, /*frame=*/true), 0);
  return {ds, de};
}

SegmentRegression segment_level_regress(Graph& g, const ProposalContexts& ctx,
                                        const TbrStageParams& sp) {
  auto fa = g.concat_rows({ctx.f_start, ctx.f_center, ctx.f_end});
  auto pooled = conv_stack_pool(g, fa, sp, /*frame=*/false);
  SegmentRegression r;
  r.dx = g.at(pooled, 0);
  r.dw = g.at(pooled, 1);
  r.conf = g.sigmoid(g.at(pooled, 2));
  return r;
}

Proposal decode_and_fuse(const Proposal& p, double ds, double de, double dx, double dw, double tau,
                         double video_len) {
  double w = p.width();
  if (!(w > 0.0)) throw DegenerateInputError("decode_and_fuse: zero-length proposal");
  double s1 = p.s - ds * w;
  double e1 = p.e - de * w;
  double x2 = p.center() - dx * w;
  double w2 = w * std::exp(dw);
  double s2 = x2 - 0.5 * w2;
  double e2 = x2 + 0.5 * w2;
  Proposal out = p;
  out.s = tau * s1 + (1.0 - tau) * s2;
  out.e = tau * e1 + (1.0 - tau) * e2;
  out.s = std::clamp(out.s, 0.0, video_len);
  out.e = std::clamp(out.e, 0.0, video_len);
  if (out.s >= out.e) {
    std::swap(out.s, out.e);
    out.valid = false;
    out.score = 0.0;
  }
  return out;
}

DecodedOnTape decode_and_fuse_tape(Graph& g, const Proposal& p, Graph::Id ds, Graph::Id de,
                                   Graph::Id dx, Graph::Id dw, double tau) {
  double w = p.width();
  if (!(w > 0.0)) throw DegenerateInputError("decode_and_fuse_tape: zero-length proposal");
  DecodedOnTape d;
  d.s1 = g.add_scalar(g.scale(ds, -w), p.s);
  d.e1 = g.add_scalar(g.scale(de, -w), p.e);
  auto x2 = g.add_scalar(g.scale(dx, -w), p.center());
  auto half_w2 = g.scale(g.exp(dw), 0.5 * w);
  d.s2 = g.sub(x2, half_w2);
  d.e2 = g.add(x2, half_w2);
  d.s = g.add(g.scale(d.s1, tau), g.scale(d.s2, 1.0 - tau));
  d.e = g.add(g.scale(d.e1, tau), g.scale(d.e2, 1.0 - tau));
  return d;
}

TbrStageForward tbr_stage_forward(Graph& g, Graph::Id feats, const Proposal& p,
                                  const TbrStageParams& sp, const TbrConfig& cfg,
                                  double video_len) {
  auto ctx = sample_contexts(g, feats, p);
  auto [ds, de] = frame_level_regress(g, ctx, sp);
  auto seg = segment_level_regress(g, ctx, sp);
  TbrStageForward fwd;
  fwd.decoded = decode_and_fuse_tape(g, p, ds, de, seg.dx, seg.dw, cfg.tau);
  fwd.conf = seg.conf;
  fwd.refined = decode_and_fuse(p, g.value(ds).item(), g.value(de).item(), g.value(seg.dx).item(),
                                g.value(seg.dw).item(), cfg.tau, video_len);
  fwd.refined.score = p.score * g.value(seg.conf).item();
  if (!fwd.refined.valid) fwd.refined.score = 0.0;
  return fwd;
}

Graph::Id tbr_loss(Graph& g, const TbrStageForward& fwd, const Proposal& input,
                   const std::optional<GtInstance>& matched, double video_len,
                   std::optional<double> conf_target_override) {
  double conf_target = 0.0;
  if (matched) {
    const Proposal& r = fwd.refined;
    conf_target = std::clamp(tiou(std::min(r.s, video_len), std::min(r.e, video_len), matched->s,
                                  matched->e),
                             0.0, 1.0);
  }
  if (conf_target_override) conf_target = *conf_target_override;
  auto conf_err = g.add_scalar(fwd.conf, -conf_target);
  Graph::Id loss = g.mul(conf_err, conf_err);
  if (matched) {
    double w = input.width();
    auto norm_sl1 = [&](Graph::Id v, double target) {
      return g.smooth_l1(g.scale(g.add_scalar(v, -target), 1.0 / w));
    };
    loss = g.add(loss, norm_sl1(fwd.decoded.s1, matched->s));
    loss = g.add(loss, norm_sl1(fwd.decoded.e1, matched->e));
    loss = g.add(loss, norm_sl1(fwd.decoded.s2, matched->s));
    loss = g.add(loss, norm_sl1(fwd.decoded.e2, matched->e));
  }
  return loss;
}

std::vector<Proposal> tbr_refine(const Tensor& encoded_feats, std::vector<Proposal> proposals,
                                 const std::vector<TbrStageParams>& stages, const TbrConfig& cfg) {
  cfg.validate();
  if (stages.empty()) throw ConfigError("tbr_refine: needs at least one stage");
  double video_len = static_cast<double>(encoded_feats.rows());
  for (Proposal& p : proposals) {
    if (!(p.width() > 0.0)) {
      p.valid = false;
      p.score = 0.0;
      continue;
    }
    Proposal cur = p;
    double last_conf = 1.0;
    for (const auto& stage : stages) {
      if (!cur.valid || !(cur.width() > 0.0)) break;
      Graph g;
      auto feats = g.leaf(encoded_feats);
      auto fwd = tbr_stage_forward(g, feats, cur, stage, cfg, video_len);
      last_conf = g.value(fwd.conf).item();
      cur = fwd.refined;
    }
    // final score: input score times the last stage's confidence
    cur.score = cur.valid ? p.score * last_conf : 0.0;
    p = cur;
  }
  return proposals;
}

}  // namespace tal
