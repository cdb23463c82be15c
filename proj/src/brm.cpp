#include "tal/brm.hpp"

#include <algorithm>
#include <cmath>

#include "tal/errors.hpp"

namespace tal {

void BrmConfig::validate() const {
  if (in_channels == 0) throw ConfigError("brm: in_channels must be positive");
  if (width == 0) throw ConfigError("brm: width must be positive");
  if (scales.empty()) throw ConfigError("brm: anchor scale list must not be empty");
  for (double s : scales)
    if (s <= 0.0) throw ConfigError("brm: anchor scales must be positive");
  if (gamma < 0.0) throw ConfigError("brm: inflation ratio must be >= 0");
  if (min_len <= 0.0) throw ConfigError("brm: min_len must be positive");
}

BrmParams register_brm(ParamStore& store, const std::string& prefix, const BrmConfig& cfg,
                       Rng& rng) {
  cfg.validate();
  BrmParams p;
  size_t w = cfg.width, cin = cfg.in_channels, m2 = 2 * cfg.num_scales();
  p.k1 = &store.add_uniform(prefix + "k1", {3, cin, w}, 3 * cin, rng);
  p.b1 = &store.add_constant(prefix + "b1", {w}, 0.0);
  p.k2 = &store.add_uniform(prefix + "k2", {3, w, w}, 3 * w, rng);
  p.b2 = &store.add_constant(prefix + "b2", {w}, 0.0);
  p.k3 = &store.add_uniform(prefix + "k3", {3, w, w}, 3 * w, rng);
  p.b3 = &store.add_constant(prefix + "b3", {w}, 0.0);
  p.pred_k = &store.add_uniform(prefix + "pred_k", {3, w, m2}, 3 * w, rng);
  p.pred_b = &store.add_constant(prefix + "pred_b", {m2}, 0.0);
  return p;
}

BrmParams bind_brm(ParamStore& store, const std::string& prefix) {
  BrmParams p;
  p.k1 = &store.at(prefix + "k1");
  p.b1 = &store.at(prefix + "b1");
  p.k2 = &store.at(prefix + "k2");
  p.b2 = &store.at(prefix + "b2");
  p.k3 = &store.at(prefix + "k3");
  p.b3 = &store.at(prefix + "b3");
  p.pred_k = &store.at(prefix + "pred_k");
  p.pred_b = &store.at(prefix + "pred_b");
  return p;
}

std::vector<Anchor> generate_anchors(size_t t_out, const std::vector<double>& scales) {
  if (scales.empty()) throw ConfigError("generate_anchors: empty scale list");
  for (double s : scales)
    if (s <= 0.0) throw ConfigError("generate_anchors: scales must be positive");
  std::vector<Anchor> anchors;
  anchors.reserve(t_out * scales.size());
  for (size_t t = 0; t < t_out; ++t)
    for (double s : scales) anchors.push_back({static_cast<double>(t) + 0.5, s});
  return anchors;
}

void decode_anchor(const Anchor& a, double p_x, double p_w, double& s, double& e) {
  double r_x = a.t_x + a.t_w * p_x;
  double r_w = a.t_w * std::exp(p_w);
  s = r_x - 0.5 * r_w;
  e = r_x + 0.5 * r_w;
}

void inflate(double s, double e, double gamma, double& outer_s, double& outer_e) {
  if (gamma < 0.0) throw ConfigError("inflate: gamma must be >= 0");
  double r_w = e - s;
  if (!(r_w > 0.0)) throw DegenerateInputError("inflate: degenerate inner segment");
  outer_s = s - r_w * gamma;
  outer_e = e + r_w * gamma;
}

Graph::Id brm_grid(Graph& g, Graph::Id feats, const BrmParams& p, const BrmConfig& cfg) {
  cfg.validate();
  auto h1 = g.relu(g.add_bias(g.conv1d(feats, g.param(*p.k1), 1, 1, 1), g.param(*p.b1)));
  auto h2 = g.relu(g.add_bias(g.conv1d(h1, g.param(*p.k2), 1, 1, 1), g.param(*p.b2)));
  auto h3 = g.relu(g.add_bias(g.conv1d(h2, g.param(*p.k3), 1, 1, 1), g.param(*p.b3)));
  return g.add_bias(g.conv1d(h3, g.param(*p.pred_k), 1, 1, 1), g.param(*p.pred_b));
}

namespace {

struct DecodedAnchor {
  Graph::Id s, e, outer_s, outer_e;  // tape scalars
  double sv, ev;                     // detached values
};

DecodedAnchor decode_on_tape(Graph& g, const Anchor& a, Graph::Id px, Graph::Id pw, double gamma) {
  DecodedAnchor d;
  auto r_x = g.add_scalar(g.scale(px, a.t_w), a.t_x);
  auto r_w = g.scale(g.exp(pw), a.t_w);
  auto half = g.scale(r_w, 0.5);
  d.s = g.sub(r_x, half);
  d.e = g.add(r_x, half);
  auto margin = g.scale(r_w, gamma);
  d.outer_s = g.sub(d.s, margin);
  d.outer_e = g.add(d.e, margin);
  d.sv = g.value(d.s).item();
  d.ev = g.value(d.e).item();
  return d;
}

bool keep_rule(double s, double e, double t_len, double min_len) {
  return (e - s) >= min_len && s >= 0.0 && e <= t_len;
}

// mean activation of the (clamped) interval [a, b] with fractional bins
double interval_mean(const Tensor& cas_norm, size_t col, double a, double b) {
  size_t T = cas_norm.rows();
  double wsum = 0.0, len = 0.0;
  long t0 = std::max(0L, static_cast<long>(std::floor(a)));
  long t1 = std::min(static_cast<long>(T) - 1, static_cast<long>(std::ceil(b)) - 1);
  for (long t = t0; t <= t1; ++t) {
    double w = std::min(b, static_cast<double>(t + 1)) - std::max(a, static_cast<double>(t));
    if (w <= 0.0) continue;
    wsum += w * cas_norm.at2(static_cast<size_t>(t), col);
    len += w;
  }
  return len > 0.0 ? wsum / len : 0.0;
}

}  // namespace

BrmTrainResult brm_oic_loss(Graph& g, Graph::Id grid, Graph::Id cas_norm,
                            const std::vector<int>& gt_classes, const BrmConfig& cfg, bool warmup,
                            const std::vector<std::pair<size_t, size_t>>* kept_override) {
  const Tensor& grid_t = g.value(grid);
  size_t T = grid_t.rows();
  size_t m = cfg.num_scales();
  if (grid_t.cols() != 2 * m)
    throw DimensionError("brm_oic_loss: grid must have 2M channels, got " + grid_t.shape_str());
  double t_len = static_cast<double>(g.value(cas_norm).rows());
  auto anchors = generate_anchors(T, cfg.scales);

  BrmTrainResult res;
  res.loss = g.constant(0.0);
  std::vector<Graph::Id> class_terms;
  for (size_t ci = 0; ci < gt_classes.size(); ++ci) {
    int k = gt_classes[ci];
    auto cas_k = g.slice_cols(cas_norm, static_cast<size_t>(k), static_cast<size_t>(k) + 1);
    std::vector<Graph::Id> oic_terms;
    for (size_t ai = 0; ai < anchors.size(); ++ai) {
      if (kept_override) {
        bool listed = false;
        for (const auto& [c, a] : *kept_override)
          if (c == ci && a == ai) listed = true;
        if (!listed) continue;
      }
      size_t cell = ai / m, scale_i = ai % m;
      auto px = g.at(grid, cell * 2 * m + 2 * scale_i);
      auto pw = g.at(grid, cell * 2 * m + 2 * scale_i + 1);
      auto d = decode_on_tape(g, anchors[ai], px, pw, cfg.gamma);
      if (!kept_override && !keep_rule(d.sv, d.ev, t_len, cfg.min_len)) continue;
      auto term = g.oic(cas_k, d.s, d.e, d.outer_s, d.outer_e, cfg.full_interval_outer);
      if (!kept_override && !warmup && g.value(term).item() > cfg.oic_keep_max) continue;
      oic_terms.push_back(term);
      res.kept.emplace_back(ci, ai);
    }
    if (oic_terms.empty()) continue;
    Graph::Id acc = oic_terms[0];
    for (size_t i = 1; i < oic_terms.size(); ++i) acc = g.add(acc, oic_terms[i]);
    class_terms.push_back(g.scale(acc, 1.0 / static_cast<double>(oic_terms.size())));
    res.anchors_in_loss += oic_terms.size();
  }
  for (Graph::Id t : class_terms) res.loss = g.add(res.loss, t);
  return res;
}

std::vector<Detection> brm_detect(Graph& g, Graph::Id grid, Graph::Id cas_norm,
                                  const std::vector<std::pair<int, double>>& class_scores,
                                  const BrmConfig& cfg, const std::string& video_id) {
  // copies: creating nodes below may relocate the graph's value storage
  const Tensor grid_t = g.value(grid);
  const Tensor cas_t = g.value(cas_norm);
  size_t T = grid_t.rows();
  size_t m = cfg.num_scales();
  double t_len = static_cast<double>(cas_t.rows());
  auto anchors = generate_anchors(T, cfg.scales);

  std::vector<Detection> dets;
  for (const auto& [k, cls_score] : class_scores) {
    auto cas_k = g.slice_cols(cas_norm, static_cast<size_t>(k), static_cast<size_t>(k) + 1);
    for (size_t ai = 0; ai < anchors.size(); ++ai) {
      size_t cell = ai / m, scale_i = ai % m;
      double px = grid_t.at2(cell, 2 * scale_i);
      double pw = grid_t.at2(cell, 2 * scale_i + 1);
      double s, e;
      decode_anchor(anchors[ai], px, pw, s, e);
      if (!keep_rule(s, e, t_len, cfg.min_len)) continue;
      double outer_s, outer_e;
      inflate(s, e, cfg.gamma, outer_s, outer_e);
      auto oic_term =
          g.oic(cas_k, g.constant(s), g.constant(e), g.constant(outer_s), g.constant(outer_e),
                cfg.full_interval_outer);
      if (g.value(oic_term).item() > cfg.oic_keep_max) continue;  // negative-contrast filter
      double score = interval_mean(cas_t, static_cast<size_t>(k), s, e) * cls_score;
      dets.push_back({video_id, k, std::clamp(s, 0.0, t_len), std::clamp(e, 0.0, t_len), score});
    }
  }
  return dets;
}

}  // namespace tal
