#include "tal/cas_mgfn.hpp"

#include <algorithm>
#include <cmath>

#include "tal/errors.hpp"

namespace tal {

void MdcmConfig::validate() const {
  if (in_channels == 0) throw ConfigError("mdcm: in_channels must be positive");
  if (width == 0) throw ConfigError("mdcm: width must be positive");
  if (classes == 0) throw ConfigError("mdcm: classes must be positive");
  if (dilation_rates.empty() || dilation_rates.front() != 1)
    throw ConfigError("mdcm: dilation rate list must begin with 1");
  for (int d : dilation_rates)
    if (d < 1) throw ConfigError("mdcm: dilation rates must be >= 1");
}

MdcmParams register_mdcm(ParamStore& store, const std::string& prefix, const MdcmConfig& cfg,
                         Rng& rng) {
  cfg.validate();
  MdcmParams p;
  size_t w = cfg.width, cin = cfg.in_channels, k = cfg.classes;
  p.base_k1 = &store.add_uniform(prefix + "base_k1", {3, cin, w}, 3 * cin, rng);
  p.base_b1 = &store.add_constant(prefix + "base_b1", {w}, 0.0);
  p.base_k2 = &store.add_uniform(prefix + "base_k2", {3, w, w}, 3 * w, rng);
  p.base_b2 = &store.add_constant(prefix + "base_b2", {w}, 0.0);
  for (size_t b = 0; b < cfg.branch_count(); ++b) {
    std::string bp = prefix + "branch" + std::to_string(b) + ".";
    MdcmBranchParams br;
    br.kernel = &store.add_uniform(bp + "kernel", {3, w, w}, 3 * w, rng);
    br.bias = &store.add_constant(bp + "bias", {w}, 0.0);
    br.head_w = &store.add_uniform(bp + "head_w", {w, k}, w, rng);
    br.head_b = &store.add_constant(bp + "head_b", {k}, 0.0);
    p.branches.push_back(br);
  }
  return p;
}

MdcmParams bind_mdcm(ParamStore& store, const std::string& prefix, const MdcmConfig& cfg) {
  MdcmParams p;
  p.base_k1 = &store.at(prefix + "base_k1");
  p.base_b1 = &store.at(prefix + "base_b1");
  p.base_k2 = &store.at(prefix + "base_k2");
  p.base_b2 = &store.at(prefix + "base_b2");
  for (size_t b = 0; b < cfg.branch_count(); ++b) {
    std::string bp = prefix + "branch" + std::to_string(b) + ".";
    MdcmBranchParams br;
    br.kernel = &store.at(bp + "kernel");
    br.bias = &store.at(bp + "bias");
    br.head_w = &store.at(bp + "head_w");
    br.head_b = &store.at(bp + "head_b");
    p.branches.push_back(br);
  }
  return p;
}

Graph::Id fuse_branches(Graph& g, const std::vector<Graph::Id>& branch_cas) {
  if (branch_cas.empty()) throw DimensionError("fuse_branches: no branches");
  const Tensor& h0 = g.value(branch_cas[0]);
  for (Graph::Id id : branch_cas)
    if (!g.value(id).same_shape(h0))
      throw DimensionError("fuse_branches: branch shape mismatch " + g.value(id).shape_str() +
                           " vs " + h0.shape_str());
  if (branch_cas.size() == 1) return branch_cas[0];
  Graph::Id acc = branch_cas[1];
  for (size_t i = 2; i < branch_cas.size(); ++i) acc = g.add(acc, branch_cas[i]);
  double n_d = static_cast<double>(branch_cas.size() - 1);
  return g.add(branch_cas[0], g.scale(acc, 1.0 / n_d));
}

MdcmOut mdcm_forward(Graph& g, Graph::Id feats, const MdcmParams& p, const MdcmConfig& cfg) {
  cfg.validate();
  const size_t T = g.value(feats).rows();
  int max_rate = *std::max_element(cfg.dilation_rates.begin(), cfg.dilation_rates.end());
  if (static_cast<long>(T) < 2L * max_rate + 1)
    throw DegenerateInputError("mdcm_forward: sequence of length " + std::to_string(T) +
                               " is shorter than the largest dilated kernel extent");
  auto b1 = g.relu(g.add_bias(g.conv1d(feats, g.param(*p.base_k1), 1, 1, 1), g.param(*p.base_b1)));
  auto base = g.relu(g.add_bias(g.conv1d(b1, g.param(*p.base_k2), 1, 1, 1), g.param(*p.base_b2)));

  MdcmOut out;
  std::vector<Graph::Id> pooled_feats;
  for (size_t b = 0; b < cfg.branch_count(); ++b) {
    int d = cfg.dilation_rates[b];
    const auto& br = p.branches[b];
    auto x = g.relu(g.add_bias(g.conv1d(base, g.param(*br.kernel), d, 1, d), g.param(*br.bias)));
    // class projection applied position-wise gives the localization sequence
    out.branch_cas.push_back(g.add_bias(g.matmul(x, g.param(*br.head_w)), g.param(*br.head_b)));
    pooled_feats.push_back(g.global_avg_pool(x));
  }
  out.cas = fuse_branches(g, out.branch_cas);
  out.class_logits = g.global_avg_pool(out.cas);
  out.class_scores = g.sigmoid(out.class_logits);
  Graph::Id pooled_acc = pooled_feats[0];
  for (size_t i = 1; i < pooled_feats.size(); ++i) pooled_acc = g.add(pooled_acc, pooled_feats[i]);
  out.pooled = g.scale(pooled_acc, 1.0 / static_cast<double>(pooled_feats.size()));
  return out;
}

Graph::Id classification_loss(Graph& g, Graph::Id class_scores,
                              const std::vector<double>& labels) {
  return g.bce_mean(class_scores, labels);
}

std::vector<uint8_t> oae_mask(const Tensor& cas_logits, const std::vector<int>& gt_classes,
                              double theta) {
  if (theta <= 0.0 || theta > 1.0) throw ConfigError("oae_mask: theta must be in (0,1]");
  size_t T = cas_logits.rows(), K = cas_logits.cols();
  std::vector<uint8_t> mask(T, 0);
  for (int k : gt_classes) {
    if (k < 0 || static_cast<size_t>(k) >= K) throw ConfigError("oae_mask: class id out of range");
    double mx = -std::numeric_limits<double>::infinity();
    std::vector<double> norm(T);
    for (size_t t = 0; t < T; ++t) {
      norm[t] = 1.0 / (1.0 + std::exp(-cas_logits.at2(t, static_cast<size_t>(k))));
      mx = std::max(mx, norm[t]);
    }
    for (size_t t = 0; t < T; ++t)
      if (norm[t] >= theta * mx) mask[t] = 1;
  }
  return mask;
}

Graph::Id oae_erase(Graph& g, Graph::Id feats, const Tensor& cas_logits,
                    const std::vector<int>& gt_classes, double theta) {
  return g.zero_rows(feats, oae_mask(cas_logits, gt_classes, theta));
}

CascadeOut cascade_forward(Graph& g, Graph::Id feats, const MdcmParams& stage1,
                           const MdcmParams& stage2, const MdcmConfig& cfg,
                           const std::vector<int>& gt_classes, double theta) {
  CascadeOut out;
  out.stage1 = mdcm_forward(g, feats, stage1, cfg);
  auto erased = oae_erase(g, feats, g.value(out.stage1.cas), gt_classes, theta);
  out.stage2 = mdcm_forward(g, erased, stage2, cfg);
  out.cas = g.max2(out.stage1.cas, out.stage2.cas);
  return out;
}

std::vector<Detection> threshold_detect(const Tensor& cas_norm, const std::string& video_id,
                                        const std::vector<std::pair<int, double>>& class_scores,
                                        double theta, double min_len) {
  size_t T = cas_norm.rows();
  std::vector<Detection> dets;
  for (const auto& [k, cls_score] : class_scores) {
    double mx = 0.0;
    for (size_t t = 0; t < T; ++t) mx = std::max(mx, cas_norm.at2(t, static_cast<size_t>(k)));
    if (mx <= 0.0) continue;
    double cut = theta * mx;
    size_t t = 0;
    while (t < T) {
      if (cas_norm.at2(t, static_cast<size_t>(k)) < cut) {
        ++t;
        continue;
      }
      size_t start = t;
      double acc = 0.0;
      while (t < T && cas_norm.at2(t, static_cast<size_t>(k)) >= cut) {
        acc += cas_norm.at2(t, static_cast<size_t>(k));
        ++t;
      }
      double len = static_cast<double>(t - start);
      if (len >= min_len)
        dets.push_back({video_id, k, static_cast<double>(start), static_cast<double>(t),
                        (acc / len) * cls_score});
    }
  }
  return dets;
}

}  // namespace tal
