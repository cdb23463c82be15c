#include "tal/train.hpp"

#include <algorithm>
#include <cmath>

#include "tal/checkpoint.hpp"
#include "tal/errors.hpp"
#include "tal/eval.hpp"
#include "tal/rng.hpp"
#include "tal/transfer.hpp"

namespace tal {

LoadedDataset load_dataset(const std::filesystem::path& dir, const std::string& kind) {
  LoadedDataset ds;
  std::filesystem::path ann_file;
  std::filesystem::path feat_dir;
  if (kind == "full") {
    ann_file = dir / "annotations.json";
    feat_dir = dir / "features";
  } else if (kind == "weak") {
    ann_file = dir / "weak_annotations.json";
    feat_dir = dir / "features";
  } else if (kind == "clips") {
    ann_file = dir / "clips_annotations.json";
    feat_dir = dir / "clips";
  } else {
    throw ConfigError("load_dataset: unknown kind " + kind);
  }
  ds.ann = load_annotations(ann_file);
  for (const auto& v : ds.ann.videos)
    ds.features.emplace(v.id, load_features(feat_dir / (v.id + ".feat")).tensor());
  return ds;
}

static std::vector<double> multi_hot(const std::vector<int>& labels, size_t k) {
  std::vector<double> v(k, 0.0);
  for (int c : labels) v[static_cast<size_t>(c)] = 1.0;
  return v;
}

// ---------------------------------------------------------------------------
// TCANet
// ---------------------------------------------------------------------------

std::unique_ptr<TcanetModel> build_tcanet(const RunConfig& cfg_in) {
  auto m = std::make_unique<TcanetModel>();
  m->cfg = cfg_in;
  m->cfg.finalize();
  Rng rng(m->cfg.seed);
  m->lgte_layers = register_lgte_stack(m->store, m->cfg.lgte, rng);
  m->tbr_stages = register_tbr_stages(m->store, m->cfg.channels, m->cfg.tbr, rng);
  return m;
}

void save_model(const TcanetModel& m, const std::filesystem::path& path) {
  save_checkpoint(path, m.store);
}

void load_model(TcanetModel& m, const std::filesystem::path& path) {
  load_checkpoint(path, m.store);
}

Tensor encode_features(const TcanetModel& m, const Tensor& feats) {
  Graph g;
  auto out = lgte_stack(g, g.leaf(feats), m.lgte_layers, m.cfg.lgte);
  return g.value(out);
}

static Proposal jitter_proposal(const GtInstance& gt, double jitter, double t_len, Rng& rng) {
  double w = gt.e - gt.s;
  for (int attempt = 0; attempt < 16; ++attempt) {
    Proposal p;
    p.video_id = gt.video_id;
    p.s = gt.s + rng.uniform(-jitter, jitter) * w;
    p.e = gt.e + rng.uniform(-jitter, jitter) * w;
    p.s = std::clamp(p.s, 0.0, t_len);
    p.e = std::clamp(p.e, 0.0, t_len);
    if (p.e - p.s > 1.0) return p;
  }
  return {gt.video_id, gt.s, gt.e, 1.0, -1, true};
}

static std::optional<GtInstance> best_match(const Proposal& p, const std::vector<GtInstance>& gts,
                                            double min_tiou) {
  double best = 0.0;
  const GtInstance* arg = nullptr;
  for (const auto& g : gts) {
    double v = tiou(p.s, p.e, g.s, g.e);
    if (v > best) {
      best = v;
      arg = &g;
    }
  }
  if (arg && best >= min_tiou) return *arg;
  return std::nullopt;
}

TrainStats train_tcanet(TcanetModel& m, const LoadedDataset& train_set, std::ostream* log) {
  TrainStats stats;
  Rng rng(m.cfg.seed + 0x9e3779b9);
  std::vector<const VideoAnnotation*> videos;
  for (const auto& v : train_set.ann.videos)
    if (v.split == "train" && !v.segments.empty()) videos.push_back(&v);
  if (videos.empty()) throw DegenerateInputError("train_tcanet: no annotated training videos");

  for (size_t epoch = 0; epoch < m.cfg.train.epochs; ++epoch) {
    rng.shuffle(videos);
    double epoch_loss = 0.0;
    size_t counted = 0;
    for (const auto* v : videos) {
      const Tensor& feats = train_set.features.at(v->id);
      double t_len = static_cast<double>(feats.rows());
      Graph g;
      auto encoded = lgte_stack(g, g.leaf(feats), m.lgte_layers, m.cfg.lgte);
      Graph::Id total = g.constant(0.0);
      size_t terms = 0;
      for (const auto& gt : v->segments) {
        for (size_t j = 0; j < m.cfg.train.jitters_per_gt; ++j) {
          Proposal cur = jitter_proposal(gt, m.cfg.train.jitter, t_len, rng);
          for (const auto& stage : m.tbr_stages) {
            if (!(cur.width() > 0.0) || !cur.valid) break;
            auto fwd = tbr_stage_forward(g, encoded, cur, stage, m.cfg.tbr, t_len);
            auto matched = best_match(cur, v->segments, m.cfg.tbr.match_tiou);
            total = g.add(total, tbr_loss(g, fwd, cur, matched, t_len));
            ++terms;
            cur = fwd.refined;  // next stage consumes values only
          }
        }
      }
      if (terms == 0) continue;
      total = g.scale(total, 1.0 / static_cast<double>(terms));
      m.store.zero_grads();
      g.backward(total);
      m.store.clip_grads(m.cfg.train.clip_norm);
      m.store.sgd_step(m.cfg.train.lr);
      epoch_loss += g.value(total).item();
      ++counted;
    }
    stats.epoch_losses.push_back(epoch_loss / std::max<size_t>(1, counted));
    if (log)
      (*log) << "tcanet epoch " << epoch << " loss " << stats.epoch_losses.back() << "\n";
  }
  return stats;
}

std::vector<Proposal> refine_proposals(const TcanetModel& m, const Tensor& feats,
                                       const std::vector<Proposal>& proposals,
                                       size_t stages_used) {
  if (stages_used == 0 || stages_used > m.tbr_stages.size())
    throw ConfigError("refine_proposals: stages_used out of range");
  Tensor encoded = encode_features(m, feats);
  std::vector<TbrStageParams> stages(m.tbr_stages.begin(),
                                     m.tbr_stages.begin() + static_cast<long>(stages_used));
  return tbr_refine(encoded, proposals, stages, m.cfg.tbr);
}

// ---------------------------------------------------------------------------
// MGFN
// ---------------------------------------------------------------------------

std::unique_ptr<MgfnModel> build_mgfn(const RunConfig& cfg_in) {
  auto m = std::make_unique<MgfnModel>();
  m->cfg = cfg_in;
  m->cfg.finalize();
  Rng rng(m->cfg.seed);
  m->stage1 = register_mdcm(m->store, "mgfn.stage1.", m->cfg.mdcm, rng);
  m->stage2 = register_mdcm(m->store, "mgfn.stage2.", m->cfg.mdcm, rng);
  m->brm = register_brm(m->store, "mgfn.brm.", m->cfg.brm, rng);
  Rng src_rng(m->cfg.seed + 1);
  m->src_stage1 = register_mdcm(m->source_store, "mgfn.src.stage1.", m->cfg.mdcm, src_rng);
  m->src_stage2 = register_mdcm(m->source_store, "mgfn.src.stage2.", m->cfg.mdcm, src_rng);
  return m;
}

void save_model(const MgfnModel& m, const std::filesystem::path& path) {
  save_checkpoint(path, m.store);
  save_checkpoint(path.string() + ".source", m.source_store);
}

void load_model(MgfnModel& m, const std::filesystem::path& path) {
  load_checkpoint(path, m.store);
  auto src = std::filesystem::path(path.string() + ".source");
  if (std::filesystem::exists(src)) load_checkpoint(src, m.source_store);
}

std::vector<std::pair<int, double>> select_classes(const Tensor& class_scores,
                                                   const DetectConfig& dc) {
  std::vector<std::pair<int, double>> ranked;
  for (size_t k = 0; k < class_scores.numel(); ++k)
    ranked.emplace_back(static_cast<int>(k), class_scores.data[k]);
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  std::vector<std::pair<int, double>> out;
  if (ranked.empty()) return out;
  double best = ranked[0].second;
  for (const auto& [k, s] : ranked) {
    if (out.size() >= dc.max_classes) break;
    if (s < dc.class_score_min || s < dc.class_rel * best) break;
    out.emplace_back(k, s);
  }
  return out;
}

namespace {

struct MgfnForward {
  MdcmOut stage1;
  MdcmOut stage2;  // valid only when cascade ran
  bool has_stage2 = false;
  Graph::Id cas;  // logits
};

// gt_or_selected: classes driving the erase step (labels in training,
// predicted classes at inference).
MgfnForward mgfn_forward(Graph& g, Graph::Id feats, const MgfnModel& m, bool use_source_branch,
                         const std::vector<int>& gt_or_selected) {
  const MdcmParams& s1 = use_source_branch ? m.src_stage1 : m.stage1;
  const MdcmParams& s2 = use_source_branch ? m.src_stage2 : m.stage2;
  MgfnForward out;
  out.stage1 = mdcm_forward(g, feats, s1, m.cfg.mdcm);
  if (m.cfg.cascade) {
    auto erased = oae_erase(g, feats, g.value(out.stage1.cas), gt_or_selected, m.cfg.oae_theta);
    out.stage2 = mdcm_forward(g, erased, s2, m.cfg.mdcm);
    out.cas = g.max2(out.stage1.cas, out.stage2.cas);
    out.has_stage2 = true;
  } else {
    out.cas = out.stage1.cas;
  }
  return out;
}

}  // namespace

TrainStats train_mgfn(MgfnModel& m, const LoadedDataset& weak_train, const LoadedDataset& clips,
                      std::ostream* log) {
  TrainStats stats;
  const RunConfig& cfg = m.cfg;
  size_t K = cfg.mdcm.classes;
  Rng rng(cfg.seed + 0x51ed2701);

  int max_rate = *std::max_element(cfg.mdcm.dilation_rates.begin(), cfg.mdcm.dilation_rates.end());
  long min_t = 2L * max_rate + 1;

  // phase A: trimmed source branch to convergence, then frozen
  std::vector<const VideoAnnotation*> clip_videos;
  for (const auto& v : clips.ann.videos)
    if (v.split == "train" &&
        static_cast<long>(clips.features.at(v.id).rows()) >= min_t)
      clip_videos.push_back(&v);
  if (cfg.transfer) {
    if (clip_videos.empty())
      throw DegenerateInputError("train_mgfn: transfer enabled but no usable trimmed clips");
    for (size_t epoch = 0; epoch < cfg.train.source_epochs; ++epoch) {
      rng.shuffle(clip_videos);
      double epoch_loss = 0.0;
      for (size_t i = 0; i < clip_videos.size(); i += cfg.train.batch) {
        Graph g;
        Graph::Id total = g.constant(0.0);
        size_t n = 0;
        for (size_t b = i; b < std::min(clip_videos.size(), i + cfg.train.batch); ++b) {
          const auto* v = clip_videos[b];
          auto fwd = mgfn_forward(g, g.leaf(clips.features.at(v->id)), m, true, v->labels);
          total = g.add(total, classification_loss(g, fwd.stage1.class_scores,
                                                   multi_hot(v->labels, K)));
          if (fwd.has_stage2)
            total = g.add(total, classification_loss(g, fwd.stage2.class_scores,
                                                     multi_hot(v->labels, K)));
          ++n;
        }
        if (n == 0) continue;
        total = g.scale(total, 1.0 / static_cast<double>(n));
        m.source_store.zero_grads();
        g.backward(total);
        m.source_store.clip_grads(cfg.train.clip_norm);
        m.source_store.sgd_step(cfg.train.lr);
        epoch_loss += g.value(total).item();
      }
      if (log) (*log) << "mgfn source epoch " << epoch << " loss " << epoch_loss << "\n";
    }
  }

  // phase B: untrimmed target branch
  std::vector<const VideoAnnotation*> videos;
  for (const auto& v : weak_train.ann.videos)
    if (v.split == "train") videos.push_back(&v);
  if (videos.empty()) throw DegenerateInputError("train_mgfn: no weak training videos");

  for (size_t epoch = 0; epoch < cfg.train.epochs; ++epoch) {
    bool warmup = epoch < cfg.train.warmup_epochs;
    rng.shuffle(videos);
    double epoch_loss = 0.0;
    size_t steps = 0;
    for (size_t i = 0; i < videos.size(); i += cfg.train.batch) {
      Graph g;
      Graph::Id total = g.constant(0.0);
      std::vector<Graph::Id> target_pooled_rows;
      size_t n = 0;
      for (size_t b = i; b < std::min(videos.size(), i + cfg.train.batch); ++b) {
        const auto* v = videos[b];
        const Tensor& feats = weak_train.features.at(v->id);
        if (static_cast<long>(feats.rows()) < min_t) continue;
        auto fid = g.leaf(feats);
        auto fwd = mgfn_forward(g, fid, m, false, v->labels);
        auto labels = multi_hot(v->labels, K);
        total = g.add(total, classification_loss(g, fwd.stage1.class_scores, labels));
        if (fwd.has_stage2)
          total = g.add(total, classification_loss(g, fwd.stage2.class_scores, labels));
        if (cfg.use_brm && !v->labels.empty()) {
          Graph::Id cas_norm;
          if (cfg.train.detach_cas_in_oic)
            cas_norm = g.sigmoid(g.leaf(g.value(fwd.cas)));  // stop-gradient copy
          else
            cas_norm = g.sigmoid(fwd.cas);
          auto grid = brm_grid(g, fid, m.brm, cfg.brm);
          auto r = brm_oic_loss(g, grid, cas_norm, v->labels, cfg.brm, warmup);
          if (r.anchors_in_loss > 0)
            total = g.add(total, g.scale(r.loss, cfg.train.lambda_oic));
        }
        target_pooled_rows.push_back(g.as_row(fwd.stage1.pooled));
        ++n;
      }
      if (n == 0) continue;
      total = g.scale(total, 1.0 / static_cast<double>(n));

      if (cfg.transfer && !target_pooled_rows.empty()) {
        // source pooled features from a frozen pass over a clip batch
        Tensor source_pooled({target_pooled_rows.size(), cfg.mdcm.width});
        {
          Graph gs;
          for (size_t r = 0; r < target_pooled_rows.size(); ++r) {
            const auto* cv = clip_videos[static_cast<size_t>(
                rng.uniform_int(0, static_cast<int64_t>(clip_videos.size()) - 1))];
            auto sf = mgfn_forward(gs, gs.leaf(clips.features.at(cv->id)), m, true, cv->labels);
            const Tensor& pooled = gs.value(sf.stage1.pooled);
            for (size_t c = 0; c < cfg.mdcm.width; ++c) source_pooled.at2(r, c) = pooled.data[c];
          }
        }
        auto target_pooled = g.concat_rows(target_pooled_rows);
        auto bw = median_bandwidths(source_pooled, g.value(target_pooled));
        total = transfer_loss(g, total, source_pooled, target_pooled, cfg.train.lambda_mmd, bw);
      }

      m.store.zero_grads();
      g.backward(total);
      m.store.clip_grads(cfg.train.clip_norm);
      m.store.sgd_step(cfg.train.lr);
      epoch_loss += g.value(total).item();
      ++steps;
    }
    stats.epoch_losses.push_back(epoch_loss / std::max<size_t>(1, steps));
    if (log) (*log) << "mgfn epoch " << epoch << " loss " << stats.epoch_losses.back() << "\n";
  }
  return stats;
}

std::vector<Detection> mgfn_localize(const MgfnModel& m, const Tensor& feats,
                                     const std::string& video_id) {
  const RunConfig& cfg = m.cfg;
  Graph g;
  auto fid = g.leaf(feats);
  auto s1 = mdcm_forward(g, fid, m.stage1, cfg.mdcm);
  auto selected = select_classes(g.value(s1.class_scores), cfg.detect);
  if (selected.empty()) return {};
  std::vector<int> sel_ids;
  for (const auto& [k, s] : selected) sel_ids.push_back(k);

  Graph::Id cas = s1.cas;
  if (cfg.cascade) {
    auto erased = oae_erase(g, fid, g.value(s1.cas), sel_ids, cfg.oae_theta);
    auto s2 = mdcm_forward(g, erased, m.stage2, cfg.mdcm);
    cas = g.max2(s1.cas, s2.cas);
  }
  auto cas_norm = g.sigmoid(cas);

  std::vector<Detection> dets;
  if (cfg.use_brm) {
    auto grid = brm_grid(g, fid, m.brm, cfg.brm);
    dets = brm_detect(g, grid, cas_norm, selected, cfg.brm, video_id);
  } else {
    dets = threshold_detect(g.value(cas_norm), video_id, selected, cfg.detect.theta_det,
                            cfg.detect.min_len);
  }
  return nms(std::move(dets), cfg.detect.nms_tiou);
}

CasVariants export_cas_variants(const MgfnModel& m, const Tensor& feats) {
  const RunConfig& cfg = m.cfg;
  Graph g;
  auto fid = g.leaf(feats);
  auto s1 = mdcm_forward(g, fid, m.stage1, cfg.mdcm);
  auto selected = select_classes(g.value(s1.class_scores), cfg.detect);
  std::vector<int> sel_ids;
  for (const auto& [k, s] : selected) sel_ids.push_back(k);
  auto erased = oae_erase(g, fid, g.value(s1.cas), sel_ids, cfg.oae_theta);
  auto s2 = mdcm_forward(g, erased, m.stage2, cfg.mdcm);
  CasVariants out;
  out.simple = g.value(g.sigmoid(s1.branch_cas[0]));
  out.mdcm = g.value(g.sigmoid(s1.cas));
  out.cascade = g.value(g.sigmoid(g.max2(s1.cas, s2.cas)));
  return out;
}

// ---------------------------------------------------------------------------
// gradient oracle over every trainable module
// ---------------------------------------------------------------------------

namespace {

void nudge_biases(ParamStore& ps, Rng& rng) {
  // keep every pre-activation off the exact ReLU kink
  for (auto& [name, p] : ps)
    if (p.value.rank() == 1 && (name.find("bias") != std::string::npos ||
                                name.find("_b") != std::string::npos ||
                                name.rfind(".b") != std::string::npos))
      for (double& v : p.value.data) v = rng.uniform(0.02, 0.08);
}

Tensor random_tensor(std::vector<size_t> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

}  // namespace

std::vector<ModuleCheck> run_all_gradient_checks(uint64_t seed, double eps, double rtol) {
  std::vector<ModuleCheck> out;
  Rng data_rng(seed ^ 0xabcdef);

  {  // two stacked encoder layers
    LgteConfig cfg;
    cfg.channels = 8;
    cfg.groups = 2;
    cfg.local_groups = 1;
    cfg.window = 3;
    cfg.ffn_hidden = 12;
    cfg.layers = 2;
    ParamStore ps;
    Rng rng(seed);
    auto layers = register_lgte_stack(ps, cfg, rng);
    Tensor x = random_tensor({6, 8}, data_rng);
    auto f = [&](ParamStore&) {
      Graph g;
      auto y = lgte_stack(g, g.leaf(x), layers, cfg);
      auto loss = g.sum(g.mul(y, y));
      g.backward(loss);
      return g.value(loss).item();
    };
    out.push_back({"lgte_stack", check_gradients(f, ps, eps, rtol)});
  }

  {  // boundary refinement stage
    TbrConfig cfg;
    cfg.hidden = 5;
    ParamStore ps;
    Rng rng(seed + 1);
    auto sp = register_tbr_stage(ps, "tbr.stage0.", 4, cfg, rng);
    nudge_biases(ps, rng);
    Tensor feats = random_tensor({20, 4}, data_rng);
    Proposal p{"v", 5.0, 13.0, 1.0, -1, true};
    GtInstance gt{"v", 0, 6.0, 12.0};
    double frozen_target;
    {
      Graph g;
      auto fwd = tbr_stage_forward(g, g.leaf(feats), p, sp, cfg, 20.0);
      frozen_target = tiou(fwd.refined.s, fwd.refined.e, gt.s, gt.e);
    }
    auto f = [&](ParamStore&) {
      Graph g;
      auto fwd = tbr_stage_forward(g, g.leaf(feats), p, sp, cfg, 20.0);
      auto loss = tbr_loss(g, fwd, p, gt, 20.0, frozen_target);
      g.backward(loss);
      return g.value(loss).item();
    };
    out.push_back({"tbr", check_gradients(f, ps, eps, rtol)});
  }

  {  // multi-dilated classifier
    MdcmConfig cfg;
    cfg.in_channels = 4;
    cfg.width = 5;
    cfg.classes = 3;
    cfg.dilation_rates = {1, 2};
    ParamStore ps;
    Rng rng(seed + 2);
    auto params = register_mdcm(ps, "mdcm.", cfg, rng);
    nudge_biases(ps, rng);
    Tensor feats = random_tensor({12, 4}, data_rng);
    auto f = [&](ParamStore&) {
      Graph g;
      auto fwd = mdcm_forward(g, g.leaf(feats), params, cfg);
      auto loss = classification_loss(g, fwd.class_scores, {1, 0, 1});
      g.backward(loss);
      return g.value(loss).item();
    };
    out.push_back({"mdcm", check_gradients(f, ps, eps, rtol)});
  }

  {  // two-stage cascade with a frozen erase mask
    MdcmConfig cfg;
    cfg.in_channels = 3;
    cfg.width = 4;
    cfg.classes = 2;
    cfg.dilation_rates = {1, 2};
    ParamStore ps;
    Rng rng(seed + 3);
    auto s1 = register_mdcm(ps, "s1.", cfg, rng);
    auto s2 = register_mdcm(ps, "s2.", cfg, rng);
    nudge_biases(ps, rng);
    Tensor feats = random_tensor({10, 3}, data_rng);
    std::vector<uint8_t> mask;
    {
      Graph g;
      auto o1 = mdcm_forward(g, g.leaf(feats), s1, cfg);
      mask = oae_mask(g.value(o1.cas), {0}, 0.5);
    }
    auto f = [&](ParamStore&) {
      Graph g;
      auto fid = g.leaf(feats);
      auto o1 = mdcm_forward(g, fid, s1, cfg);
      auto o2 = mdcm_forward(g, g.zero_rows(fid, mask), s2, cfg);
      auto cas = g.max2(o1.cas, o2.cas);
      auto loss = g.add(classification_loss(g, o1.class_scores, {1, 0}),
                        classification_loss(g, o2.class_scores, {1, 0}));
      loss = g.add(loss, g.scale(g.sum(g.mul(cas, cas)), 0.01));
      g.backward(loss);
      return g.value(loss).item();
    };
    out.push_back({"cascade", check_gradients(f, ps, eps, rtol)});
  }

  {  // boundary regression with soft-bin outer-inner contrast
    BrmConfig cfg;
    cfg.in_channels = 3;
    cfg.width = 4;
    cfg.scales = {3, 6};
    ParamStore ps;
    Rng rng(seed + 4);
    auto params = register_brm(ps, "brm.", cfg, rng);
    nudge_biases(ps, rng);
    Tensor feats = random_tensor({14, 3}, data_rng);
    Tensor cas({14, 2});
    for (double& v : cas.data) v = data_rng.uniform(0.05, 0.95);
    std::vector<std::pair<size_t, size_t>> kept;
    {
      Graph g;
      auto grid = brm_grid(g, g.leaf(feats), params, cfg);
      kept = brm_oic_loss(g, grid, g.leaf(cas), {1}, cfg, true).kept;
    }
    auto f = [&](ParamStore&) {
      Graph g;
      auto grid = brm_grid(g, g.leaf(feats), params, cfg);
      auto r = brm_oic_loss(g, grid, g.leaf(cas), {1}, cfg, true, &kept);
      g.backward(r.loss);
      return g.value(r.loss).item();
    };
    out.push_back({"brm_oic", check_gradients(f, ps, eps, rtol)});
  }

  {  // kernel distance between branch features
    ParamStore ps;
    Rng rng(seed + 5);
    ps.add_uniform("x", {4, 5}, 1, rng);
    Tensor y = random_tensor({5, 5}, data_rng, 0.2, 1.2);
    auto f = [&](ParamStore& p) {
      Graph g;
      auto v = mmd(g, g.param(p.at("x")), g.leaf(y), {0.7, 1.4});
      g.backward(v);
      return g.value(v).item();
    };
    out.push_back({"mmd", check_gradients(f, ps, eps, rtol)});
  }

  return out;
}

}  // namespace tal
