#include "tal/config.hpp"

#include <fstream>

#include <json.hpp>

#include "tal/errors.hpp"
#include "tal/eval.hpp"

namespace tal {

using json = nlohmann::ordered_json;

RunConfig::RunConfig() {
  eval_thresholds = default_tiou_grid();
  // widths per the stated conventions; desk-scale runs override via JSON
  mdcm.width = 256;
  brm.width = 128;
  tbr.hidden = 128;
}

void RunConfig::finalize() {
  if (channels == 0) throw ConfigError("config: channels must be positive");
  lgte.channels = channels;
  if (lgte.ffn_hidden == 0) lgte.ffn_hidden = 2 * channels;
  mdcm.in_channels = channels;
  mdcm.classes = synth.classes;
  brm.in_channels = channels;
  synth.channels = channels;
  lgte.validate();
  tbr.validate();
  mdcm.validate();
  brm.validate();
  synth.validate();
  if (oae_theta <= 0.0 || oae_theta > 1.0) throw ConfigError("config: oae_theta must be in (0,1]");
  if (eval_thresholds.empty()) throw ConfigError("config: eval_thresholds empty");
  for (double t : eval_thresholds)
    if (t <= 0.0 || t >= 1.0) throw ConfigError("config: eval thresholds must be in (0,1)");
  if (train.lr <= 0.0 || train.epochs == 0) throw ConfigError("config: bad training schedule");
  if (train.lambda_mmd < 0.0 || train.lambda_oic < 0.0) throw ConfigError("config: negative loss weight");
  if (detect.nms_tiou <= 0.0 || detect.nms_tiou >= 1.0) throw ConfigError("config: nms_tiou");
}

std::string config_to_json(const RunConfig& cfg) {
  json j;
  j["seed"] = cfg.seed;
  j["channels"] = cfg.channels;
  j["lgte"] = {{"groups", cfg.lgte.groups},
               {"local_groups", cfg.lgte.local_groups},
               {"window", cfg.lgte.window},
               {"ffn_hidden", cfg.lgte.ffn_hidden},
               {"layers", cfg.lgte.layers},
               {"mask_padding", cfg.lgte.mask_padding},
               {"literal_global_scale", cfg.lgte.literal_global_scale}};
  j["tbr"] = {{"stages", cfg.tbr.stages},
              {"tau", cfg.tbr.tau},
              {"hidden", cfg.tbr.hidden},
              {"match_tiou", cfg.tbr.match_tiou}};
  j["mdcm"] = {{"width", cfg.mdcm.width}, {"dilation_rates", cfg.mdcm.dilation_rates}};
  j["brm"] = {{"width", cfg.brm.width},
              {"scales", cfg.brm.scales},
              {"gamma", cfg.brm.gamma},
              {"min_len", cfg.brm.min_len},
              {"oic_keep_max", cfg.brm.oic_keep_max},
              {"full_interval_outer", cfg.brm.full_interval_outer}};
  j["oae_theta"] = cfg.oae_theta;
  j["cascade"] = cfg.cascade;
  j["transfer"] = cfg.transfer;
  j["use_brm"] = cfg.use_brm;
  j["eval_thresholds"] = cfg.eval_thresholds;
  j["train"] = {{"lr", cfg.train.lr},
                {"epochs", cfg.train.epochs},
                {"clip_norm", cfg.train.clip_norm},
                {"batch", cfg.train.batch},
                {"source_epochs", cfg.train.source_epochs},
                {"jitter", cfg.train.jitter},
                {"jitters_per_gt", cfg.train.jitters_per_gt},
                {"warmup_epochs", cfg.train.warmup_epochs},
                {"lambda_oic", cfg.train.lambda_oic},
                {"lambda_mmd", cfg.train.lambda_mmd},
                {"detach_cas_in_oic", cfg.train.detach_cas_in_oic}};
  j["detect"] = {{"class_score_min", cfg.detect.class_score_min},
                 {"class_rel", cfg.detect.class_rel},
                 {"max_classes", cfg.detect.max_classes},
                 {"theta_det", cfg.detect.theta_det},
                 {"nms_tiou", cfg.detect.nms_tiou},
                 {"min_len", cfg.detect.min_len}};
  j["synth"] = {{"classes", cfg.synth.classes},
                {"videos", cfg.synth.videos},
                {"t_min", cfg.synth.t_min},
                {"t_max", cfg.synth.t_max},
                {"segments_per_video", cfg.synth.segments_per_video},
                {"seg_len_min", cfg.synth.seg_len_min},
                {"seg_len_max", cfg.synth.seg_len_max},
                {"snr", cfg.synth.snr},
                {"noise_std", cfg.synth.noise_std},
                {"flank_fraction", cfg.synth.flank_fraction},
                {"flank_amp", cfg.synth.flank_amp},
                {"second_amp", cfg.synth.second_amp},
                {"two_mode_classes", cfg.synth.two_mode_classes},
                {"confusers_per_video", cfg.synth.confusers_per_video},
                {"confuser_amp", cfg.synth.confuser_amp},
                {"confuser_len_min", cfg.synth.confuser_len_min},
                {"confuser_len_max", cfg.synth.confuser_len_max},
                {"val_fraction", cfg.synth.val_fraction},
                {"frame_rate", cfg.synth.frame_rate},
                {"snippet_stride", cfg.synth.snippet_stride}};
  return j.dump(2);
}

namespace {

template <class T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

RunConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: malformed JSON: ") + e.what());
  }
  RunConfig cfg;
  maybe(j, "seed", cfg.seed);
  maybe(j, "channels", cfg.channels);
  if (j.contains("lgte")) {
    const auto& s = j["lgte"];
    maybe(s, "groups", cfg.lgte.groups);
    maybe(s, "local_groups", cfg.lgte.local_groups);
    maybe(s, "window", cfg.lgte.window);
    maybe(s, "ffn_hidden", cfg.lgte.ffn_hidden);
    maybe(s, "layers", cfg.lgte.layers);
    maybe(s, "mask_padding", cfg.lgte.mask_padding);
    maybe(s, "literal_global_scale", cfg.lgte.literal_global_scale);
  }
  if (j.contains("tbr")) {
    const auto& s = j["tbr"];
    maybe(s, "stages", cfg.tbr.stages);
    maybe(s, "tau", cfg.tbr.tau);
    maybe(s, "hidden", cfg.tbr.hidden);
    maybe(s, "match_tiou", cfg.tbr.match_tiou);
  }
  if (j.contains("mdcm")) {
    const auto& s = j["mdcm"];
    maybe(s, "width", cfg.mdcm.width);
    maybe(s, "dilation_rates", cfg.mdcm.dilation_rates);
  }
  if (j.contains("brm")) {
    const auto& s = j["brm"];
    maybe(s, "width", cfg.brm.width);
    maybe(s, "scales", cfg.brm.scales);
    maybe(s, "gamma", cfg.brm.gamma);
    maybe(s, "min_len", cfg.brm.min_len);
    maybe(s, "oic_keep_max", cfg.brm.oic_keep_max);
    maybe(s, "full_interval_outer", cfg.brm.full_interval_outer);
  }
  maybe(j, "oae_theta", cfg.oae_theta);
  maybe(j, "cascade", cfg.cascade);
  maybe(j, "transfer", cfg.transfer);
  maybe(j, "use_brm", cfg.use_brm);
  maybe(j, "eval_thresholds", cfg.eval_thresholds);
  if (j.contains("train")) {
    const auto& s = j["train"];
    maybe(s, "lr", cfg.train.lr);
    maybe(s, "epochs", cfg.train.epochs);
    maybe(s, "clip_norm", cfg.train.clip_norm);
    maybe(s, "batch", cfg.train.batch);
    maybe(s, "source_epochs", cfg.train.source_epochs);
    maybe(s, "jitter", cfg.train.jitter);
    maybe(s, "jitters_per_gt", cfg.train.jitters_per_gt);
    maybe(s, "warmup_epochs", cfg.train.warmup_epochs);
    maybe(s, "lambda_oic", cfg.train.lambda_oic);
    maybe(s, "lambda_mmd", cfg.train.lambda_mmd);
    maybe(s, "detach_cas_in_oic", cfg.train.detach_cas_in_oic);
  }
  if (j.contains("detect")) {
    const auto& s = j["detect"];
    maybe(s, "class_score_min", cfg.detect.class_score_min);
    maybe(s, "class_rel", cfg.detect.class_rel);
    maybe(s, "max_classes", cfg.detect.max_classes);
    maybe(s, "theta_det", cfg.detect.theta_det);
    maybe(s, "nms_tiou", cfg.detect.nms_tiou);
    maybe(s, "min_len", cfg.detect.min_len);
  }
  if (j.contains("synth")) {
    const auto& s = j["synth"];
    maybe(s, "classes", cfg.synth.classes);
    maybe(s, "videos", cfg.synth.videos);
    maybe(s, "t_min", cfg.synth.t_min);
    maybe(s, "t_max", cfg.synth.t_max);
    maybe(s, "segments_per_video", cfg.synth.segments_per_video);
    maybe(s, "seg_len_min", cfg.synth.seg_len_min);
    maybe(s, "seg_len_max", cfg.synth.seg_len_max);
    maybe(s, "snr", cfg.synth.snr);
    maybe(s, "noise_std", cfg.synth.noise_std);
    maybe(s, "flank_fraction", cfg.synth.flank_fraction);
    maybe(s, "flank_amp", cfg.synth.flank_amp);
    maybe(s, "second_amp", cfg.synth.second_amp);
    maybe(s, "two_mode_classes", cfg.synth.two_mode_classes);
    maybe(s, "confusers_per_video", cfg.synth.confusers_per_video);
    maybe(s, "confuser_amp", cfg.synth.confuser_amp);
    maybe(s, "confuser_len_min", cfg.synth.confuser_len_min);
    maybe(s, "confuser_len_max", cfg.synth.confuser_len_max);
    maybe(s, "val_fraction", cfg.synth.val_fraction);
    maybe(s, "frame_rate", cfg.synth.frame_rate);
    maybe(s, "snippet_stride", cfg.synth.snippet_stride);
  }
  cfg.finalize();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("load_config: cannot open " + path.string());
  std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return config_from_json(text);
}

void save_config(const std::filesystem::path& path, const RunConfig& cfg) {
  atomic_write_text(path, config_to_json(cfg) + "\n");
}

}  // namespace tal
