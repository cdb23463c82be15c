#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tal/brm.hpp"
#include "tal/cas_mgfn.hpp"
#include "tal/lgte.hpp"
#include "tal/synth.hpp"
#include "tal/tbr.hpp"

namespace tal {

struct TrainConfig {
  double lr = 0.05;
  size_t epochs = 10;
  double clip_norm = 5.0;
  size_t batch = 8;            // videos per weak-track step
  size_t source_epochs = 10;   // trimmed-branch pretraining
  double jitter = 0.3;         // proposal boundary noise during TBR training
  size_t jitters_per_gt = 2;
  size_t warmup_epochs = 1;    // OIC keeps every anchor during warmup
  double lambda_oic = 1.0;
  double lambda_mmd = 0.1;
  bool detach_cas_in_oic = true;
};

struct DetectConfig {
  double class_score_min = 0.1;  // absolute floor on video class scores
  double class_rel = 0.5;        // keep classes within this factor of the best score
  size_t max_classes = 2;
  double theta_det = 0.5;        // thresholding detector cut, relative to per-class max
  double nms_tiou = 0.6;
  double min_len = 2.0;
};

// Every tunable in one place, dumpable as JSON; module preconditions are
// enforced at load time.
struct RunConfig {
  uint64_t seed = 1;
  size_t channels = 32;
  LgteConfig lgte;
  TbrConfig tbr;
  MdcmConfig mdcm;
  BrmConfig brm;
  double oae_theta = 0.5;
  bool cascade = true;
  bool transfer = true;
  bool use_brm = true;
  std::vector<double> eval_thresholds;
  TrainConfig train;
  DetectConfig detect;
  SynthConfig synth;

  RunConfig();
  // Fills derived fields (module channel counts, class count) and validates
  // everything against module preconditions.
  void finalize();
};

std::string config_to_json(const RunConfig& cfg);
RunConfig config_from_json(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);
void save_config(const std::filesystem::path& path, const RunConfig& cfg);

}  // namespace tal
