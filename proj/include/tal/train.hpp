#pragma once

#include <map>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "tal/brm.hpp"
#include "tal/cas_mgfn.hpp"
#include "tal/config.hpp"
#include "tal/data.hpp"
#include "tal/gradcheck.hpp"
#include "tal/lgte.hpp"
#include "tal/tbr.hpp"

namespace tal {

struct LoadedDataset {
  DatasetAnnotations ann;
  std::map<std::string, Tensor> features;  // by video id
};

// kind: "full" (annotations.json), "weak" (weak_annotations.json),
// "clips" (clips_annotations.json + clips/).
LoadedDataset load_dataset(const std::filesystem::path& dir, const std::string& kind);

struct TrainStats {
  std::vector<double> epoch_losses;
};

// ---------------------------------------------------------------------------
// Supervised track: encoder stack + boundary refinement stages
// ---------------------------------------------------------------------------

struct TcanetModel {
  RunConfig cfg;
  ParamStore store;
  std::vector<LgteLayerParams> lgte_layers;
  std::vector<TbrStageParams> tbr_stages;
};

std::unique_ptr<TcanetModel> build_tcanet(const RunConfig& cfg);
void save_model(const TcanetModel& m, const std::filesystem::path& path);
void load_model(TcanetModel& m, const std::filesystem::path& path);

TrainStats train_tcanet(TcanetModel& m, const LoadedDataset& train_set, std::ostream* log);

// Encode features through the stack (frozen parameters).
Tensor encode_features(const TcanetModel& m, const Tensor& feats);
// Encode then run progressive refinement over the first `stages_used` stages.
std::vector<Proposal> refine_proposals(const TcanetModel& m, const Tensor& feats,
                                       const std::vector<Proposal>& proposals,
                                       size_t stages_used);

// ---------------------------------------------------------------------------
// Weakly-supervised track: cascaded dilated classifier + boundary regression
// ---------------------------------------------------------------------------

struct MgfnModel {
  RunConfig cfg;
  ParamStore store;         // untrimmed (target) branch + boundary regression
  ParamStore source_store;  // trimmed branch
  MdcmParams stage1, stage2;
  MdcmParams src_stage1, src_stage2;
  BrmParams brm;
};

std::unique_ptr<MgfnModel> build_mgfn(const RunConfig& cfg);
void save_model(const MgfnModel& m, const std::filesystem::path& path);
void load_model(MgfnModel& m, const std::filesystem::path& path);

TrainStats train_mgfn(MgfnModel& m, const LoadedDataset& weak_train, const LoadedDataset& clips,
                      std::ostream* log);

std::vector<std::pair<int, double>> select_classes(const Tensor& class_scores,
                                                   const DetectConfig& dc);

// Detections for one video (before cross-video pooling); NMS already applied.
std::vector<Detection> mgfn_localize(const MgfnModel& m, const Tensor& feats,
                                     const std::string& video_id);

struct CasVariants {
  Tensor simple;   // first-branch track of stage 1
  Tensor mdcm;     // fused multi-dilated track
  Tensor cascade;  // max-fused two-stage track
};
// Normalized activation tracks for side-by-side comparison plots.
CasVariants export_cas_variants(const MgfnModel& m, const Tensor& feats);

// ---------------------------------------------------------------------------
// Gradient oracle over every trainable module
// ---------------------------------------------------------------------------

struct ModuleCheck {
  std::string name;
  GradCheckResult result;
};
std::vector<ModuleCheck> run_all_gradient_checks(uint64_t seed, double eps = 1e-4,
                                                 double rtol = 1e-3);

}  // namespace tal
