#pragma once

#include <cstdint>
#include <filesystem>

#include "tal/data.hpp"

namespace tal {

// Synthetic benchmark: class-conditioned signature vectors planted as boxcar
// segments over Gaussian noise. Each class carries two signature modes; a
// video holds one strong instance (mode 0, bright core with dimmer flanks)
// and optionally a second instance using mode 1, so that a classifier that
// saturates on the first mode has something left to discover. Background
// confuser bursts of other classes make video-level classification non-trivial.
// Planted segments are excised as standalone trimmed clips.
struct SynthConfig {
  size_t classes = 20;
  size_t videos = 200;
  size_t channels = 32;
  size_t t_min = 48;
  size_t t_max = 72;
  size_t segments_per_video = 2;
  size_t seg_len_min = 10;
  size_t seg_len_max = 18;
  double snr = 1.0;          // core amplitude
  double noise_std = 0.25;
  double flank_fraction = 0.3;  // of segment length, each side
  double flank_amp = 0.45;      // relative to the core amplitude
  double second_amp = 0.8;      // amplitude of the second instance
  bool two_mode_classes = true;
  size_t confusers_per_video = 2;
  double confuser_amp = 0.5;
  size_t confuser_len_min = 3;
  size_t confuser_len_max = 6;
  double val_fraction = 0.3;
  double frame_rate = 15.0;
  uint32_t snippet_stride = 16;

  void validate() const;
};

struct SynthDataset {
  DatasetAnnotations untrimmed;
  DatasetAnnotations clips;
  std::vector<FeatureSequence> video_features;  // parallel to untrimmed.videos
  std::vector<FeatureSequence> clip_features;   // parallel to clips.videos
};

// In-memory generation; deterministic in (config, seed).
SynthDataset generate_synthetic(const SynthConfig& cfg, uint64_t seed);

// Writes features/<id>.feat, clips/<id>.feat, annotations.json,
// weak_annotations.json, clips_annotations.json under out_dir.
void write_synthetic(const SynthDataset& ds, const std::filesystem::path& out_dir);

}  // namespace tal
