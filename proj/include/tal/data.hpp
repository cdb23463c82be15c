#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tal/tensor.hpp"
#include "tal/types.hpp"

namespace tal {

// Snippet feature sequence: header magic "TALX1", T (u32), C (u32),
// frame rate (f64), snippet stride (u32), then T*C doubles LE row-major.
struct FeatureSequence {
  uint32_t t = 0;
  uint32_t c = 0;
  double frame_rate = 15.0;
  uint32_t stride = 16;
  std::vector<double> data;

  Tensor tensor() const;
};

void save_features(const std::filesystem::path& path, const FeatureSequence& fs);
FeatureSequence load_features(const std::filesystem::path& path);

struct VideoAnnotation {
  std::string id;
  double duration = 0.0;  // snippets
  bool trimmed = false;
  std::string split = "train";
  std::vector<int> labels;            // video-level class ids
  std::vector<GtInstance> segments;   // empty for weak records
};

struct DatasetAnnotations {
  std::vector<std::string> classes;
  std::vector<VideoAnnotation> videos;

  const VideoAnnotation* find(const std::string& id) const;
};

// weak=true drops the segment lists (video-level labels only).
void save_annotations(const std::filesystem::path& path, const DatasetAnnotations& ds, bool weak);
DatasetAnnotations load_annotations(const std::filesystem::path& path);

std::vector<GtInstance> collect_instances(const DatasetAnnotations& ds,
                                          const std::string& split = "");

// Flat text records, 6 decimal places.
// proposals: "video_id s e score"; detections: "video_id class s e score".
void save_proposals(const std::filesystem::path& path, const std::vector<Proposal>& ps);
std::vector<Proposal> load_proposals(const std::filesystem::path& path);
void save_detections(const std::filesystem::path& path, const std::vector<Detection>& ds);
std::vector<Detection> load_detections(const std::filesystem::path& path);

// CAS export: header row of class names, then T rows of K values.
void save_cas_matrix(const std::filesystem::path& path, const Tensor& cas,
                     const std::vector<std::string>& class_names);

// write-temp-then-rename
void atomic_write_text(const std::filesystem::path& path, const std::string& content);

}  // namespace tal
