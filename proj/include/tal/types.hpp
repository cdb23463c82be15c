#pragma once

#include <string>

namespace tal {

// Candidate temporal segment in snippet-index units.
struct Proposal {
  std::string video_id;
  double s = 0.0;
  double e = 0.0;
  double score = 1.0;
  int class_id = -1;  // optional
  bool valid = true;

  double width() const { return e - s; }
  double center() const { return 0.5 * (s + e); }
};

struct Detection {
  std::string video_id;
  int class_id = -1;
  double s = 0.0;
  double e = 0.0;
  double score = 0.0;
};

struct GtInstance {
  std::string video_id;
  int class_id = -1;
  double s = 0.0;
  double e = 0.0;
};

}  // namespace tal
