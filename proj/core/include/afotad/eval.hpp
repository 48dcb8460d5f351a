#pragma once

#include <map>
#include <string>
#include <vector>

#include "afotad/io.hpp"
#include "afotad/pipeline.hpp"

namespace afotad {

struct Segment {
  double start = 0.0;
  double end = 0.0;
};

// |intersection| / |union| of two segments; 0 when disjoint. Degenerate
// segments (end <= start) are rejected.
double temporal_iou(const Segment& a, const Segment& b);

struct EvalConfig {
  std::vector<double> thresholds{0.3, 0.4, 0.5, 0.6, 0.7};
  std::vector<int> classes;  // foreground class ids to average over

  void validate() const;
};

struct ClassResult {
  double ap = 0.0;
  int true_positives = 0;
  int false_positives = 0;
  int num_gt = 0;
  bool no_gt = false;  // flagged: AP forced to 0 because the class has no gt
};

struct EvalReport {
  std::vector<double> thresholds;
  std::vector<int> classes;
  // results[threshold index][class index]
  std::vector<std::vector<ClassResult>> results;
  std::vector<double> map;  // mean AP per threshold over the class list

  std::string to_json() const;        // fixed-format, bit-stable
  std::string to_text_table() const;  // per-class AP rows, mAP footer
};

// Greedy score-order matching at IoU threshold theta: a detection is a true
// positive when its best-IoU unmatched ground truth of the same class and
// video reaches theta. AP is the area under the precision-recall curve using
// the interpolated precision envelope.
ClassResult average_precision(std::vector<DetectionRecord> dets,
                              const std::vector<AnnotationRecord>& gts, int cls, double theta);

EvalReport evaluate(const std::vector<DetectionRecord>& dets,
                    const std::vector<AnnotationRecord>& gts, const EvalConfig& config);

// Per-video timeline rows for external plotting: ground-truth spans, each
// detection marked correct/wrong at the given IoU threshold, and the
// uncovered background gaps. CSV columns: video,kind,class,start_s,end_s.
std::string timeline_csv(const std::vector<DetectionRecord>& dets,
                         const std::vector<AnnotationRecord>& gts,
                         const std::map<std::string, double>& video_durations, double theta);

}  // namespace afotad
