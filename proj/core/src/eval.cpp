#include "afotad/eval.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <stdexcept>

#include "afotad/errors.hpp"

namespace afotad {

namespace {

bool detection_order(const DetectionRecord& a, const DetectionRecord& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.start_s != b.start_s) return a.start_s < b.start_s;
  return a.video < b.video;
}

}  // namespace

double temporal_iou(const Segment& a, const Segment& b) {
  if (a.end <= a.start || b.end <= b.start) {
    throw std::invalid_argument("temporal_iou: degenerate segment");
  }
  const double inter = std::min(a.end, b.end) - std::max(a.start, b.start);
  if (inter <= 0.0) return 0.0;
  const double uni = (a.end - a.start) + (b.end - b.start) - inter;
  return inter / uni;
}

void EvalConfig::validate() const {
  if (thresholds.empty()) throw ConfigError("eval: threshold list is empty");
  for (double t : thresholds) {
    if (!(t > 0.0 && t <= 1.0)) {
      throw ConfigError("eval: IoU thresholds must lie in (0,1], got " + std::to_string(t));
    }
  }
  if (classes.empty()) throw ConfigError("eval: class list is empty");
}

ClassResult average_precision(std::vector<DetectionRecord> dets,
                              const std::vector<AnnotationRecord>& gts, int cls, double theta) {
  ClassResult result;
  std::vector<AnnotationRecord> class_gts;
  for (const auto& gt : gts) {
    if (gt.cls == cls) class_gts.push_back(gt);
  }
  result.num_gt = static_cast<int>(class_gts.size());

  std::erase_if(dets, [cls](const DetectionRecord& d) { return d.cls != cls; });
  std::sort(dets.begin(), dets.end(), detection_order);

  if (result.num_gt == 0) {
    result.no_gt = true;
    result.false_positives = static_cast<int>(dets.size());
    return result;  // AP defined as 0 and flagged
  }

  std::vector<bool> matched(class_gts.size(), false);
  std::vector<bool> is_tp(dets.size(), false);
  for (size_t d = 0; d < dets.size(); ++d) {
    int best = -1;
    double best_iou = 0.0;
    for (size_t g = 0; g < class_gts.size(); ++g) {
      if (matched[g] || class_gts[g].video != dets[d].video) continue;
      const double iou = temporal_iou({dets[d].start_s, dets[d].end_s},
                                      {class_gts[g].start_s, class_gts[g].end_s});
      if (iou > best_iou) {
        best_iou = iou;
        best = static_cast<int>(g);
      }
    }
    if (best >= 0 && best_iou >= theta) {
      matched[static_cast<size_t>(best)] = true;
      is_tp[d] = true;
    }
  }

  // precision/recall at each rank, then the interpolated precision envelope
  std::vector<double> precision(dets.size()), recall(dets.size());
  int tp = 0, fp = 0;
  for (size_t d = 0; d < dets.size(); ++d) {
    is_tp[d] ? ++tp : ++fp;
    precision[d] = static_cast<double>(tp) / (tp + fp);
    recall[d] = static_cast<double>(tp) / result.num_gt;
  }
  result.true_positives = tp;
  result.false_positives = fp;

  for (size_t d = dets.size(); d-- > 1;) {
    precision[d - 1] = std::max(precision[d - 1], precision[d]);
  }
  double ap = 0.0, prev_recall = 0.0;
  for (size_t d = 0; d < dets.size(); ++d) {
    if (recall[d] > prev_recall) {
      ap += (recall[d] - prev_recall) * precision[d];
      prev_recall = recall[d];
    }
  }
  result.ap = ap;
  return result;
}

EvalReport evaluate(const std::vector<DetectionRecord>& dets,
                    const std::vector<AnnotationRecord>& gts, const EvalConfig& config) {
  config.validate();
  EvalReport report;
  report.thresholds = config.thresholds;
  report.classes = config.classes;
  report.results.resize(config.thresholds.size());
  report.map.resize(config.thresholds.size(), 0.0);
  for (size_t t = 0; t < config.thresholds.size(); ++t) {
    double ap_sum = 0.0;
    for (int cls : config.classes) {
      ClassResult r = average_precision(dets, gts, cls, config.thresholds[t]);
      ap_sum += r.ap;
      report.results[t].push_back(r);
    }
    report.map[t] = ap_sum / static_cast<double>(config.classes.size());
  }
  return report;
}

std::string EvalReport::to_json() const {
  std::ostringstream os;
  os << "{\"thresholds\":[";
  for (size_t t = 0; t < thresholds.size(); ++t) {
    if (t) os << ",";
    os << fixed6(thresholds[t]);
  }
  os << "],\"classes\":[";
  for (size_t c = 0; c < classes.size(); ++c) {
    if (c) os << ",";
    os << classes[c];
  }
  os << "],\"ap\":[";
  for (size_t t = 0; t < thresholds.size(); ++t) {
    if (t) os << ",";
    os << "[";
    for (size_t c = 0; c < results[t].size(); ++c) {
      if (c) os << ",";
      os << fixed6(results[t][c].ap);
    }
    os << "]";
  }
  os << "],\"counts\":[";
  for (size_t t = 0; t < thresholds.size(); ++t) {
    if (t) os << ",";
    os << "[";
    for (size_t c = 0; c < results[t].size(); ++c) {
      const auto& r = results[t][c];
      if (c) os << ",";
      os << "{\"tp\":" << r.true_positives << ",\"fp\":" << r.false_positives
         << ",\"num_gt\":" << r.num_gt << ",\"no_gt\":" << (r.no_gt ? "true" : "false") << "}";
    }
    os << "]";
  }
  os << "],\"map\":[";
  for (size_t t = 0; t < thresholds.size(); ++t) {
    if (t) os << ",";
    os << fixed6(map[t]);
  }
  os << "]}";
  return os.str();
}

std::string EvalReport::to_text_table() const {
  std::ostringstream os;
  os << "theta     ";
  for (double t : thresholds) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%8.2f", t);
    os << buf;
  }
  os << "\n";
  for (size_t c = 0; c < classes.size(); ++c) {
    char label[32];
    std::snprintf(label, sizeof(label), "class %-4d", classes[c]);
    os << label;
    for (size_t t = 0; t < thresholds.size(); ++t) {
      char buf[16];
      if (results[t][c].no_gt) {
        std::snprintf(buf, sizeof(buf), "%7.4f*", results[t][c].ap);
      } else {
        std::snprintf(buf, sizeof(buf), "%8.4f", results[t][c].ap);
      }
      os << buf;
    }
    os << "\n";
  }
  os << "mAP       ";
  for (size_t t = 0; t < thresholds.size(); ++t) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%8.4f", map[t]);
    os << buf;
  }
  os << "\n";
  bool flagged = false;
  for (const auto& row : results) {
    for (const auto& r : row) flagged |= r.no_gt;
  }
  if (flagged) os << "(* class has no ground truth; AP fixed at 0)\n";
  return os.str();
}

std::string timeline_csv(const std::vector<DetectionRecord>& dets,
                         const std::vector<AnnotationRecord>& gts,
                         const std::map<std::string, double>& video_durations, double theta) {
  std::set<std::string> videos;
  for (const auto& gt : gts) videos.insert(gt.video);
  for (const auto& det : dets) videos.insert(det.video);

  std::ostringstream os;
  os << "video,kind,class,start_s,end_s\n";
  for (const auto& video : videos) {
    std::vector<AnnotationRecord> vgts;
    for (const auto& gt : gts) {
      if (gt.video == video) vgts.push_back(gt);
    }
    std::sort(vgts.begin(), vgts.end(), [](const AnnotationRecord& a, const AnnotationRecord& b) {
      return a.start_s < b.start_s;
    });

    double duration = 0.0;
    if (auto it = video_durations.find(video); it != video_durations.end()) {
      duration = it->second;
    } else {
      for (const auto& gt : vgts) duration = std::max(duration, gt.end_s);
      for (const auto& det : dets) {
        if (det.video == video) duration = std::max(duration, det.end_s);
      }
    }

    double cursor = 0.0;
    for (const auto& gt : vgts) {
      if (gt.start_s > cursor) {
        os << video << ",background,0," << fixed6(cursor) << "," << fixed6(gt.start_s) << "\n";
      }
      os << video << ",ground_truth," << gt.cls << "," << fixed6(gt.start_s) << ","
         << fixed6(gt.end_s) << "\n";
      cursor = std::max(cursor, gt.end_s);
    }
    if (cursor < duration) {
      os << video << ",background,0," << fixed6(cursor) << "," << fixed6(duration) << "\n";
    }

    for (const auto& det : dets) {
      if (det.video != video) continue;
      bool correct = false;
      for (const auto& gt : vgts) {
        if (gt.cls == det.cls &&
            temporal_iou({det.start_s, det.end_s}, {gt.start_s, gt.end_s}) >= theta) {
          correct = true;
          break;
        }
      }
      os << video << "," << (correct ? "correct" : "wrong") << "," << det.cls << ","
         << fixed6(det.start_s) << "," << fixed6(det.end_s) << "\n";
    }
  }
  return os.str();
}

}  // namespace afotad
