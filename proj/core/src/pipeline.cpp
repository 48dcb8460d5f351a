#include "afotad/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace afotad {

namespace {

bool window_hits_instance(long start, long length, const std::vector<FrameInterval>& instances) {
  for (const auto& inst : instances) {
    if (inst.start < start + length && inst.end > start) return true;
  }
  return false;
}

double segment_iou(double s0, double e0, double s1, double e1) {
  const double inter = std::min(e0, e1) - std::max(s0, s1);
  if (inter <= 0.0) return 0.0;
  const double uni = (e0 - s0) + (e1 - s1) - inter;
  return inter / uni;
}

bool score_order(const Detection& a, const Detection& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.start_s != b.start_s) return a.start_s < b.start_s;
  return a.cls < b.cls;
}

}  // namespace

std::vector<ClipWindow> make_training_clips(long video_frames, long window_frames,
                                            const std::vector<FrameInterval>& instances) {
  const long step = (3 * window_frames) / 4;
  std::vector<ClipWindow> clips;
  std::set<long> seen;

  for (long start = 0; start == 0 || start + window_frames <= video_frames; start += step) {
    if (window_hits_instance(start, window_frames, instances) && seen.insert(start).second) {
      clips.push_back({start, window_frames, SweepDirection::forward});
    }
    if (step == 0) break;
  }
  for (long start = std::max(0l, video_frames - window_frames); start >= 0; start -= step) {
    if (window_hits_instance(start, window_frames, instances) && seen.insert(start).second) {
      clips.push_back({start, window_frames, SweepDirection::backward});
    }
    if (step == 0) break;
  }
  std::sort(clips.begin(), clips.end(),
            [](const ClipWindow& a, const ClipWindow& b) { return a.start_frame < b.start_frame; });
  return clips;
}

std::vector<ClipWindow> make_inference_clips(long video_frames, long window_frames) {
  const long step = (3 * window_frames) / 4;
  std::vector<ClipWindow> clips;
  long covered_end = 0;
  for (long start = 0; start == 0 || start + window_frames <= video_frames; start += step) {
    clips.push_back({start, window_frames, SweepDirection::forward});
    covered_end = start + window_frames;
    if (step == 0) break;
  }
  if (covered_end < video_frames) {
    const long tail = std::max(0l, video_frames - window_frames);
    if (clips.empty() || clips.back().start_frame != tail) {
      clips.push_back({tail, window_frames, SweepDirection::forward});
    }
  }
  return clips;
}

std::vector<Detection> nms(std::vector<Detection> candidates, double threshold) {
  if (threshold < 0.0 || threshold > 1.0) {
    throw std::invalid_argument("nms: threshold must lie in [0,1], got " +
                                std::to_string(threshold));
  }
  std::sort(candidates.begin(), candidates.end(), score_order);
  std::vector<Detection> kept;
  for (const auto& cand : candidates) {
    bool suppressed = false;
    for (const auto& k : kept) {
      if (k.cls != cand.cls) continue;
      if (segment_iou(k.start_s, k.end_s, cand.start_s, cand.end_s) > threshold) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(cand);
  }
  return kept;
}

std::vector<Detection> postprocess(const std::string& video,
                                   const std::vector<WindowCandidates>& windows,
                                   const Geometry& geometry, double video_duration_s,
                                   const PostprocessParams& params) {
  std::vector<Detection> pool;
  for (const auto& window : windows) {
    for (const auto& cand : window.candidates) {
      if (!(cand.score > params.score_floor)) continue;
      double start_s = geometry.unit_to_seconds(cand.start, window.start_frame);
      double end_s = geometry.unit_to_seconds(cand.end, window.start_frame);
      start_s = std::max(0.0, start_s);
      end_s = std::min(video_duration_s, end_s);
      if (end_s <= start_s) continue;
      pool.push_back({video, cand.cls, cand.score, start_s, end_s});
    }
  }
  std::vector<Detection> kept = nms(std::move(pool), params.nms_threshold);
  if (static_cast<int>(kept.size()) > params.top_k) {
    kept.resize(static_cast<size_t>(params.top_k));
  }
  return kept;  // nms output is already sorted by score descending
}

}  // namespace afotad
