#pragma once

#include <string>
#include <vector>

#include "afotad/rfam.hpp"

namespace afotad {

// Frame/feature-map/seconds coordinate bookkeeping. feature_stride is the
// number of frames per feature step in the stored features; model_stride is
// the extra temporal down-sampling applied by the model (2 with the
// down-sampler, 1 without).
struct Geometry {
  double fps = 25.0;
  int feature_stride = 8;
  int model_stride = 2;

  int total_stride() const { return feature_stride * model_stride; }
  double seconds_per_unit() const { return total_stride() / fps; }
  // Head feature-map coordinate of an absolute time, relative to a window
  // starting at window_start_frame.
  double seconds_to_unit(double seconds, long window_start_frame) const {
    return (seconds * fps - window_start_frame) / total_stride();
  }
  double unit_to_seconds(double unit, long window_start_frame) const {
    return (window_start_frame + unit * total_stride()) / fps;
  }
};

enum class SweepDirection { forward, backward };

struct ClipWindow {
  long start_frame = 0;
  long length = 0;
  SweepDirection direction = SweepDirection::forward;
};

// Plain [start, end) frame interval used for window/ground-truth overlap.
struct FrameInterval {
  double start = 0.0;
  double end = 0.0;
};

// Two-way buffer training clips: a forward sweep from frame 0 and a backward
// sweep anchored at the video end, both stepping 0.75*L, keeping only windows
// that intersect at least one instance. Coinciding windows are deduplicated.
std::vector<ClipWindow> make_training_clips(long video_frames, long window_frames,
                                            const std::vector<FrameInterval>& instances);

// Inference clips: forward sweep with 25% overlap retaining every window; the
// final window is right-aligned so every frame is covered.
std::vector<ClipWindow> make_inference_clips(long video_frames, long window_frames);

struct Detection {
  std::string video;
  int cls = 0;
  double score = 0.0;
  double start_s = 0.0;
  double end_s = 0.0;
};

// Greedy class-wise NMS: sort by score (ties: earlier start, then lower
// class), keep a detection iff its temporal IoU with every kept detection of
// the same class is <= threshold.
std::vector<Detection> nms(std::vector<Detection> candidates, double threshold);

struct PostprocessParams {
  double score_floor = 0.005;
  double nms_threshold = 0.3;
  int top_k = 300;
};

// One window's decoded candidates, positioned by the window's start frame.
struct WindowCandidates {
  long start_frame = 0;
  std::vector<Candidate> candidates;
};

// Full per-video post-processing: score filter, feature-map-to-seconds
// conversion, clipping to the video duration, global class-wise NMS across
// windows, and top-k selection. Output is sorted by score descending.
std::vector<Detection> postprocess(const std::string& video,
                                   const std::vector<WindowCandidates>& windows,
                                   const Geometry& geometry, double video_duration_s,
                                   const PostprocessParams& params);

}  // namespace afotad
