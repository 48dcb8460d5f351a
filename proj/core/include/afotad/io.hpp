#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "afotad/tensor.hpp"

namespace afotad {

// Fixed 6-decimal formatting used for every float that reaches a file, so
// outputs are bit-stable across runs.
std::string fixed6(double v);

// FNV-1a 64-bit over raw bytes, reported as 16 hex digits.
std::uint64_t fnv1a64(const void* data, std::size_t len);
std::string file_checksum(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Named-tensor container: a flat binary file holding raw doubles plus a JSON
// manifest mapping each name to a shape and byte offset. Used for model
// checkpoints.
//
//   bytes 0..3   magic "AFPC"
//   bytes 4..7   version (u32 little-endian)
//   bytes 8..15  manifest length in bytes (u64)
//   manifest     UTF-8 JSON: {"tensors":[{"name","shape","offset"}...],
//                             "extra": <caller-provided JSON object>}
//   blob         concatenated tensor data, doubles, little-endian
// ---------------------------------------------------------------------------

struct ParamContainer {
  std::vector<std::pair<std::string, Tensor>> tensors;
  std::string extra_json;  // "{}" when absent

  const Tensor* find(const std::string& name) const;
};

void write_param_container(const std::filesystem::path& path, const ParamContainer& container);
ParamContainer read_param_container(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Per-video feature file:
//
//   bytes 0..3   magic "AFTF"
//   u32 version, u32 channels, u32 steps, u32 stride (frames per step)
//   double fps, u64 frames (true video length before any padding)
//   channels*steps doubles, row-major [channels x steps]
// ---------------------------------------------------------------------------

struct FeatureFile {
  int channels = 0;
  int stride = 0;       // frames per feature step
  double fps = 25.0;
  std::int64_t frames = 0;
  Tensor features;      // [channels x steps]
};

void write_feature_file(const std::filesystem::path& path, const FeatureFile& file);
FeatureFile read_feature_file(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// JSON-lines annotation / detection records. Annotations mirror detections
// without the score. Writers emit keys in a fixed order with fixed6 floats.
// ---------------------------------------------------------------------------

struct AnnotationRecord {
  std::string video;
  int cls = 0;
  double start_s = 0.0;
  double end_s = 0.0;
};

struct DetectionRecord {
  std::string video;
  int cls = 0;
  double score = 0.0;
  double start_s = 0.0;
  double end_s = 0.0;
};

std::string format_annotation_line(const AnnotationRecord& r);
std::string format_detection_line(const DetectionRecord& r);

void write_annotations(const std::filesystem::path& path, const std::vector<AnnotationRecord>& rs);
std::vector<AnnotationRecord> read_annotations(const std::filesystem::path& path);

void write_detections(const std::filesystem::path& path, const std::vector<DetectionRecord>& rs);
std::vector<DetectionRecord> read_detections(const std::filesystem::path& path);

}  // namespace afotad
