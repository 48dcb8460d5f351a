#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "afotad/io.hpp"
#include "afotad/tensor.hpp"

namespace afotad {

// Deterministic synthetic untrimmed-video generator standing in for a video
// backbone: white-noise background plus class-specific smooth temporal
// templates over each instance. Everything is a pure function of the spec.
struct SynthSpec {
  std::uint64_t seed = 1;
  int num_videos = 200;
  long min_frames = 1536;
  long max_frames = 3072;
  int num_classes = 3;  // foreground classes 1..num_classes
  double min_duration_s = 2.0;   // instance durations, log-uniform
  double max_duration_s = 12.0;
  int channels = 32;
  int feature_stride = 8;  // frames per feature step
  double fps = 25.0;
  double noise_sigma = 0.25;
  int min_instances = 1;
  int max_instances = 4;
  double template_amplitude = 1.0;

  void validate() const;  // throws ConfigError
};

SynthSpec synth_spec_from_json(const std::string& text);
std::string synth_spec_to_json(const SynthSpec& spec);

struct VideoSample {
  std::string id;
  long frames = 0;
  Tensor features;  // [channels x steps]
  std::vector<AnnotationRecord> annotations;

  double duration_s(double fps) const { return static_cast<double>(frames) / fps; }
};

struct SynthDataset {
  SynthSpec spec;
  std::vector<VideoSample> videos;
};

// Noise-free template value for a class at relative position u in [0,1]:
// a two-harmonic band-limited profile with per-(class, channel) weights and
// phases derived from the spec seed.
double template_value(const SynthSpec& spec, int cls, int channel, double u);

// Soft onset/offset envelope: exactly 1 in the interior, linear ramps at the
// edges, 0 outside.
double instance_envelope(double step, double start_step, double end_step);

// Generates num_videos videos with ids starting at first_video_index.
// Instances within a video never overlap. Throws DataError when the
// requested instance load cannot be packed into a video.
SynthDataset generate(const SynthSpec& spec, int first_video_index = 0);

// Re-places the given fraction of instances so each overlaps a neighbor,
// exercising the nearest-center assignment rule. Features of the touched
// videos are re-rendered with their original noise.
void inject_overlaps(SynthDataset& dataset, double fraction);

void write_dataset(const std::filesystem::path& dir, const SynthDataset& dataset);
SynthDataset read_dataset(const std::filesystem::path& dir);

}  // namespace afotad
