#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "afotad/eval.hpp"
#include "afotad/pipeline.hpp"
#include "afotad/synthdata.hpp"
#include "afotad/training.hpp"

namespace afotad {

// Column slice [start_frame/stride, start_frame/stride + window/stride) of a
// feature map, zero-padded past the end of the video. start_frame must be
// stride-aligned.
Tensor slice_window(const Tensor& features, long start_frame, long window_frames, int stride);

// Ground truths of one window in head feature-map coordinates, keeping every
// instance that intersects the window (boundaries may extend outside).
std::vector<GroundTruthInstance> window_ground_truth(
    const std::vector<AnnotationRecord>& annotations, const Geometry& geometry,
    long window_start_frame, int head_length);

struct TrainState {
  RfamModel model;
  int iteration = 0;
  double lr = 0.0;
  std::string rng_state;
  std::vector<std::pair<std::string, Tensor>> velocities;
};

void write_checkpoint(const std::filesystem::path& path, const TrainState& state,
                      const TrainConfig& config);
// Returns the state plus the training config stored alongside it.
std::pair<TrainState, TrainConfig> read_checkpoint(const std::filesystem::path& path);

struct IterationLog {
  int iteration = 0;  // 1-based
  LossBreakdown loss;
};

// Runs the SGD loop over two-way-buffer clips of the training videos until
// config.iterations, starting from `resume` when given. Deterministic under
// fixed seed. Throws NumericError on a NaN loss or gradient.
TrainState train_on_dataset(const SynthDataset& data, const ModelConfig& model_config,
                            const TrainConfig& config,
                            const std::optional<TrainState>& resume = std::nullopt,
                            const std::function<void(const IterationLog&)>& on_iteration = {});

// Sliding-window inference over every video, fully post-processed:
// score floor, global class-wise NMS, per-video top-k.
std::vector<DetectionRecord> run_inference(const RfamModel& model, const SynthDataset& data,
                                           long window_frames, const PostprocessParams& params);

// Evaluates detections against the dataset's own annotations over foreground
// classes 1..num_classes.
EvalReport evaluate_against_dataset(const std::vector<DetectionRecord>& dets,
                                    const SynthDataset& data,
                                    const std::vector<double>& thresholds);

// ---------------------------------------------------------------------------
// Ablation grid: {down-sampler off/on} x {last-layer dilation 1..4} x
// {deformable layers 0..3}. Cells asking for both a dilated and a deformable
// last layer are invalid (the deformable layers replace the dilated ones).
// ---------------------------------------------------------------------------

struct AblationCell {
  bool downsample = true;
  int dilation = 1;
  int deformable = 0;

  bool valid() const { return !(dilation > 1 && deformable > 0); }
  std::string name() const;
  ModelConfig to_model_config(const ModelConfig& base) const;
};

std::vector<AblationCell> ablation_grid();

struct AblationResult {
  AblationCell cell;
  std::vector<double> map_per_seed;  // mAP@0.5, one entry per seed
  double median = 0.0;
  double min = 0.0;
  double max = 0.0;
};

AblationResult run_ablation_cell(const SynthDataset& train_data, const SynthDataset& test_data,
                                 const AblationCell& cell, const ModelConfig& base_model,
                                 const TrainConfig& base_train,
                                 const std::vector<std::uint64_t>& seeds,
                                 const std::function<void(const std::string&)>& log = {});

// Three ASCII tables in the layout of the dilation / deformable-count /
// design-comparison ablations, best cell of each marked with asterisks.
std::string ablation_tables(const std::vector<AblationResult>& results);

}  // namespace afotad
