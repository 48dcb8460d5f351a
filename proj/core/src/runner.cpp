#include "afotad/runner.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include <json.hpp>

#include "afotad/errors.hpp"
#include "afotad/ops.hpp"

namespace afotad {

namespace {

using nlohmann::json;

struct ClipRef {
  int video = 0;
  long start_frame = 0;
};

Geometry dataset_geometry(const SynthDataset& data, const ModelConfig& model) {
  Geometry geometry;
  geometry.fps = data.spec.fps;
  geometry.feature_stride = data.spec.feature_stride;
  geometry.model_stride = model.downsample ? 2 : 1;
  return geometry;
}

std::vector<ClipRef> build_training_pool(const SynthDataset& data, long window_frames) {
  std::vector<ClipRef> pool;
  for (size_t v = 0; v < data.videos.size(); ++v) {
    const auto& video = data.videos[v];
    std::vector<FrameInterval> instances;
    for (const auto& a : video.annotations) {
      instances.push_back({a.start_s * data.spec.fps, a.end_s * data.spec.fps});
    }
    for (const auto& clip : make_training_clips(video.frames, window_frames, instances)) {
      pool.push_back({static_cast<int>(v), clip.start_frame});
    }
  }
  return pool;
}

std::string rng_to_string(const std::mt19937_64& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

void rng_from_string(std::mt19937_64& rng, const std::string& text) {
  std::istringstream is(text);
  is >> rng;
  if (!is) throw DataError("corrupt RNG state in checkpoint");
}

}  // namespace

Tensor slice_window(const Tensor& features, long start_frame, long window_frames, int stride) {
  if (start_frame % stride != 0) {
    throw std::invalid_argument("slice_window: start frame " + std::to_string(start_frame) +
                                " not aligned to stride " + std::to_string(stride));
  }
  const int channels = features.dim(0);
  const int total_steps = features.dim(1);
  const int first = static_cast<int>(start_frame / stride);
  const int steps = static_cast<int>(window_frames / stride);
  Tensor out = Tensor::zeros({channels, steps});
  for (int c = 0; c < channels; ++c) {
    for (int i = 0; i < steps; ++i) {
      const int src = first + i;
      if (src >= 0 && src < total_steps) out.at(c, i) = features.at(c, src);
    }
  }
  return out;
}

std::vector<GroundTruthInstance> window_ground_truth(
    const std::vector<AnnotationRecord>& annotations, const Geometry& geometry,
    long window_start_frame, int head_length) {
  std::vector<GroundTruthInstance> gts;
  for (const auto& a : annotations) {
    const double start = geometry.seconds_to_unit(a.start_s, window_start_frame);
    const double end = geometry.seconds_to_unit(a.end_s, window_start_frame);
    if (end <= 0.0 || start >= head_length) continue;
    gts.push_back({a.cls, start, end});
  }
  return gts;
}

void write_checkpoint(const std::filesystem::path& path, const TrainState& state,
                      const TrainConfig& config) {
  json extra;
  extra["format"] = "checkpoint";
  extra["iteration"] = state.iteration;
  extra["lr"] = state.lr;
  extra["rng"] = state.rng_state;
  extra["train"] = json::parse(train_config_to_json(config));
  ParamContainer container = state.model.to_container(extra.dump());
  for (const auto& [name, tensor] : state.velocities) {
    container.tensors.emplace_back("velocity:" + name, tensor);
  }
  write_param_container(path, container);
}

std::pair<TrainState, TrainConfig> read_checkpoint(const std::filesystem::path& path) {
  ParamContainer container = read_param_container(path);
  json extra;
  try {
    extra = json::parse(container.extra_json);
  } catch (const json::exception& e) {
    throw DataError("corrupt checkpoint manifest: " + std::string(e.what()));
  }
  TrainState state;
  state.model = RfamModel::from_container(container);
  state.iteration = extra.value("iteration", 0);
  state.lr = extra.value("lr", 0.0);
  state.rng_state = extra.value("rng", std::string());
  for (const auto& [name, tensor] : container.tensors) {
    if (name.rfind("velocity:", 0) == 0) {
      state.velocities.emplace_back(name.substr(9), tensor);
    }
  }
  TrainConfig config;
  if (extra.contains("train")) config = train_config_from_json(extra["train"].dump());
  return {std::move(state), config};
}

TrainState train_on_dataset(const SynthDataset& data, const ModelConfig& model_config,
                            const TrainConfig& config, const std::optional<TrainState>& resume,
                            const std::function<void(const IterationLog&)>& on_iteration) {
  if (data.spec.channels != model_config.channels) {
    throw DataError("dataset provides " + std::to_string(data.spec.channels) +
                    " feature channels but the model expects " +
                    std::to_string(model_config.channels));
  }
  if (config.window_frames % (data.spec.feature_stride * (model_config.downsample ? 2 : 1)) != 0) {
    throw ConfigError("window_frames " + std::to_string(config.window_frames) +
                      " must be divisible by the total stride");
  }

  const Geometry geometry = dataset_geometry(data, model_config);
  const std::vector<ClipRef> pool = build_training_pool(data, config.window_frames);
  if (pool.empty()) throw DataError("training dataset yields no clips with instances");

  TrainState state;
  std::mt19937_64 rng(config.seed);
  if (resume) {
    state = *resume;
    if (!state.rng_state.empty()) rng_from_string(rng, state.rng_state);
  } else {
    state.model = RfamModel::create(model_config, config.seed);
    state.lr = config.sgd.lr;
  }

  SgdConfig sgd_config = config.sgd;
  sgd_config.lr = state.lr;
  SgdOptimizer optimizer(state.model.parameters(), sgd_config);
  if (resume) optimizer.load_velocities(state.velocities);

  const double inv_batch = 1.0 / config.batch_size;
  for (int iter = state.iteration; iter < config.iterations; ++iter) {
    optimizer.zero_grad();
    LossBreakdown mean_loss;
    for (int b = 0; b < config.batch_size; ++b) {
      const ClipRef& clip = pool[static_cast<size_t>(rng() % pool.size())];
      const auto& video = data.videos[static_cast<size_t>(clip.video)];
      Tensor features = slice_window(video.features, clip.start_frame, config.window_frames,
                                     data.spec.feature_stride);

      Graph graph;
      HeadOutput head = state.model.forward(graph, features);
      const TargetMap targets = assign_targets(
          head.length,
          window_ground_truth(video.annotations, geometry, clip.start_frame, head.length));
      auto [total, breakdown] = joint_loss(graph, head, state.model.alpha(), targets, config.beta);
      // scale on the tape so accumulated gradients equal the batch mean
      graph.backward(scale(graph, total, inv_batch));

      mean_loss.cls += breakdown.cls * inv_batch;
      mean_loss.loc += breakdown.loc * inv_batch;
      mean_loss.total += breakdown.total * inv_batch;
    }
    optimizer.step();

    state.iteration = iter + 1;
    if (state.iteration % config.lr_decay_every == 0) {
      optimizer.set_lr(optimizer.lr() * config.lr_decay_factor);
    }
    state.lr = optimizer.lr();
    if (on_iteration) on_iteration({state.iteration, mean_loss});
  }

  state.rng_state = rng_to_string(rng);
  state.velocities = optimizer.velocities();
  return state;
}

std::vector<DetectionRecord> run_inference(const RfamModel& model, const SynthDataset& data,
                                           long window_frames, const PostprocessParams& params) {
  if (data.spec.channels != model.config().channels) {
    throw DataError("dataset provides " + std::to_string(data.spec.channels) +
                    " feature channels but the model expects " +
                    std::to_string(model.config().channels));
  }
  const Geometry geometry = dataset_geometry(data, model.config());
  std::vector<DetectionRecord> detections;
  for (const auto& video : data.videos) {
    std::vector<WindowCandidates> windows;
    for (const auto& clip : make_inference_clips(video.frames, window_frames)) {
      const long aligned =
          (clip.start_frame / data.spec.feature_stride) * data.spec.feature_stride;
      Tensor features =
          slice_window(video.features, aligned, window_frames, data.spec.feature_stride);
      Graph graph;
      const HeadOutput head = model.forward(graph, features);
      windows.push_back({aligned, decode(head, model.alpha_value())});
    }
    for (const auto& det : postprocess(video.id, windows, geometry,
                                       video.duration_s(data.spec.fps), params)) {
      detections.push_back({det.video, det.cls, det.score, det.start_s, det.end_s});
    }
  }
  return detections;
}

EvalReport evaluate_against_dataset(const std::vector<DetectionRecord>& dets,
                                    const SynthDataset& data,
                                    const std::vector<double>& thresholds) {
  std::vector<AnnotationRecord> gts;
  for (const auto& video : data.videos) {
    for (const auto& a : video.annotations) gts.push_back(a);
  }
  EvalConfig config;
  config.thresholds = thresholds;
  for (int c = 1; c <= data.spec.num_classes; ++c) config.classes.push_back(c);
  return evaluate(dets, gts, config);
}

std::string AblationCell::name() const {
  std::ostringstream os;
  os << (downsample ? "ds1" : "ds0") << "-dil" << dilation << "-def" << deformable;
  return os.str();
}

ModelConfig AblationCell::to_model_config(const ModelConfig& base) const {
  ModelConfig config = base;
  config.downsample = downsample;
  config.deformable_layers = deformable;
  config.dilation.assign(static_cast<size_t>(config.branch_depth), 1);
  config.dilation.back() = dilation;
  return config;
}

std::vector<AblationCell> ablation_grid() {
  std::vector<AblationCell> grid;
  for (int ds = 0; ds <= 1; ++ds) {
    for (int dil = 1; dil <= 4; ++dil) {
      for (int def = 0; def <= 3; ++def) {
        grid.push_back({ds == 1, dil, def});
      }
    }
  }
  return grid;
}

AblationResult run_ablation_cell(const SynthDataset& train_data, const SynthDataset& test_data,
                                 const AblationCell& cell, const ModelConfig& base_model,
                                 const TrainConfig& base_train,
                                 const std::vector<std::uint64_t>& seeds,
                                 const std::function<void(const std::string&)>& log) {
  AblationResult result;
  result.cell = cell;
  const ModelConfig model_config = cell.to_model_config(base_model);
  for (std::uint64_t seed : seeds) {
    TrainConfig train_config = base_train;
    train_config.seed = seed;
    const TrainState state = train_on_dataset(train_data, model_config, train_config);
    const auto dets =
        run_inference(state.model, test_data, train_config.window_frames, PostprocessParams{});
    const EvalReport report = evaluate_against_dataset(dets, test_data, {0.5});
    result.map_per_seed.push_back(report.map[0]);
    if (log) {
      log(cell.name() + " seed " + std::to_string(seed) + ": mAP@0.5 = " +
          fixed6(report.map[0]));
    }
  }
  std::vector<double> sorted = result.map_per_seed;
  std::sort(sorted.begin(), sorted.end());
  result.min = sorted.front();
  result.max = sorted.back();
  result.median = sorted[sorted.size() / 2];
  if (sorted.size() % 2 == 0) {
    result.median = 0.5 * (sorted[sorted.size() / 2 - 1] + sorted[sorted.size() / 2]);
  }
  return result;
}

namespace {

const AblationResult* find_cell(const std::vector<AblationResult>& results, bool ds, int dil,
                                int def) {
  for (const auto& r : results) {
    if (r.cell.downsample == ds && r.cell.dilation == dil && r.cell.deformable == def) return &r;
  }
  return nullptr;
}

std::string cell_text(const AblationResult* r, bool best) {
  if (!r) return "      -  ";
  char buf[32];
  std::snprintf(buf, sizeof(buf), best ? " *%.4f*" : "  %.4f ", r->median);
  return buf;
}

}  // namespace

std::string ablation_tables(const std::vector<AblationResult>& results) {
  std::ostringstream os;

  os << "median mAP@0.5, dilated last layer (down-sampler on)\n";
  os << "dilation rate     1        2        3        4\n";
  double best_dil = -1.0;
  int best_rate = 1;
  for (int dil = 1; dil <= 4; ++dil) {
    if (const auto* r = find_cell(results, true, dil, 0); r && r->median > best_dil) {
      best_dil = r->median;
      best_rate = dil;
    }
  }
  os << "mAP@0.5      ";
  for (int dil = 1; dil <= 4; ++dil) {
    os << cell_text(find_cell(results, true, dil, 0), dil == best_rate);
  }
  os << "\n\n";

  os << "median mAP@0.5, deformable last layers (down-sampler on)\n";
  os << "deformable count  0        1        2        3\n";
  double best_def = -1.0;
  int best_count = 0;
  for (int def = 0; def <= 3; ++def) {
    if (const auto* r = find_cell(results, true, 1, def); r && r->median > best_def) {
      best_def = r->median;
      best_count = def;
    }
  }
  os << "mAP@0.5      ";
  for (int def = 0; def <= 3; ++def) {
    os << cell_text(find_cell(results, true, 1, def), def == best_count);
  }
  os << "\n\n";

  os << "median mAP@0.5, design comparison\n";
  os << "down-sampler      -        on       on       on\n";
  os << "dilated layer     -        -        best     -\n";
  os << "deformable layer  -        -        -        1\n";
  const AblationResult* designs[4] = {
      find_cell(results, false, 1, 0),
      find_cell(results, true, 1, 0),
      find_cell(results, true, best_rate, 0),
      find_cell(results, true, 1, 1),
  };
  int best_design = 0;
  for (int i = 1; i < 4; ++i) {
    if (designs[i] && (!designs[best_design] || designs[i]->median >
                                                    designs[best_design]->median)) {
      best_design = i;
    }
  }
  os << "mAP@0.5      ";
  for (int i = 0; i < 4; ++i) os << cell_text(designs[i], i == best_design);
  os << "\n";
  return os.str();
}

}  // namespace afotad
