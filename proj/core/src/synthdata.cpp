#include "afotad/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>

#include <json.hpp>

#include "afotad/errors.hpp"

namespace afotad {

namespace {

using nlohmann::json;

// splitmix64 step, used to derive independent per-video / per-class streams
// from the master seed.
std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ull * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

double u01(std::mt19937_64& rng) {
  return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

double uniform(std::mt19937_64& rng, double lo, double hi) { return lo + (hi - lo) * u01(rng); }

long uniform_int(std::mt19937_64& rng, long lo, long hi) {
  return lo + static_cast<long>(rng() % static_cast<std::uint64_t>(hi - lo + 1));
}

// Explicit Box-Muller without cached state so draw order stays obvious.
double normal(std::mt19937_64& rng) {
  const double u = u01(rng);
  const double v = u01(rng);
  return std::sqrt(-2.0 * std::log(u)) * std::cos(2.0 * std::numbers::pi * v);
}

struct TemplateCoeffs {
  double w1, w2, phase;
};

TemplateCoeffs template_coeffs(const SynthSpec& spec, int cls, int channel) {
  std::mt19937_64 rng(mix(mix(spec.seed, 0x7e391a7eull + cls), channel));
  TemplateCoeffs c;
  c.w1 = uniform(rng, -1.0, 1.0);
  c.w2 = uniform(rng, -1.0, 1.0);
  c.phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  return c;
}

std::string video_name(int index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "v%04d", index);
  return buf;
}

// Sample instance layout for one video. Deterministic given the rng state.
std::vector<AnnotationRecord> sample_annotations(const SynthSpec& spec, const std::string& id,
                                                 long frames, std::mt19937_64& rng) {
  const double min_dur = std::max(spec.min_duration_s, 2.0 * spec.feature_stride / spec.fps);
  const double max_dur = std::max(spec.max_duration_s, min_dur);
  const double video_s = frames / spec.fps;
  const double gap_s = spec.feature_stride / spec.fps;  // one feature step between instances

  for (int attempt = 0; attempt < 20; ++attempt) {
    const int count = static_cast<int>(uniform_int(rng, spec.min_instances, spec.max_instances));
    std::vector<double> durations(static_cast<size_t>(count));
    double total = 0.0;
    for (auto& d : durations) {
      d = std::exp(uniform(rng, std::log(min_dur), std::log(max_dur)));
      total += d;
    }
    const double free_s = video_s - total - gap_s * (count + 1);
    if (free_s < 0.0) continue;

    // split the leftover space into count+1 random gaps
    std::vector<double> weights(static_cast<size_t>(count) + 1);
    double wsum = 0.0;
    for (auto& w : weights) {
      w = u01(rng);
      wsum += w;
    }
    std::vector<AnnotationRecord> annotations;
    double cursor = 0.0;
    for (int i = 0; i < count; ++i) {
      cursor += gap_s + free_s * weights[static_cast<size_t>(i)] / wsum;
      const int cls = static_cast<int>(uniform_int(rng, 1, spec.num_classes));
      annotations.push_back({id, cls, cursor, cursor + durations[static_cast<size_t>(i)]});
      cursor += durations[static_cast<size_t>(i)];
    }
    return annotations;
  }
  throw DataError("infeasible packing: " + std::to_string(spec.max_instances) +
                  " instances of up to " + std::to_string(max_dur) +
                  "s do not fit a " + std::to_string(video_s) + "s video");
}

Tensor render_features(const SynthSpec& spec, int video_index, long frames,
                       const std::vector<AnnotationRecord>& annotations) {
  const int steps = static_cast<int>(frames / spec.feature_stride);
  Tensor features = Tensor::zeros({spec.channels, steps});

  std::mt19937_64 noise_rng(mix(spec.seed, 0x6e015eull + static_cast<std::uint64_t>(video_index)));
  if (spec.noise_sigma > 0.0) {
    for (std::int64_t i = 0; i < features.size(); ++i) {
      features.data()[i] = spec.noise_sigma * normal(noise_rng);
    }
  }

  // per-class coefficient tables, computed once per render
  std::vector<std::vector<TemplateCoeffs>> coeffs(static_cast<size_t>(spec.num_classes) + 1);
  for (int cls = 1; cls <= spec.num_classes; ++cls) {
    for (int d = 0; d < spec.channels; ++d) {
      coeffs[static_cast<size_t>(cls)].push_back(template_coeffs(spec, cls, d));
    }
  }

  constexpr double pi = std::numbers::pi;
  const double steps_per_second = spec.fps / spec.feature_stride;
  for (const auto& inst : annotations) {
    const double start_step = inst.start_s * steps_per_second;
    const double end_step = inst.end_s * steps_per_second;
    const int lo = std::max(0, static_cast<int>(std::ceil(start_step)));
    const int hi = std::min(steps - 1, static_cast<int>(std::floor(end_step)));
    for (int i = lo; i <= hi; ++i) {
      const double u = (i - start_step) / (end_step - start_step);
      const double env = instance_envelope(i, start_step, end_step);
      for (int d = 0; d < spec.channels; ++d) {
        const auto& c = coeffs[static_cast<size_t>(inst.cls)][static_cast<size_t>(d)];
        features.at(d, i) += env * spec.template_amplitude *
                             (c.w1 * std::sin(pi * u) + c.w2 * std::sin(2.0 * pi * u + c.phase));
      }
    }
  }
  return features;
}

}  // namespace

void SynthSpec::validate() const {
  if (num_videos < 1) throw ConfigError("synth: num_videos must be positive");
  if (num_classes < 1) throw ConfigError("synth: need at least one foreground class");
  if (channels < 1) throw ConfigError("synth: channels must be positive");
  if (feature_stride < 1) throw ConfigError("synth: feature_stride must be positive");
  if (fps <= 0.0) throw ConfigError("synth: fps must be positive");
  if (min_frames < 2 * feature_stride || max_frames < min_frames) {
    throw ConfigError("synth: bad video length range");
  }
  if (min_duration_s <= 0.0 || max_duration_s < min_duration_s) {
    throw ConfigError("synth: bad duration range");
  }
  if (min_instances < 0 || max_instances < min_instances) {
    throw ConfigError("synth: bad instance count range");
  }
  if (noise_sigma < 0.0) throw ConfigError("synth: noise_sigma must be non-negative");
}

SynthSpec synth_spec_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad synth spec JSON: ") + e.what());
  }
  SynthSpec spec;
  spec.seed = j.value("seed", spec.seed);
  spec.num_videos = j.value("num_videos", spec.num_videos);
  spec.min_frames = j.value("min_frames", spec.min_frames);
  spec.max_frames = j.value("max_frames", spec.max_frames);
  spec.num_classes = j.value("num_classes", spec.num_classes);
  spec.min_duration_s = j.value("min_duration_s", spec.min_duration_s);
  spec.max_duration_s = j.value("max_duration_s", spec.max_duration_s);
  spec.channels = j.value("channels", spec.channels);
  spec.feature_stride = j.value("feature_stride", spec.feature_stride);
  spec.fps = j.value("fps", spec.fps);
  spec.noise_sigma = j.value("noise_sigma", spec.noise_sigma);
  spec.min_instances = j.value("min_instances", spec.min_instances);
  spec.max_instances = j.value("max_instances", spec.max_instances);
  spec.template_amplitude = j.value("template_amplitude", spec.template_amplitude);
  spec.validate();
  return spec;
}

std::string synth_spec_to_json(const SynthSpec& spec) {
  json j;
  j["seed"] = spec.seed;
  j["num_videos"] = spec.num_videos;
  j["min_frames"] = spec.min_frames;
  j["max_frames"] = spec.max_frames;
  j["num_classes"] = spec.num_classes;
  j["min_duration_s"] = spec.min_duration_s;
  j["max_duration_s"] = spec.max_duration_s;
  j["channels"] = spec.channels;
  j["feature_stride"] = spec.feature_stride;
  j["fps"] = spec.fps;
  j["noise_sigma"] = spec.noise_sigma;
  j["min_instances"] = spec.min_instances;
  j["max_instances"] = spec.max_instances;
  j["template_amplitude"] = spec.template_amplitude;
  return j.dump();
}

double template_value(const SynthSpec& spec, int cls, int channel, double u) {
  const TemplateCoeffs c = template_coeffs(spec, cls, channel);
  constexpr double pi = std::numbers::pi;
  return spec.template_amplitude *
         (c.w1 * std::sin(pi * u) + c.w2 * std::sin(2.0 * pi * u + c.phase));
}

double instance_envelope(double step, double start_step, double end_step) {
  if (step < start_step || step > end_step) return 0.0;
  const double len = end_step - start_step;
  const double ramp = std::min(2.0, 0.1 * len);
  if (ramp <= 0.0) return 1.0;
  const double from_edge = std::min(step - start_step, end_step - step);
  return std::min(1.0, from_edge / ramp);
}

SynthDataset generate(const SynthSpec& spec, int first_video_index) {
  spec.validate();
  SynthDataset dataset;
  dataset.spec = spec;
  dataset.videos.reserve(static_cast<size_t>(spec.num_videos));

  // video lengths snap to a whole number of down-sampled feature steps so
  // every sliding-window start stays stride-aligned
  const long frame_quantum = 2l * spec.feature_stride;
  for (int v = 0; v < spec.num_videos; ++v) {
    const int index = first_video_index + v;
    std::mt19937_64 rng(mix(spec.seed, static_cast<std::uint64_t>(index)));
    VideoSample video;
    video.id = video_name(index);
    video.frames = (uniform_int(rng, spec.min_frames, spec.max_frames) / frame_quantum) *
                   frame_quantum;
    video.annotations = sample_annotations(spec, video.id, video.frames, rng);
    video.features = render_features(spec, index, video.frames, video.annotations);
    dataset.videos.push_back(std::move(video));
  }
  return dataset;
}

void inject_overlaps(SynthDataset& dataset, double fraction) {
  if (fraction < 0.0 || fraction > 0.2) {
    throw std::invalid_argument("inject_overlaps: fraction must lie in [0, 0.2]");
  }
  if (fraction == 0.0) return;

  // candidates: instances with a predecessor in the same video
  std::vector<std::pair<int, int>> candidates;
  std::size_t total_instances = 0;
  for (size_t v = 0; v < dataset.videos.size(); ++v) {
    total_instances += dataset.videos[v].annotations.size();
    for (size_t i = 1; i < dataset.videos[v].annotations.size(); ++i) {
      candidates.emplace_back(static_cast<int>(v), static_cast<int>(i));
    }
  }
  std::size_t want = static_cast<std::size_t>(std::llround(fraction * total_instances));
  want = std::min(want, candidates.size());

  std::mt19937_64 rng(mix(dataset.spec.seed, 0x0533c7ull));
  std::shuffle(candidates.begin(), candidates.end(), rng);

  std::vector<bool> touched(dataset.videos.size(), false);
  for (std::size_t k = 0; k < want; ++k) {
    auto& video = dataset.videos[static_cast<size_t>(candidates[k].first)];
    auto& inst = video.annotations[static_cast<size_t>(candidates[k].second)];
    const auto& prev = video.annotations[static_cast<size_t>(candidates[k].second) - 1];
    const double dur = inst.end_s - inst.start_s;
    const double overlap = 0.8 * std::min(dur, prev.end_s - prev.start_s);
    inst.start_s = std::max(0.0, prev.end_s - overlap);
    inst.end_s = inst.start_s + dur;
    const double video_s = video.duration_s(dataset.spec.fps);
    if (inst.end_s > video_s) {
      inst.end_s = video_s;
      inst.start_s = std::max(0.0, inst.end_s - dur);
    }
    touched[static_cast<size_t>(candidates[k].first)] = true;
  }

  for (size_t v = 0; v < dataset.videos.size(); ++v) {
    if (!touched[v]) continue;
    auto& video = dataset.videos[v];
    std::sort(video.annotations.begin(), video.annotations.end(),
              [](const AnnotationRecord& a, const AnnotationRecord& b) {
                return a.start_s < b.start_s;
              });
    // video index recovered from the id assigned at generation
    const int index = std::stoi(video.id.substr(1));
    video.features = render_features(dataset.spec, index, video.frames, video.annotations);
  }
}

void write_dataset(const std::filesystem::path& dir, const SynthDataset& dataset) {
  std::filesystem::create_directories(dir / "features");
  std::vector<AnnotationRecord> all;
  json meta;
  meta["spec"] = json::parse(synth_spec_to_json(dataset.spec));
  meta["videos"] = json::array();
  for (const auto& video : dataset.videos) {
    FeatureFile file;
    file.channels = dataset.spec.channels;
    file.stride = dataset.spec.feature_stride;
    file.fps = dataset.spec.fps;
    file.frames = video.frames;
    file.features = video.features;
    write_feature_file(dir / "features" / (video.id + ".bin"), file);
    for (const auto& a : video.annotations) all.push_back(a);
    meta["videos"].push_back({{"id", video.id},
                              {"frames", video.frames},
                              {"steps", video.features.dim(1)}});
  }
  write_annotations(dir / "annotations.jsonl", all);
  std::ofstream out(dir / "meta.json");
  if (!out) throw DataError("cannot write " + (dir / "meta.json").string());
  out << meta.dump(2) << "\n";
}

SynthDataset read_dataset(const std::filesystem::path& dir) {
  std::ifstream meta_in(dir / "meta.json");
  if (!meta_in) throw DataError("dataset meta not found: " + (dir / "meta.json").string());
  json meta;
  try {
    meta = json::parse(meta_in);
  } catch (const json::exception& e) {
    throw DataError("corrupt dataset meta: " + std::string(e.what()));
  }

  SynthDataset dataset;
  dataset.spec = synth_spec_from_json(meta.at("spec").dump());
  const auto annotations = read_annotations(dir / "annotations.jsonl");
  for (const auto& entry : meta.at("videos")) {
    VideoSample video;
    video.id = entry.at("id").get<std::string>();
    const FeatureFile file = read_feature_file(dir / "features" / (video.id + ".bin"));
    video.frames = file.frames;
    video.features = file.features;
    for (const auto& a : annotations) {
      if (a.video == video.id) video.annotations.push_back(a);
    }
    dataset.videos.push_back(std::move(video));
  }
  return dataset;
}

}  // namespace afotad
