#include "afotad/rfam.hpp"

#include <cmath>
#include <random>

#include <json.hpp>

#include "afotad/errors.hpp"
#include "afotad/ops.hpp"

namespace afotad {

namespace {

using nlohmann::json;

constexpr int kKernel = 3;

// He-style init for hidden convs, deterministic given the engine state.
void fill_normal(Tensor& t, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (std::int64_t i = 0; i < t.size(); ++i) t.data()[i] = dist(rng);
}

ConvLayer make_conv(int cin, int cout, int dilation, bool zero_init, std::mt19937_64& rng) {
  ConvLayer layer;
  layer.weight = Tensor::zeros({cout, cin, kKernel});
  layer.bias = Tensor::zeros({cout});
  layer.dilation = dilation;
  if (!zero_init) fill_normal(layer.weight, std::sqrt(2.0 / (cin * kKernel)), rng);
  return layer;
}

DeformConv1d make_deform(int cin, int cout, bool zero_init, std::mt19937_64& rng) {
  DeformConv1d layer = DeformConv1d::create(cin, cout, kKernel);
  if (!zero_init) fill_normal(layer.weight, std::sqrt(2.0 / (cin * kKernel)), rng);
  return layer;
}

std::vector<BranchLayer> make_branch(const ModelConfig& config, int out_channels,
                                     std::mt19937_64& rng) {
  std::vector<BranchLayer> branch;
  const int depth = config.branch_depth;
  for (int i = 0; i < depth; ++i) {
    const int cin = config.channels;
    const int cout = (i == depth - 1) ? out_channels : config.channels;
    const bool deformable = i >= depth - config.deformable_layers;
    const bool zero_init = (i == depth - 1);
    if (deformable) {
      branch.emplace_back(make_deform(cin, cout, zero_init, rng));
    } else {
      branch.emplace_back(make_conv(cin, cout, config.dilation_at(i), zero_init, rng));
    }
  }
  return branch;
}

Tensor run_branch(Graph& g, const std::vector<BranchLayer>& branch, const Tensor& input) {
  Tensor h = input;
  for (size_t i = 0; i < branch.size(); ++i) {
    if (const auto* conv = std::get_if<ConvLayer>(&branch[i])) {
      h = conv1d(g, h, conv->weight, conv->bias, conv->dilation);
    } else {
      h = std::get<DeformConv1d>(branch[i]).forward(g, h);
    }
    if (i + 1 < branch.size()) h = relu(g, h);
  }
  return h;
}

void collect_params(const std::string& prefix, const std::vector<BranchLayer>& branch,
                    std::vector<std::pair<std::string, Tensor>>& out) {
  for (size_t i = 0; i < branch.size(); ++i) {
    const std::string base = prefix + std::to_string(i);
    if (const auto* conv = std::get_if<ConvLayer>(&branch[i])) {
      out.emplace_back(base + ".w", conv->weight);
      out.emplace_back(base + ".b", conv->bias);
    } else {
      const auto& d = std::get<DeformConv1d>(branch[i]);
      out.emplace_back(base + ".w", d.weight);
      out.emplace_back(base + ".b", d.bias);
      out.emplace_back(base + ".dp_w", d.offset_weight);
      out.emplace_back(base + ".dp_b", d.offset_bias);
      out.emplace_back(base + ".dm_w", d.modulation_weight);
      out.emplace_back(base + ".dm_b", d.modulation_bias);
    }
  }
}

}  // namespace

int ModelConfig::dilation_at(int layer) const {
  if (dilation.empty()) return 1;
  return dilation[static_cast<size_t>(layer)];
}

void ModelConfig::validate() const {
  if (num_classes < 2) {
    throw ConfigError("model: num_classes must be >= 2 (categories plus background), got " +
                      std::to_string(num_classes));
  }
  if (channels < 1) throw ConfigError("model: channels must be positive");
  if (branch_depth < 1) throw ConfigError("model: branch_depth must be positive");
  if (deformable_layers < 0 || deformable_layers > branch_depth) {
    throw ConfigError("model: deformable_layers " + std::to_string(deformable_layers) +
                      " exceeds branch depth " + std::to_string(branch_depth));
  }
  if (!dilation.empty() && static_cast<int>(dilation.size()) != branch_depth) {
    throw ConfigError("model: dilation list has " + std::to_string(dilation.size()) +
                      " entries for branch depth " + std::to_string(branch_depth));
  }
  for (int d : dilation) {
    if (d < 1) throw ConfigError("model: dilation rates must be >= 1");
  }
}

ModelConfig model_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad model config JSON: ") + e.what());
  }
  ModelConfig config;
  config.num_classes = j.value("num_classes", config.num_classes);
  config.channels = j.value("channels", config.channels);
  config.branch_depth = j.value("branch_depth", config.branch_depth);
  config.deformable_layers = j.value("deformable_layers", config.deformable_layers);
  config.dilation = j.value("dilation", config.dilation);
  config.downsample = j.value("downsample", config.downsample);
  config.alpha_init = j.value("alpha_init", config.alpha_init);
  config.validate();
  return config;
}

std::string model_config_to_json(const ModelConfig& config) {
  json j;
  j["num_classes"] = config.num_classes;
  j["channels"] = config.channels;
  j["branch_depth"] = config.branch_depth;
  j["deformable_layers"] = config.deformable_layers;
  j["dilation"] = config.dilation;
  j["downsample"] = config.downsample;
  j["alpha_init"] = config.alpha_init;
  return j.dump();
}

RfamModel RfamModel::create(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  RfamModel model;
  model.config_ = config;
  std::mt19937_64 rng(seed);
  model.cls_branch_ = make_branch(config, config.num_classes, rng);
  model.loc_branch_ = make_branch(config, 2, rng);
  model.alpha_ = Tensor::scalar(config.alpha_init);

  // Start with ~0.9 background probability so early training is not swamped
  // by the dominant background class.
  const double bg_bias = std::log(9.0 * (config.num_classes - 1));
  auto& last = model.cls_branch_.back();
  if (auto* conv = std::get_if<ConvLayer>(&last)) {
    conv->bias.at(kBackgroundClass) = bg_bias;
  } else {
    std::get<DeformConv1d>(last).bias.at(kBackgroundClass) = bg_bias;
  }
  return model;
}

HeadOutput RfamModel::forward(Graph& g, const Tensor& features) const {
  if (features.rank() != 2 || features.dim(0) != config_.channels) {
    throw std::invalid_argument("forward: features must be [" + std::to_string(config_.channels) +
                                " x T], got " + shape_to_string(features.shape()));
  }
  Tensor h = features;
  if (config_.downsample) h = maxpool1d(g, h);
  HeadOutput head;
  head.cls = run_branch(g, cls_branch_, h);
  head.loc = run_branch(g, loc_branch_, h);
  head.length = head.cls.dim(1);
  return head;
}

std::vector<std::pair<std::string, Tensor>> RfamModel::parameters() const {
  std::vector<std::pair<std::string, Tensor>> params;
  collect_params("cls", cls_branch_, params);
  collect_params("loc", loc_branch_, params);
  params.emplace_back("alpha", alpha_);
  return params;
}

ParamContainer RfamModel::to_container(const std::string& extra_json) const {
  ParamContainer container;
  json extra = extra_json.empty() ? json::object() : json::parse(extra_json);
  extra["model"] = json::parse(model_config_to_json(config_));
  container.extra_json = extra.dump();
  for (auto& [name, tensor] : parameters()) container.tensors.emplace_back(name, tensor);
  return container;
}

RfamModel RfamModel::from_container(const ParamContainer& container) {
  json extra;
  try {
    extra = json::parse(container.extra_json);
  } catch (const json::exception& e) {
    throw DataError(std::string("checkpoint extra JSON unreadable: ") + e.what());
  }
  if (!extra.contains("model")) {
    throw DataError("checkpoint carries no model config");
  }
  RfamModel model = create(model_config_from_json(extra["model"].dump()), 0);
  for (auto& [name, tensor] : model.parameters()) {
    const Tensor* stored = container.find(name);
    if (!stored) throw DataError("checkpoint is missing parameter " + name);
    if (!stored->same_shape(tensor)) {
      throw DataError("checkpoint/model shape mismatch for " + name + ": checkpoint " +
                      shape_to_string(stored->shape()) + " vs model " +
                      shape_to_string(tensor.shape()));
    }
    tensor.values() = stored->values();
  }
  return model;
}

std::vector<Candidate> decode(const HeadOutput& head, double alpha) {
  const int num_classes = head.cls.dim(0);
  const int t_len = head.cls.dim(1);
  std::vector<Candidate> candidates;
  candidates.reserve(static_cast<size_t>(t_len));
  std::vector<double> probs(static_cast<size_t>(num_classes));
  for (int x = 0; x < t_len; ++x) {
    double m = head.cls.at(0, x);
    for (int c = 1; c < num_classes; ++c) m = std::max(m, head.cls.at(c, x));
    double z = 0.0;
    for (int c = 0; c < num_classes; ++c) {
      probs[static_cast<size_t>(c)] = std::exp(head.cls.at(c, x) - m);
      z += probs[static_cast<size_t>(c)];
    }
    int best = 1;
    for (int c = 2; c < num_classes; ++c) {
      if (probs[static_cast<size_t>(c)] > probs[static_cast<size_t>(best)]) best = c;
    }
    Candidate cand;
    cand.location = x;
    cand.cls = best;
    cand.score = probs[static_cast<size_t>(best)] / z;
    cand.left = std::exp(alpha * head.loc.at(0, x));
    cand.right = std::exp(alpha * head.loc.at(1, x));
    cand.start = x - cand.left;
    cand.end = x + cand.right;
    candidates.push_back(cand);
  }
  return candidates;
}

}  // namespace afotad
