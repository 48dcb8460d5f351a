#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "afotad/deformconv.hpp"
#include "afotad/io.hpp"
#include "afotad/tensor.hpp"

namespace afotad {

// Class id 0 is background; foreground classes are 1..num_classes-1.
inline constexpr int kBackgroundClass = 0;

struct ModelConfig {
  int num_classes = 4;  // categories plus one background
  int channels = 32;    // input feature channels
  int branch_depth = 3;
  int deformable_layers = 0;   // the last N layers of each branch
  std::vector<int> dilation;   // per layer; empty means all 1
  bool downsample = true;      // stride-2 temporal max-pool before the branches
  double alpha_init = 1.0;

  int dilation_at(int layer) const;
  void validate() const;  // throws ConfigError
};

ModelConfig model_config_from_json(const std::string& text);
std::string model_config_to_json(const ModelConfig& config);

// Per-location head outputs: class logits [C x T'] and raw boundary offsets
// [2 x T'] (row 0 = left, row 1 = right).
struct HeadOutput {
  Tensor cls;
  Tensor loc;
  int length = 0;
};

// One decoded candidate per temporal location, carrying its best foreground
// class. Boundaries are in feature-map units: start = x - exp(alpha*l'),
// end = x + exp(alpha*r'), so end > start always.
struct Candidate {
  int location = 0;
  int cls = 0;
  double score = 0.0;
  double start = 0.0;
  double end = 0.0;
  double left = 0.0;
  double right = 0.0;
};

struct ConvLayer {
  Tensor weight;
  Tensor bias;
  int dilation = 1;
};

using BranchLayer = std::variant<ConvLayer, DeformConv1d>;

// The receptive field adaption head: two independent branches of temporal
// convolutions over the (optionally down-sampled) feature map. The
// classification branch ends in a num_classes-channel conv, the localization
// branch in a 2-channel conv. Hidden layers are randomly initialized; the
// final convs start at zero with the classification bias favoring background.
class RfamModel {
 public:
  static RfamModel create(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  HeadOutput forward(Graph& g, const Tensor& features) const;
  double alpha_value() const { return alpha_.value(); }
  Tensor alpha() const { return alpha_; }

  // Stable name -> tensor view of every trainable parameter. The tensors are
  // shared handles; mutating them mutates the model.
  std::vector<std::pair<std::string, Tensor>> parameters() const;

  ParamContainer to_container(const std::string& extra_json = "{}") const;
  // Rebuilds a model from a container whose extra JSON carries the config
  // under "model". Shape disagreements are reported with both shapes.
  static RfamModel from_container(const ParamContainer& container);

 private:
  ModelConfig config_;
  std::vector<BranchLayer> cls_branch_;
  std::vector<BranchLayer> loc_branch_;
  Tensor alpha_;
};

// Anchor-free decoding of head outputs into one candidate per location.
std::vector<Candidate> decode(const HeadOutput& head, double alpha);

}  // namespace afotad
