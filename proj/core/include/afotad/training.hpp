#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "afotad/rfam.hpp"
#include "afotad/tensor.hpp"

namespace afotad {

// Ground truth in feature-map units of the head (same coordinate system as
// Candidate). Boundaries may extend beyond the clip when an instance is only
// partially contained.
struct GroundTruthInstance {
  int cls = 0;  // foreground class, 1..num_classes-1
  double start = 0.0;
  double end = 0.0;
};

struct TargetAssignment {
  int label = kBackgroundClass;
  double left = 0.0;   // x - start, positive for positives
  double right = 0.0;  // end - x, positive for positives
};

struct TargetMap {
  std::vector<TargetAssignment> at;  // one entry per temporal location
  int num_positive = 0;

  int length() const { return static_cast<int>(at.size()); }
};

// A location x is positive iff it lies strictly inside some (start, end).
// When several instances contain x it goes to the one whose center is
// closest; exact ties go to the earlier instance in list order.
TargetMap assign_targets(int length, const std::vector<GroundTruthInstance>& gts);

// Temporal IoU loss of one positive location: -ln(I/U) with
// I = min(lt,l) + min(rt,r) and U = (l+r) + (lt+rt) - I. Zero iff the
// prediction equals the target.
double temporal_iou_loss(double l, double r, double lt, double rt);

// Mean -ln(I/U) over positive locations, on the tape. offsets is the decoded
// [2 x T'] tensor of (l, r) = exp(alpha * raw). With no positives the loss is
// the constant 0. min() at equality routes its gradient to the prediction.
Tensor iou_loss_mean(Graph& g, const Tensor& offsets, const TargetMap& targets);

// Mean negative log softmax probability of the target class over all
// locations (background locations score the background class).
Tensor softmax_cross_entropy(Graph& g, const Tensor& logits, const TargetMap& targets);

struct LossBreakdown {
  double cls = 0.0;
  double loc = 0.0;
  double total = 0.0;
};

// total = cls + beta * loc, differentiable end to end including through
// alpha. Returns the scalar tape tensor plus the plain values.
std::pair<Tensor, LossBreakdown> joint_loss(Graph& g, const HeadOutput& head, const Tensor& alpha,
                                            const TargetMap& targets, double beta);

struct SgdConfig {
  double lr = 6e-4;
  double momentum = 0.9;
  double weight_decay = 5e-4;
};

// Classical momentum SGD: v <- mu*v + g + wd*theta; theta <- theta - lr*v.
// A NaN gradient rejects the step with a diagnostic naming the parameter.
class SgdOptimizer {
 public:
  SgdOptimizer(std::vector<std::pair<std::string, Tensor>> params, SgdConfig config);

  void step();
  void zero_grad();

  double lr() const { return config_.lr; }
  void set_lr(double lr) { config_.lr = lr; }

  // Velocity buffers, exposed for checkpointing; same order as params.
  const std::vector<std::pair<std::string, Tensor>>& velocities() const { return velocities_; }
  void load_velocities(const std::vector<std::pair<std::string, Tensor>>& saved);

 private:
  std::vector<std::pair<std::string, Tensor>> params_;
  std::vector<std::pair<std::string, Tensor>> velocities_;
  SgdConfig config_;
};

struct TrainConfig {
  SgdConfig sgd;
  double beta = 1.0;  // localization loss weight
  int batch_size = 4;
  int iterations = 2000;
  int lr_decay_every = 500;
  double lr_decay_factor = 0.9;
  int checkpoint_every = 500;
  std::uint64_t seed = 1;
  long window_frames = 768;  // sliding-window clip length L
};

TrainConfig train_config_from_json(const std::string& text);
std::string train_config_to_json(const TrainConfig& config);

}  // namespace afotad
