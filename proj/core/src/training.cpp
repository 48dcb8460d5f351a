#include "afotad/training.hpp"

#include <cmath>
#include <stdexcept>

#include <json.hpp>

#include "afotad/errors.hpp"
#include "afotad/ops.hpp"

namespace afotad {

namespace {
using nlohmann::json;
}

TargetMap assign_targets(int length, const std::vector<GroundTruthInstance>& gts) {
  TargetMap map;
  map.at.assign(static_cast<size_t>(length), TargetAssignment{});
  for (int x = 0; x < length; ++x) {
    int chosen = -1;
    double best_dist = 0.0;
    for (size_t i = 0; i < gts.size(); ++i) {
      const auto& gt = gts[i];
      if (!(x > gt.start && x < gt.end)) continue;
      const double dist = std::abs(x - 0.5 * (gt.start + gt.end));
      if (chosen < 0 || dist < best_dist) {
        chosen = static_cast<int>(i);
        best_dist = dist;
      }
    }
    if (chosen >= 0) {
      const auto& gt = gts[static_cast<size_t>(chosen)];
      map.at[static_cast<size_t>(x)] = {gt.cls, x - gt.start, gt.end - x};
      ++map.num_positive;
    }
  }
  return map;
}

double temporal_iou_loss(double l, double r, double lt, double rt) {
  const double inter = std::min(lt, l) + std::min(rt, r);
  const double uni = (l + r) + (lt + rt) - inter;
  return std::log(uni) - std::log(inter);
}

Tensor iou_loss_mean(Graph& g, const Tensor& offsets, const TargetMap& targets) {
  if (offsets.rank() != 2 || offsets.dim(0) != 2 || offsets.dim(1) != targets.length()) {
    throw std::invalid_argument("iou_loss_mean: offsets must be [2 x " +
                                std::to_string(targets.length()) + "], got " +
                                shape_to_string(offsets.shape()));
  }
  if (targets.num_positive == 0) {
    return Tensor::scalar(0.0);
  }

  const int t_len = targets.length();
  double acc = 0.0;
  for (int x = 0; x < t_len; ++x) {
    const auto& tgt = targets.at[static_cast<size_t>(x)];
    if (tgt.label == kBackgroundClass) continue;
    acc += temporal_iou_loss(offsets.at(0, x), offsets.at(1, x), tgt.left, tgt.right);
  }
  const double inv_n = 1.0 / targets.num_positive;
  Tensor out = Tensor::scalar(acc * inv_n);

  Tensor off_t = offsets, out_t = out;
  g.record({offsets}, out, [off_t, out_t, targets, t_len, inv_n]() mutable {
    const double gy = out_t.grad()[0] * inv_n;
    double* gx = off_t.grad().data();
    for (int x = 0; x < t_len; ++x) {
      const auto& tgt = targets.at[static_cast<size_t>(x)];
      if (tgt.label == kBackgroundClass) continue;
      const double l = off_t.at(0, x);
      const double r = off_t.at(1, x);
      const double inter = std::min(tgt.left, l) + std::min(tgt.right, r);
      const double uni = (l + r) + (tgt.left + tgt.right) - inter;
      // d(-ln(I/U))/dl = dU/dl / U - dI/dl / I with dU/dl = 1 - dI/dl; min at
      // equality differentiates through the prediction branch.
      const double di_dl = (l <= tgt.left) ? 1.0 : 0.0;
      const double di_dr = (r <= tgt.right) ? 1.0 : 0.0;
      gx[x] += gy * ((1.0 - di_dl) / uni - di_dl / inter);
      gx[t_len + x] += gy * ((1.0 - di_dr) / uni - di_dr / inter);
    }
  });
  return out;
}

Tensor softmax_cross_entropy(Graph& g, const Tensor& logits, const TargetMap& targets) {
  if (logits.rank() != 2 || logits.dim(1) != targets.length()) {
    throw std::invalid_argument("softmax_cross_entropy: logits [C x T] must match " +
                                std::to_string(targets.length()) + " locations, got " +
                                shape_to_string(logits.shape()));
  }
  const int num_classes = logits.dim(0);
  const int t_len = logits.dim(1);
  const double inv_n = 1.0 / t_len;

  // log-sum-exp per column, loss = mean(logZ - logit[label])
  std::vector<double> softmax(static_cast<size_t>(num_classes) * t_len);
  double acc = 0.0;
  for (int x = 0; x < t_len; ++x) {
    double m = logits.at(0, x);
    for (int c = 1; c < num_classes; ++c) m = std::max(m, logits.at(c, x));
    double z = 0.0;
    for (int c = 0; c < num_classes; ++c) {
      const double e = std::exp(logits.at(c, x) - m);
      softmax[static_cast<size_t>(c) * t_len + x] = e;
      z += e;
    }
    for (int c = 0; c < num_classes; ++c) softmax[static_cast<size_t>(c) * t_len + x] /= z;
    const int label = targets.at[static_cast<size_t>(x)].label;
    acc += m + std::log(z) - logits.at(label, x);
  }
  Tensor out = Tensor::scalar(acc * inv_n);

  Tensor logits_t = logits, out_t = out;
  g.record({logits}, out,
           [logits_t, out_t, targets, softmax = std::move(softmax), num_classes, t_len,
            inv_n]() mutable {
             const double gy = out_t.grad()[0] * inv_n;
             double* gx = logits_t.grad().data();
             for (int x = 0; x < t_len; ++x) {
               const int label = targets.at[static_cast<size_t>(x)].label;
               for (int c = 0; c < num_classes; ++c) {
                 const size_t i = static_cast<size_t>(c) * t_len + x;
                 gx[i] += gy * (softmax[i] - (c == label ? 1.0 : 0.0));
               }
             }
           });
  return out;
}

std::pair<Tensor, LossBreakdown> joint_loss(Graph& g, const HeadOutput& head, const Tensor& alpha,
                                            const TargetMap& targets, double beta) {
  if (head.length != targets.length()) {
    throw std::invalid_argument("joint_loss: head length " + std::to_string(head.length) +
                                " != target length " + std::to_string(targets.length()));
  }
  Tensor cls = softmax_cross_entropy(g, head.cls, targets);
  Tensor offsets = exp(g, scale_by(g, head.loc, alpha));
  Tensor loc = iou_loss_mean(g, offsets, targets);
  Tensor total = add(g, cls, scale(g, loc, beta));

  LossBreakdown breakdown;
  breakdown.cls = cls.value();
  breakdown.loc = loc.value();
  breakdown.total = total.value();
  if (!std::isfinite(breakdown.total)) {
    throw NumericError("joint loss is not finite (cls=" + std::to_string(breakdown.cls) +
                       ", loc=" + std::to_string(breakdown.loc) + ")");
  }
  return {total, breakdown};
}

SgdOptimizer::SgdOptimizer(std::vector<std::pair<std::string, Tensor>> params, SgdConfig config)
    : params_(std::move(params)), config_(config) {
  velocities_.reserve(params_.size());
  for (auto& [name, tensor] : params_) {
    velocities_.emplace_back(name, Tensor::zeros(tensor.shape()));
  }
}

void SgdOptimizer::step() {
  for (size_t i = 0; i < params_.size(); ++i) {
    auto& [name, theta] = params_[i];
    auto& vel = velocities_[i].second;
    const auto& grad = theta.grad();
    if (grad.empty()) continue;
    for (std::int64_t j = 0; j < theta.size(); ++j) {
      if (!std::isfinite(grad[static_cast<size_t>(j)])) {
        throw NumericError("sgd step rejected: non-finite gradient in parameter " + name +
                           " at index " + std::to_string(j));
      }
    }
    for (std::int64_t j = 0; j < theta.size(); ++j) {
      double& v = vel.data()[j];
      v = config_.momentum * v + grad[static_cast<size_t>(j)] +
          config_.weight_decay * theta.data()[j];
      theta.data()[j] -= config_.lr * v;
    }
  }
}

void SgdOptimizer::zero_grad() {
  for (auto& [name, tensor] : params_) tensor.zero_grad();
}

void SgdOptimizer::load_velocities(const std::vector<std::pair<std::string, Tensor>>& saved) {
  for (auto& [name, vel] : velocities_) {
    for (const auto& [sname, stensor] : saved) {
      if (sname == name) {
        if (!stensor.same_shape(vel)) {
          throw DataError("optimizer state shape mismatch for " + name);
        }
        vel.values() = stensor.values();
        break;
      }
    }
  }
}

TrainConfig train_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad training config JSON: ") + e.what());
  }
  TrainConfig config;
  config.sgd.lr = j.value("lr", config.sgd.lr);
  config.sgd.momentum = j.value("momentum", config.sgd.momentum);
  config.sgd.weight_decay = j.value("weight_decay", config.sgd.weight_decay);
  config.beta = j.value("beta", config.beta);
  config.batch_size = j.value("batch_size", config.batch_size);
  config.iterations = j.value("iterations", config.iterations);
  config.lr_decay_every = j.value("lr_decay_every", config.lr_decay_every);
  config.lr_decay_factor = j.value("lr_decay_factor", config.lr_decay_factor);
  config.checkpoint_every = j.value("checkpoint_every", config.checkpoint_every);
  config.seed = j.value("seed", config.seed);
  config.window_frames = j.value("window_frames", config.window_frames);
  if (config.batch_size < 1 || config.iterations < 0 || config.lr_decay_every < 1 ||
      config.window_frames < 1) {
    throw ConfigError("training config has non-positive sizes");
  }
  return config;
}

std::string train_config_to_json(const TrainConfig& config) {
  json j;
  j["lr"] = config.sgd.lr;
  j["momentum"] = config.sgd.momentum;
  j["weight_decay"] = config.sgd.weight_decay;
  j["beta"] = config.beta;
  j["batch_size"] = config.batch_size;
  j["iterations"] = config.iterations;
  j["lr_decay_every"] = config.lr_decay_every;
  j["lr_decay_factor"] = config.lr_decay_factor;
  j["checkpoint_every"] = config.checkpoint_every;
  j["seed"] = config.seed;
  j["window_frames"] = config.window_frames;
  return j.dump();
}

}  // namespace afotad
