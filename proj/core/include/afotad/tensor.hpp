#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace afotad {

// Dense row-major tensor of 64-bit reals with an optional gradient buffer.
// Copies are shallow handles: two copies share storage, which is what lets a
// Graph accumulate gradients into the tensors the caller still holds.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape);
  static Tensor full(std::vector<int> shape, double value);
  static Tensor scalar(double value);
  // Validates the shape/data agreement and rejects non-finite values.
  static Tensor from_data(std::vector<int> shape, std::vector<double> values);

  bool defined() const { return impl_ != nullptr; }
  const std::vector<int>& shape() const { return impl_->shape; }
  int rank() const { return static_cast<int>(impl_->shape.size()); }
  int dim(int axis) const { return impl_->shape[static_cast<size_t>(axis)]; }
  std::int64_t size() const { return static_cast<std::int64_t>(impl_->data.size()); }
  std::uint64_t id() const { return impl_->id; }

  double* data() { return impl_->data.data(); }
  const double* data() const { return impl_->data.data(); }
  std::vector<double>& values() { return impl_->data; }
  const std::vector<double>& values() const { return impl_->data; }

  // Scalar convenience access; tensor must hold exactly one element.
  double value() const;

  // Unchecked row-major indexing for ranks 1..3.
  double& at(int i) { return impl_->data[static_cast<size_t>(i)]; }
  double at(int i) const { return impl_->data[static_cast<size_t>(i)]; }
  double& at(int i, int j) {
    return impl_->data[static_cast<size_t>(i) * impl_->shape[1] + j];
  }
  double at(int i, int j) const {
    return impl_->data[static_cast<size_t>(i) * impl_->shape[1] + j];
  }
  double& at(int i, int j, int k) {
    return impl_->data[(static_cast<size_t>(i) * impl_->shape[1] + j) * impl_->shape[2] + k];
  }
  double at(int i, int j, int k) const {
    return impl_->data[(static_cast<size_t>(i) * impl_->shape[1] + j) * impl_->shape[2] + k];
  }

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool v) {
    impl_->requires_grad = v;
    return *this;
  }

  bool has_grad() const { return !impl_->grad.empty(); }
  // Gradient buffer, allocated (zero-filled) on first use.
  std::vector<double>& grad();
  const std::vector<double>& grad() const { return impl_->grad; }
  double grad_at(std::int64_t i) const { return impl_->grad[static_cast<size_t>(i)]; }
  void zero_grad();

  bool same_shape(const Tensor& other) const { return impl_->shape == other.impl_->shape; }
  bool all_finite() const;

  // Deep copy of values (gradient buffer not copied).
  Tensor clone() const;

 private:
  struct Impl {
    std::vector<int> shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until requested
    bool requires_grad = false;
    std::uint64_t id = 0;
  };

  explicit Tensor(std::shared_ptr<Impl> impl) : impl_(std::move(impl)) {}
  static std::shared_ptr<Impl> make_impl(std::vector<int> shape);

  std::shared_ptr<Impl> impl_;
};

std::string shape_to_string(const std::vector<int>& shape);

// Reverse-mode tape. Operations append nodes in execution order, so the tape
// is topologically sorted by construction; backward() walks it once in
// reverse. A graph is rebuilt for every forward pass and tensors recorded on
// it must not be mutated until backward() has run.
class Graph {
 public:
  using BackwardFn = std::function<void()>;

  // inputs/output are retained so their storage outlives the forward values.
  void record(std::vector<Tensor> inputs, Tensor output, BackwardFn backward);

  // Seeds d(loss)/d(loss) = 1 and propagates through the tape in reverse.
  // Gradients of leaf tensors accumulate across repeated calls; gradients of
  // op outputs are reset at the start of each call.
  void backward(const Tensor& loss);

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    std::vector<Tensor> inputs;
    Tensor output;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
};

}  // namespace afotad
