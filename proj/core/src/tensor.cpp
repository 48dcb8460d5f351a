#include "afotad/tensor.hpp"

#include <atomic>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <unordered_set>

#include "afotad/errors.hpp"

namespace afotad {

namespace {

std::atomic<std::uint64_t> g_next_tensor_id{1};

std::int64_t element_count(const std::vector<int>& shape) {
  std::int64_t n = 1;
  for (int d : shape) {
    if (d <= 0) {
      throw std::invalid_argument("tensor shape must have positive dims, got " +
                                  shape_to_string(shape));
    }
    n *= d;
  }
  return n;
}

}  // namespace

std::string shape_to_string(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

std::shared_ptr<Tensor::Impl> Tensor::make_impl(std::vector<int> shape) {
  auto impl = std::make_shared<Impl>();
  const std::int64_t n = element_count(shape);
  impl->shape = std::move(shape);
  impl->data.assign(static_cast<size_t>(n), 0.0);
  impl->id = g_next_tensor_id.fetch_add(1, std::memory_order_relaxed);
  return impl;
}

Tensor Tensor::zeros(std::vector<int> shape) { return Tensor(make_impl(std::move(shape))); }

Tensor Tensor::full(std::vector<int> shape, double value) {
  Tensor t(make_impl(std::move(shape)));
  for (double& v : t.impl_->data) v = value;
  return t;
}

Tensor Tensor::scalar(double value) { return full({1}, value); }

Tensor Tensor::from_data(std::vector<int> shape, std::vector<double> values) {
  const std::int64_t n = element_count(shape);
  if (n != static_cast<std::int64_t>(values.size())) {
    throw std::invalid_argument("tensor data length " + std::to_string(values.size()) +
                                " does not match shape " + shape_to_string(shape));
  }
  for (double v : values) {
    if (!std::isfinite(v)) {
      throw NumericError("non-finite value entering tensor of shape " + shape_to_string(shape));
    }
  }
  Tensor t(make_impl(std::move(shape)));
  t.impl_->data = std::move(values);
  return t;
}

double Tensor::value() const {
  if (size() != 1) {
    throw std::invalid_argument("value() requires a scalar tensor, got shape " +
                                shape_to_string(shape()));
  }
  return impl_->data[0];
}

std::vector<double>& Tensor::grad() {
  if (impl_->grad.empty()) {
    impl_->grad.assign(impl_->data.size(), 0.0);
  }
  return impl_->grad;
}

void Tensor::zero_grad() {
  for (double& g : impl_->grad) g = 0.0;
}

bool Tensor::all_finite() const {
  for (double v : impl_->data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Tensor Tensor::clone() const {
  Tensor t(make_impl(impl_->shape));
  t.impl_->data = impl_->data;
  t.impl_->requires_grad = impl_->requires_grad;
  return t;
}

void Graph::record(std::vector<Tensor> inputs, Tensor output, BackwardFn backward) {
  nodes_.push_back(Node{std::move(inputs), std::move(output), std::move(backward)});
}

void Graph::backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw std::invalid_argument("backward() requires a scalar loss tensor");
  }
  if (!std::isfinite(loss.value())) {
    throw NumericError("backward() called on non-finite loss");
  }

  // Op outputs get fresh gradients each pass; leaves keep theirs so that
  // repeated backward calls accumulate.
  std::unordered_set<std::uint64_t> op_outputs;
  op_outputs.reserve(nodes_.size());
  for (auto& node : nodes_) {
    op_outputs.insert(node.output.id());
  }
  for (auto& node : nodes_) {
    node.output.grad();
    node.output.zero_grad();
    for (auto& in : node.inputs) {
      in.grad();
      if (op_outputs.count(in.id())) in.zero_grad();
    }
  }

  Tensor seed = loss;
  seed.grad()[0] += 1.0;

  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    it->backward();
  }
}

}  // namespace afotad
