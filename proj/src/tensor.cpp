#include "idml/tensor.hpp"

#include <sstream>
#include <stdexcept>

namespace idml {

std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << ", ";
    os << s[i];
  }
  os << ']';
  return os.str();
}

bool same_shape(const Shape& a, const Shape& b) { return a == b; }

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto impl = std::make_shared<TensorImpl>();
  impl->data.assign(static_cast<std::size_t>(shape_numel(shape)), 0.0);
  impl->shape = std::move(shape);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::full(Shape shape, double value) {
  auto impl = std::make_shared<TensorImpl>();
  impl->data.assign(static_cast<std::size_t>(shape_numel(shape)), value);
  impl->shape = std::move(shape);
  return Tensor(std::move(impl));
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data,
                         bool requires_grad) {
  if (shape_numel(shape) != static_cast<std::int64_t>(data.size())) {
    throw std::invalid_argument("tensor data size " +
                                std::to_string(data.size()) +
                                " does not match shape " + shape_str(shape));
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value) { return from_data({1}, {value}); }

double Tensor::item() const {
  if (numel() != 1) {
    throw std::logic_error("item() on tensor with " + std::to_string(numel()) +
                           " elements");
  }
  return impl_->data[0];
}

std::span<const double> Tensor::grad() const {
  if (impl_->grad.empty()) {
    throw std::logic_error("grad() before backward populated this tensor");
  }
  return impl_->grad;
}

std::span<double> Tensor::grad_buffer() const {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
  return impl_->grad;
}

void Tape::record(std::vector<Tensor> inputs, const Tensor& output,
                  BackwardFn fn) {
  if (consumed_) throw std::logic_error("record() on a consumed tape");
  output.impl()->producer = this;
  nodes_.push_back(Node{std::move(inputs), output, std::move(fn)});
}

void Tape::backward(const Tensor& output) {
  if (consumed_) throw std::logic_error("backward() on a consumed tape");
  if (output.numel() != 1) {
    throw std::logic_error("backward() root must be scalar, got shape " +
                           shape_str(output.shape()));
  }
  if (output.impl()->producer != this) {
    throw std::logic_error("backward() root was not produced by this tape");
  }
  consumed_ = true;
  Tensor root = output;
  root.grad_buffer()[0] = 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    // Skip nodes whose output never received a gradient: nothing downstream
    // of them contributed to the root.
    if (!it->output.has_grad()) continue;
    it->fn();
  }
  nodes_.clear();
}

}  // namespace idml
