#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace idml {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);
bool same_shape(const Shape& a, const Shape& b);

class Tape;

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  bool requires_grad = false;
  std::vector<double> grad;  // empty until backward touches this tensor
  Tape* producer = nullptr;  // tape whose op produced this tensor, if any
};

// Shaped f64 array with optional gradient tracking. Copies share storage;
// values are set at construction and never mutated afterwards except for
// parameter updates between training steps and grad population by backward.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value);
  static Tensor from_data(Shape shape, std::vector<double> data,
                          bool requires_grad = false);
  static Tensor scalar(double value);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::int64_t numel() const { return static_cast<std::int64_t>(impl_->data.size()); }
  std::int64_t dim(int axis) const { return impl_->shape[axis]; }
  int ndim() const { return static_cast<int>(impl_->shape.size()); }

  // A Tensor is a shared handle: const applies to the handle, not the
  // buffers, so copies captured in backward closures can fill gradients.
  std::span<const double> data() const { return impl_->data; }
  std::span<double> mutable_data() const { return impl_->data; }
  double item() const;

  bool requires_grad() const { return impl_->requires_grad; }
  const Tensor& set_requires_grad(bool v) const {
    impl_->requires_grad = v;
    return *this;
  }

  bool has_grad() const { return impl_ && !impl_->grad.empty(); }
  std::span<const double> grad() const;
  // Gradient buffer, zero-initialized on first use.
  std::span<double> grad_buffer() const;
  void zero_grad() const { impl_->grad.clear(); }

  TensorImpl* impl() const { return impl_.get(); }

 private:
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<TensorImpl> impl_;
};

// Reverse-mode tape: one node per differentiable op, recorded in forward
// order, replayed exactly once in reverse by backward(). A tape serves a
// single forward/backward pass and rejects reuse. One tape is single
// threaded; distinct tapes are independent.
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  void record(std::vector<Tensor> inputs, const Tensor& output, BackwardFn fn);

  // Seeds d(output)/d(output) = 1 and propagates to every requires_grad
  // leaf. `output` must be a scalar this tape produced.
  void backward(const Tensor& output);

  std::size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

 private:
  struct Node {
    std::vector<Tensor> inputs;
    Tensor output;
    BackwardFn fn;
  };
  std::vector<Node> nodes_;
  bool consumed_ = false;
};

}  // namespace idml
