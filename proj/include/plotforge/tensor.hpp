#pragma once

// Dense tensors recorded on a reverse-mode tape.
//
// A Tensor is a cheap handle (shared ownership) onto a node holding the
// shape, the row-major values and, once backward has touched it, a gradient
// buffer of the same shape. Every op in ops.hpp whose inputs require a
// gradient appends one entry to the calling thread's Tape; Tape::backward
// then replays those entries in exact reverse order.
//
// Gradients of leaves (parameters, user inputs) accumulate across backward
// calls until zero_grad(). Gradients of intermediate results are reset at the
// start of every backward pass, so they always reflect the latest loss.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace plotforge::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

template <class Real>
struct Node {
  Shape shape;
  std::vector<Real> value;
  std::vector<Real> grad;
  bool has_grad = false;
  bool requires_grad = false;
  bool leaf = true;

  std::vector<Real>& ensure_grad() {
    if (!has_grad) {
      grad.assign(value.size(), Real(0));
      has_grad = true;
    }
    return grad;
  }
};

template <class Real>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, Real fill = Real(0));
  Tensor(Shape shape, std::vector<Real> values);

  static Tensor scalar(Real value) { return Tensor(Shape{1}, std::vector<Real>{value}); }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t size() const { return node_->value.size(); }

  std::span<Real> data() { return node_->value; }
  std::span<const Real> data() const { return node_->value; }
  Real item() const;

  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool on = true);
  bool is_leaf() const { return node_->leaf; }

  bool has_grad() const { return node_->has_grad; }
  std::span<Real> grad();
  std::span<const Real> grad() const;
  // Allocates (or resets) the gradient buffer to zeros.
  void zero_grad();

  // Value copy with no gradient history.
  Tensor detach() const;

  const std::shared_ptr<Node<Real>>& node() const { return node_; }
  static Tensor from_node(std::shared_ptr<Node<Real>> node) {
    Tensor t;
    t.node_ = std::move(node);
    return t;
  }

 private:
  std::shared_ptr<Node<Real>> node_;
};

template <class Real>
struct NamedTensor {
  std::string name;
  Tensor<Real> tensor;
};

template <class Real>
using ParameterList = std::vector<NamedTensor<Real>>;

template <class Real>
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  // One tape per thread and scalar type.
  static Tape& active();

  bool recording() const { return recording_; }
  void record(std::shared_ptr<Node<Real>> output, BackwardFn fn);

  // Seeds d(loss)/d(loss) = 1 and runs every recorded entry up to the loss
  // in reverse order. Throws ContractError for a non-scalar loss or one that
  // carries no gradient history.
  void backward(const Tensor<Real>& loss);

  void clear() { entries_.clear(); }
  std::size_t size() const { return entries_.size(); }

 private:
  template <class>
  friend class NoGradGuard;

  struct Entry {
    std::shared_ptr<Node<Real>> output;
    BackwardFn fn;
  };
  std::vector<Entry> entries_;
  bool recording_ = true;
};

// Disables recording on this thread's tape for the guard's lifetime.
template <class Real>
class NoGradGuard {
 public:
  NoGradGuard() : previous_(Tape<Real>::active().recording_) {
    Tape<Real>::active().recording_ = false;
  }
  ~NoGradGuard() { Tape<Real>::active().recording_ = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <class Real>
void backward(const Tensor<Real>& loss) {
  Tape<Real>::active().backward(loss);
}

template <class Real>
void zero_grads(ParameterList<Real>& params) {
  for (auto& p : params) p.tensor.zero_grad();
}

}  // namespace plotforge::ad
