#include "plotforge/tensor.hpp"

#include <sstream>

#include "plotforge/errors.hpp"

namespace plotforge::ad {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

template <class Real>
Tensor<Real>::Tensor(Shape shape, Real fill) : node_(std::make_shared<Node<Real>>()) {
  for (auto d : shape) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + to_string(shape));
  }
  node_->value.assign(numel(shape), fill);
  node_->shape = std::move(shape);
}

template <class Real>
Tensor<Real>::Tensor(Shape shape, std::vector<Real> values) : node_(std::make_shared<Node<Real>>()) {
  for (auto d : shape) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + to_string(shape));
  }
  if (numel(shape) != values.size()) {
    throw DimensionError("shape " + to_string(shape) + " does not match " +
                         std::to_string(values.size()) + " values");
  }
  node_->value = std::move(values);
  node_->shape = std::move(shape);
}

template <class Real>
Real Tensor<Real>::item() const {
  if (size() != 1) throw ContractError("item() on non-scalar tensor " + to_string(shape()));
  return node_->value[0];
}

template <class Real>
Tensor<Real>& Tensor<Real>::set_requires_grad(bool on) {
  node_->requires_grad = on;
  return *this;
}

template <class Real>
std::span<Real> Tensor<Real>::grad() {
  if (!node_->has_grad) throw ContractError("tensor " + to_string(shape()) + " has no gradient");
  return node_->grad;
}

template <class Real>
std::span<const Real> Tensor<Real>::grad() const {
  if (!node_->has_grad) throw ContractError("tensor " + to_string(shape()) + " has no gradient");
  return node_->grad;
}

template <class Real>
void Tensor<Real>::zero_grad() {
  node_->grad.assign(node_->value.size(), Real(0));
  node_->has_grad = true;
}

template <class Real>
Tensor<Real> Tensor<Real>::detach() const {
  return Tensor(node_->shape, node_->value);
}

template <class Real>
Tape<Real>& Tape<Real>::active() {
  thread_local Tape tape;
  return tape;
}

template <class Real>
void Tape<Real>::record(std::shared_ptr<Node<Real>> output, BackwardFn fn) {
  entries_.push_back(Entry{std::move(output), std::move(fn)});
}

template <class Real>
void Tape<Real>::backward(const Tensor<Real>& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw ContractError("backward() needs a scalar loss, got " +
                        (loss.defined() ? to_string(loss.shape()) : std::string("undefined")));
  }
  const auto& target = loss.node();
  std::size_t end = entries_.size();
  while (end > 0 && entries_[end - 1].output != target) --end;
  if (end == 0) {
    if (target->leaf && target->requires_grad) {
      target->ensure_grad()[0] += Real(1);
      return;
    }
    throw ContractError("backward() loss is not on the tape");
  }
  for (std::size_t i = 0; i < end; ++i) {
    auto& out = *entries_[i].output;
    out.has_grad = false;
    out.grad.clear();
  }
  target->ensure_grad()[0] = Real(1);
  for (std::size_t i = end; i-- > 0;) {
    if (entries_[i].output->has_grad) entries_[i].fn();
  }
}

template class Tensor<float>;
template class Tensor<double>;
template class Tape<float>;
template class Tape<double>;

}  // namespace plotforge::ad
