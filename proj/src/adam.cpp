#include "plotforge/adam.hpp"

#include <cmath>

#include "plotforge/errors.hpp"

namespace plotforge::ad {

template <class Real>
Adam<Real>::Adam(ParameterList<Real> params, AdamConfig config)
    : params_(std::move(params)), config_(config) {
  for (const auto& p : params_) {
    state_.m.emplace_back(p.tensor.size(), Real(0));
    state_.v.emplace_back(p.tensor.size(), Real(0));
  }
}

template <class Real>
void Adam<Real>::step() {
  for (const auto& p : params_) {
    if (!p.tensor.has_grad()) throw ContractError("adam_step: parameter '" + p.name + "' has no gradient");
  }
  double clip = 1.0;
  if (max_grad_norm_ > 0) {
    double sq = 0;
    for (const auto& p : params_) {
      for (auto g : p.tensor.grad()) sq += static_cast<double>(g) * static_cast<double>(g);
    }
    const double norm = std::sqrt(sq);
    if (norm > max_grad_norm_) clip = max_grad_norm_ / norm;
  }

  state_.t += 1;
  const double t = static_cast<double>(state_.t);
  const double c1 = 1.0 - std::pow(config_.beta1, t);
  const double c2 = 1.0 - std::pow(config_.beta2, t);
  for (std::size_t pi = 0; pi < params_.size(); ++pi) {
    auto& tensor = params_[pi].tensor;
    auto w = tensor.data();
    auto g = tensor.grad();
    auto& m = state_.m[pi];
    auto& v = state_.v[pi];
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = static_cast<double>(g[i]) * clip;
      const double mi = config_.beta1 * static_cast<double>(m[i]) + (1.0 - config_.beta1) * gi;
      const double vi = config_.beta2 * static_cast<double>(v[i]) + (1.0 - config_.beta2) * gi * gi;
      m[i] = static_cast<Real>(mi);
      v[i] = static_cast<Real>(vi);
      const double update = config_.lr * (mi / c1) / (std::sqrt(vi / c2) + config_.eps);
      w[i] = static_cast<Real>(static_cast<double>(w[i]) - update);
    }
  }
}

template class Adam<float>;
template class Adam<double>;

}  // namespace plotforge::ad
