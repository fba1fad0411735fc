#pragma once

#include <cstdint>
#include <vector>

#include "plotforge/tensor.hpp"

namespace plotforge::ad {

struct AdamConfig {
  double lr = 0.0005;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Moment buffers are stored in the same order as the parameter list the
// optimizer was built with.
template <class Real>
struct AdamState {
  std::vector<std::vector<Real>> m;
  std::vector<std::vector<Real>> v;
  std::uint64_t t = 0;
};

template <class Real>
class Adam {
 public:
  Adam(ParameterList<Real> params, AdamConfig config = {});

  // One bias-corrected update of every parameter. Throws ContractError naming
  // the first parameter without a gradient buffer.
  void step();

  // Optional global gradient-norm clip applied inside step(); 0 disables it.
  void set_max_grad_norm(double max_norm) { max_grad_norm_ = max_norm; }

  const AdamConfig& config() const { return config_; }
  AdamState<Real>& state() { return state_; }
  const AdamState<Real>& state() const { return state_; }
  const ParameterList<Real>& parameters() const { return params_; }

 private:
  ParameterList<Real> params_;
  AdamConfig config_;
  AdamState<Real> state_;
  double max_grad_norm_ = 0.0;
};

}  // namespace plotforge::ad
